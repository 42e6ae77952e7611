#include "tfe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tfe/rng.hpp"

namespace tfe {

std::size_t RoadMask::road_cell_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](std::uint8_t c) { return c != 0; }));
}

RoadMask make_ring_road_mask(std::size_t height, std::size_t width,
                             std::size_t thickness) {
  if (thickness < 1)
    throw ValidationError("road mask thickness must be at least 1");
  if (2 * thickness >= std::min(height, width))
    throw ValidationError("road mask thickness " + std::to_string(thickness) +
                          " too large for " + std::to_string(height) + "x" +
                          std::to_string(width) + " grid");
  const std::size_t m = 1;  // off-road margin between border and ring
  RoadMask mask;
  mask.height = height;
  mask.width = width;
  mask.cells.assign(height * width, 0);
  const long t = static_cast<long>(thickness);
  const long hh = static_cast<long>(height), ww = static_cast<long>(width);
  for (long h = 0; h < hh; ++h)
    for (long w = 0; w < ww; ++w) {
      const bool in_outer = h >= static_cast<long>(m) && h <= hh - 1 - static_cast<long>(m) &&
                            w >= static_cast<long>(m) && w <= ww - 1 - static_cast<long>(m);
      const bool in_inner = h >= static_cast<long>(m) + t && h <= hh - 1 - static_cast<long>(m) - t &&
                            w >= static_cast<long>(m) + t && w <= ww - 1 - static_cast<long>(m) - t;
      const bool in_ring = in_outer && !in_inner;
      std::uint8_t bits = 0;
      if (in_ring) {
        if (h < static_cast<long>(m) + t || h > hh - 1 - static_cast<long>(m) - t) bits |= 1;
        if (w < static_cast<long>(m) + t || w > ww - 1 - static_cast<long>(m) - t) bits |= 2;
      }
      if (std::labs(2 * h + 1 - hh) <= t) bits |= 1;  // horizontal corridor
      if (std::labs(2 * w + 1 - ww) <= t) bits |= 2;  // vertical corridor
      mask.cells[static_cast<std::size_t>(h) * width + static_cast<std::size_t>(w)] = bits;
    }
  return mask;
}

void ScenarioConfig::validate() const {
  grid.validate();
  if (days < 1 || slots_per_day < 1)
    throw ValidationError("scenario needs at least one day and one slot");
  if (!(vehicles_per_slot >= 0.0))
    throw ValidationError("vehicles_per_slot must be non-negative");
  if (!(base_speed > 0.0)) throw ValidationError("base_speed must be positive");
  if (!(rush_hour_dip >= 0.0 && rush_hour_dip < 1.0))
    throw ValidationError("rush_hour_dip must lie in [0, 1)");
  if (!(speed_noise_std >= 0.0))
    throw ValidationError("speed_noise_std must be non-negative");
  if (road_mask.height != grid.height || road_mask.width != grid.width)
    throw ValidationError("road mask extents do not match the grid");
  if (road_mask.road_cell_count() == 0)
    throw ValidationError("road mask has no road cells");
}

double diurnal_factor(std::size_t slot, std::size_t slots_per_day,
                      double rush_hour_dip) {
  const double x = static_cast<double>(slot);
  const double n = static_cast<double>(slots_per_day);
  const double half_width = n / 8.0;
  double g = 0.0;
  for (double center : {0.25 * n, 0.75 * n}) {
    const double d = std::abs(x - center);
    if (d <= half_width) g += 0.5 * (1.0 + std::cos(3.141592653589793 * d / half_width));
  }
  return 1.0 - rush_hour_dip * std::min(g, 1.0);
}

namespace {

double wrap_heading(double h) {
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  return h;
}

}  // namespace

std::vector<FlowSnapshot> generate_day(const ScenarioConfig& cfg, std::size_t day) {
  cfg.validate();
  std::vector<std::size_t> road_cells;
  for (std::size_t i = 0; i < cfg.road_mask.cells.size(); ++i)
    if (cfg.road_mask.cells[i] != 0) road_cells.push_back(i);

  Rng rng(mix_seed(cfg.seed, day));
  std::vector<FlowSnapshot> out;
  out.reserve(cfg.slots_per_day);
  for (std::size_t s = 0; s < cfg.slots_per_day; ++s) {
    const long slot_index =
        static_cast<long>(day) * static_cast<long>(cfg.slots_per_day) +
        static_cast<long>(s);
    FlowSnapshot snap;
    snap.slot_index = slot_index;
    const std::uint64_t count = rng.poisson(cfg.vehicles_per_slot);
    const double factor = diurnal_factor(s, cfg.slots_per_day, cfg.rush_hour_dip);
    snap.records.reserve(count);
    for (std::uint64_t v = 0; v < count; ++v) {
      const std::size_t cell = road_cells[rng.below(road_cells.size())];
      const std::size_t h = cell / cfg.grid.width;
      const std::size_t w = cell % cfg.grid.width;
      const std::uint8_t bits = cfg.road_mask.cells[cell];
      bool horizontal = (bits & 1u) != 0;
      if ((bits & 1u) && (bits & 2u)) horizontal = rng.below(2) == 0;
      double base_heading;
      if (horizontal)
        base_heading = rng.below(2) == 0 ? 0.0 : 180.0;  // east or west
      else
        base_heading = rng.below(2) == 0 ? 90.0 : 270.0;  // north or south

      VehicleRecord r;
      r.vehicle_id = "d" + std::to_string(day) + "s" + std::to_string(s) + "v" +
                     std::to_string(v);
      r.x = cfg.grid.origin_x + (static_cast<double>(w) + rng.uniform()) * cfg.grid.cell_size;
      r.y = cfg.grid.origin_y + (static_cast<double>(h) + rng.uniform()) * cfg.grid.cell_size;
      // same guard for cell boundaries
      const double x_end = cfg.grid.origin_x + (static_cast<double>(w) + 1.0) * cfg.grid.cell_size;
      const double y_end = cfg.grid.origin_y + (static_cast<double>(h) + 1.0) * cfg.grid.cell_size;
      if (r.x >= x_end) r.x = std::nextafter(x_end, cfg.grid.origin_x);
      if (r.y >= y_end) r.y = std::nextafter(y_end, cfg.grid.origin_y);
      r.time = static_cast<double>(slot_index) * cfg.grid.slot_duration +
               rng.uniform() * cfg.grid.slot_duration;
      // rounding in the sum must not push the time onto the next slot
      const double slot_end =
          (static_cast<double>(slot_index) + 1.0) * cfg.grid.slot_duration;
      if (r.time >= slot_end) r.time = std::nextafter(slot_end, 0.0);
      r.heading = wrap_heading(base_heading + rng.uniform(-30.0, 30.0));
      const double noise =
          cfg.speed_noise_std > 0.0 ? rng.normal(0.0, cfg.speed_noise_std) : 0.0;
      r.speed = std::max(0.0, cfg.base_speed * factor + noise);
      snap.records.push_back(std::move(r));
    }
    out.push_back(std::move(snap));
  }
  return out;
}

std::vector<VehicleRecord> generate_scenario(const ScenarioConfig& cfg) {
  std::vector<VehicleRecord> all;
  for (std::size_t day = 0; day < cfg.days; ++day) {
    auto snaps = generate_day(cfg, day);
    for (auto& snap : snaps)
      for (auto& r : snap.records) all.push_back(std::move(r));
  }
  return all;
}

}  // namespace tfe
