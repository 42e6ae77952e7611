#include "tfe/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tfe/rng.hpp"

namespace tfe {

void GridMapConfig::validate() const {
  if (height < 1 || width < 1)
    throw ValidationError("grid config: height and width must be positive");
  if (!(cell_size > 0.0)) throw ValidationError("grid config: cell_size must be positive");
  if (!(slot_duration > 0.0))
    throw ValidationError("grid config: slot_duration must be positive");
}

std::size_t heading_to_channel(double heading) {
  if (!(heading >= 0.0 && heading < 360.0))
    throw ValidationError("heading " + std::to_string(heading) +
                          " outside [0, 360)");
  if (heading < 45.0) return 0;   // east
  if (heading < 135.0) return 3;  // north
  if (heading < 225.0) return 2;  // west
  if (heading < 315.0) return 1;  // south
  return 0;                       // east again past 315
}

std::optional<CellAssignment> assign_to_grid(const VehicleRecord& record,
                                             const GridMapConfig& cfg) {
  cfg.validate();
  const double fh = std::floor((record.y - cfg.origin_y) / cfg.cell_size);
  const double fw = std::floor((record.x - cfg.origin_x) / cfg.cell_size);
  if (fh < 0.0 || fw < 0.0 || fh >= static_cast<double>(cfg.height) ||
      fw >= static_cast<double>(cfg.width))
    return std::nullopt;
  return CellAssignment{static_cast<std::size_t>(fh), static_cast<std::size_t>(fw),
                        heading_to_channel(record.heading)};
}

long slot_of_time(double time, const GridMapConfig& cfg) {
  cfg.validate();
  return static_cast<long>(std::floor(time / cfg.slot_duration));
}

std::vector<FlowSnapshot> group_by_slot(const std::vector<VehicleRecord>& records,
                                        const GridMapConfig& cfg) {
  std::map<long, FlowSnapshot> by_slot;
  for (const auto& r : records) {
    const long slot = slot_of_time(r.time, cfg);
    auto& snap = by_slot[slot];
    snap.slot_index = slot;
    snap.records.push_back(r);
  }
  std::vector<FlowSnapshot> out;
  out.reserve(by_slot.size());
  for (auto& [slot, snap] : by_slot) out.push_back(std::move(snap));
  return out;
}

FlowImage aggregate_flow_image(const FlowSnapshot& snapshot, const GridMapConfig& cfg) {
  cfg.validate();
  FlowImage img;
  img.slot_index = snapshot.slot_index;
  img.height = cfg.height;
  img.width = cfg.width;
  const std::size_t n = FlowImage::channels * cfg.height * cfg.width;
  img.values.assign(n, 0.0);
  img.occupancy.assign(n, 0);
  std::vector<double> sums(n, 0.0);
  for (const auto& r : snapshot.records) {
    const auto cell = assign_to_grid(r, cfg);
    if (!cell) continue;
    const std::size_t i = img.idx(cell->channel, cell->h, cell->w);
    sums[i] += r.speed;
    ++img.occupancy[i];
  }
  for (std::size_t i = 0; i < n; ++i)
    if (img.occupancy[i] > 0) img.values[i] = sums[i] / img.occupancy[i];
  return img;
}

FlowSnapshot sample_limited(const FlowSnapshot& snapshot, double rate,
                            std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0))
    throw ValidationError("sampling rate " + std::to_string(rate) +
                          " outside (0, 1]");
  const std::size_t n = snapshot.records.size();
  const std::size_t k =
      static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
  }
  order.resize(k);
  std::sort(order.begin(), order.end());
  FlowSnapshot out;
  out.slot_index = snapshot.slot_index;
  out.records.reserve(k);
  for (std::size_t i : order) out.records.push_back(snapshot.records[i]);
  return out;
}

std::vector<FlowImage> build_input_sequence(const std::vector<FlowImage>& images,
                                            long t, std::size_t window) {
  if (window == 0) throw ValidationError("window length must be positive");
  std::map<long, const FlowImage*> by_slot;
  for (const auto& img : images) by_slot[img.slot_index] = &img;
  std::vector<FlowImage> out;
  out.reserve(window);
  for (long s = t - static_cast<long>(window) + 1; s <= t; ++s) {
    auto it = by_slot.find(s);
    if (it == by_slot.end())
      throw SequencingError("missing slot " + std::to_string(s) +
                            " in requested window ending at " + std::to_string(t));
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace tfe
