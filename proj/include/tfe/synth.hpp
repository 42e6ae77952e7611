#pragma once
#include <cstddef>
#include <cstdint>
#include <vector>

#include "tfe/grid.hpp"

namespace tfe {

// Street pattern: which cells carry a road, and in which orientation.
// Cells can carry both orientations (ring corners, crossings).
struct RoadMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> cells;  // bit 0 horizontal, bit 1 vertical

  bool road_at(std::size_t h, std::size_t w) const {
    return cells[h * width + w] != 0;
  }
  bool horizontal_at(std::size_t h, std::size_t w) const {
    return (cells[h * width + w] & 1u) != 0;
  }
  bool vertical_at(std::size_t h, std::size_t w) const {
    return (cells[h * width + w] & 2u) != 0;
  }
  std::size_t road_cell_count() const;
};

// Rectangular ring inset one cell from the border plus two crossing axial
// corridors through the middle; 180-degree rotation symmetric.
RoadMask make_ring_road_mask(std::size_t height, std::size_t width,
                             std::size_t thickness);

struct ScenarioConfig {
  GridMapConfig grid;
  std::size_t days = 6;
  std::size_t slots_per_day = 180;
  double vehicles_per_slot = 400.0;  // Poisson mean per slot
  double base_speed = 60.0;          // km/h
  double rush_hour_dip = 0.35;       // fractional speed drop at rush peaks
  double speed_noise_std = 8.0;      // km/h
  RoadMask road_mask;
  std::uint64_t seed = 1;

  void validate() const;
};

// Speed multiplier for a slot: 1.0 off-peak, dipping to 1 - rush_hour_dip
// at the centers of two rush windows (one quarter and three quarters into
// the day).
double diurnal_factor(std::size_t slot, std::size_t slots_per_day,
                      double rush_hour_dip);

// One day of traffic as per-slot snapshots with global slot indices.
// Deterministic in (cfg.seed, day).
std::vector<FlowSnapshot> generate_day(const ScenarioConfig& cfg, std::size_t day);

// All days concatenated into one record stream.
std::vector<VehicleRecord> generate_scenario(const ScenarioConfig& cfg);

}  // namespace tfe
