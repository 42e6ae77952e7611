#pragma once
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfe/errors.hpp"

namespace tfe {

struct GridMapConfig {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 0.0;   // meters per grid edge
  std::size_t height = 0;   // H
  std::size_t width = 0;    // W
  double slot_duration = 0.0;  // seconds

  static constexpr std::size_t num_directions = 4;

  void validate() const;
};

struct VehicleRecord {
  std::string vehicle_id;
  double time = 0.0;  // seconds since epoch
  double x = 0.0;     // map meters
  double y = 0.0;
  double speed = 0.0;    // km/h, >= 0
  double heading = 0.0;  // degrees in [0, 360)
};

struct FlowSnapshot {
  long slot_index = 0;
  std::vector<VehicleRecord> records;
};

// 4-channel average-speed image over the grid plus per-cell vehicle counts.
// Channel order: east, south, west, north. Cells nobody visited carry
// value 0 with occupancy 0.
struct FlowImage {
  static constexpr std::size_t channels = 4;

  long slot_index = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;           // channels*H*W, row-major
  std::vector<std::uint32_t> occupancy;  // same layout

  std::size_t idx(std::size_t c, std::size_t h, std::size_t w) const {
    return (c * height + h) * width + w;
  }
  double value_at(std::size_t c, std::size_t h, std::size_t w) const {
    return values[idx(c, h, w)];
  }
  std::uint32_t count_at(std::size_t c, std::size_t h, std::size_t w) const {
    return occupancy[idx(c, h, w)];
  }
};

// 90-degree sectors centered on the cardinals; east wraps around zero.
// Returns 0 east, 1 south, 2 west, 3 north.
std::size_t heading_to_channel(double heading);

struct CellAssignment {
  std::size_t h, w, channel;
};

// Maps a record to its grid cell and direction channel; absent when the
// position falls outside the map.
std::optional<CellAssignment> assign_to_grid(const VehicleRecord& record,
                                             const GridMapConfig& cfg);

long slot_of_time(double time, const GridMapConfig& cfg);

// Buckets records into per-slot snapshots, ordered by slot index.
std::vector<FlowSnapshot> group_by_slot(const std::vector<VehicleRecord>& records,
                                        const GridMapConfig& cfg);

FlowImage aggregate_flow_image(const FlowSnapshot& snapshot, const GridMapConfig& cfg);

// Keeps exactly round(rate * n) records, chosen uniformly without
// replacement; original record order is preserved.
FlowSnapshot sample_limited(const FlowSnapshot& snapshot, double rate,
                            std::uint64_t seed);

// The L consecutive images ending at slot t, in chronological order.
std::vector<FlowImage> build_input_sequence(const std::vector<FlowImage>& images,
                                            long t, std::size_t window);

}  // namespace tfe
