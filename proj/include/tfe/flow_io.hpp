#pragma once
#include <iosfwd>
#include <string>
#include <vector>

#include "tfe/grid.hpp"

namespace tfe {

// Trajectory CSV: header `vehicle_id,time,x,y,speed,heading`, one record
// per line. Numbers are written with round-trip precision so rewriting a
// parsed file reproduces it byte for byte.
void write_trajectory_csv(std::ostream& os, const std::vector<VehicleRecord>& records);
std::vector<VehicleRecord> read_trajectory_csv(std::istream& is);

void write_trajectory_csv_file(const std::string& path,
                               const std::vector<VehicleRecord>& records);
std::vector<VehicleRecord> read_trajectory_csv_file(const std::string& path);

// Flow-image binary: magic "TFE1", u32 slot_index, C (=4), H, W, then
// C*H*W f32 speed values, then C*H*W u32 occupancy counts. Little-endian.
void write_flow_image(std::ostream& os, const FlowImage& img);
FlowImage read_flow_image(std::istream& is);

void write_flow_image_file(const std::string& path, const FlowImage& img);
FlowImage read_flow_image_file(const std::string& path);

std::string format_double(double v);

}  // namespace tfe
