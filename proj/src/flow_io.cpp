#include "tfe/flow_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "tfe/binio.hpp"

namespace tfe {

namespace {

constexpr char kCsvHeader[] = "vehicle_id,time,x,y,speed,heading";
constexpr char kFlowMagic[4] = {'T', 'F', 'E', '1'};

double parse_double(const std::string& field, std::size_t line_no, const char* what) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw FormatError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                      field + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode) {
  std::ifstream f(path, mode);
  if (!f) throw FormatError("cannot open " + path);
  return f;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
  std::ofstream f(path, mode);
  if (!f) throw FormatError("cannot write " + path);
  return f;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trajectory_csv(std::ostream& os, const std::vector<VehicleRecord>& records) {
  os << kCsvHeader << "\n";
  for (const auto& r : records) {
    os << r.vehicle_id << ',' << format_double(r.time) << ',' << format_double(r.x)
       << ',' << format_double(r.y) << ',' << format_double(r.speed) << ','
       << format_double(r.heading) << '\n';
  }
}

std::vector<VehicleRecord> read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty trajectory file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw FormatError("bad trajectory header '" + line + "', expected '" +
                      kCsvHeader + "'");
  std::vector<VehicleRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 6)
      throw FormatError("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                        std::to_string(fields.size()));
    VehicleRecord r;
    r.vehicle_id = fields[0];
    r.time = parse_double(fields[1], line_no, "time");
    r.x = parse_double(fields[2], line_no, "x");
    r.y = parse_double(fields[3], line_no, "y");
    r.speed = parse_double(fields[4], line_no, "speed");
    r.heading = parse_double(fields[5], line_no, "heading");
    if (r.speed < 0.0)
      throw FormatError("line " + std::to_string(line_no) + ": negative speed");
    if (!(r.heading >= 0.0 && r.heading < 360.0))
      throw FormatError("line " + std::to_string(line_no) + ": heading outside [0, 360)");
    out.push_back(std::move(r));
  }
  return out;
}

void write_trajectory_csv_file(const std::string& path,
                               const std::vector<VehicleRecord>& records) {
  auto f = open_out(path, std::ios::out);
  write_trajectory_csv(f, records);
  if (!f) throw FormatError("write failed on " + path);
}

std::vector<VehicleRecord> read_trajectory_csv_file(const std::string& path) {
  auto f = open_in(path, std::ios::in);
  return read_trajectory_csv(f);
}

void write_flow_image(std::ostream& os, const FlowImage& img) {
  if (img.slot_index < 0 ||
      img.slot_index > static_cast<long>(std::numeric_limits<std::uint32_t>::max()))
    throw ValidationError("slot index " + std::to_string(img.slot_index) +
                          " not storable");
  const std::size_t n = FlowImage::channels * img.height * img.width;
  if (img.values.size() != n || img.occupancy.size() != n)
    throw ContractError("flow image buffers do not match its extents");
  binio::write_magic(os, kFlowMagic);
  binio::write_u32(os, static_cast<std::uint32_t>(img.slot_index));
  binio::write_u32(os, static_cast<std::uint32_t>(FlowImage::channels));
  binio::write_u32(os, static_cast<std::uint32_t>(img.height));
  binio::write_u32(os, static_cast<std::uint32_t>(img.width));
  for (double v : img.values) binio::write_f32(os, static_cast<float>(v));
  for (std::uint32_t c : img.occupancy) binio::write_u32(os, c);
}

FlowImage read_flow_image(std::istream& is) {
  binio::expect_magic(is, kFlowMagic, "flow image");
  FlowImage img;
  img.slot_index = binio::read_u32(is, "slot index");
  const std::uint32_t c = binio::read_u32(is, "channel count");
  if (c != FlowImage::channels)
    throw FormatError("flow image has " + std::to_string(c) + " channels, expected 4");
  img.height = binio::read_u32(is, "height");
  img.width = binio::read_u32(is, "width");
  if (img.height == 0 || img.width == 0)
    throw FormatError("flow image has empty extents");
  const std::size_t n = FlowImage::channels * img.height * img.width;
  img.values.resize(n);
  img.occupancy.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.values[i] = binio::read_f32(is, "speed values");
  for (std::size_t i = 0; i < n; ++i) img.occupancy[i] = binio::read_u32(is, "occupancy");
  return img;
}

void write_flow_image_file(const std::string& path, const FlowImage& img) {
  auto f = open_out(path, std::ios::binary);
  write_flow_image(f, img);
  if (!f) throw FormatError("write failed on " + path);
}

FlowImage read_flow_image_file(const std::string& path) {
  auto f = open_in(path, std::ios::binary);
  return read_flow_image(f);
}

}  // namespace tfe
