#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfe/config.hpp"

namespace tfe {

// Exit-code-returning command entry points. Each run writes its artifacts
// plus exactly one manifest.txt into the output directory; identical inputs
// and seeds give byte-identical artifacts (the manifest's duration line is
// the only exception).

struct GenerateOptions {
  std::string config_path;  // empty = built-in defaults
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

struct IngestOptions {
  std::string csv_dir;
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<double> rate;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

struct TrainOptions {
  std::string data_dir;
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string resume_checkpoint;  // empty = fresh initialization
  std::string out_dir;
};

struct EvaluateOptions {
  std::string checkpoint;
  std::string data_dir;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

struct SweepOptions {
  std::string csv_dir;
  std::string config_path;
  std::vector<std::string> overrides;
  std::vector<double> rates;  // empty = config or the default five
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

int cmd_generate(const GenerateOptions& opts);
int cmd_ingest(const IngestOptions& opts);
int cmd_train(const TrainOptions& opts);
int cmd_evaluate(const EvaluateOptions& opts);
int cmd_sweep(const SweepOptions& opts);

// FNV-1a 64-bit, used for artifact hashes in manifests.
std::uint64_t fnv1a_bytes(const void* data, std::size_t len);
std::uint64_t fnv1a_file(const std::string& path);

// Digit-grid text files: "H W" header line, then H rows of W single digits.
// Carries road orientation bits (generate) or 0/1 road cells (ingest).
struct CellGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> cells;
};

void write_cell_grid(const std::string& path, const CellGrid& grid);
CellGrid read_cell_grid(const std::string& path);

}  // namespace tfe
