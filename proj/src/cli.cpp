#include "tfe/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <utility>

#include "tfe/flow_io.hpp"
#include "tfe/grid.hpp"
#include "tfe/model.hpp"
#include "tfe/rng.hpp"
#include "tfe/synth.hpp"
#include "tfe/train.hpp"

namespace tfe {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

KeyValueConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
  KeyValueConfig c;
  if (!path.empty()) c = KeyValueConfig::parse_file(path);
  for (const std::string& line : overrides) c.set_line(line);
  return c;
}

// Typed access that records every resolved value for the manifest.
struct ConfigReader {
  const KeyValueConfig& src;
  KeyValueConfig used;

  double number(const std::string& key, double fallback) {
    const double v = src.get_double(key, fallback);
    used.set(key, format_double(v));
    return v;
  }
  std::size_t size(const std::string& key, std::size_t fallback) {
    const std::size_t v = src.get_size(key, fallback);
    used.set(key, std::to_string(v));
    return v;
  }
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    const std::uint64_t v = src.get_u64(key, fallback);
    used.set(key, std::to_string(v));
    return v;
  }
  bool boolean(const std::string& key, bool fallback) {
    const bool v = src.get_bool(key, fallback);
    used.set(key, v ? "true" : "false");
    return v;
  }
};

GridMapConfig grid_from_config(ConfigReader& c) {
  GridMapConfig g;
  g.origin_x = c.number("grid.origin_x", 0.0);
  g.origin_y = c.number("grid.origin_y", 0.0);
  g.cell_size = c.number("grid.cell_size", 500.0);
  g.height = c.size("grid.height", 16);
  g.width = c.size("grid.width", 16);
  g.slot_duration = c.number("grid.slot_duration", 300.0);
  return g;
}

ScenarioConfig scenario_from_config(ConfigReader& c) {
  ScenarioConfig sc;
  sc.grid = grid_from_config(c);
  sc.days = c.size("scenario.days", 6);
  sc.slots_per_day = c.size("scenario.slots_per_day", 180);
  sc.vehicles_per_slot = c.number("scenario.vehicles_per_slot", 400.0);
  sc.base_speed = c.number("scenario.base_speed", 60.0);
  sc.rush_hour_dip = c.number("scenario.rush_hour_dip", 0.35);
  sc.speed_noise_std = c.number("scenario.speed_noise_std", 8.0);
  sc.road_mask = make_ring_road_mask(sc.grid.height, sc.grid.width,
                                     c.size("scenario.ring_thickness", 2));
  sc.seed = c.u64("scenario.seed", 1234);
  return sc;
}

ModelConfig model_from_config(ConfigReader& c, std::size_t height,
                              std::size_t width) {
  ModelConfig m;
  m.height = height;
  m.width = width;
  m.window_len = c.size("model.window_len", 6);
  m.latent_dim = c.size("model.latent_dim", 16);
  m.state_dim = c.size("model.state_dim", 8);
  m.enc_kernel = c.size("model.enc_kernel", 3);
  m.dec_kernel = c.size("model.dec_kernel", 3);
  m.speed_scale = c.number("model.speed_scale", 120.0);
  return m;
}

TrainConfig train_from_config(ConfigReader& c) {
  TrainConfig t;
  t.epochs = c.size("train.epochs", 12);
  t.batch_size = c.size("train.batch_size", 8);
  t.learning_rate = c.number("train.learning_rate", 3e-3);
  t.seed = c.u64("train.seed", 99);
  t.limitation_rate = c.number("train.limitation_rate", 0.2);
  t.train_days = c.size("split.train_days", 4);
  t.val_days = c.size("split.val_days", 1);
  t.test_days = c.size("split.test_days", 1);
  return t;
}

void write_manifest(const std::string& out_dir, const std::string& subcommand,
                    const KeyValueConfig& used,
                    const std::vector<std::pair<std::string, std::string>>& extra,
                    const std::vector<std::string>& artifact_paths,
                    double seconds) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const std::string& p : artifact_paths)
    rows.emplace_back(fs::path(p).filename().string(), hex64(fnv1a_file(p)));
  std::sort(rows.begin(), rows.end());

  const std::string path = (fs::path(out_dir) / "manifest.txt").string();
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << "subcommand=" << subcommand << "\n";
  for (const auto& [k, v] : used.entries()) os << "config." << k << "=" << v << "\n";
  for (const auto& [k, v] : extra) os << k << "=" << v << "\n";
  for (const auto& [name, hash] : rows)
    os << "artifact." << name << "=fnv1a:" << hash << "\n";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", seconds);
  os << "duration_seconds=" << buf << "\n";
  if (!os) throw FormatError("failed writing " + path);
}

std::vector<std::string> list_files(const std::string& dir,
                                    const std::string& prefix,
                                    const std::string& suffix) {
  if (!fs::is_directory(dir))
    throw FormatError(dir + " is not a directory");
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.starts_with(prefix) && name.ends_with(suffix))
      out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct IngestedData {
  RoadCells road;
  std::vector<FlowImage> ideal;
  std::vector<FlowImage> limited;
};

IngestedData read_ingested(const std::string& data_dir) {
  IngestedData d;
  CellGrid rc = read_cell_grid((fs::path(data_dir) / "road_cells.txt").string());
  d.road.height = rc.height;
  d.road.width = rc.width;
  d.road.on = rc.cells;
  auto ideal_files = list_files(data_dir, "ideal_", ".tfe1");
  auto limited_files = list_files(data_dir, "limited_", ".tfe1");
  if (ideal_files.empty() || ideal_files.size() != limited_files.size())
    throw FormatError("ingested images missing or mismatched in " + data_dir);
  for (const std::string& f : ideal_files) d.ideal.push_back(read_flow_image_file(f));
  for (const std::string& f : limited_files)
    d.limited.push_back(read_flow_image_file(f));
  return d;
}

RoadCells full_road(std::size_t height, std::size_t width) {
  RoadCells mask;
  mask.height = height;
  mask.width = width;
  mask.on.assign(height * width, 1);
  return mask;
}

void require_same_model(const ModelConfig& a, const ModelConfig& b,
                        const char* what) {
  if (a.height != b.height || a.width != b.width || a.window_len != b.window_len ||
      a.latent_dim != b.latent_dim || a.state_dim != b.state_dim ||
      a.enc_kernel != b.enc_kernel || a.dec_kernel != b.dec_kernel ||
      a.speed_scale != b.speed_scale)
    throw FormatError(std::string(what) + " does not match the configured model");
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << body;
  if (!os) throw FormatError("failed writing " + path);
}

std::string ip_to_string(const std::optional<double>& ip) {
  return ip ? format_double(*ip) : std::string("*");
}

}  // namespace

std::uint64_t fnv1a_bytes(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path + " for hashing");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (true) {
    is.read(buf, sizeof buf);
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!is) break;
  }
  return h;
}

void write_cell_grid(const std::string& path, const CellGrid& grid) {
  if (grid.height == 0 || grid.width == 0 ||
      grid.cells.size() != grid.height * grid.width)
    throw ValidationError("cell grid extents do not match its data");
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << grid.height << " " << grid.width << "\n";
  for (std::size_t h = 0; h < grid.height; ++h) {
    for (std::size_t w = 0; w < grid.width; ++w)
      os << static_cast<char>('0' + (grid.cells[h * grid.width + w] & 7u));
    os << "\n";
  }
  if (!os) throw FormatError("failed writing " + path);
}

CellGrid read_cell_grid(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  CellGrid g;
  std::string header;
  if (!std::getline(is, header)) throw FormatError(path + ": missing header");
  std::istringstream hs(header);
  if (!(hs >> g.height >> g.width) || g.height == 0 || g.width == 0)
    throw FormatError(path + ": bad extent header");
  g.cells.reserve(g.height * g.width);
  for (std::size_t h = 0; h < g.height; ++h) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError(path + ": truncated grid");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() != g.width)
      throw FormatError(path + ": row " + std::to_string(h) + " has wrong width");
    for (char ch : line) {
      if (ch < '0' || ch > '7')
        throw FormatError(path + ": invalid cell digit '" + std::string(1, ch) + "'");
      g.cells.push_back(static_cast<std::uint8_t>(ch - '0'));
    }
  }
  return g;
}

int cmd_generate(const GenerateOptions& opts) {
  const auto t0 = Clock::now();
  try {
    if (opts.out_dir.empty())
      throw ValidationError("generate needs an output directory");
    KeyValueConfig raw = load_config(opts.config_path, opts.overrides);
    ConfigReader cfg{raw, {}};
    ScenarioConfig sc = scenario_from_config(cfg);
    if (opts.seed) {
      sc.seed = *opts.seed;
      cfg.used.set("scenario.seed", std::to_string(sc.seed));
    }
    sc.validate();
    fs::create_directories(opts.out_dir);

    std::vector<std::string> artifacts;
    std::size_t total = 0;
    for (std::size_t day = 0; day < sc.days; ++day) {
      std::vector<VehicleRecord> records;
      for (FlowSnapshot& snap : generate_day(sc, day))
        for (VehicleRecord& r : snap.records) records.push_back(std::move(r));
      total += records.size();
      char name[32];
      std::snprintf(name, sizeof name, "day_%03zu.csv", day);
      const std::string path = (fs::path(opts.out_dir) / name).string();
      write_trajectory_csv_file(path, records);
      artifacts.push_back(path);
    }
    const std::string mask_path =
        (fs::path(opts.out_dir) / "road_mask.txt").string();
    write_cell_grid(mask_path,
                    {sc.road_mask.height, sc.road_mask.width, sc.road_mask.cells});
    artifacts.push_back(mask_path);

    write_manifest(opts.out_dir, "generate", cfg.used,
                   {{"seed", std::to_string(sc.seed)},
                    {"output.total_records", std::to_string(total)}},
                   artifacts, seconds_since(t0));
    std::cout << "generate: wrote " << sc.days << " day files, " << total
              << " records, to " << opts.out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "generate: error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_ingest(const IngestOptions& opts) {
  const auto t0 = Clock::now();
  try {
    if (opts.csv_dir.empty() || opts.out_dir.empty())
      throw ValidationError("ingest needs a csv directory and an output directory");
    KeyValueConfig raw = load_config(opts.config_path, opts.overrides);
    ConfigReader cfg{raw, {}};
    GridMapConfig grid = grid_from_config(cfg);
    grid.validate();
    const double rate =
        opts.rate ? *opts.rate : cfg.number("train.limitation_rate", 1.0);
    if (!(rate > 0.0) || rate > 1.0)
      throw ValidationError("limitation rate must lie in (0, 1]");
    const std::uint64_t seed = opts.seed ? *opts.seed : cfg.u64("ingest.seed", 2024);

    auto files = list_files(opts.csv_dir, "day_", ".csv");
    if (files.empty())
      throw FormatError("no day_*.csv files in " + opts.csv_dir);
    std::vector<VehicleRecord> records;
    for (const std::string& f : files) {
      try {
        auto part = read_trajectory_csv_file(f);
        records.insert(records.end(), std::make_move_iterator(part.begin()),
                       std::make_move_iterator(part.end()));
      } catch (const FormatError& e) {
        throw FormatError(fs::path(f).filename().string() + ": " + e.what());
      }
    }
    auto slots = group_by_slot(records, grid);
    if (slots.empty()) throw ContractError("no records to ingest");

    fs::create_directories(opts.out_dir);
    std::vector<FlowImage> ideal_images;
    std::vector<std::string> artifacts;
    std::size_t kept = 0;
    for (const FlowSnapshot& snap : slots) {
      FlowImage ideal = aggregate_flow_image(snap, grid);
      FlowSnapshot limited = sample_limited(
          snap, rate, mix_seed(seed, static_cast<std::uint64_t>(snap.slot_index)));
      kept += limited.records.size();
      FlowImage lim = aggregate_flow_image(limited, grid);
      char name[40];
      std::snprintf(name, sizeof name, "ideal_%05ld.tfe1", snap.slot_index);
      std::string path = (fs::path(opts.out_dir) / name).string();
      write_flow_image_file(path, ideal);
      artifacts.push_back(path);
      std::snprintf(name, sizeof name, "limited_%05ld.tfe1", snap.slot_index);
      path = (fs::path(opts.out_dir) / name).string();
      write_flow_image_file(path, lim);
      artifacts.push_back(path);
      ideal_images.push_back(std::move(ideal));
    }
    RoadCells road = derive_road_cells(ideal_images);
    const std::string road_path =
        (fs::path(opts.out_dir) / "road_cells.txt").string();
    write_cell_grid(road_path, {road.height, road.width, road.on});
    artifacts.push_back(road_path);

    write_manifest(opts.out_dir, "ingest", cfg.used,
                   {{"seed", std::to_string(seed)},
                    {"rate", format_double(rate)},
                    {"input.csv_dir", opts.csv_dir},
                    {"input.total_records", std::to_string(records.size())},
                    {"output.sampled_records", std::to_string(kept)},
                    {"output.slots", std::to_string(slots.size())}},
                   artifacts, seconds_since(t0));
    std::cout << "ingest: " << slots.size() << " slots, kept " << kept << " of "
              << records.size() << " records at rate " << format_double(rate)
              << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "ingest: error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_train(const TrainOptions& opts) {
  const auto t0 = Clock::now();
  try {
    if (opts.data_dir.empty() || opts.out_dir.empty())
      throw ValidationError("train needs a data directory and an output directory");
    KeyValueConfig raw = load_config(opts.config_path, opts.overrides);
    ConfigReader cfg{raw, {}};
    IngestedData data = read_ingested(opts.data_dir);
    ModelConfig mc = model_from_config(cfg, data.road.height, data.road.width);
    TrainConfig tc = train_from_config(cfg);
    if (opts.seed) {
      tc.seed = *opts.seed;
      cfg.used.set("train.seed", std::to_string(tc.seed));
    }
    const std::size_t slots_per_day = cfg.size("scenario.slots_per_day", 180);

    DaySplit split = build_samples(data.ideal, data.limited, mc.window_len,
                                   slots_per_day, tc);
    if (split.train.empty())
      throw ContractError("day split produced no training samples");

    ModelParams params;
    if (!opts.resume_checkpoint.empty()) {
      ModelCheckpoint ck = load_checkpoint(opts.resume_checkpoint);
      require_same_model(ck.config, mc, "resume checkpoint");
      params = ck.params;
    } else {
      params = init_params(mc, tc.seed);
    }

    TrainResult hist = train_model(
        params, mc, split.train, split.validation, data.road, tc,
        [&](std::size_t epoch, double train_loss, double val_loss) {
          std::cout << "train: epoch " << (epoch + 1) << "/" << tc.epochs
                    << " train " << train_loss << " val " << val_loss
                    << std::endl;
        });

    fs::create_directories(opts.out_dir);
    const std::string ckpt_path =
        (fs::path(opts.out_dir) / "checkpoint.stmb").string();
    save_checkpoint(ckpt_path, params, mc);
    std::string csv = "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < hist.train_loss.size(); ++e)
      csv += std::to_string(e + 1) + "," + format_double(hist.train_loss[e]) +
             "," + format_double(hist.val_loss[e]) + "\n";
    const std::string hist_path =
        (fs::path(opts.out_dir) / "loss_history.csv").string();
    write_text_file(hist_path, csv);

    write_manifest(opts.out_dir, "train", cfg.used,
                   {{"seed", std::to_string(tc.seed)},
                    {"input.data_dir", opts.data_dir},
                    {"input.resume", opts.resume_checkpoint.empty()
                                         ? std::string("none")
                                         : opts.resume_checkpoint},
                    {"samples.train", std::to_string(split.train.size())},
                    {"samples.validation", std::to_string(split.validation.size())},
                    {"final_train_loss", format_double(hist.train_loss.back())},
                    {"final_val_loss", format_double(hist.val_loss.back())}},
                   {ckpt_path, hist_path}, seconds_since(t0));
    std::cout << "train: " << tc.epochs << " epochs on " << split.train.size()
              << " samples, final val loss " << hist.val_loss.back() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "train: error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_evaluate(const EvaluateOptions& opts) {
  const auto t0 = Clock::now();
  try {
    if (opts.checkpoint.empty() || opts.data_dir.empty() || opts.out_dir.empty())
      throw ValidationError(
          "evaluate needs a checkpoint, a data directory, and an output directory");
    KeyValueConfig raw = load_config(opts.config_path, opts.overrides);
    ConfigReader cfg{raw, {}};
    ModelCheckpoint ck = load_checkpoint(opts.checkpoint);
    IngestedData data = read_ingested(opts.data_dir);
    if (data.road.height != ck.config.height ||
        data.road.width != ck.config.width)
      throw FormatError("checkpoint grid does not match the ingested data");
    TrainConfig tc = train_from_config(cfg);
    const std::size_t slots_per_day = cfg.size("scenario.slots_per_day", 180);
    const bool masked = cfg.boolean("metrics.masked", true);

    DaySplit split = build_samples(data.ideal, data.limited,
                                   ck.config.window_len, slots_per_day, tc);
    if (split.test.empty())
      throw ContractError("day split produced no test samples");
    const RoadCells mask =
        masked ? data.road : full_road(data.road.height, data.road.width);

    EvalPair rep = evaluate_model(ck.params, ck.config, split.test, mask);

    fs::create_directories(opts.out_dir);
    std::string metrics;
    metrics += "original_rmse=" + format_double(rep.original.rmse) + "\n";
    metrics += "original_mae=" + format_double(rep.original.mae) + "\n";
    metrics += "model_rmse=" + format_double(rep.model.rmse) + "\n";
    metrics += "model_mae=" + format_double(rep.model.mae) + "\n";
    metrics += "ip=" + ip_to_string(rep.model.ip) + "\n";
    const std::string metrics_path =
        (fs::path(opts.out_dir) / "metrics.txt").string();
    write_text_file(metrics_path, metrics);

    auto series_csv = [](const std::vector<std::pair<long, double>>& rows) {
      std::string s = "slot,rmse\n";
      for (const auto& [slot, value] : rows)
        s += std::to_string(slot) + "," + format_double(value) + "\n";
      return s;
    };
    auto cdf_csv = [](const std::vector<std::pair<double, double>>& rows) {
      std::string s = "error,fraction\n";
      for (const auto& [err, frac] : rows)
        s += format_double(err) + "," + format_double(frac) + "\n";
      return s;
    };
    const std::string per_slot_path =
        (fs::path(opts.out_dir) / "per_slot.csv").string();
    const std::string per_slot_orig_path =
        (fs::path(opts.out_dir) / "per_slot_original.csv").string();
    const std::string cdf_path = (fs::path(opts.out_dir) / "cdf.csv").string();
    const std::string cdf_orig_path =
        (fs::path(opts.out_dir) / "cdf_original.csv").string();
    write_text_file(per_slot_path, series_csv(rep.model.per_slot_rmse));
    write_text_file(per_slot_orig_path, series_csv(rep.original.per_slot_rmse));
    write_text_file(cdf_path, cdf_csv(rep.model.cdf_points));
    write_text_file(cdf_orig_path, cdf_csv(rep.original.cdf_points));

    write_manifest(opts.out_dir, "evaluate", cfg.used,
                   {{"input.checkpoint", opts.checkpoint},
                    {"input.data_dir", opts.data_dir},
                    {"samples.test", std::to_string(split.test.size())},
                    {"metrics.original_rmse", format_double(rep.original.rmse)},
                    {"metrics.model_rmse", format_double(rep.model.rmse)},
                    {"metrics.ip", ip_to_string(rep.model.ip)}},
                   {metrics_path, per_slot_path, per_slot_orig_path, cdf_path,
                    cdf_orig_path},
                   seconds_since(t0));

    std::printf("evaluate: Original rmse %.3f mae %.3f | model rmse %.3f mae %.3f ip %s\n",
                rep.original.rmse, rep.original.mae, rep.model.rmse,
                rep.model.mae,
                rep.model.ip ? (format_double(*rep.model.ip) + "%").c_str() : "*");
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "evaluate: error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_sweep(const SweepOptions& opts) {
  const auto t0 = Clock::now();
  try {
    if (opts.csv_dir.empty() || opts.out_dir.empty())
      throw ValidationError("sweep needs a csv directory and an output directory");
    KeyValueConfig raw = load_config(opts.config_path, opts.overrides);
    ConfigReader cfg{raw, {}};
    std::vector<double> rates = opts.rates;
    if (rates.empty()) {
      const std::string spec_str =
          raw.get_string("sweep.rates", "0.1,0.2,0.3,0.4,0.5");
      std::istringstream rs(spec_str);
      std::string tok;
      while (std::getline(rs, tok, ',')) {
        char* end = nullptr;
        const double r = std::strtod(tok.c_str(), &end);
        if (tok.empty() || end != tok.c_str() + tok.size())
          throw ValidationError("bad sweep rate '" + tok + "'");
        rates.push_back(r);
      }
    }
    if (rates.empty()) throw ValidationError("sweep needs at least one rate");
    for (double r : rates)
      if (!(r > 0.0) || r > 1.0)
        throw ValidationError("sweep rates must lie in (0, 1]");
    {
      std::string joined;
      for (double r : rates)
        joined += (joined.empty() ? "" : ",") + format_double(r);
      cfg.used.set("sweep.rates", joined);
    }
    const std::uint64_t seed = opts.seed ? *opts.seed : cfg.u64("sweep.seed", 7);
    cfg.used.set("sweep.seed", std::to_string(seed));

    fs::create_directories(opts.out_dir);
    struct Row {
      double rate;
      bool ok = false;
      std::string stage;  // failed stage when not ok
      double original_rmse = 0, original_mae = 0, model_rmse = 0, model_mae = 0;
      std::string ip;
    };
    std::vector<Row> rows;
    for (double rate : rates) {
      Row row;
      row.rate = rate;
      const long pct = std::lround(rate * 100.0);
      char dirname[32];
      std::snprintf(dirname, sizeof dirname, "rate_%03ld", pct);
      const fs::path base = fs::path(opts.out_dir) / dirname;
      std::cout << "sweep: rate " << rate << " -> " << base.string() << std::endl;

      IngestOptions ingest;
      ingest.csv_dir = opts.csv_dir;
      ingest.config_path = opts.config_path;
      ingest.overrides = opts.overrides;
      ingest.rate = rate;
      ingest.seed = mix_seed(seed, 1000 + static_cast<std::uint64_t>(pct));
      ingest.out_dir = (base / "ingest").string();
      if (cmd_ingest(ingest) != 0) {
        row.stage = "ingest";
        rows.push_back(row);
        continue;
      }

      TrainOptions train;
      train.data_dir = ingest.out_dir;
      train.config_path = opts.config_path;
      train.overrides = opts.overrides;
      train.seed = mix_seed(seed, 2000 + static_cast<std::uint64_t>(pct));
      train.out_dir = (base / "train").string();
      if (cmd_train(train) != 0) {
        row.stage = "train";
        rows.push_back(row);
        continue;
      }

      EvaluateOptions eval;
      eval.checkpoint = (fs::path(train.out_dir) / "checkpoint.stmb").string();
      eval.data_dir = ingest.out_dir;
      eval.config_path = opts.config_path;
      eval.overrides = opts.overrides;
      eval.out_dir = (base / "eval").string();
      if (cmd_evaluate(eval) != 0) {
        row.stage = "evaluate";
        rows.push_back(row);
        continue;
      }

      KeyValueConfig metrics = KeyValueConfig::parse_file(
          (fs::path(eval.out_dir) / "metrics.txt").string());
      row.ok = true;
      row.original_rmse = metrics.get_double("original_rmse", 0.0);
      row.original_mae = metrics.get_double("original_mae", 0.0);
      row.model_rmse = metrics.get_double("model_rmse", 0.0);
      row.model_mae = metrics.get_double("model_mae", 0.0);
      row.ip = metrics.get_string("ip");
      rows.push_back(row);
    }

    std::string csv = "rate,original_rmse,original_mae,model_rmse,model_mae,ip\n";
    for (const Row& row : rows) {
      if (!row.ok) continue;
      csv += format_double(row.rate) + "," + format_double(row.original_rmse) +
             "," + format_double(row.original_mae) + "," +
             format_double(row.model_rmse) + "," + format_double(row.model_mae) +
             "," + row.ip + "\n";
    }
    const std::string csv_path = (fs::path(opts.out_dir) / "sweep.csv").string();
    write_text_file(csv_path, csv);

    std::vector<std::pair<std::string, std::string>> extra{
        {"seed", std::to_string(seed)}, {"input.csv_dir", opts.csv_dir}};
    bool all_ok = true;
    for (const Row& row : rows) {
      const long pct = std::lround(row.rate * 100.0);
      extra.emplace_back("rate." + std::to_string(pct),
                         row.ok ? "ok" : "failed: " + row.stage);
      all_ok = all_ok && row.ok;
    }
    write_manifest(opts.out_dir, "sweep", cfg.used, extra, {csv_path},
                   seconds_since(t0));

    std::cout << "sweep: rate | orig rmse | model rmse | ip\n";
    for (const Row& row : rows) {
      if (row.ok)
        std::printf("sweep: %.2f | %9.3f | %10.3f | %s\n", row.rate,
                    row.original_rmse, row.model_rmse, row.ip.c_str());
      else
        std::printf("sweep: %.2f | failed at %s\n", row.rate, row.stage.c_str());
    }
    if (!all_ok) std::cerr << "sweep: some rates failed\n";
    return all_ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "sweep: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tfe
