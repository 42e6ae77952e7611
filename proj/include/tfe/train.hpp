#pragma once
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "tfe/grid.hpp"
#include "tfe/model.hpp"
#include "tfe/tensor.hpp"

namespace tfe {

// Grid cells that ever saw traffic in the ideal images. Loss and metrics
// run only over these cells; everything else is identically zero on both
// sides and would deflate the error.
struct RoadCells {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> on;  // H*W row-major, nonzero = road

  bool at(std::size_t h, std::size_t w) const { return on[h * width + w] != 0; }
  std::size_t count() const;
  void validate() const;
};

RoadCells derive_road_cells(const std::vector<FlowImage>& ideal);

// One supervised instance: the limited window feeding the model, the
// limited image at the window's end (the estimate to beat), and the ideal
// target for the same slot.
struct Sample {
  std::vector<Tensor> window;
  FlowImage original;
  FlowImage ideal;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
  double limitation_rate = 0.2;  // fraction of records kept upstream
  std::size_t train_days = 4;
  std::size_t val_days = 1;
  std::size_t test_days = 1;

  void validate() const;
};

// Chronological windows over matched ideal/limited image lists, bucketed by
// the day of the ending slot. The slot sequence must be contiguous; windows
// may reach back across a day boundary.
struct DaySplit {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
};

DaySplit build_samples(const std::vector<FlowImage>& ideal,
                       const std::vector<FlowImage>& limited,
                       std::size_t window_len, std::size_t slots_per_day,
                       const TrainConfig& cfg);

// Mean of (y - z)^2 over road cells, all four channels pooled.
// Differentiable in y.
Tensor masked_mse_loss(const Tensor& y, const FlowImage& z, const RoadCells& mask);

// Pools masked per-entry errors across any number of images.
class ErrorStats {
 public:
  void add(const Tensor& y, const FlowImage& z, const RoadCells& mask);
  double rmse() const;
  double mae() const;
  std::size_t count() const { return n_; }

 private:
  double sq_sum_ = 0.0;
  double abs_sum_ = 0.0;
  std::size_t n_ = 0;
};

double rmse(const Tensor& y, const FlowImage& z, const RoadCells& mask);
double mae(const Tensor& y, const FlowImage& z, const RoadCells& mask);

// 100 * (rmse_original - rmse_model) / rmse_original.
double improvement_percentage(double rmse_original, double rmse_model);

// Empirical CDF: fraction i/n at the i-th order statistic, equal values
// merged into one step.
std::vector<std::pair<double, double>> error_cdf(std::vector<double> errors);

struct EvalReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> ip;  // vs the Original estimation; empty = undefined
  std::vector<std::pair<long, double>> per_slot_rmse;
  std::vector<std::pair<double, double>> cdf_points;
};

struct EvalPair {
  EvalReport original;
  EvalReport model;
};

using Predictor = std::function<Tensor(const Sample&)>;

EvalPair evaluate(const Predictor& predict, const std::vector<Sample>& test,
                  const RoadCells& mask);
EvalPair evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                        const std::vector<Sample>& test, const RoadCells& mask);

struct TrainResult {
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;    // NaN entries when no validation set
};

// Called after each epoch with (epoch index, train loss, val loss).
using EpochCallback = std::function<void(std::size_t, double, double)>;

// Adam over shuffled minibatches of the masked MSE; per-sample gradients
// accumulate in a fixed order, so runs are deterministic per seed.
TrainResult train_model(ModelParams& params, const ModelConfig& cfg,
                        const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const RoadCells& mask,
                        const TrainConfig& tcfg,
                        const EpochCallback& on_epoch = {});

}  // namespace tfe
