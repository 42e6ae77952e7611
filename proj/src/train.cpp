#include "tfe/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace tfe {

namespace {

void check_image_against_mask(const Tensor& y, const FlowImage& z,
                              const RoadCells& mask) {
  mask.validate();
  if (mask.count() == 0)
    throw ContractError("road mask selects no cells");
  if (z.height != mask.height || z.width != mask.width)
    throw ShapeError("flow image extent does not match the road mask");
  const Shape want{FlowImage::channels, mask.height, mask.width};
  if (!y.defined() || y.shape() != want)
    throw ShapeError("prediction must be " + shape_str(want) + ", got " +
                     (y.defined() ? shape_str(y.shape()) : std::string("undefined")));
}

double nan_loss() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::size_t RoadCells::count() const {
  std::size_t n = 0;
  for (std::uint8_t v : on)
    if (v) ++n;
  return n;
}

void RoadCells::validate() const {
  if (height == 0 || width == 0)
    throw ValidationError("road mask needs positive extents");
  if (on.size() != height * width)
    throw ValidationError("road mask cell count does not match its extents");
}

RoadCells derive_road_cells(const std::vector<FlowImage>& ideal) {
  if (ideal.empty())
    throw ContractError("cannot derive a road mask from zero images");
  RoadCells mask;
  mask.height = ideal.front().height;
  mask.width = ideal.front().width;
  mask.on.assign(mask.height * mask.width, 0);
  for (const FlowImage& img : ideal) {
    if (img.height != mask.height || img.width != mask.width)
      throw ShapeError("ideal images disagree on grid extents");
    for (std::size_t c = 0; c < FlowImage::channels; ++c)
      for (std::size_t i = 0; i < mask.on.size(); ++i)
        if (img.occupancy[c * mask.on.size() + i] > 0) mask.on[i] = 1;
  }
  return mask;
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0)
    throw ValidationError("epochs and batch_size must be positive");
  if (!(learning_rate > 0.0))
    throw ValidationError("learning_rate must be positive");
  if (!(limitation_rate > 0.0) || limitation_rate > 1.0)
    throw ValidationError("limitation_rate must lie in (0, 1]");
  if (train_days == 0)
    throw ValidationError("the split needs at least one training day");
}

DaySplit build_samples(const std::vector<FlowImage>& ideal,
                       const std::vector<FlowImage>& limited,
                       std::size_t window_len, std::size_t slots_per_day,
                       const TrainConfig& cfg) {
  cfg.validate();
  if (window_len == 0 || slots_per_day == 0)
    throw ValidationError("window length and slots per day must be positive");
  if (ideal.size() != limited.size() || ideal.empty())
    throw ContractError("ideal and limited image lists must match and be nonempty");
  for (std::size_t i = 0; i < ideal.size(); ++i) {
    if (ideal[i].slot_index != limited[i].slot_index)
      throw SequencingError("ideal and limited images disagree at position " +
                            std::to_string(i));
    if (i > 0 && ideal[i].slot_index != ideal[i - 1].slot_index + 1)
      throw SequencingError("missing slot " +
                            std::to_string(ideal[i - 1].slot_index + 1) +
                            " in the ingested sequence");
  }

  DaySplit out;
  for (std::size_t i = 0; i < ideal.size(); ++i) {
    if (i + 1 < window_len) continue;
    const long slot = ideal[i].slot_index;
    if (slot < 0) continue;
    const std::size_t day = static_cast<std::size_t>(slot) / slots_per_day;
    std::vector<Sample>* bucket = nullptr;
    if (day < cfg.train_days)
      bucket = &out.train;
    else if (day < cfg.train_days + cfg.val_days)
      bucket = &out.validation;
    else if (day < cfg.train_days + cfg.val_days + cfg.test_days)
      bucket = &out.test;
    if (!bucket) continue;
    Sample s;
    for (std::size_t j = i + 1 - window_len; j <= i; ++j)
      s.window.push_back(flow_image_to_tensor(limited[j]));
    s.original = limited[i];
    s.ideal = ideal[i];
    bucket->push_back(std::move(s));
  }
  return out;
}

Tensor masked_mse_loss(const Tensor& y, const FlowImage& z, const RoadCells& mask) {
  check_image_against_mask(y, z, mask);
  const std::size_t cells = mask.count();
  const std::size_t plane = mask.height * mask.width;
  Tensor target = flow_image_to_tensor(z);
  Tensor gate = Tensor::zeros({FlowImage::channels, mask.height, mask.width});
  auto gd = gate.data();
  for (std::size_t c = 0; c < FlowImage::channels; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      if (mask.on[i]) gd[c * plane + i] = 1.0;
  Tensor diff = mul(gate, sub(y, target));
  return scale(sum(mul(diff, diff)),
               1.0 / static_cast<double>(FlowImage::channels * cells));
}

void ErrorStats::add(const Tensor& y, const FlowImage& z, const RoadCells& mask) {
  check_image_against_mask(y, z, mask);
  const std::size_t plane = mask.height * mask.width;
  const auto yd = y.data();
  for (std::size_t c = 0; c < FlowImage::channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      if (!mask.on[i]) continue;
      const double e = yd[c * plane + i] - z.values[c * plane + i];
      sq_sum_ += e * e;
      abs_sum_ += std::abs(e);
      ++n_;
    }
}

double ErrorStats::rmse() const {
  if (n_ == 0) throw ContractError("no pooled errors to summarize");
  return std::sqrt(sq_sum_ / static_cast<double>(n_));
}

double ErrorStats::mae() const {
  if (n_ == 0) throw ContractError("no pooled errors to summarize");
  return abs_sum_ / static_cast<double>(n_);
}

double rmse(const Tensor& y, const FlowImage& z, const RoadCells& mask) {
  ErrorStats s;
  s.add(y, z, mask);
  return s.rmse();
}

double mae(const Tensor& y, const FlowImage& z, const RoadCells& mask) {
  ErrorStats s;
  s.add(y, z, mask);
  return s.mae();
}

double improvement_percentage(double rmse_original, double rmse_model) {
  if (!(rmse_original > 0.0))
    throw ContractError("improvement needs a positive baseline rmse");
  return 100.0 * (rmse_original - rmse_model) / rmse_original;
}

std::vector<std::pair<double, double>> error_cdf(std::vector<double> errors) {
  if (errors.empty()) throw ContractError("cdf of an empty series");
  std::sort(errors.begin(), errors.end());
  std::vector<std::pair<double, double>> points;
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i + 1 < errors.size() && errors[i + 1] == errors[i]) continue;
    points.emplace_back(errors[i], static_cast<double>(i + 1) / n);
  }
  return points;
}

EvalPair evaluate(const Predictor& predict, const std::vector<Sample>& test,
                  const RoadCells& mask) {
  if (test.empty()) throw ContractError("evaluation needs at least one sample");
  EvalPair out;
  ErrorStats pooled_orig, pooled_model;
  std::vector<double> orig_series, model_series;
  for (const Sample& s : test) {
    Tensor yhat = predict(s);
    Tensor x = flow_image_to_tensor(s.original);
    ErrorStats slot_orig, slot_model;
    slot_orig.add(x, s.ideal, mask);
    slot_model.add(yhat, s.ideal, mask);
    pooled_orig.add(x, s.ideal, mask);
    pooled_model.add(yhat, s.ideal, mask);
    out.original.per_slot_rmse.emplace_back(s.ideal.slot_index, slot_orig.rmse());
    out.model.per_slot_rmse.emplace_back(s.ideal.slot_index, slot_model.rmse());
    orig_series.push_back(slot_orig.rmse());
    model_series.push_back(slot_model.rmse());
  }
  out.original.rmse = pooled_orig.rmse();
  out.original.mae = pooled_orig.mae();
  out.model.rmse = pooled_model.rmse();
  out.model.mae = pooled_model.mae();
  if (out.original.rmse > 0.0)
    out.model.ip = improvement_percentage(out.original.rmse, out.model.rmse);
  out.original.cdf_points = error_cdf(orig_series);
  out.model.cdf_points = error_cdf(model_series);
  return out;
}

EvalPair evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                        const std::vector<Sample>& test, const RoadCells& mask) {
  params.validate_shapes(cfg);
  return evaluate(
      [&](const Sample& s) { return model_forward(s.window, params, cfg); }, test,
      mask);
}

TrainResult train_model(ModelParams& params, const ModelConfig& cfg,
                        const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const RoadCells& mask,
                        const TrainConfig& tcfg, const EpochCallback& on_epoch) {
  tcfg.validate();
  params.validate_shapes(cfg);
  if (train_set.empty())
    throw ContractError("training needs at least one sample");

  std::vector<Tensor> plist = params.parameters();
  AdamState opt;
  AdamConfig ocfg;
  ocfg.lr = tcfg.learning_rate;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult res;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    Rng shuffle(mix_seed(tcfg.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t take = std::min(tcfg.batch_size, order.size() - pos);
      for (Tensor& t : plist) t.zero_grad();
      for (std::size_t b = 0; b < take; ++b) {
        const Sample& s = train_set[order[pos + b]];
        Graph g;
        Graph::Scope scope(g);
        Tensor loss = masked_mse_loss(model_forward(s.window, params, cfg),
                                      s.ideal, mask);
        epoch_loss += loss.item();
        g.backward(scale(loss, 1.0 / static_cast<double>(take)));
      }
      adam_step(plist, opt, ocfg);
      // A noisy batch can push a decay rate across zero; project it back so
      // the scan stays contractive and the checkpoint stays saveable.
      for (double& a : params.ssm.A.data()) a = std::min(a, -1e-4);
      pos += take;
    }
    res.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

    if (val_set.empty()) {
      res.val_loss.push_back(nan_loss());
    } else {
      double v = 0.0;
      for (const Sample& s : val_set)
        v += masked_mse_loss(model_forward(s.window, params, cfg), s.ideal, mask)
                 .item();
      res.val_loss.push_back(v / static_cast<double>(val_set.size()));
    }
    if (on_epoch) on_epoch(epoch, res.train_loss.back(), res.val_loss.back());
  }
  return res;
}

}  // namespace tfe
