#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "tfe/train.hpp"

using namespace tfe;

namespace {

RoadCells two_cell_mask() {
  RoadCells mask;
  mask.height = 2;
  mask.width = 3;
  mask.on.assign(6, 0);
  mask.on[1] = 1;  // (0,1)
  mask.on[5] = 1;  // (1,2)
  return mask;
}

FlowImage blank_image(std::size_t h, std::size_t w, long slot = 0) {
  FlowImage img;
  img.slot_index = slot;
  img.height = h;
  img.width = w;
  img.values.assign(4 * h * w, 0.0);
  img.occupancy.assign(4 * h * w, 0);
  return img;
}

RoadCells full_mask(std::size_t h, std::size_t w) {
  RoadCells mask;
  mask.height = h;
  mask.width = w;
  mask.on.assign(h * w, 1);
  return mask;
}

FlowImage random_image(std::size_t h, std::size_t w, Rng& rng, long slot = 0) {
  FlowImage img = blank_image(h, w, slot);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    img.values[i] = rng.uniform(0.0, 100.0);
    img.occupancy[i] = 1;
  }
  return img;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.height = 3;
  cfg.width = 3;
  cfg.window_len = 2;
  cfg.latent_dim = 4;
  cfg.state_dim = 2;
  return cfg;
}

// windows of constant images so targets are exactly reachable
std::vector<Sample> constant_samples(const ModelConfig& cfg, Rng& rng,
                                     std::size_t n) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    FlowImage lim = random_image(cfg.height, cfg.width, rng, long(i));
    FlowImage ideal = random_image(cfg.height, cfg.width, rng, long(i));
    Sample s;
    for (std::size_t j = 0; j < cfg.window_len; ++j)
      s.window.push_back(flow_image_to_tensor(lim));
    s.original = lim;
    s.ideal = ideal;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("masked mse loss hand cases") {
  RoadCells mask = two_cell_mask();
  FlowImage z = blank_image(2, 3);
  Rng rng(5);
  for (std::size_t i = 0; i < z.values.size(); ++i) z.values[i] = rng.uniform(0, 50);

  Tensor y = flow_image_to_tensor(z);
  CHECK(masked_mse_loss(y, z, mask).item() == 0.0);

  // off-mask disagreement is invisible
  y.data()[0] += 1000.0;
  CHECK(masked_mse_loss(y, z, mask).item() == 0.0);

  // one masked cell off by 3 in all four channels, pooled mean stays 9
  RoadCells one;
  one.height = 2;
  one.width = 3;
  one.on.assign(6, 0);
  one.on[4] = 1;
  Tensor y2 = flow_image_to_tensor(z);
  for (std::size_t c = 0; c < 4; ++c) y2.data()[c * 6 + 4] += 3.0;
  CHECK(masked_mse_loss(y2, z, one).item() == doctest::Approx(9.0).epsilon(1e-15));

  // a single-channel miss of 3 spreads over the 4 pooled entries
  Tensor y3 = flow_image_to_tensor(z);
  y3.data()[0 * 6 + 4] += 3.0;
  CHECK(masked_mse_loss(y3, z, one).item() == doctest::Approx(2.25).epsilon(1e-15));
}

TEST_CASE("masked mse loss matches a naive double loop") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t h = 3 + trial % 2, w = 4;
    RoadCells mask;
    mask.height = h;
    mask.width = w;
    mask.on.assign(h * w, 0);
    for (auto& v : mask.on) v = rng.uniform() < 0.6 ? 1 : 0;
    if (mask.count() == 0) mask.on[0] = 1;
    FlowImage z = random_image(h, w, rng);
    Tensor y = Tensor::zeros({4, h, w});
    oracle::fill_uniform(y, rng, 0.0, 100.0);

    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t hh = 0; hh < h; ++hh)
        for (std::size_t ww = 0; ww < w; ++ww) {
          if (!mask.at(hh, ww)) continue;
          const double e = y.at({c, hh, ww}) - z.value_at(c, hh, ww);
          acc += e * e;
          ++n;
        }
    CHECK(std::abs(masked_mse_loss(y, z, mask).item() - acc / double(n)) <= 1e-12);
  }
}

TEST_CASE("masked mse loss gradient only lands on road cells") {
  RoadCells mask = two_cell_mask();
  FlowImage z = blank_image(2, 3);
  Tensor y = Tensor::zeros({4, 2, 3});
  Rng rng(3);
  oracle::fill_uniform(y, rng, -5.0, 5.0);
  y.set_requires_grad(true);
  Graph g;
  {
    Graph::Scope scope(g);
    g.backward(masked_mse_loss(y, z, mask));
  }
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t w = 0; w < 3; ++w) {
        const double gv = y.grad()[(c * 2 + h) * 3 + w];
        if (mask.at(h, w))
          CHECK(gv == doctest::Approx(2.0 * y.at({c, h, w}) / 8.0).epsilon(1e-12));
        else
          CHECK(gv == 0.0);
      }
}

TEST_CASE("loss and metrics reject empty masks and bad shapes") {
  RoadCells empty;
  empty.height = 2;
  empty.width = 2;
  empty.on.assign(4, 0);
  FlowImage z = blank_image(2, 2);
  Tensor y = Tensor::zeros({4, 2, 2});
  CHECK_THROWS_AS(masked_mse_loss(y, z, empty), ContractError);
  CHECK_THROWS_AS(rmse(y, z, empty), ContractError);
  CHECK_THROWS_AS(mae(y, z, empty), ContractError);
  RoadCells mask = full_mask(2, 2);
  CHECK_THROWS_AS(masked_mse_loss(Tensor::zeros({4, 3, 2}), z, mask), ShapeError);
  CHECK_THROWS_AS(rmse(Tensor::zeros({3, 2, 2}), z, mask), ShapeError);
  FlowImage wrong = blank_image(3, 3);
  CHECK_THROWS_AS(masked_mse_loss(y, wrong, mask), ShapeError);
}

TEST_CASE("rmse and mae hand case with two cells") {
  RoadCells mask = two_cell_mask();
  FlowImage z = blank_image(2, 3);
  Tensor y = flow_image_to_tensor(z);
  CHECK(rmse(y, z, mask) == 0.0);
  CHECK(mae(y, z, mask) == 0.0);

  // cell errors 3 and 4 across every channel
  for (std::size_t c = 0; c < 4; ++c) {
    y.data()[c * 6 + 1] += 3.0;
    y.data()[c * 6 + 5] += 4.0;
  }
  CHECK(rmse(y, z, mask) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-14));
  CHECK(mae(y, z, mask) == doctest::Approx(3.5).epsilon(1e-14));
}

TEST_CASE("rmse dominates mae") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    RoadCells mask = full_mask(3, 3);
    FlowImage z = random_image(3, 3, rng);
    Tensor y = Tensor::zeros({4, 3, 3});
    oracle::fill_uniform(y, rng, 0.0, 100.0);
    CHECK(rmse(y, z, mask) >= mae(y, z, mask));
  }
}

TEST_CASE("improvement percentage basics") {
  CHECK(improvement_percentage(13.269, 9.955) ==
        doctest::Approx(24.98).epsilon(0.0005));
  CHECK(improvement_percentage(13.269, 7.504) ==
        doctest::Approx(43.45).epsilon(0.0005));
  CHECK(improvement_percentage(5.0, 5.0) == 0.0);
  CHECK_THROWS_AS(improvement_percentage(0.0, 1.0), ContractError);
  CHECK_THROWS_AS(improvement_percentage(-2.0, 1.0), ContractError);
}

TEST_CASE("improvement percentage reproduces the printed comparison table") {
  const double original[5] = {13.269, 11.072, 9.481, 8.187, 7.056};
  struct Row {
    double rmse[5];
    double ip[5];
  };
  const Row rows[3] = {
      {{9.955, 8.786, 7.957, 7.134, 6.631},
       {24.979, 20.638, 16.065, 12.854, 6.008}},
      {{8.067, 6.966, 6.443, 5.967, 5.817},
       {39.207, 37.082, 32.043, 27.118, 17.549}},
      {{7.504, 6.379, 5.516, 4.857, 4.288},
       {43.449, 42.386, 41.813, 40.670, 39.220}},
  };
  for (const Row& row : rows)
    for (int i = 0; i < 5; ++i) {
      const double got = improvement_percentage(original[i], row.rmse[i]);
      INFO("level ", i, " expected ", row.ip[i], " got ", got);
      CHECK(std::abs(got - row.ip[i]) <= 0.02);
    }
}

TEST_CASE("error cdf steps") {
  auto single = error_cdf({5.0});
  REQUIRE(single.size() == 1);
  CHECK(single[0].first == 5.0);
  CHECK(single[0].second == 1.0);

  auto four = error_cdf({3.0, 1.0, 4.0, 2.0});
  REQUIRE(four.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(four[i].first == double(i + 1));
    CHECK(four[i].second == doctest::Approx(0.25 * (i + 1)));
  }

  auto flat = error_cdf({2.5, 2.5, 2.5});
  REQUIRE(flat.size() == 1);
  CHECK(flat[0].first == 2.5);
  CHECK(flat[0].second == 1.0);

  CHECK_THROWS_AS(error_cdf({}), ContractError);

  Rng rng(12);
  std::vector<double> vals;
  for (int i = 0; i < 50; ++i) vals.push_back(rng.uniform(0, 10));
  auto cdf = error_cdf(vals);
  for (std::size_t i = 1; i < cdf.size(); ++i) {
    CHECK(cdf[i].first > cdf[i - 1].first);
    CHECK(cdf[i].second > cdf[i - 1].second);
  }
  CHECK(cdf.back().second == 1.0);
}

TEST_CASE("derive road cells unions occupancy over images") {
  FlowImage a = blank_image(2, 2, 0);
  FlowImage b = blank_image(2, 2, 1);
  a.occupancy[a.idx(0, 0, 1)] = 2;
  b.occupancy[b.idx(3, 1, 0)] = 1;
  RoadCells mask = derive_road_cells({a, b});
  CHECK(mask.count() == 2);
  CHECK(mask.at(0, 1));
  CHECK(mask.at(1, 0));
  CHECK_FALSE(mask.at(0, 0));
  CHECK_THROWS_AS(derive_road_cells({}), ContractError);
}

TEST_CASE("build samples splits windows by the day of their ending slot") {
  TrainConfig cfg;
  cfg.train_days = 1;
  cfg.val_days = 1;
  cfg.test_days = 1;
  Rng rng(4);
  std::vector<FlowImage> ideal, limited;
  for (long s = 0; s < 12; ++s) {
    ideal.push_back(random_image(2, 2, rng, s));
    limited.push_back(random_image(2, 2, rng, s));
  }
  DaySplit split = build_samples(ideal, limited, 2, 4, cfg);
  CHECK(split.train.size() == 3);  // slots 1..3
  CHECK(split.validation.size() == 4);  // slots 4..7, window reaches back
  CHECK(split.test.size() == 4);        // slots 8..11
  CHECK(split.validation.front().ideal.slot_index == 4);
  CHECK(split.test.back().ideal.slot_index == 11);
  REQUIRE(split.train.front().window.size() == 2);
  // the window holds the limited images, chronologically
  CHECK(std::memcmp(split.train.front().window[0].data().data(),
                    limited[0].values.data(), 16 * sizeof(double)) == 0);
  CHECK(std::memcmp(split.train.front().window[1].data().data(),
                    limited[1].values.data(), 16 * sizeof(double)) == 0);
  // the original field carries the ending limited image
  CHECK(split.validation.front().original.slot_index == 4);

  std::vector<FlowImage> gap_ideal = ideal, gap_limited = limited;
  gap_ideal.erase(gap_ideal.begin() + 6);
  gap_limited.erase(gap_limited.begin() + 6);
  CHECK_THROWS_AS(build_samples(gap_ideal, gap_limited, 2, 4, cfg),
                  SequencingError);
  CHECK_THROWS_AS(build_samples({}, {}, 2, 4, cfg), ContractError);
}

TEST_CASE("evaluate with an identity predictor matches the original estimation") {
  ModelConfig cfg = tiny_model();
  Rng rng(21);
  auto samples = constant_samples(cfg, rng, 5);
  RoadCells mask = full_mask(cfg.height, cfg.width);
  EvalPair rep = evaluate(
      [](const Sample& s) { return flow_image_to_tensor(s.original); }, samples,
      mask);
  CHECK(rep.model.rmse == rep.original.rmse);
  CHECK(rep.model.mae == rep.original.mae);
  REQUIRE(rep.model.ip.has_value());
  CHECK(*rep.model.ip == 0.0);
  CHECK_FALSE(rep.original.ip.has_value());
  CHECK(rep.model.cdf_points.back().second == 1.0);
  CHECK(rep.original.cdf_points.back().second == 1.0);
  REQUIRE(rep.model.per_slot_rmse.size() == samples.size());
}

TEST_CASE("pooled rmse equals quadrature mean of equal-count slots") {
  ModelConfig cfg = tiny_model();
  Rng rng(31);
  auto samples = constant_samples(cfg, rng, 7);
  RoadCells mask = full_mask(cfg.height, cfg.width);
  EvalPair rep = evaluate(
      [](const Sample& s) { return flow_image_to_tensor(s.original); }, samples,
      mask);
  double acc = 0.0;
  for (const auto& [slot, r] : rep.model.per_slot_rmse) acc += r * r;
  const double quad = std::sqrt(acc / double(rep.model.per_slot_rmse.size()));
  CHECK(std::abs(quad - rep.model.rmse) <= 1e-10);
}

TEST_CASE("evaluation metrics ignore sample order") {
  ModelConfig cfg = tiny_model();
  Rng rng(41);
  auto samples = constant_samples(cfg, rng, 6);
  RoadCells mask = full_mask(cfg.height, cfg.width);
  auto ident = [](const Sample& s) { return flow_image_to_tensor(s.original); };
  EvalPair fwd = evaluate(ident, samples, mask);
  std::reverse(samples.begin(), samples.end());
  EvalPair rev = evaluate(ident, samples, mask);
  CHECK(std::abs(fwd.model.rmse - rev.model.rmse) <= 1e-10);
  CHECK(std::abs(fwd.model.mae - rev.model.mae) <= 1e-10);
  auto a = fwd.model.per_slot_rmse, b = rev.model.per_slot_rmse;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
}

TEST_CASE("evaluate rejects an empty test set") {
  RoadCells mask = full_mask(2, 2);
  CHECK_THROWS_AS(
      evaluate([](const Sample& s) { return flow_image_to_tensor(s.original); },
               {}, mask),
      ContractError);
}

TEST_CASE("training overfits a single sample") {
  ModelConfig cfg = tiny_model();
  Rng rng(51);
  auto samples = constant_samples(cfg, rng, 1);
  RoadCells mask = full_mask(cfg.height, cfg.width);
  ModelParams params = init_params(cfg, 7);

  TrainConfig tcfg;
  tcfg.epochs = 400;
  tcfg.batch_size = 1;
  tcfg.learning_rate = 1e-2;
  tcfg.seed = 11;
  TrainResult res = train_model(params, cfg, samples, {}, mask, tcfg);
  REQUIRE(res.train_loss.size() == 400);
  CHECK(res.train_loss.front() > 0.0);
  CHECK(res.train_loss.back() * 100.0 <= res.train_loss.front());
  CHECK(std::isnan(res.val_loss.back()));
}

TEST_CASE("training is deterministic per seed") {
  ModelConfig cfg = tiny_model();
  Rng rng(61);
  auto samples = constant_samples(cfg, rng, 6);
  RoadCells mask = full_mask(cfg.height, cfg.width);
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.batch_size = 2;
  tcfg.seed = 5;

  ModelParams a = init_params(cfg, 9);
  ModelParams b = init_params(cfg, 9);
  TrainResult ra = train_model(a, cfg, samples, samples, mask, tcfg);
  TrainResult rb = train_model(b, cfg, samples, samples, mask, tcfg);
  CHECK(ra.train_loss == rb.train_loss);
  CHECK(ra.val_loss == rb.val_loss);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::memcmp(pa[i].data().data(), pb[i].data().data(),
                      pa[i].size() * sizeof(double)) == 0);

  ModelParams c = init_params(cfg, 9);
  TrainConfig other = tcfg;
  other.seed = 6;
  TrainResult rc = train_model(c, cfg, samples, samples, mask, other);
  CHECK(ra.train_loss != rc.train_loss);
}

TEST_CASE("training lowers validation loss on a learnable pattern") {
  ModelConfig cfg = tiny_model();
  Rng rng(71);
  // ideal = limited everywhere: the map to learn is close to identity
  std::vector<Sample> train, val;
  for (int i = 0; i < 8; ++i) {
    FlowImage img = random_image(cfg.height, cfg.width, rng, i);
    Sample s;
    for (std::size_t j = 0; j < cfg.window_len; ++j)
      s.window.push_back(flow_image_to_tensor(img));
    s.original = img;
    s.ideal = img;
    (i < 6 ? train : val).push_back(std::move(s));
  }
  RoadCells mask = full_mask(cfg.height, cfg.width);
  ModelParams params = init_params(cfg, 77);

  double init_val = 0.0;
  for (const Sample& s : val)
    init_val +=
        masked_mse_loss(model_forward(s.window, params, cfg), s.ideal, mask).item();
  init_val /= double(val.size());

  TrainConfig tcfg;
  tcfg.epochs = 60;
  tcfg.batch_size = 3;
  tcfg.learning_rate = 5e-3;
  tcfg.seed = 2;
  TrainResult res = train_model(params, cfg, train, val, mask, tcfg);
  CHECK(res.val_loss.back() < init_val);
  CHECK(res.val_loss.back() < res.val_loss.front());
}

TEST_CASE("training contracts") {
  ModelConfig cfg = tiny_model();
  ModelParams params = init_params(cfg, 1);
  RoadCells mask = full_mask(cfg.height, cfg.width);
  TrainConfig tcfg;
  CHECK_THROWS_AS(train_model(params, cfg, {}, {}, mask, tcfg), ContractError);
  TrainConfig bad = tcfg;
  bad.learning_rate = 0.0;
  Rng rng(1);
  auto samples = constant_samples(cfg, rng, 1);
  CHECK_THROWS_AS(train_model(params, cfg, samples, {}, mask, bad),
                  ValidationError);
  bad = tcfg;
  bad.limitation_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
