#include "tfe/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <utility>

#include "tfe/binio.hpp"

namespace tfe {

namespace {

constexpr std::size_t kDirections = GridMapConfig::num_directions;
constexpr std::uint32_t kCheckpointVersion = 1;

void need_shape(const Tensor& t, const Shape& want, const char* name) {
  if (!t.defined() || t.shape() != want)
    throw ShapeError(std::string(name) + " must be " + shape_str(want) + ", got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
}

std::vector<std::pair<std::string, Tensor>> named_tensors(const ModelParams& p) {
  return {{"enc_conv", p.enc_conv},   {"enc_fc_w", p.enc_fc_w},
          {"enc_fc_b", p.enc_fc_b},   {"ssm_A", p.ssm.A},
          {"ssm_D_delta", p.ssm.D_delta}, {"ssm_W_B", p.ssm.W_B},
          {"ssm_W_C", p.ssm.W_C},     {"ssm_W_delta", p.ssm.W_delta},
          {"dec_fc_w", p.dec_fc_w},   {"dec_fc_b", p.dec_fc_b},
          {"dec_conv", p.dec_conv}};
}

}  // namespace

void ModelConfig::validate() const {
  if (height == 0 || width == 0 || window_len == 0 || latent_dim == 0 ||
      state_dim == 0)
    throw ValidationError("model config dimensions must all be positive");
  if (enc_kernel % 2 == 0 || dec_kernel % 2 == 0 || enc_kernel == 0 ||
      dec_kernel == 0)
    throw ValidationError("model kernel sizes must be odd");
  if (!(speed_scale > 0.0))
    throw ValidationError("speed_scale must be positive");
}

void ModelParams::validate_shapes(const ModelConfig& cfg) const {
  cfg.validate();
  need_shape(enc_conv, {1, 1, cfg.enc_kernel, cfg.enc_kernel}, "enc_conv");
  need_shape(enc_fc_w, {cfg.latent_dim, kDirections}, "enc_fc_w");
  need_shape(enc_fc_b, {cfg.latent_dim}, "enc_fc_b");
  if (ssm.channels != cfg.latent_dim || ssm.state_dim != cfg.state_dim)
    throw ShapeError("ssm block dimensions do not match the model config");
  ssm.validate_shapes();
  need_shape(dec_fc_w, {kDirections, cfg.latent_dim * cfg.window_len}, "dec_fc_w");
  need_shape(dec_fc_b, {kDirections}, "dec_fc_b");
  need_shape(dec_conv, {kDirections, kDirections, cfg.dec_kernel, cfg.dec_kernel},
             "dec_conv");
}

void ModelParams::validate(const ModelConfig& cfg) const {
  validate_shapes(cfg);
  ssm.validate();
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out{enc_conv, enc_fc_w, enc_fc_b};
  for (const Tensor& t : ssm.parameters()) out.push_back(t);
  out.push_back(dec_fc_w);
  out.push_back(dec_fc_b);
  out.push_back(dec_conv);
  return out;
}

Tensor encode(const Tensor& frame, const ModelParams& params, const ModelConfig& cfg) {
  params.validate_shapes(cfg);
  need_shape(frame, {kDirections, cfg.height, cfg.width}, "encode input");
  const std::size_t pad = (cfg.enc_kernel - 1) / 2;
  std::vector<Tensor> smoothed;
  smoothed.reserve(kDirections);
  for (std::size_t c = 0; c < kDirections; ++c)
    smoothed.push_back(conv2d(slice(frame, 0, c, 1), params.enc_conv, pad));
  const std::size_t m = cfg.height * cfg.width;
  Tensor pixels = transpose(reshape(concat(smoothed, 0), {kDirections, m}), 0, 1);
  Tensor lifted = linear(pixels, params.enc_fc_w, params.enc_fc_b);  // m x K
  return reshape(transpose(lifted, 0, 1), {cfg.latent_dim, cfg.height, cfg.width});
}

Tensor serialize_cells(std::span<const Tensor> frames) {
  if (frames.empty())
    throw ShapeError("serialize_cells needs at least one frame");
  const Tensor& first = frames.front();
  if (!first.defined() || first.rank() != 3)
    throw ShapeError("serialize_cells frames must be rank-3 K x H x W");
  for (const Tensor& f : frames)
    if (!f.defined() || f.shape() != first.shape())
      throw ShapeError("serialize_cells frames must share one shape");
  const std::size_t k = first.shape()[0];
  const std::size_t m = first.shape()[1] * first.shape()[2];
  std::vector<Tensor> steps;
  steps.reserve(frames.size());
  for (const Tensor& f : frames)
    steps.push_back(reshape(transpose(reshape(f, {k, m}), 0, 1), {m, k, 1}));
  return concat(steps, 2);
}

std::vector<Tensor> deserialize_cells(const Tensor& cells, std::size_t height,
                                      std::size_t width) {
  const std::size_t m = height * width;
  if (!cells.defined() || cells.rank() != 3 || cells.shape()[0] != m)
    throw ShapeError("deserialize_cells expects (H*W) x K x L cells for the given grid");
  const std::size_t k = cells.shape()[1];
  const std::size_t l = cells.shape()[2];
  const auto src = cells.data();
  std::vector<Tensor> frames;
  frames.reserve(l);
  for (std::size_t step = 0; step < l; ++step) {
    Tensor f = Tensor::zeros({k, height, width});
    auto dst = f.data();
    for (std::size_t mi = 0; mi < m; ++mi)
      for (std::size_t ki = 0; ki < k; ++ki)
        dst[ki * m + mi] = src[(mi * k + ki) * l + step];
    frames.push_back(std::move(f));
  }
  return frames;
}

Tensor decode(const Tensor& cells, const ModelParams& params, const ModelConfig& cfg) {
  params.validate_shapes(cfg);
  const std::size_t m = cfg.height * cfg.width;
  need_shape(cells, {m, cfg.latent_dim, cfg.window_len}, "decode input");
  Tensor flat = reshape(cells, {m, cfg.latent_dim * cfg.window_len});
  Tensor mapped = linear(flat, params.dec_fc_w, params.dec_fc_b);  // m x 4
  Tensor image = reshape(transpose(mapped, 0, 1), {kDirections, cfg.height, cfg.width});
  return conv2d(image, params.dec_conv, (cfg.dec_kernel - 1) / 2);
}

Tensor model_forward(std::span<const Tensor> window, const ModelParams& params,
                     const ModelConfig& cfg) {
  params.validate_shapes(cfg);
  if (window.size() != cfg.window_len)
    throw ContractError("model forward needs a window of " +
                        std::to_string(cfg.window_len) + " frames, got " +
                        std::to_string(window.size()));
  std::vector<Tensor> latents;
  latents.reserve(window.size());
  for (const Tensor& frame : window)
    latents.push_back(encode(scale(frame, 1.0 / cfg.speed_scale), params, cfg));
  Tensor cells = serialize_cells(latents);
  Tensor mixed = mamba_block_forward(cells, params.ssm);
  return scale(decode(mixed, params, cfg), cfg.speed_scale);
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  auto uniform_fan = [&](Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    t.set_requires_grad(true);
    return t;
  };
  auto zero_bias = [](Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad(true);
    return t;
  };
  ModelParams p;
  p.enc_conv = uniform_fan({1, 1, cfg.enc_kernel, cfg.enc_kernel},
                           cfg.enc_kernel * cfg.enc_kernel);
  p.enc_fc_w = uniform_fan({cfg.latent_dim, kDirections}, kDirections);
  p.enc_fc_b = zero_bias({cfg.latent_dim});
  p.ssm = make_ssm_params(cfg.latent_dim, cfg.state_dim, rng);
  p.dec_fc_w = uniform_fan({kDirections, cfg.latent_dim * cfg.window_len},
                           cfg.latent_dim * cfg.window_len);
  p.dec_fc_b = zero_bias({kDirections});
  p.dec_conv = uniform_fan({kDirections, kDirections, cfg.dec_kernel, cfg.dec_kernel},
                           kDirections * cfg.dec_kernel * cfg.dec_kernel);
  return p;
}

void write_checkpoint(std::ostream& os, const ModelParams& params,
                      const ModelConfig& cfg) {
  params.validate(cfg);
  binio::write_magic(os, "STMB");
  binio::write_u32(os, kCheckpointVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(cfg.height));
  binio::write_u32(os, static_cast<std::uint32_t>(cfg.width));
  binio::write_u32(os, static_cast<std::uint32_t>(cfg.window_len));
  binio::write_u32(os, static_cast<std::uint32_t>(cfg.latent_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(cfg.state_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(cfg.enc_kernel));
  binio::write_u32(os, static_cast<std::uint32_t>(cfg.dec_kernel));
  binio::write_f64(os, cfg.speed_scale);
  const auto named = named_tensors(params);
  binio::write_u32(os, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    binio::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
}

ModelCheckpoint read_checkpoint(std::istream& is) {
  binio::expect_magic(is, "STMB", "model checkpoint");
  const std::uint32_t version = binio::read_u32(is, "checkpoint version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  ModelCheckpoint ck;
  ck.config.height = binio::read_u32(is, "checkpoint grid height");
  ck.config.width = binio::read_u32(is, "checkpoint grid width");
  ck.config.window_len = binio::read_u32(is, "checkpoint window length");
  ck.config.latent_dim = binio::read_u32(is, "checkpoint latent dimension");
  ck.config.state_dim = binio::read_u32(is, "checkpoint state dimension");
  ck.config.enc_kernel = binio::read_u32(is, "checkpoint encoder kernel");
  ck.config.dec_kernel = binio::read_u32(is, "checkpoint decoder kernel");
  ck.config.speed_scale = binio::read_f64(is, "checkpoint speed scale");
  ck.config.validate();
  const std::uint32_t count = binio::read_u32(is, "checkpoint tensor count");
  std::map<std::string, Tensor> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = binio::read_u32(is, "checkpoint tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len)))
      throw FormatError("truncated file while reading checkpoint tensor name");
    Tensor t = read_tensor(is);
    t.set_requires_grad(true);
    loaded.insert_or_assign(std::move(name), std::move(t));
  }
  auto take = [&](const char* name) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw FormatError(std::string("checkpoint is missing tensor ") + name);
    return it->second;
  };
  ModelParams& p = ck.params;
  p.enc_conv = take("enc_conv");
  p.enc_fc_w = take("enc_fc_w");
  p.enc_fc_b = take("enc_fc_b");
  p.ssm.channels = ck.config.latent_dim;
  p.ssm.state_dim = ck.config.state_dim;
  p.ssm.A = take("ssm_A");
  p.ssm.D_delta = take("ssm_D_delta");
  p.ssm.W_B = take("ssm_W_B");
  p.ssm.W_C = take("ssm_W_C");
  p.ssm.W_delta = take("ssm_W_delta");
  p.dec_fc_w = take("dec_fc_w");
  p.dec_fc_b = take("dec_fc_b");
  p.dec_conv = take("dec_conv");
  p.validate(ck.config);
  return ck;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_checkpoint(os, params, cfg);
  if (!os) throw FormatError("failed writing checkpoint to " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_checkpoint(is);
}

Tensor flow_image_to_tensor(const FlowImage& image) {
  Tensor t = Tensor::zeros({FlowImage::channels, image.height, image.width});
  std::copy(image.values.begin(), image.values.end(), t.data().begin());
  return t;
}

Tensor observation_mask(const FlowImage& image) {
  Tensor t = Tensor::zeros({FlowImage::channels, image.height, image.width});
  auto d = t.data();
  for (std::size_t i = 0; i < image.occupancy.size(); ++i)
    d[i] = image.occupancy[i] > 0 ? 1.0 : 0.0;
  return t;
}

}  // namespace tfe
