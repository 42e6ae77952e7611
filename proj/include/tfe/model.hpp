#pragma once
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tfe/grid.hpp"
#include "tfe/ssm.hpp"
#include "tfe/tensor.hpp"

namespace tfe {

// Sizing of the full speed-field estimator. H and W come from the grid map;
// the rest are free choices with desk-scale defaults.
struct ModelConfig {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t window_len = 6;   // frames per prediction
  std::size_t latent_dim = 16;  // per-cell channels after encoding (K)
  std::size_t state_dim = 8;    // SSM states per channel
  std::size_t enc_kernel = 3;   // odd
  std::size_t dec_kernel = 3;   // odd
  double speed_scale = 120.0;   // km/h divisor applied on the way in

  void validate() const;
};

// Every learnable tensor. The encoder convolution is one single-channel
// k x k kernel shared by all four direction channels; the decoder
// convolution is full 4-in 4-out so directions can mix on the way out.
struct ModelParams {
  Tensor enc_conv;  // 1 x 1 x k_enc x k_enc
  Tensor enc_fc_w;  // K x 4
  Tensor enc_fc_b;  // K
  SsmParams ssm;
  Tensor dec_fc_w;  // 4 x (K * L)
  Tensor dec_fc_b;  // 4
  Tensor dec_conv;  // 4 x 4 x k_dec x k_dec

  void validate_shapes(const ModelConfig& cfg) const;
  // shapes plus the SSM rest-point invariants; used at init and checkpoint
  // save/load
  void validate(const ModelConfig& cfg) const;
  std::vector<Tensor> parameters() const;
};

// Normalized 4 x H x W frame -> K x H x W latent image: the shared
// convolution runs over each direction channel separately, then a per-pixel
// affine map lifts the 4-vector at every cell to K values.
Tensor encode(const Tensor& frame, const ModelParams& params, const ModelConfig& cfg);

// L latent frames K x H x W -> per-cell sequences (H*W) x K x L with cell
// index m = h*W + w and the last axis chronological.
Tensor serialize_cells(std::span<const Tensor> frames);

// Exact inverse of serialize_cells. Plain data copy, not differentiable.
std::vector<Tensor> deserialize_cells(const Tensor& cells, std::size_t height,
                                      std::size_t width);

// (H*W) x K x L -> 4 x H x W: per cell the K x L block is flattened
// row-major (all L steps of channel 0, then channel 1, ...), mapped to a
// 4-vector, reassembled into an image, and passed through the decoder
// convolution.
Tensor decode(const Tensor& cells, const ModelParams& params, const ModelConfig& cfg);

// The full estimator: window of L raw km/h frames 4 x H x W -> predicted
// frame 4 x H x W. Pure function of (window, params).
Tensor model_forward(std::span<const Tensor> window, const ModelParams& params,
                     const ModelConfig& cfg);

// Weights uniform in +-sqrt(1/fan_in), biases zero, SSM via
// make_ssm_params. Deterministic per seed.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct ModelCheckpoint {
  ModelConfig config;
  ModelParams params;
};

// Checkpoint file: magic "STMB", u32 format version, config block, then
// named tensors. Round-trips bit-exactly.
void write_checkpoint(std::ostream& os, const ModelParams& params,
                      const ModelConfig& cfg);
ModelCheckpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& cfg);
ModelCheckpoint load_checkpoint(const std::string& path);

// Speed values of a flow image as a 4 x H x W tensor.
Tensor flow_image_to_tensor(const FlowImage& image);
// 1.0 where the cell saw at least one vehicle, 0.0 elsewhere; same shape.
Tensor observation_mask(const FlowImage& image);

}  // namespace tfe
