#pragma once
#include <cstddef>
#include <vector>

#include "tfe/rng.hpp"
#include "tfe/tensor.hpp"

namespace tfe {

// Learnable parameters of one selective-SSM block over K channels and N
// hidden states per channel. A acts diagonally per (channel, state) pair,
// so discretization stays elementwise.
struct SsmParams {
  Tensor A;        // K x N, negative entries
  Tensor D_delta;  // K, bias of the step-size projection
  Tensor W_B;      // N x K
  Tensor W_C;      // N x K
  Tensor W_delta;  // 1 x K

  std::size_t channels = 0;      // K
  std::size_t state_dim = 0;     // N

  void validate_shapes() const;
  // shape check plus the A < 0 stability invariant; meant for rest points
  // (construction, checkpoint load), not for every forward call
  void validate() const;
  std::vector<Tensor> parameters() const;
};

SsmParams make_ssm_params(std::size_t channels, std::size_t state_dim, Rng& rng);

// Input-dependent projections. For a K x L input: B, C are N x L and Delta
// is K x L (strictly positive). A leading batch axis is carried through:
// M x K x L inputs give M x N x L and M x K x L outputs.
struct SelectionOutputs {
  Tensor B;
  Tensor C;
  Tensor Delta;
};

SelectionOutputs project_selection(const Tensor& input, const SsmParams& params);

// Zero-order-hold discretization, elementwise in (channel, state):
//   A_bar = exp(Delta * A)
//   B_bar = (exp(Delta * A) - 1) / (Delta * A) * Delta * B
// Shapes: A is K x N, B is [M x] N x L, Delta is [M x] K x L; outputs are
// [M x] K x N x L.
struct DiscreteParams {
  Tensor A_bar;
  Tensor B_bar;
};

DiscreteParams discretize_zoh(const Tensor& A, const Tensor& B, const Tensor& Delta);

// Left-to-right recurrence H <- A_bar*H + B_bar*x with readout through C.
// input [M x] K x L, disc [M x] K x N x L, C [M x] N x L -> [M x] K x L.
Tensor selective_scan(const Tensor& input, const DiscreteParams& disc, const Tensor& C);

// Convolution kernel of the time-invariant case: S[k,j] = sum_n C0[n] *
// A_bar0[k,n]^j * B_bar0[k,n]. Forward-only cross-check for the scan.
Tensor lti_kernel(const Tensor& A_bar_0, const Tensor& B_bar_0, const Tensor& C_0,
                  std::size_t len);

// The full block: selection, discretization, scan. Differentiable in the
// input and every parameter.
Tensor mamba_block_forward(const Tensor& input, const SsmParams& params);

}  // namespace tfe
