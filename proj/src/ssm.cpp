#include "tfe/ssm.hpp"

#include <cmath>
#include <memory>

namespace tfe {

void SsmParams::validate_shapes() const {
  const std::size_t k = channels, n = state_dim;
  if (k == 0 || n == 0) throw ValidationError("ssm params need positive dimensions");
  if (!A.defined() || A.shape() != Shape{k, n})
    throw ShapeError("ssm A must be " + shape_str({k, n}) + ", got " +
                     (A.defined() ? shape_str(A.shape()) : std::string("undefined")));
  if (!D_delta.defined() || D_delta.shape() != Shape{k})
    throw ShapeError("ssm D_delta must be " + shape_str({k}));
  if (!W_B.defined() || W_B.shape() != Shape{n, k})
    throw ShapeError("ssm W_B must be " + shape_str({n, k}));
  if (!W_C.defined() || W_C.shape() != Shape{n, k})
    throw ShapeError("ssm W_C must be " + shape_str({n, k}));
  if (!W_delta.defined() || W_delta.shape() != Shape{1, k})
    throw ShapeError("ssm W_delta must be " + shape_str({1, k}));
}

void SsmParams::validate() const {
  validate_shapes();
  for (double a : A.data())
    if (!(a < 0.0))
      throw ValidationError("ssm A entries must be negative for stability");
}

std::vector<Tensor> SsmParams::parameters() const {
  return {A, D_delta, W_B, W_C, W_delta};
}

SsmParams make_ssm_params(std::size_t channels, std::size_t state_dim, Rng& rng) {
  SsmParams p;
  p.channels = channels;
  p.state_dim = state_dim;
  std::vector<double> a(channels * state_dim);
  for (std::size_t k = 0; k < channels; ++k)
    for (std::size_t n = 0; n < state_dim; ++n)
      a[k * state_dim + n] = -static_cast<double>(n + 1);
  p.A = Tensor::from({channels, state_dim}, std::move(a));

  // step sizes start log-uniform in [1e-3, 1e-1]; store softplus preimages
  std::vector<double> d(channels);
  for (auto& v : d) {
    const double step = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = std::log(std::expm1(step));
  }
  p.D_delta = Tensor::from({channels}, std::move(d));

  const double bound = std::sqrt(1.0 / static_cast<double>(channels));
  auto init = [&](Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
  };
  p.W_B = init({state_dim, channels});
  p.W_C = init({state_dim, channels});
  p.W_delta = init({1, channels});
  for (Tensor t : p.parameters()) t.set_requires_grad(true);
  return p;
}

namespace {

// rank-2 spec shapes are the M = 1 case of the batched rank-3 layout
Tensor with_batch_axis(const Tensor& t) {
  Shape s = t.shape();
  s.insert(s.begin(), 1);
  return reshape(t, std::move(s));
}

Tensor drop_batch_axis(const Tensor& t) {
  Shape s(t.shape().begin() + 1, t.shape().end());
  return reshape(t, std::move(s));
}

struct ExprelParts {
  double er, erd;  // (e^z - 1)/z and its derivative
};

// Reconstructs exprel values from z and the already-computed exp(z),
// sparing the backward pass fresh transcendentals.
ExprelParts exprel_from_exp(double z, double ez) {
  ExprelParts p;
  if (std::abs(z) < 1e-6)
    p.er = 1.0 + z / 2.0 + z * z / 6.0;
  else
    p.er = (ez - 1.0) / z;
  if (std::abs(z) < 1e-4)
    p.erd = 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
  else
    p.erd = (z * ez - (ez - 1.0)) / (z * z);
  return p;
}

std::string shape_or_undefined(const Tensor& t) {
  return t.defined() ? shape_str(t.shape()) : std::string("undefined");
}

}  // namespace

SelectionOutputs project_selection(const Tensor& input, const SsmParams& params) {
  params.validate_shapes();
  const bool single = input.defined() && input.rank() == 2;
  const Tensor in = single ? with_batch_axis(input) : input;
  if (!in.defined() || in.rank() != 3 || in.shape()[1] != params.channels)
    throw ShapeError("selection input must be [M x] " +
                     std::to_string(params.channels) + " x L, got " +
                     shape_or_undefined(input));
  const std::size_t m = in.shape()[0], k = params.channels, l = in.shape()[2];

  const Tensor in_t = transpose(in, 1, 2);  // M x L x K
  SelectionOutputs out;
  out.B = transpose(linear(in_t, params.W_B), 1, 2);  // M x N x L
  out.C = transpose(linear(in_t, params.W_C), 1, 2);

  Tensor step = transpose(linear(in_t, params.W_delta), 1, 2);  // M x 1 x L
  step = repeat_axis(step, 1, k);                               // M x K x L
  Tensor bias = reshape(params.D_delta, {1, k, 1});
  bias = repeat_axis(repeat_axis(bias, 0, m), 2, l);
  out.Delta = softplus(add(step, bias));

  if (single) {
    out.B = drop_batch_axis(out.B);
    out.C = drop_batch_axis(out.C);
    out.Delta = drop_batch_axis(out.Delta);
  }
  return out;
}

DiscreteParams discretize_zoh(const Tensor& A, const Tensor& B, const Tensor& Delta) {
  if (!A.defined() || A.rank() != 2)
    throw ShapeError("zoh A must be K x N, got " + shape_or_undefined(A));
  const std::size_t k = A.shape()[0], n = A.shape()[1];
  const bool single = B.defined() && B.rank() == 2;
  const Tensor b = single ? with_batch_axis(B) : B;
  const Tensor delta = single ? with_batch_axis(Delta) : Delta;
  if (!b.defined() || !delta.defined() || b.rank() != 3 || delta.rank() != 3 ||
      b.shape()[0] != delta.shape()[0] || b.shape()[2] != delta.shape()[2] ||
      b.shape()[1] != n || delta.shape()[1] != k)
    throw ShapeError("zoh shapes inconsistent: A " + shape_str(A.shape()) + ", B " +
                     shape_or_undefined(B) + ", Delta " + shape_or_undefined(Delta));
  const std::size_t m = b.shape()[0], l = b.shape()[2];
  for (double d : delta.data())
    if (!(d > 0.0)) throw ContractError("zoh requires strictly positive step sizes");

  Tensor a_bar = Tensor::zeros({m, k, n, l});
  Tensor b_bar = Tensor::zeros({m, k, n, l});
  {
    const auto pa = A.data();
    const auto pb = b.data();
    const auto pd = delta.data();
    auto pab = a_bar.data();
    auto pbb = b_bar.data();
    for (std::size_t mi = 0; mi < m; ++mi)
      for (std::size_t ki = 0; ki < k; ++ki) {
        const double* drow = pd.data() + (mi * k + ki) * l;
        for (std::size_t ni = 0; ni < n; ++ni) {
          const double a = pa[ki * n + ni];
          const double* brow = pb.data() + (mi * n + ni) * l;
          double* abrow = pab.data() + ((mi * k + ki) * n + ni) * l;
          double* bbrow = pbb.data() + ((mi * k + ki) * n + ni) * l;
          for (std::size_t li = 0; li < l; ++li) {
            const double z = drow[li] * a;
            const double ez = std::exp(z);
            abrow[li] = ez;
            bbrow[li] = exprel_from_exp(z, ez).er * drow[li] * brow[li];
          }
        }
      }
  }

  if (Graph::recording() &&
      (A.requires_grad() || b.requires_grad() || delta.requires_grad())) {
    a_bar.set_requires_grad(true);
    b_bar.set_requires_grad(true);
    Graph::active()->record([A, b, delta, a_bar, b_bar, m, k, n, l]() {
      if (!a_bar.has_grad() && !b_bar.has_grad()) return;
      const auto pa = A.data();
      const auto pb = b.data();
      const auto pd = delta.data();
      const auto pab = a_bar.data();
      const std::span<const double> gab =
          a_bar.has_grad() ? a_bar.grad() : std::span<const double>{};
      const std::span<const double> gbb =
          b_bar.has_grad() ? b_bar.grad() : std::span<const double>{};
      const bool wa = A.requires_grad(), wb = b.requires_grad(), wd = delta.requires_grad();
      auto da = wa ? A.grad_mut() : std::span<double>{};
      auto db = wb ? b.grad_mut() : std::span<double>{};
      auto dd = wd ? delta.grad_mut() : std::span<double>{};
      for (std::size_t mi = 0; mi < m; ++mi)
        for (std::size_t ki = 0; ki < k; ++ki) {
          const double* drow = pd.data() + (mi * k + ki) * l;
          double* ddrow = wd ? dd.data() + (mi * k + ki) * l : nullptr;
          for (std::size_t ni = 0; ni < n; ++ni) {
            const double a = pa[ki * n + ni];
            const double* brow = pb.data() + (mi * n + ni) * l;
            double* dbrow = wb ? db.data() + (mi * n + ni) * l : nullptr;
            const std::size_t base = ((mi * k + ki) * n + ni) * l;
            double da_acc = 0.0;
            for (std::size_t li = 0; li < l; ++li) {
              const double d = drow[li];
              const double bv = brow[li];
              const double z = d * a;
              const double ez = pab[base + li];
              const auto parts = exprel_from_exp(z, ez);
              const double ga = gab.empty() ? 0.0 : gab[base + li];
              const double gb = gbb.empty() ? 0.0 : gbb[base + li];
              if (wd)
                ddrow[li] += ga * ez * a + gb * (parts.erd * a * d * bv + parts.er * bv);
              if (wa) da_acc += ga * ez * d + gb * parts.erd * d * d * bv;
              if (wb) dbrow[li] += gb * parts.er * d;
            }
            if (wa) da[ki * n + ni] += da_acc;
          }
        }
    });
  }

  DiscreteParams out;
  out.A_bar = single ? drop_batch_axis(a_bar) : a_bar;
  out.B_bar = single ? drop_batch_axis(b_bar) : b_bar;
  return out;
}

Tensor selective_scan(const Tensor& input, const DiscreteParams& disc, const Tensor& C) {
  const bool single = input.defined() && input.rank() == 2;
  const Tensor in = single ? with_batch_axis(input) : input;
  const Tensor a_bar = single ? with_batch_axis(disc.A_bar) : disc.A_bar;
  const Tensor b_bar = single ? with_batch_axis(disc.B_bar) : disc.B_bar;
  const Tensor c = single ? with_batch_axis(C) : C;
  if (!in.defined() || !a_bar.defined() || !b_bar.defined() || !c.defined() ||
      in.rank() != 3 || a_bar.rank() != 4 || c.rank() != 3 ||
      a_bar.shape() != b_bar.shape() || a_bar.shape()[0] != in.shape()[0] ||
      a_bar.shape()[1] != in.shape()[1] || a_bar.shape()[3] != in.shape()[2] ||
      c.shape()[0] != in.shape()[0] || c.shape()[1] != a_bar.shape()[2] ||
      c.shape()[2] != in.shape()[2])
    throw ShapeError("scan shapes inconsistent: input " + shape_or_undefined(input) +
                     ", A_bar " + shape_or_undefined(disc.A_bar) + ", B_bar " +
                     shape_or_undefined(disc.B_bar) + ", C " + shape_or_undefined(C));
  const std::size_t m = in.shape()[0], k = in.shape()[1], l = in.shape()[2];
  const std::size_t n = a_bar.shape()[2];

  Tensor out = Tensor::zeros({m, k, l});
  // per-step hidden states, kept for the backward recurrence
  auto hist = std::make_shared<std::vector<double>>(m * k * n * l, 0.0);
  {
    const auto px = in.data();
    const auto pab = a_bar.data();
    const auto pbb = b_bar.data();
    const auto pc = c.data();
    auto po = out.data();
    std::vector<double> state(n);
    for (std::size_t mi = 0; mi < m; ++mi)
      for (std::size_t ki = 0; ki < k; ++ki) {
        std::fill(state.begin(), state.end(), 0.0);
        const std::size_t row = (mi * k + ki) * l;
        const std::size_t base = (mi * k + ki) * n * l;
        for (std::size_t li = 0; li < l; ++li) {
          const double x = px[row + li];
          double acc = 0.0;
          for (std::size_t ni = 0; ni < n; ++ni) {
            const std::size_t idx = base + ni * l + li;
            state[ni] = pab[idx] * state[ni] + pbb[idx] * x;
            (*hist)[idx] = state[ni];
            acc += pc[(mi * n + ni) * l + li] * state[ni];
          }
          po[row + li] = acc;
        }
      }
  }

  if (Graph::recording() && (in.requires_grad() || a_bar.requires_grad() ||
                             b_bar.requires_grad() || c.requires_grad())) {
    out.set_requires_grad(true);
    Graph::active()->record([in, a_bar, b_bar, c, out, hist, m, k, n, l]() {
      if (!out.has_grad()) return;
      const auto go = out.grad();
      const auto px = in.data();
      const auto pab = a_bar.data();
      const auto pbb = b_bar.data();
      const auto pc = c.data();
      const bool wx = in.requires_grad(), wab = a_bar.requires_grad(),
                 wbb = b_bar.requires_grad(), wc = c.requires_grad();
      auto dx = wx ? in.grad_mut() : std::span<double>{};
      auto dab = wab ? a_bar.grad_mut() : std::span<double>{};
      auto dbb = wbb ? b_bar.grad_mut() : std::span<double>{};
      auto dc = wc ? c.grad_mut() : std::span<double>{};
      std::vector<double> gh(n);
      for (std::size_t mi = 0; mi < m; ++mi)
        for (std::size_t ki = 0; ki < k; ++ki) {
          std::fill(gh.begin(), gh.end(), 0.0);
          const std::size_t row = (mi * k + ki) * l;
          const std::size_t base = (mi * k + ki) * n * l;
          for (std::size_t li = l; li-- > 0;) {
            const double gov = go[row + li];
            const double x = px[row + li];
            double gx = 0.0;
            for (std::size_t ni = 0; ni < n; ++ni) {
              const std::size_t idx = base + ni * l + li;
              const std::size_t cidx = (mi * n + ni) * l + li;
              const double h_here = (*hist)[idx];
              const double h_prev = li > 0 ? (*hist)[idx - 1] : 0.0;
              const double ghn = gh[ni] + gov * pc[cidx];
              if (wc) dc[cidx] += gov * h_here;
              if (wab) dab[idx] += ghn * h_prev;
              if (wbb) dbb[idx] += ghn * x;
              gx += ghn * pbb[idx];
              gh[ni] = ghn * pab[idx];
            }
            if (wx) dx[row + li] += gx;
          }
        }
    });
  }

  return single ? drop_batch_axis(out) : out;
}

Tensor lti_kernel(const Tensor& A_bar_0, const Tensor& B_bar_0, const Tensor& C_0,
                  std::size_t len) {
  if (!A_bar_0.defined() || !B_bar_0.defined() || !C_0.defined() ||
      A_bar_0.rank() != 2 || A_bar_0.shape() != B_bar_0.shape() || C_0.rank() != 1 ||
      C_0.shape()[0] != A_bar_0.shape()[1] || len == 0)
    throw ShapeError("lti kernel shapes inconsistent: A_bar " +
                     shape_or_undefined(A_bar_0) + ", B_bar " +
                     shape_or_undefined(B_bar_0) + ", C " + shape_or_undefined(C_0));
  const std::size_t k = A_bar_0.shape()[0], n = A_bar_0.shape()[1];
  Tensor out = Tensor::zeros({k, len});
  const auto pa = A_bar_0.data();
  const auto pb = B_bar_0.data();
  const auto pc = C_0.data();
  auto po = out.data();
  for (std::size_t ki = 0; ki < k; ++ki)
    for (std::size_t ni = 0; ni < n; ++ni) {
      double power = 1.0;
      const double cb = pc[ni] * pb[ki * n + ni];
      for (std::size_t j = 0; j < len; ++j) {
        po[ki * len + j] += cb * power;
        power *= pa[ki * n + ni];
      }
    }
  return out;
}

Tensor mamba_block_forward(const Tensor& input, const SsmParams& params) {
  const bool single = input.defined() && input.rank() == 2;
  const Tensor in = single ? with_batch_axis(input) : input;
  const SelectionOutputs sel = project_selection(in, params);
  const DiscreteParams disc = discretize_zoh(params.A, sel.B, sel.Delta);
  Tensor out = selective_scan(in, disc, sel.C);
  return single ? drop_batch_axis(out) : out;
}

}  // namespace tfe
