#include "tfe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfe/binio.hpp"

namespace tfe {

namespace {

std::size_t shape_volume(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void check_defined(const Tensor& t, const char* who) {
  if (!t.defined()) throw ContractError(std::string(who) + ": undefined tensor");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

void check_axis(const Tensor& t, std::size_t axis, const char* who) {
  if (axis >= t.rank())
    throw ShapeError(std::string(who) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(t.shape()));
}

// Splits a shape around `axis` into [outer][shape[axis]][inner] extents.
struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

bool want_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Graph::recording()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape shape) {
  auto st = std::make_shared<Storage>();
  st->data.assign(shape_volume(shape), 0.0);
  st->shape = std::move(shape);
  return Tensor(std::move(st));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.st_->data.begin(), t.st_->data.end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  if (shape_volume(shape) != data.size())
    throw ShapeError("Tensor::from: " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  auto st = std::make_shared<Storage>();
  st->shape = std::move(shape);
  st->data = std::move(data);
  return Tensor(std::move(st));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item: tensor " + shape_str(shape()) + " is not scalar");
  return st_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != rank())
    throw ShapeError("at: index rank " + std::to_string(idx.size()) + " vs " +
                     shape_str(shape()));
  std::size_t flat = 0;
  std::size_t d = 0;
  for (std::size_t i : idx) {
    if (i >= st_->shape[d])
      throw ShapeError("at: index out of range for " + shape_str(shape()));
    flat = flat * st_->shape[d] + i;
    ++d;
  }
  return st_->data[flat];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad: no gradient present");
  return st_->grad;
}

std::span<double> Tensor::grad_mut() const {
  if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
  return st_->grad;
}

void Tensor::zero_grad() {
  std::fill(st_->grad.begin(), st_->grad.end(), 0.0);
}

// ---- Graph ----

namespace {
thread_local Graph* g_active_graph = nullptr;
}

Graph::Scope::Scope(Graph& g) : prev_(g_active_graph) { g_active_graph = &g; }
Graph::Scope::~Scope() { g_active_graph = prev_; }

Graph* Graph::active() { return g_active_graph; }

void Graph::record(std::function<void()> backward_step) {
  ops_.push_back(std::move(backward_step));
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("Graph::backward: graph already consumed");
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("Graph::backward: loss must be scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  consumed_ = true;
  Tensor seed = loss;
  seed.grad_mut()[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const auto pa = a.data(), pb = b.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + pb[i];
  if (want_grad({&a, &b})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto da = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const auto pa = a.data(), pb = b.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] * pb[i];
  if (want_grad({&a, &b})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      const auto pa = a.data(), pb = b.data();
      if (a.requires_grad()) {
        auto da = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * pb[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * pa[i];
      }
    });
  }
  return out;
}

Tensor neg(const Tensor& a) {
  check_defined(a, "neg");
  Tensor out = Tensor::zeros(a.shape());
  const auto pa = a.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = -pa[i];
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] -= g[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  check_defined(a, "scale");
  Tensor out = Tensor::zeros(a.shape());
  const auto pa = a.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = c * pa[i];
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out, c]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
    });
  }
  return out;
}

Tensor exp(const Tensor& a) {
  check_defined(a, "exp");
  Tensor out = Tensor::zeros(a.shape());
  const auto pa = a.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = std::exp(pa[i]);
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      const auto po = out.data();
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * po[i];
    });
  }
  return out;
}

double softplus_scalar(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor softplus(const Tensor& a) {
  check_defined(a, "softplus");
  Tensor out = Tensor::zeros(a.shape());
  const auto pa = a.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = softplus_scalar(pa[i]);
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      const auto pa = a.data();
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * sigmoid_scalar(pa[i]);
    });
  }
  return out;
}

// ---- structural ----

Tensor reshape(const Tensor& a, Shape shape) {
  check_defined(a, "reshape");
  if (shape_volume(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  Tensor out = Tensor::from(shape, std::vector<double>(a.data().begin(), a.data().end()));
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    });
  }
  return out;
}

namespace {

// out[o][b][m][a][i] = in[o][a][m][b][i]; the core of a two-axis swap.
void swap_axes_copy(std::span<const double> in, std::span<double> out,
                    std::size_t outer, std::size_t A, std::size_t mid,
                    std::size_t B, std::size_t inner, bool accumulate) {
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t in_o = o * A * mid * B * inner;
    const std::size_t out_o = o * B * mid * A * inner;
    for (std::size_t bx = 0; bx < B; ++bx)
      for (std::size_t m = 0; m < mid; ++m)
        for (std::size_t ax = 0; ax < A; ++ax) {
          const double* src = in.data() + in_o + ((ax * mid + m) * B + bx) * inner;
          double* dst = out.data() + out_o + ((bx * mid + m) * A + ax) * inner;
          if (accumulate)
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
          else
            std::copy(src, src + inner, dst);
        }
  }
}

}  // namespace

Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1) {
  check_defined(a, "transpose");
  check_axis(a, axis0, "transpose");
  check_axis(a, axis1, "transpose");
  if (axis0 == axis1) return reshape(a, a.shape());
  const std::size_t lo = std::min(axis0, axis1), hi = std::max(axis0, axis1);
  const Shape& s = a.shape();
  Shape out_shape = s;
  std::swap(out_shape[lo], out_shape[hi]);

  std::size_t outer = 1, mid = 1, inner = 1;
  for (std::size_t i = 0; i < lo; ++i) outer *= s[i];
  for (std::size_t i = lo + 1; i < hi; ++i) mid *= s[i];
  for (std::size_t i = hi + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t A = s[lo], B = s[hi];

  Tensor out = Tensor::zeros(out_shape);
  swap_axes_copy(a.data(), out.data(), outer, A, mid, B, inner, false);
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out, outer, A, mid, B, inner]() mutable {
      if (!out.has_grad()) return;
      // swapping back: roles of A and B exchange
      swap_axes_copy(out.grad(), a.grad_mut(), outer, B, mid, A, inner, true);
    });
  }
  return out;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  check_defined(a, "slice");
  check_axis(a, axis, "slice");
  const auto sp = split_at(a.shape(), axis);
  if (len == 0 || start + len > sp.len)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") exceeds axis " +
                     std::to_string(axis) + " of " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  Tensor out = Tensor::zeros(out_shape);
  const auto pa = a.data();
  auto po = out.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy(pa.data() + (o * sp.len + start) * sp.inner,
              pa.data() + (o * sp.len + start + len) * sp.inner,
              po.data() + o * len * sp.inner);
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out, sp, start, len]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto da = a.grad_mut();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = g.data() + o * len * sp.inner;
        double* dst = da.data() + (o * sp.len + start) * sp.inner;
        for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no tensors given");
  for (const Tensor& p : parts) check_defined(p, "concat");
  check_axis(parts[0], axis, "concat");
  Shape out_shape = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank())
      throw ShapeError("concat: rank mismatch " + shape_str(p.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    for (std::size_t d = 0; d < p.rank(); ++d)
      if (d != axis && p.shape()[d] != out_shape[d])
        throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()));
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  Tensor out = Tensor::zeros(out_shape);
  const auto sp_out = split_at(out_shape, axis);
  auto po = out.data();
  std::size_t offset = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    const auto sp = split_at(p.shape(), axis);
    const auto pp = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy(pp.data() + o * sp.len * sp.inner,
                pp.data() + (o + 1) * sp.len * sp.inner,
                po.data() + (o * sp_out.len + offset) * sp_out.inner);
    offset += sp.len;
    any_grad = any_grad || p.requires_grad();
  }
  if (Graph::recording() && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> held(parts.begin(), parts.end());
    Graph::active()->record([held, out, sp_out, axis]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      std::size_t offset = 0;
      for (Tensor& p : held) {
        const auto sp = split_at(p.shape(), axis);
        if (p.requires_grad()) {
          auto dp = p.grad_mut();
          for (std::size_t o = 0; o < sp.outer; ++o) {
            const double* src = g.data() + (o * sp_out.len + offset) * sp_out.inner;
            double* dst = dp.data() + o * sp.len * sp.inner;
            for (std::size_t i = 0; i < sp.len * sp.inner; ++i) dst[i] += src[i];
          }
        }
        offset += sp.len;
      }
    });
  }
  return out;
}

Tensor repeat_axis(const Tensor& a, std::size_t axis, std::size_t times) {
  check_defined(a, "repeat_axis");
  check_axis(a, axis, "repeat_axis");
  if (a.shape()[axis] != 1)
    throw ShapeError("repeat_axis: axis " + std::to_string(axis) + " of " +
                     shape_str(a.shape()) + " must have extent 1");
  if (times == 0) throw ShapeError("repeat_axis: times must be positive");
  const auto sp = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = times;
  Tensor out = Tensor::zeros(out_shape);
  const auto pa = a.data();
  auto po = out.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t r = 0; r < times; ++r)
      std::copy(pa.data() + o * sp.inner, pa.data() + (o + 1) * sp.inner,
                po.data() + (o * times + r) * sp.inner);
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out, sp, times]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto da = a.grad_mut();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t r = 0; r < times; ++r) {
          const double* src = g.data() + (o * times + r) * sp.inner;
          double* dst = da.data() + o * sp.inner;
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (want_grad({&a})) {
    out.set_requires_grad(true);
    Graph::active()->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto da = a.grad_mut();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  check_defined(a, "mean");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// ---- layers ----

Tensor linear(const Tensor& input, const Tensor& weight) {
  return linear(input, weight, Tensor());
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_defined(input, "linear");
  check_defined(weight, "linear");
  if (weight.rank() != 2)
    throw ShapeError("linear: weight must be rank 2, got " + shape_str(weight.shape()));
  const std::size_t d_out = weight.shape()[0], d_in = weight.shape()[1];
  if (input.rank() == 0 || input.shape().back() != d_in)
    throw ShapeError("linear: input " + shape_str(input.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != d_out))
    throw ShapeError("linear: bias " + shape_str(bias.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  const std::size_t rows = input.size() / d_in;
  Shape out_shape = input.shape();
  out_shape.back() = d_out;
  Tensor out = Tensor::zeros(out_shape);
  {
    const auto pi = input.data();
    const auto pw = weight.data();
    auto po = out.data();
    for (std::size_t p = 0; p < rows; ++p) {
      const double* in_row = pi.data() + p * d_in;
      double* out_row = po.data() + p * d_out;
      for (std::size_t o = 0; o < d_out; ++o) {
        const double* w_row = pw.data() + o * d_in;
        double acc = 0.0;
        for (std::size_t i = 0; i < d_in; ++i) acc += in_row[i] * w_row[i];
        out_row[o] = acc;
      }
    }
    if (bias.defined()) {
      const auto pb = bias.data();
      for (std::size_t p = 0; p < rows; ++p)
        for (std::size_t o = 0; o < d_out; ++o) po[p * d_out + o] += pb[o];
    }
  }
  const bool rec = Graph::recording() &&
                   (input.requires_grad() || weight.requires_grad() ||
                    (bias.defined() && bias.requires_grad()));
  if (rec) {
    out.set_requires_grad(true);
    Graph::active()->record([input, weight, bias, out, rows, d_in, d_out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      const auto pi = input.data();
      const auto pw = weight.data();
      if (input.requires_grad()) {
        auto di = input.grad_mut();
        for (std::size_t p = 0; p < rows; ++p) {
          const double* g_row = g.data() + p * d_out;
          double* di_row = di.data() + p * d_in;
          for (std::size_t o = 0; o < d_out; ++o) {
            const double gv = g_row[o];
            const double* w_row = pw.data() + o * d_in;
            for (std::size_t i = 0; i < d_in; ++i) di_row[i] += gv * w_row[i];
          }
        }
      }
      if (weight.requires_grad()) {
        auto dw = weight.grad_mut();
        for (std::size_t p = 0; p < rows; ++p) {
          const double* g_row = g.data() + p * d_out;
          const double* in_row = pi.data() + p * d_in;
          for (std::size_t o = 0; o < d_out; ++o) {
            const double gv = g_row[o];
            double* dw_row = dw.data() + o * d_in;
            for (std::size_t i = 0; i < d_in; ++i) dw_row[i] += gv * in_row[i];
          }
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.grad_mut();
        for (std::size_t p = 0; p < rows; ++p)
          for (std::size_t o = 0; o < d_out; ++o) db[o] += g[p * d_out + o];
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t padding) {
  check_defined(input, "conv2d");
  check_defined(kernel, "conv2d");
  if (input.rank() != 3)
    throw ShapeError("conv2d: input must be C_in x H x W, got " + shape_str(input.shape()));
  if (kernel.rank() != 4 || kernel.shape()[2] != kernel.shape()[3])
    throw ShapeError("conv2d: kernel must be C_out x C_in x k x k, got " +
                     shape_str(kernel.shape()));
  const std::size_t c_in = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t c_out = kernel.shape()[0], k = kernel.shape()[2];
  if (kernel.shape()[1] != c_in)
    throw ShapeError("conv2d: input " + shape_str(input.shape()) +
                     " incompatible with kernel " + shape_str(kernel.shape()));
  if (k % 2 == 0) throw ValidationError("conv2d: kernel size must be odd");
  if (h + 2 * padding < k || w + 2 * padding < k)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                     " larger than padded input " + shape_str(input.shape()));
  const std::size_t ho = h + 2 * padding - k + 1, wo = w + 2 * padding - k + 1;
  Tensor out = Tensor::zeros({c_out, ho, wo});
  {
    const auto pi = input.data();
    const auto pk = kernel.data();
    auto po = out.data();
    for (std::size_t co = 0; co < c_out; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < c_in; ++ci)
            for (std::size_t dy = 0; dy < k; ++dy) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy + dy) - static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t dx = 0; dx < k; ++dx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox + dx) - static_cast<std::ptrdiff_t>(padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += pi[(ci * h + iy) * w + ix] * pk[((co * c_in + ci) * k + dy) * k + dx];
              }
            }
          po[(co * ho + oy) * wo + ox] = acc;
        }
  }
  if (want_grad({&input, &kernel})) {
    out.set_requires_grad(true);
    Graph::active()->record([input, kernel, out, c_in, c_out, h, w, k, ho, wo,
                             padding]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      const auto pi = input.data();
      const auto pk = kernel.data();
      const bool gi = input.requires_grad(), gk = kernel.requires_grad();
      auto di = gi ? input.grad_mut() : std::span<double>{};
      auto dk = gk ? kernel.grad_mut() : std::span<double>{};
      for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const double gv = g[(co * ho + oy) * wo + ox];
            if (gv == 0.0) continue;
            for (std::size_t ci = 0; ci < c_in; ++ci)
              for (std::size_t dy = 0; dy < k; ++dy) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy + dy) - static_cast<std::ptrdiff_t>(padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t dx = 0; dx < k; ++dx) {
                  const std::ptrdiff_t ix =
                      static_cast<std::ptrdiff_t>(ox + dx) - static_cast<std::ptrdiff_t>(padding);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const std::size_t ii = (ci * h + iy) * w + ix;
                  const std::size_t ki = ((co * c_in + ci) * k + dy) * k + dx;
                  if (gi) di[ii] += gv * pk[ki];
                  if (gk) dk[ki] += gv * pi[ii];
                }
              }
          }
    });
  }
  return out;
}

// ---- scalar numerics ----

double exprel(double z) {
  if (std::abs(z) < 1e-6) return 1.0 + z / 2.0 + z * z / 6.0;
  return std::expm1(z) / z;
}

double exprel_deriv(double z) {
  if (std::abs(z) < 1e-4) return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
  return (z * std::exp(z) - std::expm1(z)) / (z * z);
}

// ---- optimizer ----

void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& cfg) {
  if (state.m_.empty()) {
    state.m_.resize(params.size());
    state.v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m_[i].assign(params[i].size(), 0.0);
      state.v_[i].assign(params[i].size(), 0.0);
    }
  }
  if (state.m_.size() != params.size())
    throw ContractError("adam_step: parameter count changed under one state");
  ++state.t_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (state.m_[i].size() != p.size())
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " changed size");
    const auto g = p.grad();
    auto pv = p.data();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    for (std::size_t j = 0; j < pv.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      pv[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---- serialization ----

void write_tensor(std::ostream& os, const Tensor& t) {
  check_defined(t, "write_tensor");
  binio::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) binio::write_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) binio::write_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  const std::uint32_t rank = binio::read_u32(is, "tensor rank");
  if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " implausible");
  Shape shape(rank);
  std::size_t n = 1;
  for (std::uint32_t d = 0; d < rank; ++d) {
    shape[d] = binio::read_u32(is, "tensor extent");
    if (shape[d] == 0) throw FormatError("tensor extent 0 invalid");
    n *= shape[d];
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = binio::read_f64(is, "tensor payload");
  return Tensor::from(std::move(shape), std::move(data));
}

}  // namespace tfe
