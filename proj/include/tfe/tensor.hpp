#pragma once
#include <cstddef>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tfe/errors.hpp"

namespace tfe {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major 64-bit float tensor with shared storage. Copies are
// handles to the same buffer; gradients live next to the data and are
// allocated lazily on first touch by backward().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(st_); }
  const Shape& shape() const { return st_->shape; }
  std::size_t rank() const { return st_->shape.size(); }
  std::size_t size() const { return st_->data.size(); }

  std::span<const double> data() const { return st_->data; }
  std::span<double> data() { return st_->data; }
  double item() const;
  double at(std::initializer_list<std::size_t> idx) const;

  bool requires_grad() const { return st_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    st_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !st_->grad.empty(); }
  std::span<const double> grad() const;
  // Allocates a zero-filled gradient buffer on first use. Const in the
  // handle sense: copies share storage, so backward steps can write
  // through captured handles.
  std::span<double> grad_mut() const;
  void zero_grad();

  // Stable identity of the underlying storage.
  const void* id() const { return st_.get(); }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Storage> st) : st_(std::move(st)) {}
  std::shared_ptr<Storage> st_;
};

// Reverse-mode tape. Operations append their backward step while a Graph is
// active on the current thread; backward() replays them in reverse and is a
// one-shot: the recorded tape is consumed.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // RAII activation on the current thread; nestable.
  class Scope {
   public:
    explicit Scope(Graph& g);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* prev_;
  };

  static Graph* active();
  static bool recording() { return active() != nullptr; }

  void record(std::function<void()> backward_step);
  std::size_t num_ops() const { return ops_.size(); }

  // loss must be scalar; populates .grad of every requires_grad tensor that
  // participated. Throws ContractError on a second call.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

// ---- operator suite ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor exp(const Tensor& a);
// max(x,0) + log1p(exp(-|x|)); strictly positive output.
Tensor softplus(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// Requires shape[axis] == 1; tiles it `times` times.
Tensor repeat_axis(const Tensor& a, std::size_t axis, std::size_t times);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Affine map along the last axis: out[..., o] = bias[o] + sum_i in[..., i] * w[o, i].
Tensor linear(const Tensor& input, const Tensor& weight);
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Cross-correlation with zero padding. input: C_in x H x W,
// kernel: C_out x C_in x k x k (k odd), output: C_out x H' x W' with
// H' = H + 2*padding - k + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t padding);

// ---- scalar numerics shared with the SSM ----

double softplus_scalar(double x);
double sigmoid_scalar(double x);
// (e^z - 1)/z; second-order Taylor 1 + z/2 + z^2/6 below |z| = 1e-6.
double exprel(double z);
// d/dz of exprel; series fallback below |z| = 1e-4.
double exprel_deriv(double z);

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, keyed by position in the parameter list.
class AdamState {
 public:
  long steps_taken() const { return t_; }
  friend void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& cfg);

 private:
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// Bias-corrected adaptive-moment update; reads each param's grad.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& cfg);

// ---- serialization: u32 rank, u32 extents, f64 payload, little-endian ----

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

}  // namespace tfe
