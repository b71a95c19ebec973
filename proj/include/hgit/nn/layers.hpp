#pragma once

#include <memory>
#include <random>
#include <vector>

#include "hgit/nn/tensor.hpp"

namespace hgit::nn {

using Rng = std::mt19937_64;

/// A differentiable block. `forward` with a tape records what `backward`
/// needs; without a tape it is a pure inference call. `backward` accumulates
/// parameter gradients and returns the gradient w.r.t. the input.
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& x, Tape* tape) const = 0;
  virtual Tensor backward(const Tensor& dy, Tape& tape) = 0;
  virtual void collect(std::vector<Param*>& out) { (void)out; }

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  void zero_grad();
  std::size_t parameter_count() const;
};

class Conv2d final : public Module {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng, float init_gain = 2.0f);

  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;
  void collect(std::vector<Param*>& out) override;

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }

 private:
  int out_size(int n) const { return (n + 2 * pad_ - k_) / stride_ + 1; }

  int in_, out_, k_, stride_, pad_;
  Param weight_;  // (out, in*k*k, 1, 1)
  Param bias_;    // (out, 1, 1, 1)
};

/// Per-sample, per-channel normalization with learned scale and shift.
class InstanceNorm final : public Module {
 public:
  explicit InstanceNorm(int channels, float eps = 1e-5f);
  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;
  void collect(std::vector<Param*>& out) override;

 private:
  int channels_;
  float eps_;
  Param gamma_, beta_;
};

class ReLU final : public Module {
 public:
  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;
};

class LeakyReLU final : public Module {
 public:
  explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;

 private:
  float slope_;
};

class Sigmoid final : public Module {
 public:
  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;
};

class MaxPool2 final : public Module {
 public:
  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;
};

/// Nearest-neighbour 2x upsampling.
class Upsample2 final : public Module {
 public:
  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;
};

class Sequential final : public Module {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename M, typename... Args>
  Sequential& add(Args&&... args) {
    layers_.push_back(std::make_unique<M>(std::forward<Args>(args)...));
    return *this;
  }
  Sequential& add(std::unique_ptr<Module> m) {
    layers_.push_back(std::move(m));
    return *this;
  }

  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;
  void collect(std::vector<Param*>& out) override;
  std::size_t size() const noexcept { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Module>> layers_;
};

/// y = x + body(x)
class Residual final : public Module {
 public:
  explicit Residual(Sequential body) : body_(std::move(body)) {}
  Tensor forward(const Tensor& x, Tape* tape) const override;
  Tensor backward(const Tensor& dy, Tape& tape) override;
  void collect(std::vector<Param*>& out) override { body_.collect(out); }

 private:
  Sequential body_;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(std::vector<Param*> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);
  void step();
  void zero_grad();
  float learning_rate() const noexcept { return lr_; }
  void set_learning_rate(float lr) noexcept { lr_ = lr; }

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<float>> m_, v_;
  float lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace hgit::nn
