#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hgit::nn {

/// Dense float tensor in NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f);

  int n() const noexcept { return n_; }
  int c() const noexcept { return c_; }
  int h() const noexcept { return h_; }
  int w() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_size() const noexcept { return static_cast<std::size_t>(c_) * plane(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  float* sample(int i) noexcept { return data_.data() + i * sample_size(); }
  const float* sample(int i) const noexcept { return data_.data() + i * sample_size(); }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  bool same_shape(const Tensor& o) const noexcept {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_string() const;

  void fill(float v);
  Tensor& operator+=(const Tensor& o);

 private:
  std::size_t index(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

/// Concatenate along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Inverse of concat_channels: split the first `ca` channels off.
void split_channels(const Tensor& ab, int ca, Tensor& a, Tensor& b);

/// Stack of activations saved during a forward pass, consumed in reverse by
/// the matching backward pass. One tape per network invocation.
class Tape {
 public:
  void push(Tensor t) { saved_.push_back(std::move(t)); }
  Tensor pop();
  bool empty() const noexcept { return saved_.empty(); }
  std::size_t depth() const noexcept { return saved_.size(); }

 private:
  std::vector<Tensor> saved_;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

}  // namespace hgit::nn
