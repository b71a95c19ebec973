#include "hgit/nn/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "hgit/errors.hpp"

namespace hgit::nn {

Tensor::Tensor(int n, int c, int h, int w, float fill) : n_(n), c_(c), h_(h), w_(w) {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw ArgumentError("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_string() const {
  return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
         std::to_string(w_) + ")";
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) throw ArgumentError("tensor add shape mismatch " + shape_string() + " vs " + o.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) throw ArgumentError("concat shape mismatch");
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int i = 0; i < a.n(); ++i) {
    std::memcpy(out.sample(i), a.sample(i), a.sample_size() * sizeof(float));
    std::memcpy(out.sample(i) + a.sample_size(), b.sample(i), b.sample_size() * sizeof(float));
  }
  return out;
}

void split_channels(const Tensor& ab, int ca, Tensor& a, Tensor& b) {
  a = Tensor(ab.n(), ca, ab.h(), ab.w());
  b = Tensor(ab.n(), ab.c() - ca, ab.h(), ab.w());
  for (int i = 0; i < ab.n(); ++i) {
    std::memcpy(a.sample(i), ab.sample(i), a.sample_size() * sizeof(float));
    std::memcpy(b.sample(i), ab.sample(i) + a.sample_size(), b.sample_size() * sizeof(float));
  }
}

Tensor Tape::pop() {
  if (saved_.empty()) throw Error("tape underflow: backward called without matching forward");
  Tensor t = std::move(saved_.back());
  saved_.pop_back();
  return t;
}

}  // namespace hgit::nn
