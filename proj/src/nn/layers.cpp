#include "hgit/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>

#include "hgit/errors.hpp"

namespace hgit::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void im2col(const float* img, int ch, int h, int w, int k, int stride, int pad, int oh, int ow, float* col) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < ch; ++c) {
    const float* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        float* row = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          float* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, int ch, int h, int w, int k, int stride, int pad, int oh, int ow, float* img) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < ch; ++c) {
    float* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const float* row = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const float* src = row + static_cast<std::size_t>(oy) * ow;
          float* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Param make_param(std::string name, int n, int c, int h, int w) {
  Param p;
  p.name = std::move(name);
  p.value = Tensor(n, c, h, w);
  p.grad = Tensor(n, c, h, w);
  return p;
}

}  // namespace

std::vector<Param*> Module::parameters() {
  std::vector<Param*> out;
  collect(out);
  return out;
}

std::vector<const Param*> Module::parameters() const {
  std::vector<Param*> tmp;
  const_cast<Module*>(this)->collect(tmp);
  return {tmp.begin(), tmp.end()};
}

void Module::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(0.0f);
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng, float init_gain)
    : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(pad) {
  if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || stride <= 0 || pad < 0) {
    throw ArgumentError("invalid Conv2d configuration");
  }
  weight_ = make_param("weight", out_ch, in_ch * kernel * kernel, 1, 1);
  bias_ = make_param("bias", out_ch, 1, 1, 1);
  const float fan_in = static_cast<float>(in_ch * kernel * kernel);
  std::normal_distribution<float> dist(0.0f, std::sqrt(init_gain / fan_in));
  for (float& v : weight_.value.values()) v = dist(rng);
}

Tensor Conv2d::forward(const Tensor& x, Tape* tape) const {
  if (x.c() != in_) {
    throw ArgumentError("Conv2d expects " + std::to_string(in_) + " channels, got " + x.shape_string());
  }
  const int oh = out_size(x.h()), ow = out_size(x.w());
  const int kk = in_ * k_ * k_;
  const int cols = oh * ow;
  Tensor y(x.n(), out_, oh, ow);
  std::vector<float> col(static_cast<std::size_t>(kk) * cols);
  ConstMapMat W(weight_.value.data(), out_, kk);
  Eigen::Map<const Eigen::VectorXf> b(bias_.value.data(), out_);
  for (int i = 0; i < x.n(); ++i) {
    im2col(x.sample(i), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, col.data());
    MapMat Y(y.sample(i), out_, cols);
    Y.noalias() = W * ConstMapMat(col.data(), kk, cols);
    Y.colwise() += b;
  }
  if (tape) tape->push(x);
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, Tape& tape) {
  const Tensor x = tape.pop();
  const int oh = dy.h(), ow = dy.w();
  const int kk = in_ * k_ * k_;
  const int cols = oh * ow;
  Tensor dx(x.n(), x.c(), x.h(), x.w());
  std::vector<float> col(static_cast<std::size_t>(kk) * cols);
  std::vector<float> dcol(col.size());
  MapMat dW(weight_.grad.data(), out_, kk);
  ConstMapMat W(weight_.value.data(), out_, kk);
  Eigen::Map<Eigen::VectorXf> db(bias_.grad.data(), out_);
  for (int i = 0; i < x.n(); ++i) {
    im2col(x.sample(i), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, col.data());
    ConstMapMat dY(dy.sample(i), out_, cols);
    ConstMapMat C(col.data(), kk, cols);
    dW.noalias() += dY * C.transpose();
    // plain loop: Eigen's vectorized reductions peel by alignment, which
    // makes the rounding depend on where the allocator put dy
    for (int o = 0; o < out_; ++o) {
      const float* row = dy.sample(i) + static_cast<std::size_t>(o) * cols;
      double s = 0.0;
      for (int j = 0; j < cols; ++j) s += row[j];
      db[o] += static_cast<float>(s);
    }
    MapMat dC(dcol.data(), kk, cols);
    dC.noalias() = W.transpose() * dY;
    col2im(dcol.data(), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, dx.sample(i));
  }
  return dx;
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// InstanceNorm

InstanceNorm::InstanceNorm(int channels, float eps) : channels_(channels), eps_(eps) {
  gamma_ = make_param("gamma", channels, 1, 1, 1);
  beta_ = make_param("beta", channels, 1, 1, 1);
  gamma_.value.fill(1.0f);
}

Tensor InstanceNorm::forward(const Tensor& x, Tape* tape) const {
  if (x.c() != channels_) throw ArgumentError("InstanceNorm channel mismatch " + x.shape_string());
  Tensor y(x.n(), x.c(), x.h(), x.w());
  Tensor xhat(x.n(), x.c(), x.h(), x.w());
  Tensor inv_std(x.n(), x.c(), 1, 1);
  const std::size_t m = x.plane();
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.sample(i) + c * m;
      double mean = 0.0;
      for (std::size_t j = 0; j < m; ++j) mean += src[j];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double d = src[j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const float is = static_cast<float>(1.0 / std::sqrt(var + eps_));
      inv_std.at(i, c, 0, 0) = is;
      float* xh = xhat.sample(i) + c * m;
      float* dst = y.sample(i) + c * m;
      const float g = gamma_.value.data()[c], b = beta_.value.data()[c];
      for (std::size_t j = 0; j < m; ++j) {
        xh[j] = static_cast<float>((src[j] - mean) * is);
        dst[j] = g * xh[j] + b;
      }
    }
  }
  if (tape) {
    tape->push(std::move(xhat));
    tape->push(std::move(inv_std));
  }
  return y;
}

Tensor InstanceNorm::backward(const Tensor& dy, Tape& tape) {
  const Tensor inv_std = tape.pop();
  const Tensor xhat = tape.pop();
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  const std::size_t m = dy.plane();
  for (int i = 0; i < dy.n(); ++i) {
    for (int c = 0; c < dy.c(); ++c) {
      const float* g = dy.sample(i) + c * m;
      const float* xh = xhat.sample(i) + c * m;
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        sum_g += g[j];
        sum_gx += static_cast<double>(g[j]) * xh[j];
      }
      gamma_.grad.data()[c] += static_cast<float>(sum_gx);
      beta_.grad.data()[c] += static_cast<float>(sum_g);
      const float gam = gamma_.value.data()[c];
      const double scale = gam * inv_std.at(i, c, 0, 0) / static_cast<double>(m);
      float* d = dx.sample(i) + c * m;
      for (std::size_t j = 0; j < m; ++j) {
        d[j] = static_cast<float>(scale * (static_cast<double>(m) * g[j] - sum_g - xh[j] * sum_gx));
      }
    }
  }
  return dx;
}

void InstanceNorm::collect(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ---------------------------------------------------------------------------
// Pointwise activations

Tensor ReLU::forward(const Tensor& x, Tape* tape) const {
  Tensor y = x;
  for (float& v : y.values()) v = v > 0.0f ? v : 0.0f;
  if (tape) tape->push(y);
  return y;
}

Tensor ReLU::backward(const Tensor& dy, Tape& tape) {
  const Tensor y = tape.pop();
  Tensor dx = dy;
  auto dv = dx.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < dv.size(); ++i) {
    if (yv[i] <= 0.0f) dv[i] = 0.0f;
  }
  return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, Tape* tape) const {
  if (tape) tape->push(x);
  Tensor y = x;
  for (float& v : y.values()) v = v > 0.0f ? v : slope_ * v;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& dy, Tape& tape) {
  const Tensor x = tape.pop();
  Tensor dx = dy;
  auto dv = dx.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < dv.size(); ++i) {
    if (xv[i] <= 0.0f) dv[i] *= slope_;
  }
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, Tape* tape) const {
  Tensor y = x;
  for (float& v : y.values()) v = 1.0f / (1.0f + std::exp(-v));
  if (tape) tape->push(y);
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy, Tape& tape) {
  const Tensor y = tape.pop();
  Tensor dx = dy;
  auto dv = dx.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= yv[i] * (1.0f - yv[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Resampling

Tensor MaxPool2::forward(const Tensor& x, Tape* tape) const {
  if (x.h() % 2 || x.w() % 2) throw ArgumentError("MaxPool2 needs even spatial size, got " + x.shape_string());
  const int oh = x.h() / 2, ow = x.w() / 2;
  Tensor y(x.n(), x.c(), oh, ow);
  Tensor argmax;
  if (tape) argmax = Tensor(x.n(), x.c(), oh, ow);
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          int best = 0;
          float bv = x.at(i, c, 2 * oy, 2 * ox);
          for (int q = 1; q < 4; ++q) {
            const float v = x.at(i, c, 2 * oy + q / 2, 2 * ox + q % 2);
            if (v > bv) {
              bv = v;
              best = q;
            }
          }
          y.at(i, c, oy, ox) = bv;
          if (tape) argmax.at(i, c, oy, ox) = static_cast<float>(best);
        }
      }
    }
  }
  if (tape) tape->push(std::move(argmax));
  return y;
}

Tensor MaxPool2::backward(const Tensor& dy, Tape& tape) {
  const Tensor argmax = tape.pop();
  Tensor dx(dy.n(), dy.c(), dy.h() * 2, dy.w() * 2);
  for (int i = 0; i < dy.n(); ++i) {
    for (int c = 0; c < dy.c(); ++c) {
      for (int oy = 0; oy < dy.h(); ++oy) {
        for (int ox = 0; ox < dy.w(); ++ox) {
          const int q = static_cast<int>(argmax.at(i, c, oy, ox));
          dx.at(i, c, 2 * oy + q / 2, 2 * ox + q % 2) = dy.at(i, c, oy, ox);
        }
      }
    }
  }
  return dx;
}

Tensor Upsample2::forward(const Tensor& x, Tape* /*tape*/) const {
  Tensor y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      for (int yy = 0; yy < y.h(); ++yy) {
        for (int xx = 0; xx < y.w(); ++xx) y.at(i, c, yy, xx) = x.at(i, c, yy / 2, xx / 2);
      }
    }
  }
  return y;
}

Tensor Upsample2::backward(const Tensor& dy, Tape& /*tape*/) {
  Tensor dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int i = 0; i < dy.n(); ++i) {
    for (int c = 0; c < dy.c(); ++c) {
      for (int yy = 0; yy < dy.h(); ++yy) {
        for (int xx = 0; xx < dy.w(); ++xx) dx.at(i, c, yy / 2, xx / 2) += dy.at(i, c, yy, xx);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Containers

Tensor Sequential::forward(const Tensor& x, Tape* tape) const {
  Tensor h = x;
  for (const auto& layer : layers_) h = layer->forward(h, tape);
  return h;
}

Tensor Sequential::backward(const Tensor& dy, Tape& tape) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g, tape);
  return g;
}

void Sequential::collect(std::vector<Param*>& out) {
  for (auto& layer : layers_) layer->collect(out);
}

Tensor Residual::forward(const Tensor& x, Tape* tape) const {
  Tensor y = body_.forward(x, tape);
  y += x;
  return y;
}

Tensor Residual::backward(const Tensor& dy, Tape& tape) {
  Tensor dx = body_.backward(dy, tape);
  dx += dy;
  return dx;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<Param*> params, float lr, float beta1, float beta2, float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const float bc1 = 1.0f - static_cast<float>(std::pow(beta1_, t_));
  const float bc2 = 1.0f - static_cast<float>(std::pow(beta2_, t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto val = params_[k]->value.values();
    auto grad = params_[k]->grad.values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      const float g = grad[i];
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * g * g;
      val[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->grad.fill(0.0f);
}

}  // namespace hgit::nn
