#pragma once

// Dense tanh MLP with manual backpropagation and an Adam optimizer.

#include <cmath>
#include <vector>

#include "uavtrack/core.hpp"

namespace uavtrack::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct Layer {
  Matrix<Scalar> w;  // out x in
  Vector<Scalar> b;
};

template <typename Scalar>
using Params = std::vector<Layer<Scalar>>;

/// tanh through the vectorized exponential.
template <typename Derived>
auto tanh_activation(const Eigen::ArrayBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return S(1) - S(2) / ((S(2) * z).exp() + S(1));
}

template <typename Scalar>
std::size_t param_count(const Params<Scalar>& p) {
  std::size_t n = 0;
  for (const auto& l : p) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

template <typename Scalar>
Vector<Scalar> flatten(const Params<Scalar>& p) {
  Vector<Scalar> out(static_cast<Eigen::Index>(param_count(p)));
  Eigen::Index k = 0;
  for (const auto& l : p) {
    out.segment(k, l.w.size()) = Eigen::Map<const Vector<Scalar>>(l.w.data(), l.w.size());
    k += l.w.size();
    out.segment(k, l.b.size()) = l.b;
    k += l.b.size();
  }
  return out;
}

template <typename Scalar>
void unflatten(const Vector<Scalar>& flat, Params<Scalar>& p) {
  Eigen::Index k = 0;
  for (auto& l : p) {
    Eigen::Map<Vector<Scalar>>(l.w.data(), l.w.size()) = flat.segment(k, l.w.size());
    k += l.w.size();
    l.b = flat.segment(k, l.b.size());
    k += l.b.size();
  }
}

template <typename Scalar>
Scalar squared_norm(const Params<Scalar>& p) {
  Scalar s = 0;
  for (const auto& l : p) s += l.w.squaredNorm() + l.b.squaredNorm();
  return s;
}

template <typename Scalar>
bool all_finite(const Params<Scalar>& p) {
  for (const auto& l : p)
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  return true;
}

/// Fully connected network: tanh on every hidden layer, linear output.
/// Inputs and outputs are column-major batches (one column per sample).
template <typename Scalar = double>
class Mlp {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;

  struct Cache {
    std::vector<Mat> activations;  // [0] is the input, [l] the output of layer l
  };

  Mlp() = default;

  /// sizes = {input, hidden..., output}; parameters start at zero.
  explicit Mlp(const std::vector<int>& sizes) : sizes_(sizes) {
    if (sizes.size() < 2) throw Error(ErrorCode::ConfigInvalid, "an MLP needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      params_.push_back({Mat::Zero(sizes[l + 1], sizes[l]), Vec::Zero(sizes[l + 1])});
  }

  /// Glorot-uniform weights, zero biases; the output layer is scaled by `output_gain`.
  void init(Rng& rng, double output_gain = 1.0) {
    for (std::size_t l = 0; l < params_.size(); ++l) {
      auto& layer = params_[l];
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.w.rows() + layer.w.cols()));
      const double gain = l + 1 == params_.size() ? output_gain : 1.0;
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = static_cast<Scalar>(gain * dist(rng));
      layer.b.setZero();
    }
  }

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  int num_layers() const { return static_cast<int>(params_.size()); }

  Params<Scalar>& params() { return params_; }
  const Params<Scalar>& params() const { return params_; }

  Mat forward(const Mat& x) const {
    Mat h = x;
    for (std::size_t l = 0; l < params_.size(); ++l) {
      Mat z = params_[l].w * h;
      z.colwise() += params_[l].b;
      h = l + 1 == params_.size() ? std::move(z) : Mat(tanh_activation(z.array()));
    }
    return h;
  }

  Mat forward(const Mat& x, Cache& cache) const {
    cache.activations.clear();
    cache.activations.reserve(params_.size() + 1);
    cache.activations.push_back(x);
    for (std::size_t l = 0; l < params_.size(); ++l) {
      Mat z = params_[l].w * cache.activations.back();
      z.colwise() += params_[l].b;
      if (l + 1 == params_.size())
        cache.activations.push_back(std::move(z));
      else
        cache.activations.push_back(tanh_activation(z.array()).matrix());
    }
    return cache.activations.back();
  }

  /// Gradient of a scalar loss w.r.t. the parameters given dL/d(output).
  Params<Scalar> backward(const Cache& cache, const Mat& grad_out) const {
    Params<Scalar> grads(params_.size());
    Mat delta = grad_out;
    for (int l = static_cast<int>(params_.size()) - 1; l >= 0; --l) {
      const Mat& input = cache.activations[l];
      grads[l].w.noalias() = delta * input.transpose();
      grads[l].b = delta.rowwise().sum();
      if (l > 0) {
        Mat back = params_[l].w.transpose() * delta;
        delta = back.array() * (Scalar(1) - input.array().square());
      }
    }
    return grads;
  }

 private:
  std::vector<int> sizes_;
  Params<Scalar> params_;
};

template <typename Scalar>
struct AdamState {
  Params<Scalar> m;
  Params<Scalar> v;
  long step = 0;
};

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const Params<Scalar>& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-5)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& l : like) {
      state_.m.push_back({Matrix<Scalar>::Zero(l.w.rows(), l.w.cols()), Vector<Scalar>::Zero(l.b.size())});
      state_.v.push_back({Matrix<Scalar>::Zero(l.w.rows(), l.w.cols()), Vector<Scalar>::Zero(l.b.size())});
    }
  }

  void step(Params<Scalar>& params, const Params<Scalar>& grads) {
    ++state_.step;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
    const Scalar step_size = static_cast<Scalar>(lr_ * std::sqrt(c2) / c1);
    const auto b1 = static_cast<Scalar>(beta1_);
    const auto b2 = static_cast<Scalar>(beta2_);
    const auto eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
    for (std::size_t l = 0; l < params.size(); ++l) {
      update(params[l].w, grads[l].w, state_.m[l].w, state_.v[l].w, b1, b2, step_size, eps);
      update(params[l].b, grads[l].b, state_.m[l].b, state_.v[l].b, b1, b2, step_size, eps);
    }
  }

  double lr() const { return lr_; }
  const AdamState<Scalar>& state() const { return state_; }
  AdamState<Scalar>& state() { return state_; }

 private:
  template <typename Derived>
  static void update(Eigen::MatrixBase<Derived>& p, const Eigen::MatrixBase<Derived>& g, Eigen::MatrixBase<Derived>& m,
                     Eigen::MatrixBase<Derived>& v, Scalar b1, Scalar b2, Scalar step_size, Scalar eps) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    p.array() -= step_size * m.array() / (v.array().sqrt() + eps);
  }

  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-5;
  AdamState<Scalar> state_;
};

/// Scales gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
template <typename Scalar>
double clip_grad_norm(std::vector<Params<Scalar>*> grads, double max_norm) {
  double sq = 0.0;
  for (auto* g : grads) sq += static_cast<double>(squared_norm(*g));
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<Scalar>(max_norm / (norm + 1e-12));
    for (auto* g : grads)
      for (auto& l : *g) {
        l.w *= scale;
        l.b *= scale;
      }
  }
  return norm;
}

}  // namespace uavtrack::nn
