#pragma once

// Per-layer forward/backward. Each layer caches what its backward pass needs
// during forward; backward accumulates into parameter gradients and returns
// the gradient with respect to the layer input.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pilf/nn/core.hpp"

namespace pilf::nn {

/// y = x W + b, applied row-wise. W is in x out.
class Dense {
 public:
  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out) {
    weight.resize(in, out);
    bias.resize(1, out);
  }

  void init(Rng& rng) {
    init_fan_in_uniform(weight.value, static_cast<std::size_t>(weight.value.rows()), rng);
    bias.value.setZero();
  }

  Matrix forward(const Matrix& x) {
    require(x.cols() == weight.value.rows(), "nn", "dense input width mismatch");
    input_ = x;
    cached_ = true;
    Matrix y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }

  Matrix backward(const Matrix& grad_out) {
    check_state(cached_, "dense");
    weight.grad.noalias() += input_.transpose() * grad_out;
    bias.grad.row(0) += grad_out.colwise().sum();
    return grad_out * weight.value.transpose();
  }

  void collect(ParameterSet& set, const std::string& prefix) {
    set.add(prefix + ".weight", weight);
    set.add(prefix + ".bias", bias);
  }

  Parameter weight;
  Parameter bias;

 private:
  Matrix input_;
  bool cached_ = false;
};

/// 1-D convolution, stride 1, zero "same" padding, odd kernel. The kernel is
/// stored as an im2col matrix of shape (kernel * in) x out, tap-major.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(Eigen::Index in, Eigen::Index out, Eigen::Index kernel) : in_(in), kernel_(kernel) {
    require(kernel % 2 == 1, "nn", "conv kernel size must be odd");
    weight.resize(kernel * in, out);
    bias.resize(1, out);
  }

  void init(Rng& rng) {
    init_fan_in_uniform(weight.value, static_cast<std::size_t>(weight.value.rows()), rng);
    bias.value.setZero();
  }

  SeqBatch forward(const SeqBatch& x) {
    require(x.channels() == in_, "nn", "conv input channel mismatch");
    if (x.steps < kernel_) {
      throw Error("nn", "conv input shorter than kernel", "steps=" + std::to_string(x.steps));
    }
    const Eigen::Index half = kernel_ / 2;
    cols_ = Matrix::Zero(x.data.rows(), kernel_ * in_);
    for (Eigen::Index b = 0; b < x.batch; ++b) {
      for (Eigen::Index t = 0; t < x.steps; ++t) {
        const Eigen::Index row = b * x.steps + t;
        for (Eigen::Index j = 0; j < kernel_; ++j) {
          const Eigen::Index src = t + j - half;
          if (src < 0 || src >= x.steps) continue;
          cols_.block(row, j * in_, 1, in_) = x.data.row(b * x.steps + src);
        }
      }
    }
    batch_ = x.batch;
    steps_ = x.steps;
    cached_ = true;
    SeqBatch y{cols_ * weight.value, x.batch, x.steps};
    y.data.rowwise() += bias.value.row(0);
    return y;
  }

  SeqBatch backward(const SeqBatch& grad_out) {
    check_state(cached_, "conv1d");
    weight.grad.noalias() += cols_.transpose() * grad_out.data;
    bias.grad.row(0) += grad_out.data.colwise().sum();
    const Matrix dcols = grad_out.data * weight.value.transpose();
    const Eigen::Index half = kernel_ / 2;
    SeqBatch dx{Matrix::Zero(batch_ * steps_, in_), batch_, steps_};
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (Eigen::Index t = 0; t < steps_; ++t) {
        const Eigen::Index row = b * steps_ + t;
        for (Eigen::Index j = 0; j < kernel_; ++j) {
          const Eigen::Index src = t + j - half;
          if (src < 0 || src >= steps_) continue;
          dx.data.row(b * steps_ + src) += dcols.block(row, j * in_, 1, in_);
        }
      }
    }
    return dx;
  }

  void collect(ParameterSet& set, const std::string& prefix) {
    set.add(prefix + ".weight", weight);
    set.add(prefix + ".bias", bias);
  }

  Parameter weight;
  Parameter bias;

 private:
  Eigen::Index in_ = 0;
  Eigen::Index kernel_ = 3;
  Eigen::Index batch_ = 0, steps_ = 0;
  Matrix cols_;
  bool cached_ = false;
};

/// Per-channel normalization over all rows of the input. Train mode uses the
/// biased batch variance and updates exponential running statistics;
/// infer mode uses the running statistics.
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(Eigen::Index channels, double momentum = 0.1, double eps = 1e-5)
      : momentum_(momentum), eps_(eps) {
    gamma.resize(1, channels);
    beta.resize(1, channels);
    gamma.value.setOnes();
    running_mean = Matrix::Zero(1, channels);
    running_var = Matrix::Ones(1, channels);
  }

  Matrix forward(const Matrix& x, Mode mode) {
    require(x.cols() == gamma.value.cols(), "nn", "batch norm channel mismatch");
    mode_ = mode;
    if (mode == Mode::train) {
      const double n = static_cast<double>(x.rows());
      RowVector mean = x.colwise().sum() / n;
      Matrix centered = x.rowwise() - mean;
      RowVector var = centered.array().square().colwise().sum() / n;
      inv_std_ = (var.array() + eps_).rsqrt();
      xhat_ = centered.array().rowwise() * inv_std_.array();
      running_mean = (1.0 - momentum_) * running_mean + momentum_ * mean;
      running_var = (1.0 - momentum_) * running_var + momentum_ * var;
    } else {
      inv_std_ = (running_var.row(0).array() + eps_).rsqrt();
      xhat_ = (x.rowwise() - running_mean.row(0)).array().rowwise() * inv_std_.array();
    }
    cached_ = true;
    Matrix y = xhat_.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  Matrix backward(const Matrix& grad_out) {
    check_state(cached_, "batch_norm");
    gamma.grad.row(0) += (grad_out.array() * xhat_.array()).colwise().sum().matrix();
    beta.grad.row(0) += grad_out.colwise().sum();
    Matrix dxhat = grad_out.array().rowwise() * gamma.value.row(0).array();
    if (mode_ == Mode::infer) return dxhat.array().rowwise() * inv_std_.array();
    const double n = static_cast<double>(grad_out.rows());
    RowVector sum_d = dxhat.colwise().sum();
    RowVector sum_dx = (dxhat.array() * xhat_.array()).colwise().sum();
    Matrix dx = (n * dxhat.array() - (xhat_.array().rowwise() * sum_dx.array())).rowwise() - sum_d.array();
    return dx.array().rowwise() * (inv_std_.array() / n);
  }

  void collect(ParameterSet& set, const std::string& prefix) {
    set.add(prefix + ".gamma", gamma);
    set.add(prefix + ".beta", beta);
    set.add_buffer(prefix + ".running_mean", running_mean);
    set.add_buffer(prefix + ".running_var", running_var);
  }

  Parameter gamma;
  Parameter beta;
  Matrix running_mean;
  Matrix running_var;

 private:
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  Mode mode_ = Mode::train;
  RowVector inv_std_;
  Matrix xhat_;
  bool cached_ = false;
};

/// Per-row normalization over channels with learned affine parameters.
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(Eigen::Index channels, double eps = 1e-5) : eps_(eps) {
    gamma.resize(1, channels);
    beta.resize(1, channels);
    gamma.value.setOnes();
  }

  Matrix forward(const Matrix& x) {
    require(x.cols() == gamma.value.cols(), "nn", "layer norm channel mismatch");
    const double c = static_cast<double>(x.cols());
    Vector mean = x.rowwise().sum() / c;
    Matrix centered = x.colwise() - mean;
    Vector var = centered.array().square().rowwise().sum() / c;
    inv_std_ = (var.array() + eps_).rsqrt();
    xhat_ = centered.array().colwise() * inv_std_.array();
    cached_ = true;
    Matrix y = xhat_.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  Matrix backward(const Matrix& grad_out) {
    check_state(cached_, "layer_norm");
    gamma.grad.row(0) += (grad_out.array() * xhat_.array()).colwise().sum().matrix();
    beta.grad.row(0) += grad_out.colwise().sum();
    const double c = static_cast<double>(grad_out.cols());
    Matrix dxhat = grad_out.array().rowwise() * gamma.value.row(0).array();
    Vector sum_d = dxhat.rowwise().sum();
    Vector sum_dx = (dxhat.array() * xhat_.array()).rowwise().sum();
    Matrix dx = (c * dxhat.array() - (xhat_.array().colwise() * sum_dx.array())).colwise() - sum_d.array();
    return dx.array().colwise() * (inv_std_.array() / c);
  }

  void collect(ParameterSet& set, const std::string& prefix) {
    set.add(prefix + ".gamma", gamma);
    set.add(prefix + ".beta", beta);
  }

  Parameter gamma;
  Parameter beta;

 private:
  double eps_ = 1e-5;
  Vector inv_std_;
  Matrix xhat_;
  bool cached_ = false;
};

class ReLU {
 public:
  Matrix forward(const Matrix& x) {
    mask_ = (x.array() > 0.0).cast<double>();
    cached_ = true;
    return x.array() * mask_.array();
  }
  Matrix backward(const Matrix& grad_out) const {
    check_state(cached_, "relu");
    return grad_out.array() * mask_.array();
  }

 private:
  Matrix mask_;
  bool cached_ = false;
};

/// Max-pool along time with window 2 and stride 2; output length floor(T/2).
class MaxPool1d {
 public:
  SeqBatch forward(const SeqBatch& x) {
    const Eigen::Index out_steps = x.steps / 2;
    require(out_steps >= 1, "nn", "max-pool input shorter than its window");
    SeqBatch y{Matrix(x.batch * out_steps, x.channels()), x.batch, out_steps};
    argmax_.assign(static_cast<std::size_t>(y.data.size()), 0);
    for (Eigen::Index b = 0; b < x.batch; ++b) {
      for (Eigen::Index t = 0; t < out_steps; ++t) {
        const Eigen::Index r0 = b * x.steps + 2 * t;
        const Eigen::Index out_row = b * out_steps + t;
        for (Eigen::Index c = 0; c < x.channels(); ++c) {
          const double a = x.data(r0, c), bval = x.data(r0 + 1, c);
          const bool second = bval > a;
          y.data(out_row, c) = second ? bval : a;
          argmax_[static_cast<std::size_t>(out_row * x.channels() + c)] = second ? r0 + 1 : r0;
        }
      }
    }
    in_rows_ = x.data.rows();
    in_steps_ = x.steps;
    cached_ = true;
    return y;
  }

  SeqBatch backward(const SeqBatch& grad_out) const {
    check_state(cached_, "max_pool");
    SeqBatch dx{Matrix::Zero(in_rows_, grad_out.channels()), grad_out.batch, in_steps_};
    for (Eigen::Index r = 0; r < grad_out.data.rows(); ++r)
      for (Eigen::Index c = 0; c < grad_out.channels(); ++c)
        dx.data(argmax_[static_cast<std::size_t>(r * grad_out.channels() + c)], c) += grad_out.data(r, c);
    return dx;
  }

 private:
  std::vector<Eigen::Index> argmax_;
  Eigen::Index in_rows_ = 0, in_steps_ = 0;
  bool cached_ = false;
};

/// Mean over timesteps: (B*T) x C -> B x C.
class GlobalAvgPool {
 public:
  Matrix forward(const SeqBatch& x) {
    Matrix y(x.batch, x.channels());
    for (Eigen::Index b = 0; b < x.batch; ++b) y.row(b) = x.sample(b).colwise().mean();
    batch_ = x.batch;
    steps_ = x.steps;
    cached_ = true;
    return y;
  }

  SeqBatch backward(const Matrix& grad_out) const {
    check_state(cached_, "global_avg_pool");
    SeqBatch dx{Matrix(batch_ * steps_, grad_out.cols()), batch_, steps_};
    const double inv = 1.0 / static_cast<double>(steps_);
    for (Eigen::Index b = 0; b < batch_; ++b) dx.sample(b).rowwise() = grad_out.row(b) * inv;
    return dx;
  }

 private:
  Eigen::Index batch_ = 0, steps_ = 0;
  bool cached_ = false;
};

/// Inverted dropout: train mode zeroes entries with probability `rate` and
/// scales survivors by 1/(1-rate); infer mode is the identity.
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate) : rate_(rate) {
    require(rate >= 0.0 && rate < 1.0, "nn", "dropout rate must be in [0, 1)");
  }

  Matrix forward(const Matrix& x, Mode mode, Rng& rng) {
    active_ = mode == Mode::train && rate_ > 0.0;
    cached_ = true;
    if (!active_) return x;
    mask_.resize(x.rows(), x.cols());
    const double keep = 1.0 / (1.0 - rate_);
    for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = uniform01(rng) < rate_ ? 0.0 : keep;
    return x.array() * mask_.array();
  }

  Matrix backward(const Matrix& grad_out) const {
    check_state(cached_, "dropout");
    if (!active_) return grad_out;
    return grad_out.array() * mask_.array();
  }

  double rate() const { return rate_; }

 private:
  double rate_ = 0.0;
  bool active_ = false;
  Matrix mask_;
  bool cached_ = false;
};

inline Matrix dropout_apply(const Matrix& x, double rate, Rng& rng, Mode mode) {
  Dropout d(rate);
  return d.forward(x, mode, rng);
}

}  // namespace pilf::nn
