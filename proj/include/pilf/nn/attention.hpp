#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pilf/nn/layers.hpp"

namespace pilf::nn {

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(pos / 10000^(2i/d)).
inline Matrix positional_encoding(Eigen::Index steps, Eigen::Index d_model) {
  if (d_model % 2 != 0) throw Error("nn", "positional encoding needs an even model width", std::to_string(d_model));
  Matrix pe(steps, d_model);
  for (Eigen::Index pos = 0; pos < steps; ++pos) {
    for (Eigen::Index i = 0; i < d_model; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe(pos, i) = std::sin(angle);
      pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

/// Row-wise numerically stable softmax.
inline Matrix softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    out.row(r) = (scores.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Multi-head scaled dot-product self-attention over each sequence of a batch.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(Eigen::Index d_model, Eigen::Index heads) : d_model_(d_model), heads_(heads) {
    if (heads <= 0 || d_model % heads != 0) {
      throw Error("nn", "model width must be divisible by the number of heads",
                  std::to_string(d_model) + "/" + std::to_string(heads));
    }
    for (Dense* p : {&query, &key, &value, &output}) *p = Dense(d_model, d_model);
  }

  void init(Rng& rng) {
    for (Dense* p : {&query, &key, &value, &output}) p->init(rng);
  }

  SeqBatch forward(const SeqBatch& x) {
    require(x.channels() == d_model_, "nn", "attention input width mismatch");
    const Eigen::Index dk = d_model_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    q_ = query.forward(x.data);
    k_ = key.forward(x.data);
    v_ = value.forward(x.data);
    batch_ = x.batch;
    steps_ = x.steps;
    weights_.assign(static_cast<std::size_t>(batch_ * heads_), Matrix());
    Matrix concat(x.data.rows(), d_model_);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (Eigen::Index h = 0; h < heads_; ++h) {
        auto qh = q_.block(b * steps_, h * dk, steps_, dk);
        auto kh = k_.block(b * steps_, h * dk, steps_, dk);
        auto vh = v_.block(b * steps_, h * dk, steps_, dk);
        Matrix a = softmax_rows((qh * kh.transpose()) * scale);
        concat.block(b * steps_, h * dk, steps_, dk).noalias() = a * vh;
        weights_[static_cast<std::size_t>(b * heads_ + h)] = std::move(a);
      }
    }
    cached_ = true;
    return {output.forward(concat), x.batch, x.steps};
  }

  SeqBatch backward(const SeqBatch& grad_out) {
    check_state(cached_, "attention");
    const Eigen::Index dk = d_model_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    const Matrix dconcat = output.backward(grad_out.data);
    Matrix dq(dconcat.rows(), d_model_), dk_mat(dconcat.rows(), d_model_), dv(dconcat.rows(), d_model_);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (Eigen::Index h = 0; h < heads_; ++h) {
        const Matrix& a = weights_[static_cast<std::size_t>(b * heads_ + h)];
        auto qh = q_.block(b * steps_, h * dk, steps_, dk);
        auto kh = k_.block(b * steps_, h * dk, steps_, dk);
        auto vh = v_.block(b * steps_, h * dk, steps_, dk);
        auto dout = dconcat.block(b * steps_, h * dk, steps_, dk);
        const Matrix da = dout * vh.transpose();
        dv.block(b * steps_, h * dk, steps_, dk).noalias() = a.transpose() * dout;
        const Vector row_dot = (da.array() * a.array()).rowwise().sum();
        const Matrix ds = (a.array() * (da.colwise() - row_dot).array()).matrix() * scale;
        dq.block(b * steps_, h * dk, steps_, dk).noalias() = ds * kh;
        dk_mat.block(b * steps_, h * dk, steps_, dk).noalias() = ds.transpose() * qh;
      }
    }
    Matrix dx = query.backward(dq);
    dx += key.backward(dk_mat);
    dx += value.backward(dv);
    return {dx, grad_out.batch, grad_out.steps};
  }

  /// Attention weights of sample b, head h from the last forward pass.
  const Matrix& attention_weights(Eigen::Index b, Eigen::Index h) const {
    return weights_.at(static_cast<std::size_t>(b * heads_ + h));
  }

  void collect(ParameterSet& set, const std::string& prefix) {
    query.collect(set, prefix + ".query");
    key.collect(set, prefix + ".key");
    value.collect(set, prefix + ".value");
    output.collect(set, prefix + ".output");
  }

  Dense query, key, value, output;

 private:
  Eigen::Index d_model_ = 0, heads_ = 1;
  Eigen::Index batch_ = 0, steps_ = 0;
  Matrix q_, k_, v_;
  std::vector<Matrix> weights_;
  bool cached_ = false;
};

/// Post-norm encoder block:
///   h = LN1(x + Dropout(MHA(x)))
///   y = LN2(h + Dropout(W2 ReLU(W1 h)))
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(Eigen::Index d_model, Eigen::Index heads, Eigen::Index ff_dim, double dropout)
      : attention(d_model, heads), norm1(d_model), ff1(d_model, ff_dim), ff2(ff_dim, d_model), norm2(d_model),
        drop_attn_(dropout), drop_ff_(dropout) {}

  void init(Rng& rng) {
    attention.init(rng);
    ff1.init(rng);
    ff2.init(rng);
  }

  SeqBatch forward(const SeqBatch& x, Mode mode, Rng& dropout_rng) {
    SeqBatch a = attention.forward(x);
    Matrix h = norm1.forward(x.data + drop_attn_.forward(a.data, mode, dropout_rng));
    Matrix f = ff2.forward(relu_.forward(ff1.forward(h)));
    Matrix y = norm2.forward(h + drop_ff_.forward(f, mode, dropout_rng));
    return {std::move(y), x.batch, x.steps};
  }

  SeqBatch backward(const SeqBatch& grad_out) {
    Matrix dsum2 = norm2.backward(grad_out.data);
    Matrix dh = dsum2 + ff1.backward(relu_.backward(ff2.backward(drop_ff_.backward(dsum2))));
    Matrix dsum1 = norm1.backward(dh);
    SeqBatch da = attention.backward({drop_attn_.backward(dsum1), grad_out.batch, grad_out.steps});
    return {dsum1 + da.data, grad_out.batch, grad_out.steps};
  }

  void collect(ParameterSet& set, const std::string& prefix) {
    attention.collect(set, prefix + ".attn");
    norm1.collect(set, prefix + ".norm1");
    ff1.collect(set, prefix + ".ff1");
    ff2.collect(set, prefix + ".ff2");
    norm2.collect(set, prefix + ".norm2");
  }

  MultiHeadAttention attention;
  LayerNorm norm1;
  Dense ff1, ff2;
  LayerNorm norm2;

 private:
  Dropout drop_attn_, drop_ff_;
  ReLU relu_;
};

}  // namespace pilf::nn
