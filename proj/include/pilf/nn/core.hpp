#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pilf/error.hpp"
#include "pilf/matrix.hpp"
#include "pilf/random.hpp"

namespace pilf::nn {

enum class Mode { train, infer };

/// Shape plus row-major values; the exchange format for checkpoints.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  bool valid() const { return numel() == values.size(); }
};

inline Tensor to_tensor(const Matrix& m) {
  Tensor t{{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, {}};
  t.values.assign(m.data(), m.data() + m.size());
  return t;
}

inline Matrix to_matrix(const Tensor& t) {
  require(t.valid() && t.shape.size() == 2, "nn", "expected a valid rank-2 tensor");
  Matrix m(static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1]));
  std::copy(t.values.begin(), t.values.end(), m.data());
  return m;
}

/// Trainable weight and its accumulated gradient (same shape).
struct Parameter {
  Matrix value;
  Matrix grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Matrix::Zero(rows, cols);
    grad = Matrix::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

/// Non-owning, name-ordered view of a model's parameters and buffers
/// (non-trainable state such as batch-norm running statistics).
class ParameterSet {
 public:
  void add(const std::string& name, Parameter& p) {
    require(!params_.count(name) && !buffers_.count(name), "nn", "duplicate parameter name", name);
    params_.emplace(name, &p);
  }
  void add_buffer(const std::string& name, Matrix& m) {
    require(!params_.count(name) && !buffers_.count(name), "nn", "duplicate buffer name", name);
    buffers_.emplace(name, &m);
  }

  const std::map<std::string, Parameter*>& params() const { return params_; }
  const std::map<std::string, Matrix*>& buffers() const { return buffers_; }

  void zero_grad() {
    for (auto& [_, p] : params_) p->zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  /// Values of parameters and buffers, keyed by name.
  std::map<std::string, Matrix> snapshot() const {
    std::map<std::string, Matrix> out;
    for (const auto& [k, p] : params_) out.emplace(k, p->value);
    for (const auto& [k, b] : buffers_) out.emplace(k, *b);
    return out;
  }

  void restore(const std::map<std::string, Matrix>& snap) {
    for (auto& [k, p] : params_) assign(k, p->value, snap);
    for (auto& [k, b] : buffers_) assign(k, *b, snap);
  }

 private:
  static void assign(const std::string& k, Matrix& dst, const std::map<std::string, Matrix>& snap) {
    auto it = snap.find(k);
    require(it != snap.end(), "nn", "snapshot is missing tensor", k);
    require(it->second.rows() == dst.rows() && it->second.cols() == dst.cols(), "nn", "snapshot shape mismatch", k);
    dst = it->second;
  }

  std::map<std::string, Parameter*> params_;
  std::map<std::string, Matrix*> buffers_;
};

/// U(-sqrt(3/fan_in), sqrt(3/fan_in)): unit output variance for unit-variance
/// inputs.
inline void init_fan_in_uniform(Matrix& w, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -limit, limit);
}

/// Batch of equal-length sequences stacked vertically (row b*steps + t).
struct SeqBatch {
  Matrix data;
  Eigen::Index batch = 0;
  Eigen::Index steps = 0;

  Eigen::Index channels() const { return data.cols(); }
  auto sample(Eigen::Index b) { return data.middleRows(b * steps, steps); }
  auto sample(Eigen::Index b) const { return data.middleRows(b * steps, steps); }
};

inline void check_state(bool has_cache, const char* layer) {
  if (!has_cache) throw Error("nn", std::string("backward called before a training forward pass in ") + layer, layer);
}

}  // namespace pilf::nn
