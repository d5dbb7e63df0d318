#pragma once

#include <cmath>
#include <map>
#include <string>

#include "pilf/nn/core.hpp"

namespace pilf::nn {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, Matrix> first_moment;
  std::map<std::string, Matrix> second_moment;

  void validate() const {
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "nn", "Adam betas must lie in [0, 1)");
    require(lr > 0 && eps > 0, "nn", "Adam lr and eps must be positive");
  }
};

/// One bias-corrected Adam update of every parameter in `params` from its
/// accumulated gradient.
inline void adam_step(ParameterSet& params, AdamState& state) {
  state.validate();
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params.params()) {
    require(p->grad.rows() == p->value.rows() && p->grad.cols() == p->value.cols(), "nn",
            "gradient shape differs from parameter shape", name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Matrix::Zero(p->value.rows(), p->value.cols()));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Matrix::Zero(p->value.rows(), p->value.cols()));
    Matrix& m = m_it->second;
    Matrix& v = v_it->second;
    require(m.rows() == p->value.rows() && m.cols() == p->value.cols(), "nn", "Adam moment shape mismatch", name);
    m = state.beta1 * m + (1.0 - state.beta1) * p->grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

}  // namespace pilf::nn
