#pragma once

// Piecewise parabolic temperature-demand envelope, its temperature-binned
// tolerance band, and the hinge-squared physics penalties. Everything here is
// in physical units: MW for demand, degrees C for temperature.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pilf/error.hpp"
#include "pilf/matrix.hpp"

namespace pilf {

/// D(T) = a1 T^2 + b1 T + c1 for T < t0, a2 T^2 + b2 T + c2 otherwise.
struct ParabolicEnvelope {
  double a1 = 0, b1 = 0, c1 = 0;
  double a2 = 0, b2 = 0, c2 = 0;
  double t0_c = 0;

  double demand(double t_c) const {
    return t_c < t0_c ? (a1 * t_c + b1) * t_c + c1 : (a2 * t_c + b2) * t_c + c2;
  }

  /// D(t0 from below) - D(t0 from above).
  double jump_at_breakpoint() const {
    const double below = (a1 * t0_c + b1) * t0_c + c1;
    const double above = (a2 * t0_c + b2) * t0_c + c2;
    return below - above;
  }

  void validate() const {
    require(a1 > 0 && a2 > 0, "physics", "both envelope segments must be convex (a1 > 0, a2 > 0)");
    require(std::isfinite(t0_c), "physics", "envelope breakpoint must be finite");
  }
};

/// ERCOT calibration: a1=47.2, b1=-1560.6, c1=51230, a2=52.4, b2=-864.5,
/// c2=35523.9, T0=18.5 C.
inline ParabolicEnvelope ercot_reference_envelope() {
  return {47.2, -1560.6, 51230.0, 52.4, -864.5, 35523.9, 18.5};
}

struct EnvelopeFit {
  ParabolicEnvelope envelope;
  std::vector<double> residuals;  // demand - D(T), same order as the input
};

namespace detail {

// Solves min ||A x - y|| and fails on a rank-deficient design.
inline Vector solve_least_squares(const Matrix& a, const Vector& y, const char* what) {
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < a.cols()) throw Error("physics", std::string("rank-deficient design in ") + what);
  return qr.solve(y);
}

}  // namespace detail

/// Per-segment ordinary least-squares quadratic fit split at t0. With
/// `continuous` set, the two segments are constrained to share D(t0).
inline EnvelopeFit fit_envelope(std::span<const double> temps, std::span<const double> demands, double t0_c,
                                bool continuous = false) {
  require(temps.size() == demands.size(), "physics", "temperature and demand lengths differ");
  std::vector<std::size_t> lo, hi;
  for (std::size_t i = 0; i < temps.size(); ++i) (temps[i] < t0_c ? lo : hi).push_back(i);
  if (lo.size() < 3 || hi.size() < 3) {
    throw Error("physics", "envelope fit needs at least 3 points on each side of the breakpoint",
                "below=" + std::to_string(lo.size()) + ",above=" + std::to_string(hi.size()));
  }

  ParabolicEnvelope env;
  env.t0_c = t0_c;
  if (!continuous) {
    auto fit_segment = [&](const std::vector<std::size_t>& idx, double& a, double& b, double& c, const char* name) {
      // centered at t0 for conditioning, converted back afterwards
      Matrix design(static_cast<Eigen::Index>(idx.size()), 3);
      Vector y(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const double u = temps[idx[k]] - t0_c;
        design(static_cast<Eigen::Index>(k), 0) = 1.0;
        design(static_cast<Eigen::Index>(k), 1) = u;
        design(static_cast<Eigen::Index>(k), 2) = u * u;
        y(static_cast<Eigen::Index>(k)) = demands[idx[k]];
      }
      Vector x = detail::solve_least_squares(design, y, name);
      a = x(2);
      b = x(1) - 2.0 * x(2) * t0_c;
      c = x(0) - x(1) * t0_c + x(2) * t0_c * t0_c;
    };
    fit_segment(lo, env.a1, env.b1, env.c1, "lower segment");
    fit_segment(hi, env.a2, env.b2, env.c2, "upper segment");
  } else {
    // parameters: shared value at t0, then (slope, curvature) per segment
    Matrix design = Matrix::Zero(static_cast<Eigen::Index>(temps.size()), 5);
    Vector y(static_cast<Eigen::Index>(temps.size()));
    for (std::size_t i = 0; i < temps.size(); ++i) {
      const double u = temps[i] - t0_c;
      const auto row = static_cast<Eigen::Index>(i);
      design(row, 0) = 1.0;
      const Eigen::Index off = temps[i] < t0_c ? 1 : 3;
      design(row, off) = u;
      design(row, off + 1) = u * u;
      y(row) = demands[i];
    }
    Vector x = detail::solve_least_squares(design, y, "continuous envelope");
    env.a1 = x(2);
    env.b1 = x(1) - 2.0 * x(2) * t0_c;
    env.c1 = x(0) - x(1) * t0_c + x(2) * t0_c * t0_c;
    env.a2 = x(4);
    env.b2 = x(3) - 2.0 * x(4) * t0_c;
    env.c2 = x(0) - x(3) * t0_c + x(4) * t0_c * t0_c;
  }
  env.validate();

  EnvelopeFit fit{env, {}};
  fit.residuals.resize(temps.size());
  for (std::size_t i = 0; i < temps.size(); ++i) fit.residuals[i] = demands[i] - env.demand(temps[i]);
  return fit;
}

/// Temperature-binned residual spread. epsilon(T) = 2 sigma(bin(T)).
struct ToleranceModel {
  std::vector<double> bin_edges_c;  // ascending, bins = edges - 1
  std::vector<double> sigma_mw;
  double sigma_floor_mw = 50.0;

  std::size_t bin_of(double t_c) const {
    const std::size_t bins = sigma_mw.size();
    if (t_c < bin_edges_c.front()) return 0;
    auto it = std::upper_bound(bin_edges_c.begin(), bin_edges_c.end(), t_c);
    std::size_t k = static_cast<std::size_t>(it - bin_edges_c.begin());
    return std::min(k == 0 ? 0 : k - 1, bins - 1);
  }

  double sigma(double t_c) const { return sigma_mw[bin_of(t_c)]; }
  double epsilon(double t_c) const { return 2.0 * sigma(t_c); }

  void validate() const {
    require(sigma_floor_mw > 0, "physics", "sigma floor must be positive");
    require(bin_edges_c.size() >= 2 && sigma_mw.size() + 1 == bin_edges_c.size(), "physics",
            "tolerance bins and edges are inconsistent");
    require(std::is_sorted(bin_edges_c.begin(), bin_edges_c.end()), "physics", "bin edges must be ascending");
    for (double s : sigma_mw) require(s >= sigma_floor_mw, "physics", "sigma below floor");
  }
};

/// Population std of residuals per temperature bin. Bins with fewer than
/// `min_count` points take the sigma of the nearest populated bin (lower bin
/// on ties); every sigma is clamped below by the floor.
inline ToleranceModel fit_tolerance(std::span<const double> temps, std::span<const double> residuals,
                                    double bin_width_c = 2.0, std::size_t min_count = 30,
                                    double sigma_floor_mw = 50.0) {
  require(!temps.empty(), "physics", "tolerance fit needs at least one residual");
  require(temps.size() == residuals.size(), "physics", "temperature and residual lengths differ");
  require(bin_width_c > 0, "physics", "bin width must be positive");
  const auto [mn, mx] = std::minmax_element(temps.begin(), temps.end());
  const double lo = std::floor(*mn / bin_width_c) * bin_width_c;
  double hi = std::ceil(*mx / bin_width_c) * bin_width_c;
  if (hi <= *mx) hi += bin_width_c;
  const auto bins = static_cast<std::size_t>(std::llround((hi - lo) / bin_width_c));

  ToleranceModel tol;
  tol.sigma_floor_mw = sigma_floor_mw;
  for (std::size_t k = 0; k <= bins; ++k) tol.bin_edges_c.push_back(lo + static_cast<double>(k) * bin_width_c);
  tol.sigma_mw.assign(bins, 0.0);

  std::vector<double> sum(bins, 0.0), sum_sq(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < temps.size(); ++i) {
    const std::size_t b = tol.bin_of(temps[i]);
    sum[b] += residuals[i];
    ++count[b];
  }
  for (std::size_t i = 0; i < temps.size(); ++i) {
    const std::size_t b = tol.bin_of(temps[i]);
    const double d = residuals[i] - sum[b] / static_cast<double>(count[b]);
    sum_sq[b] += d * d;
  }

  std::vector<std::size_t> populated;
  for (std::size_t b = 0; b < bins; ++b)
    if (count[b] >= min_count) populated.push_back(b);

  double pooled = 0.0;
  if (populated.empty()) {
    double m = 0.0;
    for (double r : residuals) m += r;
    m /= static_cast<double>(residuals.size());
    for (double r : residuals) pooled += (r - m) * (r - m);
    pooled = std::sqrt(pooled / static_cast<double>(residuals.size()));
  }
  for (std::size_t b = 0; b < bins; ++b) {
    double s = pooled;
    if (!populated.empty()) {
      std::size_t best = populated.front();
      for (std::size_t p : populated) {
        auto dist = [&](std::size_t q) { return q > b ? q - b : b - q; };
        if (dist(p) < dist(best)) best = p;
      }
      s = std::sqrt(sum_sq[best] / static_cast<double>(count[best]));
    }
    tol.sigma_mw[b] = std::max(s, sigma_floor_mw);
  }
  return tol;
}

struct PenaltyResult {
  double loss = 0.0;
  std::vector<double> grad;
  std::size_t terms = 0;      // samples (parabolic) or pairs (ramp) averaged over
  std::size_t violations = 0;
};

/// mean_i max(0, |pred_i - D(T_i)| - eps(T_i))^2 and its exact gradient.
inline PenaltyResult parabolic_penalty(std::span<const double> pred_mw, std::span<const double> temp_c,
                                       const ParabolicEnvelope& env, const ToleranceModel& tol) {
  require(pred_mw.size() == temp_c.size(), "physics", "prediction and temperature lengths differ");
  PenaltyResult res;
  const std::size_t n = pred_mw.size();
  res.grad.assign(n, 0.0);
  res.terms = n;
  if (n == 0) return res;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = pred_mw[i] - env.demand(temp_c[i]);
    const double excess = std::abs(dev) - tol.epsilon(temp_c[i]);
    if (excess > 0.0) {
      res.loss += excess * excess;
      res.grad[i] = 2.0 * (dev > 0 ? 1.0 : -1.0) * excess * inv_n;
      ++res.violations;
    }
  }
  res.loss *= inv_n;
  return res;
}

using IndexPair = std::pair<std::size_t, std::size_t>;

/// mean over pairs (prev, cur) of max(0, |pred_cur - pred_prev| - delta_max)^2.
inline PenaltyResult ramp_penalty(std::span<const double> pred_mw, std::span<const IndexPair> pairs,
                                  double delta_max_mw) {
  require(delta_max_mw > 0, "physics", "delta_max must be positive");
  PenaltyResult res;
  res.grad.assign(pred_mw.size(), 0.0);
  res.terms = pairs.size();
  if (pairs.empty()) return res;
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (const auto& [prev, cur] : pairs) {
    require(prev < pred_mw.size() && cur < pred_mw.size(), "physics", "ramp pair index out of range");
    const double diff = pred_mw[cur] - pred_mw[prev];
    const double excess = std::abs(diff) - delta_max_mw;
    if (excess > 0.0) {
      res.loss += excess * excess;
      const double g = 2.0 * (diff > 0 ? 1.0 : -1.0) * excess * inv_n;
      res.grad[cur] += g;
      res.grad[prev] -= g;
      ++res.violations;
    }
  }
  res.loss *= inv_n;
  return res;
}

/// Ramp penalty over a chronologically consecutive prediction series. Fewer
/// than two predictions give zero loss with `terms == 0`.
inline PenaltyResult ramp_penalty(std::span<const double> pred_mw, double delta_max_mw) {
  std::vector<IndexPair> pairs;
  for (std::size_t i = 1; i < pred_mw.size(); ++i) pairs.emplace_back(i - 1, i);
  return ramp_penalty(pred_mw, pairs, delta_max_mw);
}

struct PhysicsLossConfig {
  double lambda1 = 0.1;
  double lambda2 = 0.05;
  double delta_max_mw = 4800.0;
  double mse_scale = 1.0;  // 1 / sigma_y^2 puts the MSE term in standardized units

  void validate() const {
    require(lambda1 >= 0 && lambda2 >= 0, "physics", "lambda weights must be non-negative");
    require(mse_scale > 0, "physics", "mse scale must be positive");
    require(delta_max_mw > 0, "physics", "delta_max must be positive");
  }
};

struct CompositeLoss {
  double total = 0.0;
  double mse = 0.0;
  double parabolic = 0.0;
  double ramp = 0.0;
  std::vector<double> grad;  // d total / d pred_mw
};

/// L = s * MSE + lambda1 * L_parabolic + lambda2 * L_ramp. Penalties are in
/// MW^2; `mse` is reported after scaling by s = cfg.mse_scale.
inline CompositeLoss composite_loss(std::span<const double> pred_mw, std::span<const double> target_mw,
                                    std::span<const double> temp_c, std::span<const IndexPair> pairs,
                                    const ParabolicEnvelope& env, const ToleranceModel& tol,
                                    const PhysicsLossConfig& cfg) {
  require(pred_mw.size() == target_mw.size(), "physics", "prediction and target lengths differ");
  const std::size_t n = pred_mw.size();
  CompositeLoss out;
  out.grad.assign(n, 0.0);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred_mw[i] - target_mw[i];
    out.mse += e * e;
    out.grad[i] = 2.0 * cfg.mse_scale * e * inv_n;
  }
  out.mse *= inv_n * cfg.mse_scale;
  if (cfg.lambda1 > 0) {
    auto par = parabolic_penalty(pred_mw, temp_c, env, tol);
    out.parabolic = par.loss;
    for (std::size_t i = 0; i < n; ++i) out.grad[i] += cfg.lambda1 * par.grad[i];
  }
  if (cfg.lambda2 > 0) {
    auto ramp = ramp_penalty(pred_mw, pairs, cfg.delta_max_mw);
    out.ramp = ramp.loss;
    for (std::size_t i = 0; i < n; ++i) out.grad[i] += cfg.lambda2 * ramp.grad[i];
  }
  out.total = out.mse + cfg.lambda1 * out.parabolic + cfg.lambda2 * out.ramp;
  return out;
}

/// Percentile by linear interpolation between order statistics:
/// rank = p/100 * (n-1), value = x[floor] + frac * (x[floor+1] - x[floor]).
inline double percentile_linear(std::vector<double> values, double p) {
  require(!values.empty(), "physics", "percentile of an empty set");
  require(p >= 0 && p <= 100, "physics", "percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Percentile of |y_i - y_{i-1}| over a consecutive hourly series.
inline double estimate_delta_max(std::span<const double> train_demand, double percentile = 99.5) {
  require(train_demand.size() >= 2, "physics", "Delta_max needs at least two observations");
  std::vector<double> diffs;
  diffs.reserve(train_demand.size() - 1);
  for (std::size_t i = 1; i < train_demand.size(); ++i) diffs.push_back(std::abs(train_demand[i] - train_demand[i - 1]));
  return percentile_linear(std::move(diffs), percentile);
}

inline void to_json(nlohmann::json& j, const ParabolicEnvelope& e) {
  j = {{"a1", e.a1}, {"b1", e.b1}, {"c1", e.c1}, {"a2", e.a2}, {"b2", e.b2}, {"c2", e.c2}, {"t0_c", e.t0_c}};
}
inline void from_json(const nlohmann::json& j, ParabolicEnvelope& e) {
  e.a1 = j.at("a1"); e.b1 = j.at("b1"); e.c1 = j.at("c1");
  e.a2 = j.at("a2"); e.b2 = j.at("b2"); e.c2 = j.at("c2");
  e.t0_c = j.at("t0_c");
}
inline void to_json(nlohmann::json& j, const ToleranceModel& t) {
  j = {{"bin_edges_c", t.bin_edges_c}, {"sigma_mw", t.sigma_mw}, {"sigma_floor_mw", t.sigma_floor_mw}};
}
inline void from_json(const nlohmann::json& j, ToleranceModel& t) {
  t.bin_edges_c = j.at("bin_edges_c").get<std::vector<double>>();
  t.sigma_mw = j.at("sigma_mw").get<std::vector<double>>();
  t.sigma_floor_mw = j.at("sigma_floor_mw");
  t.validate();
}

}  // namespace pilf
