#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <json.hpp>

#include "pilf/error.hpp"

namespace pilf {

struct EnsembleWeights {
  double w_cnn = 0.5;
  double w_t = 0.5;
};

/// Closed-form two-member simplex least squares:
///   w* = <y - p_t, p_c - p_t> / ||p_c - p_t||^2, clamped to [0, 1].
/// Identical member predictions make the problem degenerate and throw; the
/// caller decides whether to fall back to (0.5, 0.5).
inline EnsembleWeights fit_weights(std::span<const double> y, std::span<const double> pred_cnn,
                                   std::span<const double> pred_t) {
  require(y.size() == pred_cnn.size() && y.size() == pred_t.size(), "ensemble", "length mismatch");
  require(y.size() >= 2, "ensemble", "need at least two validation points");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = pred_cnn[i] - pred_t[i];
    num += (y[i] - pred_t[i]) * d;
    den += d * d;
  }
  if (!(den > 0.0)) throw Error("ensemble", "degenerate ensemble: member predictions are identical");
  const double w = std::clamp(num / den, 0.0, 1.0);
  return {w, 1.0 - w};
}

inline std::vector<double> predict_ensemble(const EnsembleWeights& w, std::span<const double> pred_cnn,
                                            std::span<const double> pred_t) {
  require(pred_cnn.size() == pred_t.size(), "ensemble", "length mismatch");
  std::vector<double> out(pred_cnn.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.w_cnn * pred_cnn[i] + w.w_t * pred_t[i];
  return out;
}

inline double mean_squared_error(std::span<const double> y, std::span<const double> yhat) {
  require(y.size() == yhat.size() && !y.empty(), "ensemble", "MSE needs equal non-empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

inline void to_json(nlohmann::json& j, const EnsembleWeights& w) { j = {{"w_cnn", w.w_cnn}, {"w_t", w.w_t}}; }
inline void from_json(const nlohmann::json& j, EnsembleWeights& w) {
  w.w_cnn = j.at("w_cnn");
  w.w_t = j.at("w_t");
  require(w.w_cnn >= 0 && w.w_t >= 0 && std::abs(w.w_cnn + w.w_t - 1.0) <= 1e-12, "ensemble",
          "weights must be non-negative and sum to one");
}

}  // namespace pilf
