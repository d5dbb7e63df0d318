#pragma once

// Slow reference implementations used as oracles, plus small test utilities.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "pilf/attribution.hpp"
#include "pilf/extreme_events.hpp"
#include "pilf/physics.hpp"
#include "pilf/random.hpp"

namespace pilf::oracle {

/// Hampel flags recomputed from scratch at every point.
inline std::vector<std::uint8_t> naive_hampel(const std::vector<double>& y, const HampelConfig& cfg) {
  const std::size_t n = y.size(), h = cfg.half_width();
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  };
  std::vector<std::uint8_t> flags(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(y.begin() + static_cast<std::ptrdiff_t>(i > h ? i - h : 0),
                          y.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + h + 1)));
    const double med = median(w);
    for (double& v : w) v = std::abs(v - med);
    const double mad = std::max(median(w), cfg.mad_floor);
    flags[i] = std::abs(y[i] - med) > cfg.k_mad * mad;
  }
  return flags;
}

/// Kendall tau by sign products over all item pairs, from positions.
inline double brute_kendall(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const std::size_t n = a.size();
  std::vector<double> pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[a[i]] = static_cast<double>(i);
    pb[b[i]] = static_cast<double>(i);
  }
  double s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i < j) s += (pa[i] < pa[j] ? 1 : -1) * (pb[i] < pb[j] ? 1 : -1);
  return s / (static_cast<double>(n * (n - 1)) / 2.0);
}

/// Interventional value v(S): mean over background of f(x on S, b elsewhere).
inline double coalition_value(const Predictor& f, const Matrix& x, const BackgroundSet& bg, std::uint32_t s) {
  Matrix batch(static_cast<Eigen::Index>(bg.size()) * x.rows(), x.cols());
  for (std::size_t k = 0; k < bg.size(); ++k) {
    Matrix w = bg.window(k);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (s >> j & 1u) w.col(j) = x.col(j);
    batch.middleRows(static_cast<Eigen::Index>(k) * x.rows(), x.rows()) = w;
  }
  const auto out = f(batch);
  return std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
}

/// Shapley values as the average marginal contribution over all F! orders.
inline std::vector<double> brute_shapley(const Predictor& f, const Matrix& x, const BackgroundSet& bg) {
  const int players = static_cast<int>(x.cols());
  std::vector<int> order(static_cast<std::size_t>(players));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(static_cast<std::size_t>(players), 0.0);
  double count = 0;
  do {
    std::uint32_t s = 0;
    double prev = coalition_value(f, x, bg, s);
    for (int j : order) {
      s |= 1u << j;
      const double cur = coalition_value(f, x, bg, s);
      phi[static_cast<std::size_t>(j)] += cur - prev;
      prev = cur;
    }
    count += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& v : phi) v /= count;
  return phi;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("pilf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

/// Temperatures uniform over [-10, 40] C and demand from `env` plus Gaussian
/// noise of `noise_mw`.
struct EnvelopeSample {
  std::vector<double> temp, demand;
};

inline EnvelopeSample envelope_sample(const ParabolicEnvelope& env, std::size_t n, double noise_mw, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0x656e76);
  EnvelopeSample s;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = uniform(rng, -10.0, 40.0);
    s.temp.push_back(t);
    s.demand.push_back(env.demand(t) + noise_mw * standard_normal(rng));
  }
  return s;
}

/// Largest |D_fit(T) - D_true(T)| / D_true(T) on a 0.01 C grid over [lo, hi].
inline double max_relative_curve_error(const ParabolicEnvelope& fit, const ParabolicEnvelope& truth, double lo = -10.0,
                                       double hi = 40.0) {
  double worst = 0;
  for (int k = 0; k <= static_cast<int>(std::lround((hi - lo) * 100)); ++k) {
    const double t = lo + 0.01 * k;
    worst = std::max(worst, std::abs(fit.demand(t) - truth.demand(t)) / std::abs(truth.demand(t)));
  }
  return worst;
}

}  // namespace pilf::oracle
