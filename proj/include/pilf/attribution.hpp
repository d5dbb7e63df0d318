#pragma once

// Shapley attribution over feature-column players.
//
// A player is one input column masked jointly across all timesteps. The value
// of a coalition S for an explained window x is the interventional
// expectation over a background set:
//   v(S) = (1/B) sum_b f(x on S, b elsewhere).
// Because the Shapley value is linear in v, it also equals the mean over
// background windows of the per-window Shapley values phi^(b). Those
// per-window values are kept so that any reweighting of the background
// (bootstrap resampling) is exact without new model evaluations.
//
// Reduction order is fixed: coalition values are averaged over background
// windows in index order, and Shapley sums run over coalition masks in
// increasing order (exact) or permutations in draw order (sampled).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pilf/csv.hpp"
#include "pilf/ensemble.hpp"
#include "pilf/error.hpp"
#include "pilf/ingest.hpp"
#include "pilf/matrix.hpp"
#include "pilf/physics.hpp"
#include "pilf/random.hpp"

namespace pilf {

/// Batch model: stacked windows (n*steps x F) -> n outputs.
using Predictor = std::function<std::vector<double>(const Matrix&)>;

/// Background windows (steps x F each) stacked vertically.
struct BackgroundSet {
  Matrix windows;
  Eigen::Index steps = static_cast<Eigen::Index>(kWindowSteps);
  std::vector<std::size_t> source_index;  // row in the training window set
  std::vector<int> stratum;               // season * 10 + temperature decile
  std::uint64_t seed = 0;

  std::size_t size() const { return steps == 0 ? 0 : static_cast<std::size_t>(windows.rows() / steps); }
  auto window(std::size_t k) const { return windows.middleRows(static_cast<Eigen::Index>(k) * steps, steps); }
};

inline BackgroundSet background_from_windows(const Matrix& stacked, Eigen::Index steps) {
  require(steps > 0 && stacked.rows() % steps == 0, "attribution", "background rows are not a multiple of steps");
  BackgroundSet bg;
  bg.windows = stacked;
  bg.steps = steps;
  for (std::size_t k = 0; k < bg.size(); ++k) {
    bg.source_index.push_back(k);
    bg.stratum.push_back(0);
  }
  return bg;
}

/// Meteorological season of a month: 0 winter (DJF), 1 spring, 2 summer, 3 autumn.
inline int season_of_month(int month) { return (month % 12) / 3; }

/// Strata (season x target-temperature decile) of every training window.
inline std::vector<int> window_strata(const WindowSet& train) {
  std::vector<double> cuts;
  for (int d = 1; d <= 9; ++d) cuts.push_back(percentile_linear(train.target_air_temp_c, 10.0 * d));
  std::vector<int> out(train.size());
  for (std::size_t m = 0; m < train.size(); ++m) {
    const int season = season_of_month(month_of(date_of(train.target_timestamps[m])));
    const int decile = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), train.target_air_temp_c[m]) - cuts.begin());
    out[m] = season * 10 + decile;
  }
  return out;
}

/// Proportional allocation of `total` draws across strata with
/// largest-remainder rounding (ties go to the lower stratum id).
inline std::map<int, std::size_t> allocate_strata(const std::map<int, std::size_t>& sizes, std::size_t total) {
  std::size_t population = 0;
  for (const auto& [_, n] : sizes) population += n;
  require(total <= population, "attribution", "background size exceeds the training set",
          std::to_string(total) + " > " + std::to_string(population));
  std::map<int, std::size_t> alloc;
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (const auto& [s, n] : sizes) {
    const double quota = static_cast<double>(total) * static_cast<double>(n) / static_cast<double>(population);
    const auto base = static_cast<std::size_t>(std::floor(quota));
    alloc[s] = base;
    assigned += base;
    remainders.emplace_back(quota - static_cast<double>(base), s);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++alloc[remainders[k].second];
  return alloc;
}

/// Stratified sample of `count` training windows, without replacement within
/// each stratum; deterministic for a fixed seed.
inline BackgroundSet stratified_background(const WindowSet& train, std::size_t count, std::uint64_t seed) {
  require(train.size() > 0, "attribution", "training set is empty");
  require(count >= 1, "attribution", "background size must be positive");
  require(count <= train.size(), "attribution", "background size exceeds the training set",
          std::to_string(count) + " > " + std::to_string(train.size()));
  const std::vector<int> strata = window_strata(train);
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t m = 0; m < strata.size(); ++m) members[strata[m]].push_back(m);
  std::map<int, std::size_t> sizes;
  for (const auto& [s, v] : members) sizes[s] = v.size();
  const auto alloc = allocate_strata(sizes, count);

  Rng rng = derive_rng(seed, 0x6267);
  BackgroundSet bg;
  bg.seed = seed;
  std::vector<std::size_t> chosen;
  for (auto& [s, idx] : members) {
    const std::size_t take = alloc.at(s);
    for (std::size_t k = 0; k < take; ++k) {  // partial Fisher-Yates
      const std::size_t j = k + static_cast<std::size_t>(uniform_index(rng, idx.size() - k));
      std::swap(idx[k], idx[j]);
      chosen.push_back(idx[k]);
      bg.stratum.push_back(s);
    }
  }
  bg.source_index = chosen;
  bg.windows.resize(static_cast<Eigen::Index>(chosen.size() * kWindowSteps), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t k = 0; k < chosen.size(); ++k)
    bg.windows.middleRows(static_cast<Eigen::Index>(k * kWindowSteps), kWindowSteps) = train.window(chosen[k]);
  return bg;
}

/// Attribution of one explained window.
struct ShapleyResult {
  std::vector<double> phi;   // per player
  double base_value = 0.0;   // mean model output over the background
  double prediction = 0.0;   // f(x)
  Matrix per_background;     // B x F: Shapley values against each single background window
  std::size_t evaluations = 0;
};

namespace detail {

// Shapley kernel |S|! (F-|S|-1)! / F! for every coalition size.
inline std::vector<double> shapley_kernel(int players) {
  std::vector<double> w(static_cast<std::size_t>(players));
  for (int s = 0; s < players; ++s) {
    w[static_cast<std::size_t>(s)] = std::exp(std::lgamma(s + 1.0) + std::lgamma(players - s + 0.0) - std::lgamma(players + 1.0));
  }
  return w;
}

inline void write_composite(Matrix& dst, Eigen::Index row0, const Matrix& x, const Eigen::Ref<const Matrix>& b,
                            std::uint32_t mask) {
  const Eigen::Index steps = x.rows();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (mask >> j & 1u) dst.block(row0, j, steps, 1) = x.col(j);
    else dst.block(row0, j, steps, 1) = b.col(j);
  }
}

// Values f(composite(x, b_k, mask)) for every background window k and every
// listed mask; result is B x masks.
inline Matrix coalition_values(const Predictor& model, const Matrix& x, const BackgroundSet& bg,
                               const std::vector<std::uint32_t>& masks, std::size_t& evaluations,
                               std::size_t chunk = 2048) {
  const Eigen::Index steps = x.rows();
  const std::size_t nb = bg.size();
  Matrix values(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(masks.size()));
  Matrix buf;
  for (std::size_t k = 0; k < nb; ++k) {
    const Matrix b = bg.window(k);
    for (std::size_t start = 0; start < masks.size(); start += chunk) {
      const std::size_t len = std::min(chunk, masks.size() - start);
      buf.resize(static_cast<Eigen::Index>(len) * steps, x.cols());
      for (std::size_t i = 0; i < len; ++i) write_composite(buf, static_cast<Eigen::Index>(i) * steps, x, b, masks[start + i]);
      const std::vector<double> out = model(buf);
      require(out.size() == len, "attribution", "model returned the wrong number of outputs");
      for (std::size_t i = 0; i < len; ++i)
        values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(start + i)) = out[i];
      evaluations += len;
    }
  }
  return values;
}

inline void finish(ShapleyResult& r) {
  const auto players = static_cast<std::size_t>(r.per_background.cols());
  const auto nb = static_cast<double>(r.per_background.rows());
  r.phi.assign(players, 0.0);
  for (Eigen::Index k = 0; k < r.per_background.rows(); ++k)
    for (std::size_t j = 0; j < players; ++j) r.phi[j] += r.per_background(k, static_cast<Eigen::Index>(j));
  for (double& p : r.phi) p /= nb;
}

}  // namespace detail

/// Exact Shapley values by enumerating all 2^F coalitions of the F columns of
/// x against every background window.
inline ShapleyResult shapley_exact(const Predictor& model, const Matrix& x, const BackgroundSet& background) {
  const int players = static_cast<int>(x.cols());
  require(players >= 1 && players <= 20, "attribution", "exact enumeration supports 1..20 players");
  require(background.size() >= 1, "attribution", "background set is empty");
  require(background.steps == x.rows() && background.windows.cols() == x.cols(), "attribution",
          "background window shape differs from the explained window");
  const std::uint32_t full = (1u << players) - 1u;
  std::vector<std::uint32_t> masks(static_cast<std::size_t>(full) + 1);
  std::iota(masks.begin(), masks.end(), 0u);

  ShapleyResult r;
  const Matrix values = detail::coalition_values(model, x, background, masks, r.evaluations);
  const auto kernel = detail::shapley_kernel(players);
  const std::size_t nb = background.size();
  r.per_background = Matrix::Zero(static_cast<Eigen::Index>(nb), players);
  for (std::size_t k = 0; k < nb; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    for (std::uint32_t s = 0; s <= full; ++s) {
      const double w = kernel[static_cast<std::size_t>(std::popcount(s))];
      for (int j = 0; j < players; ++j) {
        if (s >> j & 1u) continue;
        r.per_background(kk, j) += w * (values(kk, static_cast<Eigen::Index>(s | (1u << j))) - values(kk, static_cast<Eigen::Index>(s)));
      }
    }
    r.base_value += values(kk, 0);
    r.prediction = values(kk, static_cast<Eigen::Index>(full));
  }
  r.base_value /= static_cast<double>(nb);
  detail::finish(r);
  return r;
}

/// Permutation-sampling estimate of the same Shapley values. Each permutation
/// walks the coalition chain from empty to full, so every permutation's
/// contributions sum to f(x) - base exactly. Deterministic for a fixed seed.
inline ShapleyResult shapley_sampled(const Predictor& model, const Matrix& x, const BackgroundSet& background,
                                     std::size_t n_permutations, std::uint64_t seed) {
  const int players = static_cast<int>(x.cols());
  require(n_permutations >= 1, "attribution", "need at least one permutation");
  require(players >= 1 && players <= 31, "attribution", "unsupported player count");
  require(background.size() >= 1, "attribution", "background set is empty");
  require(background.steps == x.rows() && background.windows.cols() == x.cols(), "attribution",
          "background window shape differs from the explained window");
  Rng rng = derive_rng(seed, 0x7065726d);
  std::vector<std::vector<int>> perms(n_permutations);
  std::vector<std::uint32_t> masks;  // chain masks, (players + 1) per permutation
  masks.reserve(n_permutations * static_cast<std::size_t>(players + 1));
  for (auto& p : perms) {
    p.resize(static_cast<std::size_t>(players));
    std::iota(p.begin(), p.end(), 0);
    shuffle(p.begin(), p.end(), rng);
    std::uint32_t s = 0;
    masks.push_back(s);
    for (int j : p) masks.push_back(s |= (1u << j));
  }
  // evaluate each distinct coalition once
  std::vector<std::uint32_t> distinct = masks;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::map<std::uint32_t, Eigen::Index> column;
  for (std::size_t i = 0; i < distinct.size(); ++i) column[distinct[i]] = static_cast<Eigen::Index>(i);

  ShapleyResult r;
  const Matrix values = detail::coalition_values(model, x, background, distinct, r.evaluations);
  const std::size_t nb = background.size();
  const auto full = static_cast<std::uint32_t>((1ull << players) - 1ull);
  r.per_background = Matrix::Zero(static_cast<Eigen::Index>(nb), players);
  for (std::size_t k = 0; k < nb; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    for (std::size_t p = 0; p < n_permutations; ++p) {
      const std::uint32_t* chain = masks.data() + p * static_cast<std::size_t>(players + 1);
      for (int step = 0; step < players; ++step) {
        const int j = perms[p][static_cast<std::size_t>(step)];
        r.per_background(kk, j) += values(kk, column.at(chain[step + 1])) - values(kk, column.at(chain[step]));
      }
    }
    r.base_value += values(kk, column.at(0));
    r.prediction = values(kk, column.at(full));
  }
  r.per_background /= static_cast<double>(n_permutations);
  r.base_value /= static_cast<double>(nb);
  detail::finish(r);
  return r;
}

/// phi_ens = w_cnn * phi_cnn + w_t * phi_t, elementwise.
inline Matrix ensemble_attribution(const Matrix& phi_cnn, const Matrix& phi_t, const EnsembleWeights& w) {
  require(phi_cnn.rows() == phi_t.rows() && phi_cnn.cols() == phi_t.cols(), "attribution",
          "branch attribution shapes differ");
  return w.w_cnn * phi_cnn + w.w_t * phi_t;
}

/// Per-sample, per-feature attributions of one model.
struct AttributionMatrix {
  std::string model;
  Matrix phi;                        // M x F
  std::vector<double> base_value;    // per sample (constant for a fixed background)
  std::vector<double> prediction;    // per sample
  std::vector<Matrix> per_background;  // per sample, B x F (may be empty)
};

struct ImportanceRanking {
  std::string regime = "all";
  std::vector<double> importance;  // mean |phi| per feature (MW)
  std::vector<std::size_t> rank;   // feature indices, most important first
};

/// Ranking by descending importance, ties broken by feature index.
inline std::vector<std::size_t> rank_by_importance(const std::vector<double>& importance) {
  std::vector<std::size_t> rank(importance.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  return rank;
}

/// I_j = mean over the selected rows of |phi_ij|.
inline ImportanceRanking global_importance(const Matrix& phi, const std::vector<std::size_t>& rows,
                                           const std::string& regime = "all") {
  require(!rows.empty(), "attribution", "no samples in regime '" + regime + "'", regime);
  ImportanceRanking r;
  r.regime = regime;
  r.importance.assign(static_cast<std::size_t>(phi.cols()), 0.0);
  for (std::size_t i : rows) {
    require(i < static_cast<std::size_t>(phi.rows()), "attribution", "sample index out of range");
    for (Eigen::Index j = 0; j < phi.cols(); ++j) r.importance[static_cast<std::size_t>(j)] += std::abs(phi(static_cast<Eigen::Index>(i), j));
  }
  for (double& v : r.importance) v /= static_cast<double>(rows.size());
  r.rank = rank_by_importance(r.importance);
  return r;
}

inline ImportanceRanking global_importance(const Matrix& phi, const std::string& regime = "all") {
  std::vector<std::size_t> rows(static_cast<std::size_t>(phi.rows()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return global_importance(phi, rows, regime);
}

/// (concordant - discordant) / C(n, 2) between two orderings of the same items.
inline double kendall_tau(const std::vector<std::size_t>& rank_a, const std::vector<std::size_t>& rank_b) {
  require(rank_a.size() == rank_b.size(), "attribution", "rankings have different lengths");
  const std::size_t n = rank_a.size();
  require(n >= 2, "attribution", "Kendall tau needs at least two items");
  std::vector<std::size_t> pos_a(n, n), pos_b(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    require(rank_a[i] < n && rank_b[i] < n && pos_a[rank_a[i]] == n && pos_b[rank_b[i]] == n, "attribution",
            "rankings must be permutations of the same items");
    pos_a[rank_a[i]] = i;
    pos_b[rank_b[i]] = i;
  }
  long long score = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool a_order = pos_a[i] < pos_a[j];
      const bool b_order = pos_b[i] < pos_b[j];
      score += a_order == b_order ? 1 : -1;
    }
  }
  return static_cast<double>(score) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

struct StabilityReport {
  std::vector<std::size_t> reference_rank;
  std::vector<double> tau;  // one per bootstrap resample
  double mean_tau = 0.0;
};

/// Bootstrap of the background set: each resample draws B background windows
/// with replacement; the per-sample Shapley values for the resample are the
/// count-weighted mean of the cached per-background values. The ranking of
/// every resample is compared with the full-background reference ranking.
inline StabilityReport bootstrap_stability(const std::vector<Matrix>& per_background, std::size_t n_boot,
                                           std::uint64_t seed) {
  require(n_boot >= 2, "attribution", "bootstrap needs at least two resamples");
  require(!per_background.empty(), "attribution", "no explained samples");
  const Eigen::Index nb = per_background.front().rows();
  const Eigen::Index players = per_background.front().cols();
  for (const auto& m : per_background)
    require(m.rows() == nb && m.cols() == players, "attribution", "per-background matrices differ in shape");

  auto ranking_for = [&](const Vector& weights) {
    Matrix phi(static_cast<Eigen::Index>(per_background.size()), players);
    for (std::size_t i = 0; i < per_background.size(); ++i)
      phi.row(static_cast<Eigen::Index>(i)) = weights.transpose() * per_background[i];
    return global_importance(phi).rank;
  };

  StabilityReport rep;
  rep.reference_rank = ranking_for(Vector::Constant(nb, 1.0 / static_cast<double>(nb)));
  Rng rng = derive_rng(seed, 0x626f6f74);
  for (std::size_t r = 0; r < n_boot; ++r) {
    Vector w = Vector::Zero(nb);
    for (Eigen::Index k = 0; k < nb; ++k) w(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(nb)))) += 1.0;
    w /= static_cast<double>(nb);
    rep.tau.push_back(kendall_tau(rep.reference_rank, ranking_for(w)));
  }
  rep.mean_tau = std::accumulate(rep.tau.begin(), rep.tau.end(), 0.0) / static_cast<double>(rep.tau.size());
  return rep;
}

struct RegimeComparisonRow {
  std::string feature;
  std::size_t rank_normal = 0;   // 1-based
  std::size_t rank_extreme = 0;  // 1-based
  double ratio = 1.0;            // I_extreme / I_normal
};

inline std::vector<RegimeComparisonRow> regime_comparison(const ImportanceRanking& extreme,
                                                          const ImportanceRanking& normal,
                                                          const std::vector<std::string>& names) {
  const std::size_t f = names.size();
  require(extreme.importance.size() == f && normal.importance.size() == f, "attribution",
          "importance vectors do not match the feature list");
  std::vector<std::size_t> pos_e(f), pos_n(f);
  for (std::size_t i = 0; i < f; ++i) {
    pos_e[extreme.rank[i]] = i + 1;
    pos_n[normal.rank[i]] = i + 1;
  }
  std::vector<RegimeComparisonRow> rows;
  for (std::size_t j = 0; j < f; ++j) {
    const double ie = extreme.importance[j], in = normal.importance[j];
    double ratio = 1.0;
    if (in > 0) ratio = ie / in;
    else if (ie > 0) ratio = std::numeric_limits<double>::infinity();
    rows.push_back({names[j], pos_n[j], pos_e[j], ratio});
  }
  return rows;
}

inline std::string regime_comparison_csv(const std::vector<RegimeComparisonRow>& rows) {
  std::ostringstream out;
  out << "feature,rank_normal,rank_extreme,ratio\n";
  for (const auto& r : rows)
    out << r.feature << ',' << r.rank_normal << ',' << r.rank_extreme << ',' << csv::format_double(r.ratio) << '\n';
  return out.str();
}

inline nlohmann::json regime_comparison_json(const std::vector<RegimeComparisonRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"feature", r.feature},
                   {"rank_normal", r.rank_normal},
                   {"rank_extreme", r.rank_extreme},
                   {"ratio", std::isfinite(r.ratio) ? nlohmann::json(r.ratio) : nlohmann::json(nullptr)}});
  }
  return arr;
}

/// One row per (sample, model): phi columns, base value, prediction.
inline std::string attribution_csv(const std::vector<AttributionMatrix>& models, const std::vector<UtcHour>& targets,
                                   const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "sample,target_utc,model";
  for (const auto& n : names) out << ",phi_" << n;
  out << ",base_value,prediction\n";
  for (const auto& m : models) {
    require(static_cast<std::size_t>(m.phi.rows()) == targets.size() && static_cast<std::size_t>(m.phi.cols()) == names.size(),
            "attribution", "attribution matrix does not match the sample list", m.model);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      out << i << ',' << format_utc_hour(targets[i]) << ',' << m.model;
      for (Eigen::Index j = 0; j < m.phi.cols(); ++j) out << ',' << csv::format_double(m.phi(static_cast<Eigen::Index>(i), j));
      out << ',' << csv::format_double(m.base_value[i]) << ',' << csv::format_double(m.prediction[i]) << '\n';
    }
  }
  return out.str();
}

inline nlohmann::json importance_json(const ImportanceRanking& r, const std::vector<std::string>& names) {
  nlohmann::json imp = nlohmann::json::object();
  for (std::size_t j = 0; j < names.size(); ++j) imp[names[j]] = r.importance[j];
  nlohmann::json rank = nlohmann::json::array();
  for (std::size_t j : r.rank) rank.push_back(names[j]);
  return {{"regime", r.regime}, {"importance_mw", imp}, {"rank", rank}};
}

inline std::vector<std::string> feature_name_list() { return {kFeatureNames.begin(), kFeatureNames.end()}; }

}  // namespace pilf
