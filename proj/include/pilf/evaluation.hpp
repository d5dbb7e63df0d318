#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pilf/csv.hpp"
#include "pilf/error.hpp"
#include "pilf/ingest.hpp"

namespace pilf {

struct MetricReport {
  std::string model;
  std::string regime = "all";
  std::size_t n = 0;
  double mae_mw = 0;
  double rmse_mw = 0;
  std::optional<double> mape_pct;  // absent when some y_i == 0
  std::optional<double> accuracy_pct;

  bool empty() const { return n == 0; }
};

/// MAE, RMSE and MAPE (percent). A zero observation leaves MAPE undefined;
/// use `compute_metrics` to turn that into an error.
inline MetricReport compute_metrics_partial(std::span<const double> y, std::span<const double> yhat) {
  require(y.size() == yhat.size(), "evaluation", "observation and prediction lengths differ");
  require(!y.empty(), "evaluation", "metrics need at least one observation");
  MetricReport r;
  r.n = y.size();
  double abs_sum = 0, sq_sum = 0, pct_sum = 0;
  bool mape_ok = true;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (y[i] == 0.0) mape_ok = false;
    else pct_sum += std::abs(e / y[i]);
  }
  const double n = static_cast<double>(y.size());
  r.mae_mw = abs_sum / n;
  r.rmse_mw = std::sqrt(sq_sum / n);
  if (mape_ok) {
    r.mape_pct = 100.0 * pct_sum / n;
    r.accuracy_pct = 100.0 - *r.mape_pct;
  }
  return r;
}

inline MetricReport compute_metrics(std::span<const double> y, std::span<const double> yhat) {
  MetricReport r = compute_metrics_partial(y, yhat);
  if (!r.mape_pct) throw Error("evaluation", "MAPE undefined: an observation equals zero");
  return r;
}

struct RegimeReports {
  MetricReport all;
  MetricReport extreme;  // n == 0 when nothing is flagged
  MetricReport normal;
};

inline RegimeReports evaluate_by_regime(std::span<const double> y, std::span<const double> yhat,
                                        std::span<const std::uint8_t> flags, const std::string& model = {}) {
  require(flags.size() == y.size(), "evaluation", "flags are not aligned to observations");
  std::vector<double> ye, pe, yn, pn;
  for (std::size_t i = 0; i < y.size(); ++i) {
    (flags[i] ? ye : yn).push_back(y[i]);
    (flags[i] ? pe : pn).push_back(yhat[i]);
  }
  RegimeReports out;
  out.all = compute_metrics(y, yhat);
  out.all.model = model;
  out.all.regime = "all";
  if (!ye.empty()) out.extreme = compute_metrics(ye, pe);
  out.extreme.model = model;
  out.extreme.regime = "extreme";
  if (!yn.empty()) out.normal = compute_metrics(yn, pn);
  out.normal.model = model;
  out.normal.regime = "normal";
  return out;
}

/// Count of consecutive-hour prediction pairs whose step exceeds delta_max.
/// With `only_flagged`, only pairs whose later hour is flagged are counted.
inline std::size_t ramp_violations(std::span<const double> pred, std::span<const UtcHour> hours, double delta_max,
                                   std::span<const std::uint8_t> flags = {}) {
  require(pred.size() == hours.size(), "evaluation", "prediction and timestamp lengths differ");
  require(flags.empty() || flags.size() == pred.size(), "evaluation", "flags are not aligned to predictions");
  std::size_t count = 0;
  for (std::size_t i = 1; i < pred.size(); ++i) {
    if (hours[i] - hours[i - 1] != 1) continue;
    if (!flags.empty() && !flags[i]) continue;
    if (std::abs(pred[i] - pred[i - 1]) > delta_max) ++count;
  }
  return count;
}

/// 24-hour persistence forecast: demand observed 24 h before the target hour,
/// read from the first row of each window.
inline std::vector<double> persistence_forecast(const WindowSet& ws, const Standardizer& s) {
  std::vector<double> out(ws.size());
  for (std::size_t m = 0; m < ws.size(); ++m)
    out[m] = s.inverse(kDemand, ws.inputs(static_cast<Eigen::Index>(m * kWindowSteps), kDemand));
  return out;
}

/// Relative change of `value` against `baseline`, in percent.
inline double delta_percent(double baseline, double value) { return 100.0 * (value - baseline) / baseline; }

struct AblationCell {
  double lambda1 = 0;
  double lambda2 = 0;
};

/// The four physics-constraint configurations, baseline first.
struct AblationGrid {
  std::vector<AblationCell> configs = {{0.0, 0.0}, {0.1, 0.0}, {0.0, 0.05}, {0.1, 0.05}};
};

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j = {{"model", r.model}, {"regime", r.regime}, {"n", r.n}};
  if (r.n == 0) {
    j["empty"] = true;
    return j;
  }
  j["mae_mw"] = r.mae_mw;
  j["rmse_mw"] = r.rmse_mw;
  j["mape_pct"] = r.mape_pct ? nlohmann::json(*r.mape_pct) : nlohmann::json(nullptr);
  j["accuracy_pct"] = r.accuracy_pct ? nlohmann::json(*r.accuracy_pct) : nlohmann::json(nullptr);
  return j;
}

inline std::string metrics_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream out;
  out << "model,regime,n,mae_mw,rmse_mw,mape_pct,accuracy_pct\n";
  for (const auto& r : reports) {
    out << r.model << ',' << r.regime << ',' << r.n << ',';
    if (r.n > 0) {
      out << csv::format_double(r.mae_mw) << ',' << csv::format_double(r.rmse_mw) << ','
          << (r.mape_pct ? csv::format_double(*r.mape_pct) : "") << ','
          << (r.accuracy_pct ? csv::format_double(*r.accuracy_pct) : "");
    } else {
      out << ",,,";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace pilf
