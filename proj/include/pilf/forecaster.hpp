#pragma once

// CNN and Transformer forecasting branches, physics-informed training with
// early stopping, inference and checkpoints.
//
// Network outputs are in standardized target units. Every loss term is
// evaluated on de-standardized MW predictions (y_mw = out * std + mean), so
// MSE, parabolic and ramp terms share MW^2 units and the lambda weights are
// unit-free; the chain rule adds the factor `std` on the way back.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pilf/ingest.hpp"
#include "pilf/nn/adam.hpp"
#include "pilf/nn/attention.hpp"
#include "pilf/nn/layers.hpp"
#include "pilf/physics.hpp"

namespace pilf {

enum class BranchKind { cnn, transformer };

inline const char* to_string(BranchKind k) { return k == BranchKind::cnn ? "cnn" : "transformer"; }

inline BranchKind branch_kind_from_string(const std::string& s) {
  if (s == "cnn") return BranchKind::cnn;
  if (s == "transformer") return BranchKind::transformer;
  throw Error("forecaster", "unknown branch kind", s);
}

struct CnnBranchConfig {
  int blocks = 2;
  int filters = 64;
  int kernel = 3;
  int embedding_dim = 64;
  double dropout = 0.2;
  bool batch_norm = true;

  void validate() const {
    require(blocks >= 1 && filters >= 1 && embedding_dim >= 1, "forecaster", "CNN sizes must be positive");
    require(kernel >= 1 && kernel % 2 == 1, "forecaster", "CNN kernel must be odd");
    require(dropout >= 0 && dropout < 1, "forecaster", "dropout must be in [0, 1)");
  }
};

struct TransformerBranchConfig {
  int d_model = 64;
  int encoder_blocks = 2;
  int heads = 4;
  int ff_dim = 128;
  int embedding_dim = 64;
  double dropout = 0.2;

  void validate() const {
    require(d_model >= 2 && encoder_blocks >= 1 && ff_dim >= 1 && embedding_dim >= 1, "forecaster",
            "Transformer sizes must be positive");
    require(heads >= 1 && d_model % heads == 0, "forecaster", "d_model must be divisible by heads");
    require(d_model % 2 == 0, "forecaster", "d_model must be even for positional encoding");
    require(dropout >= 0 && dropout < 1, "forecaster", "dropout must be in [0, 1)");
  }
};

/// Common interface of the two branches. Input: stacked 24 x 13 windows.
/// Output: batch x 1 prediction in standardized target units.
class Branch {
 public:
  virtual ~Branch() = default;
  Branch() = default;
  Branch(const Branch&) = delete;
  Branch& operator=(const Branch&) = delete;

  virtual BranchKind kind() const = 0;
  virtual Matrix forward(const nn::SeqBatch& x, nn::Mode mode, Rng& dropout_rng) = 0;
  virtual void backward(const Matrix& grad_out) = 0;
  virtual void collect(nn::ParameterSet& set) = 0;
  virtual nlohmann::json config_json() const = 0;

  nn::ParameterSet parameters() {
    nn::ParameterSet set;
    collect(set);
    return set;
  }

  /// Infer-mode forward in chunks; returns standardized outputs.
  std::vector<double> infer(const Matrix& stacked_windows, std::size_t chunk = 512) {
    const auto rows = static_cast<std::size_t>(stacked_windows.rows());
    require(rows % kWindowSteps == 0 && stacked_windows.cols() == static_cast<Eigen::Index>(kFeatureCount),
            "forecaster", "input must stack 24 x 13 windows");
    const std::size_t n = rows / kWindowSteps;
    std::vector<double> out(n);
    Rng unused(0);
    for (std::size_t start = 0; start < n; start += chunk) {
      const std::size_t len = std::min(chunk, n - start);
      nn::SeqBatch x{stacked_windows.middleRows(static_cast<Eigen::Index>(start * kWindowSteps),
                                                static_cast<Eigen::Index>(len * kWindowSteps)),
                     static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(kWindowSteps)};
      Matrix y = forward(x, nn::Mode::infer, unused);
      for (std::size_t i = 0; i < len; ++i) out[start + i] = y(static_cast<Eigen::Index>(i), 0);
    }
    return out;
  }
};

/// Regression head shared by both branches: Dense(embedding) -> ReLU ->
/// Dropout -> Dense(1), linear output.
class RegressionHead {
 public:
  RegressionHead() = default;
  RegressionHead(Eigen::Index in, Eigen::Index embedding, double dropout)
      : embed(in, embedding), out(embedding, 1), drop_(dropout) {}

  void init(Rng& rng) {
    embed.init(rng);
    out.init(rng);
  }
  Matrix forward(const Matrix& pooled, nn::Mode mode, Rng& rng) {
    return out.forward(drop_.forward(relu_.forward(embed.forward(pooled)), mode, rng));
  }
  Matrix backward(const Matrix& grad) { return embed.backward(relu_.backward(drop_.backward(out.backward(grad)))); }
  void collect(nn::ParameterSet& set, const std::string& prefix) {
    embed.collect(set, prefix + ".embed");
    out.collect(set, prefix + ".out");
  }

  nn::Dense embed;
  nn::Dense out;

 private:
  nn::ReLU relu_;
  nn::Dropout drop_;
};

/// Conv1D(same) -> BatchNorm -> ReLU -> MaxPool(2, 2).
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(Eigen::Index in, Eigen::Index filters, Eigen::Index kernel, bool batch_norm)
      : conv(in, filters, kernel), norm(filters), use_norm_(batch_norm) {}

  void init(Rng& rng) { conv.init(rng); }

  nn::SeqBatch forward(const nn::SeqBatch& x, nn::Mode mode) {
    nn::SeqBatch h = conv.forward(x);
    if (use_norm_) h.data = norm.forward(h.data, mode);
    h.data = relu_.forward(h.data);
    return pool_.forward(h);
  }

  nn::SeqBatch backward(const nn::SeqBatch& grad) {
    nn::SeqBatch g = pool_.backward(grad);
    g.data = relu_.backward(g.data);
    if (use_norm_) g.data = norm.backward(g.data);
    return conv.backward(g);
  }

  void collect(nn::ParameterSet& set, const std::string& prefix) {
    conv.collect(set, prefix + ".conv");
    if (use_norm_) norm.collect(set, prefix + ".bn");
  }

  nn::Conv1d conv;
  nn::BatchNorm norm;

 private:
  bool use_norm_ = true;
  nn::ReLU relu_;
  nn::MaxPool1d pool_;
};

inline nn::SeqBatch conv_block_forward(ConvBlock& block, const nn::SeqBatch& x, nn::Mode mode) {
  return block.forward(x, mode);
}

class CnnBranch final : public Branch {
 public:
  CnnBranch(const CnnBranchConfig& cfg, Rng& init_rng) : cfg_(cfg) {
    cfg.validate();
    Eigen::Index in = static_cast<Eigen::Index>(kFeatureCount);
    for (int i = 0; i < cfg.blocks; ++i) {
      blocks_.emplace_back(in, cfg.filters, cfg.kernel, cfg.batch_norm);
      in = cfg.filters;
    }
    head_ = RegressionHead(cfg.filters, cfg.embedding_dim, cfg.dropout);
    for (auto& b : blocks_) b.init(init_rng);
    head_.init(init_rng);
  }

  BranchKind kind() const override { return BranchKind::cnn; }

  Matrix forward(const nn::SeqBatch& x, nn::Mode mode, Rng& rng) override {
    nn::SeqBatch h = x;
    for (auto& b : blocks_) h = b.forward(h, mode);
    last_steps_ = h.steps;
    return head_.forward(pool_.forward(h), mode, rng);
  }

  void backward(const Matrix& grad_out) override {
    nn::SeqBatch g = pool_.backward(head_.backward(grad_out));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  }

  void collect(nn::ParameterSet& set) override {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(set, "block" + std::to_string(i));
    head_.collect(set, "head");
  }

  nlohmann::json config_json() const override {
    return {{"blocks", cfg_.blocks}, {"filters", cfg_.filters}, {"kernel", cfg_.kernel},
            {"embedding_dim", cfg_.embedding_dim}, {"dropout", cfg_.dropout}, {"batch_norm", cfg_.batch_norm}};
  }

  /// Temporal length after the last conv block of the most recent forward.
  Eigen::Index last_steps() const { return last_steps_; }

 private:
  CnnBranchConfig cfg_;
  std::vector<ConvBlock> blocks_;
  nn::GlobalAvgPool pool_;
  RegressionHead head_;
  Eigen::Index last_steps_ = 0;
};

class TransformerBranch final : public Branch {
 public:
  TransformerBranch(const TransformerBranchConfig& cfg, Rng& init_rng) : cfg_(cfg) {
    cfg.validate();
    input_proj_ = nn::Dense(static_cast<Eigen::Index>(kFeatureCount), cfg.d_model);
    pe_ = nn::positional_encoding(static_cast<Eigen::Index>(kWindowSteps), cfg.d_model);
    for (int i = 0; i < cfg.encoder_blocks; ++i) blocks_.emplace_back(cfg.d_model, cfg.heads, cfg.ff_dim, cfg.dropout);
    head_ = RegressionHead(cfg.d_model, cfg.embedding_dim, cfg.dropout);
    input_proj_.init(init_rng);
    for (auto& b : blocks_) b.init(init_rng);
    head_.init(init_rng);
  }

  BranchKind kind() const override { return BranchKind::transformer; }

  Matrix forward(const nn::SeqBatch& x, nn::Mode mode, Rng& rng) override {
    require(x.steps == pe_.rows(), "forecaster", "Transformer branch expects 24-step windows");
    nn::SeqBatch h{input_proj_.forward(x.data), x.batch, x.steps};
    for (Eigen::Index b = 0; b < x.batch; ++b) h.sample(b) += pe_;
    for (auto& blk : blocks_) h = blk.forward(h, mode, rng);
    return head_.forward(pool_.forward(h), mode, rng);
  }

  void backward(const Matrix& grad_out) override {
    nn::SeqBatch g = pool_.backward(head_.backward(grad_out));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    input_proj_.backward(g.data);
  }

  void collect(nn::ParameterSet& set) override {
    input_proj_.collect(set, "input_proj");
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(set, "encoder" + std::to_string(i));
    head_.collect(set, "head");
  }

  nlohmann::json config_json() const override {
    return {{"d_model", cfg_.d_model}, {"encoder_blocks", cfg_.encoder_blocks}, {"heads", cfg_.heads},
            {"ff_dim", cfg_.ff_dim}, {"embedding_dim", cfg_.embedding_dim}, {"dropout", cfg_.dropout}};
  }

 private:
  TransformerBranchConfig cfg_;
  nn::Dense input_proj_;
  Matrix pe_;
  std::vector<nn::EncoderBlock> blocks_;
  nn::GlobalAvgPool pool_;
  RegressionHead head_;
};

/// Seed purposes for derive_rng.
enum SeedPurpose : std::uint64_t { kSeedWeights = 1, kSeedDropout = 2, kSeedBatchOrder = 3 };

inline std::unique_ptr<Branch> build_cnn(const CnnBranchConfig& cfg, std::uint64_t seed) {
  Rng rng = derive_rng(seed, kSeedWeights);
  return std::make_unique<CnnBranch>(cfg, rng);
}

inline std::unique_ptr<Branch> build_transformer(const TransformerBranchConfig& cfg, std::uint64_t seed) {
  Rng rng = derive_rng(seed, kSeedWeights);
  return std::make_unique<TransformerBranch>(cfg, rng);
}

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double lambda1 = 0.1;
  double lambda2 = 0.05;
  std::uint64_t seed = 0;
  std::size_t segment_hours = 8;  // consecutive windows per batch segment; <= 1 shuffles freely
  bool mse_standardized = false;  // MSE on standardized targets; false keeps it in MW^2 like the penalties

  void validate() const {
    require(lr > 0, "forecaster", "learning rate must be positive");
    require(batch >= 1, "forecaster", "batch size must be positive");
    require(max_epochs >= 1 && patience < max_epochs, "forecaster", "patience must be smaller than max_epochs");
    require(lambda1 >= 0 && lambda2 >= 0, "forecaster", "lambda weights must be non-negative");
  }
};

/// Calibrated physics inputs of the composite loss.
struct PhysicsContext {
  ParabolicEnvelope envelope;
  ToleranceModel tolerance;
  double delta_max_mw = 4800.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0, train_mse = 0, train_parabolic = 0, train_ramp = 0;
  double val_mae = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
  bool early_stopped = false;

  std::string to_csv() const {
    std::ostringstream out;
    out << "epoch,train_loss,train_mse,train_parabolic,train_ramp,val_mae\n";
    for (const auto& e : epochs) {
      out << e.epoch << ',' << csv::format_double(e.train_loss) << ',' << csv::format_double(e.train_mse) << ','
          << csv::format_double(e.train_parabolic) << ',' << csv::format_double(e.train_ramp) << ','
          << csv::format_double(e.val_mae) << '\n';
    }
    return out.str();
  }
};

/// Windows in [start, start+len) as one sequence batch.
inline nn::SeqBatch batch_of(const WindowSet& ws, const std::vector<std::size_t>& idx) {
  nn::SeqBatch b{Matrix(static_cast<Eigen::Index>(idx.size() * kWindowSteps), static_cast<Eigen::Index>(kFeatureCount)),
                 static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(kWindowSteps)};
  for (std::size_t k = 0; k < idx.size(); ++k) b.sample(static_cast<Eigen::Index>(k)) = ws.window(idx[k]);
  return b;
}

/// Pairs (prev, cur) of batch positions whose target hours are consecutive.
inline std::vector<IndexPair> consecutive_pairs(const WindowSet& ws, const std::vector<std::size_t>& idx) {
  std::map<std::int64_t, std::size_t> pos;
  for (std::size_t k = 0; k < idx.size(); ++k) pos.emplace(ws.target_timestamps[idx[k]].hours, k);
  std::vector<IndexPair> pairs;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto it = pos.find(ws.target_timestamps[idx[k]].hours - 1);
    if (it != pos.end()) pairs.emplace_back(it->second, k);
  }
  return pairs;
}

/// Mini-batches for one epoch. With segments of L > 1 hours, the windows are
/// cut into runs of L chronologically consecutive windows (random phase per
/// epoch); runs are shuffled and packed batch/L to a batch, so every batch
/// holds consecutive-hour pairs for the ramp term while still mixing seasons.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, std::size_t segment_hours,
                                                           Rng& rng) {
  std::vector<std::vector<std::size_t>> out;
  if (segment_hours > 1) {
    const std::size_t len = std::min(segment_hours, batch);
    const std::size_t phase = n > len ? static_cast<std::size_t>(uniform_index(rng, len)) : 0;
    std::vector<std::pair<std::size_t, std::size_t>> runs;  // [begin, end)
    if (phase > 0) runs.emplace_back(0, phase);
    for (std::size_t start = phase; start < n; start += len) runs.emplace_back(start, std::min(n, start + len));
    shuffle(runs.begin(), runs.end(), rng);
    std::vector<std::size_t> cur;
    for (const auto& [b, e] : runs) {
      for (std::size_t i = b; i < e; ++i) cur.push_back(i);
      if (cur.size() + len > batch) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
  } else {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch)
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
  }
  return out;
}

/// Infer-mode predictions in MW.
inline std::vector<double> predict_mw(Branch& branch, const WindowSet& windows, const Standardizer& standardizer) {
  std::vector<double> out = branch.infer(windows.inputs);
  for (double& v : out) v = standardizer.inverse(kDemand, v);
  return out;
}

inline double mean_abs_error(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && !a.empty(), "forecaster", "MAE needs equal non-empty vectors");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// Adam on the composite physics-informed loss with early stopping on
/// validation MAE (MW). The branch is left holding its best-epoch weights.
inline TrainingHistory train_branch(Branch& branch, const WindowSet& train, const WindowSet& val,
                                    const Standardizer& standardizer, const PhysicsContext& physics,
                                    const TrainConfig& cfg) {
  cfg.validate();
  require(train.size() > 0 && val.size() > 0, "train", "training and validation sets must be non-empty");
  PhysicsLossConfig loss_cfg{cfg.lambda1, cfg.lambda2, physics.delta_max_mw};
  if (cfg.mse_standardized) loss_cfg.mse_scale = 1.0 / (standardizer.target_std() * standardizer.target_std());
  loss_cfg.validate();

  nn::ParameterSet params = branch.parameters();
  nn::AdamState adam;
  adam.lr = cfg.lr;
  Rng dropout_rng = derive_rng(cfg.seed, kSeedDropout);
  Rng order_rng = derive_rng(cfg.seed, kSeedBatchOrder);
  const double y_std = standardizer.target_std();

  TrainingHistory history;
  std::map<std::string, Matrix> best = params.snapshot();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    auto batches = epoch_batches(train.size(), cfg.batch, cfg.segment_hours, order_rng);
    std::size_t batch_no = 0;
    for (const auto& idx : batches) {
      ++batch_no;
      nn::SeqBatch x = batch_of(train, idx);
      params.zero_grad();
      Matrix out = branch.forward(x, nn::Mode::train, dropout_rng);
      std::vector<double> pred(idx.size()), target(idx.size()), temp(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        pred[k] = standardizer.inverse(kDemand, out(static_cast<Eigen::Index>(k), 0));
        target[k] = train.targets_mw[idx[k]];
        temp[k] = train.target_air_temp_c[idx[k]];
      }
      const auto pairs = consecutive_pairs(train, idx);
      CompositeLoss loss = composite_loss(pred, target, temp, pairs, physics.envelope, physics.tolerance, loss_cfg);
      const std::pair<const char*, double> terms[] = {
          {"mse", loss.mse}, {"parabolic", loss.parabolic}, {"ramp", loss.ramp}, {"total", loss.total}};
      for (const auto& [name, value] : terms) {
        if (!std::isfinite(value)) {
          throw Error("train", std::string("non-finite loss term '") + name + "'",
                      "epoch=" + std::to_string(epoch) + ",batch=" + std::to_string(batch_no) + ",term=" + name);
        }
      }
      Matrix grad(static_cast<Eigen::Index>(idx.size()), 1);
      for (std::size_t k = 0; k < idx.size(); ++k) grad(static_cast<Eigen::Index>(k), 0) = loss.grad[k] * y_std;
      branch.backward(grad);
      nn::adam_step(params, adam);
      rec.train_loss += loss.total;
      rec.train_mse += loss.mse;
      rec.train_parabolic += loss.parabolic;
      rec.train_ramp += loss.ramp;
    }
    const double nb = static_cast<double>(batches.size());
    rec.train_loss /= nb;
    rec.train_mse /= nb;
    rec.train_parabolic /= nb;
    rec.train_ramp /= nb;
    rec.val_mae = mean_abs_error(predict_mw(branch, val, standardizer), val.targets_mw);
    if (!std::isfinite(rec.val_mae)) {
      throw Error("train", "non-finite validation MAE", "epoch=" + std::to_string(epoch) + ",term=val_mae");
    }
    history.epochs.push_back(rec);
    if (rec.val_mae < history.best_val_mae) {
      history.best_val_mae = rec.val_mae;
      history.best_epoch = epoch;
      best = params.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      history.early_stopped = true;
      break;
    }
  }
  params.restore(best);
  return history;
}

/// A branch together with everything needed to reproduce its predictions.
struct TrainedBranch {
  BranchKind kind = BranchKind::cnn;
  std::unique_ptr<Branch> model;
  Standardizer standardizer;
  TrainingHistory history;
  std::uint64_t seed = 0;

  std::vector<double> predict(const WindowSet& windows) const {
    require(model != nullptr, "forecaster", "branch has no model");
    require(windows.inputs.cols() == static_cast<Eigen::Index>(kFeatureCount), "forecaster", "window shape mismatch");
    return predict_mw(*model, windows, standardizer);
  }
};

inline nlohmann::json standardizer_to_json(const Standardizer& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"standardized", s.standardized}, {"fitted_on", s.fitted_on}};
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
  Standardizer s;
  s.mean = j.at("mean").get<std::array<double, kFeatureCount>>();
  s.std = j.at("std").get<std::array<double, kFeatureCount>>();
  s.standardized = j.at("standardized").get<std::array<bool, kFeatureCount>>();
  s.fitted_on = j.at("fitted_on").get<std::string>();
  for (std::size_t f = 0; f < kFeatureCount; ++f) require(s.std[f] > 0, "forecaster", "standardizer std must be positive");
  return s;
}

/// Checkpoint schema `pilf.checkpoint/1`: kind, architecture config,
/// standardizer, seed, best epoch and named tensors {shape, values}.
inline nlohmann::json checkpoint_to_json(const TrainedBranch& tb) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, m] : tb.model->parameters().snapshot()) {
    nn::Tensor t = nn::to_tensor(m);
    tensors[name] = {{"shape", t.shape}, {"values", t.values}};
  }
  return {{"schema", "pilf.checkpoint/1"},
          {"kind", to_string(tb.kind)},
          {"architecture", tb.model->config_json()},
          {"standardizer", standardizer_to_json(tb.standardizer)},
          {"seeds", {{"base", tb.seed}, {"weights", kSeedWeights}, {"dropout", kSeedDropout}, {"batch_order", kSeedBatchOrder}}},
          {"best_epoch", tb.history.best_epoch},
          {"best_val_mae", tb.history.best_val_mae},
          {"tensors", tensors}};
}

inline CnnBranchConfig cnn_config_from_json(const nlohmann::json& j) {
  CnnBranchConfig c;
  c.blocks = j.value("blocks", c.blocks);
  c.filters = j.value("filters", c.filters);
  c.kernel = j.value("kernel", c.kernel);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.batch_norm = j.value("batch_norm", c.batch_norm);
  return c;
}

inline TransformerBranchConfig transformer_config_from_json(const nlohmann::json& j) {
  TransformerBranchConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.encoder_blocks = j.value("encoder_blocks", c.encoder_blocks);
  c.heads = j.value("heads", c.heads);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

inline TrainedBranch checkpoint_from_json(const nlohmann::json& j) {
  require(j.value("schema", "") == "pilf.checkpoint/1", "forecaster", "unsupported checkpoint schema");
  TrainedBranch tb;
  tb.kind = branch_kind_from_string(j.at("kind").get<std::string>());
  tb.seed = j.at("seeds").at("base").get<std::uint64_t>();
  tb.model = tb.kind == BranchKind::cnn ? build_cnn(cnn_config_from_json(j.at("architecture")), tb.seed)
                                        : build_transformer(transformer_config_from_json(j.at("architecture")), tb.seed);
  tb.standardizer = standardizer_from_json(j.at("standardizer"));
  tb.history.best_epoch = j.at("best_epoch").get<std::size_t>();
  tb.history.best_val_mae = j.at("best_val_mae").get<double>();
  std::map<std::string, Matrix> snap;
  for (const auto& [name, t] : j.at("tensors").items()) {
    nn::Tensor tensor{t.at("shape").get<std::vector<std::size_t>>(), t.at("values").get<std::vector<double>>()};
    snap.emplace(name, nn::to_matrix(tensor));
  }
  tb.model->parameters().restore(snap);
  return tb;
}

}  // namespace pilf
