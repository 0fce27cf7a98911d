#pragma once

// Amortization objectives and the training loop.  All four objectives
// reduce to a weighted negative log-density: q2 trains with unit weights on
// joint samples, q1 with f(x; theta)/lambda(y) weights, and the
// importance-sampled q1 path with log-space weights
// p(theta) p(x) f(x; theta) / q'(theta, x) that are exponentiated after a
// max shift within the evaluated batch.  Datasets refresh when the
// validation loss has risen past the allowed missteps or the epoch cap.

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "amci/adam.hpp"
#include "amci/model.hpp"
#include "amci/proposal.hpp"
#include "amci/tape.hpp"

namespace amci {

enum class ObjectiveKind { Q2Standard, Q1FixedF, Q1ParamF, Q1ImportanceSampled };

enum class TruncationRole { none, plus, minus };

// f restricted to the role's part: f+ = max(f - c, 0), f- = -min(f - c, 0).
inline double truncate_f(double f, TruncationRole role, double c) {
  switch (role) {
    case TruncationRole::plus: return std::max(f - c, 0.0);
    case TruncationRole::minus: return std::max(c - f, 0.0);
    default: return f;
  }
}

using LambdaWeight = std::function<double(std::span<const double> y)>;

struct Objective {
  ObjectiveKind kind = ObjectiveKind::Q2Standard;
  TruncationRole role = TruncationRole::none;
  double truncation_c = 0.0;
  LambdaWeight lambda;  // null => lambda(y) = 1
};

struct TrainExample {
  std::vector<double> x;
  std::vector<double> cond;
  double weight = 1.0;      // linear weight (plain objectives)
  double log_weight = 0.0;  // log-space weight (importance-sampled objective)
};

struct Dataset {
  std::vector<TrainExample> examples;
  bool log_space_weights = false;
};

struct LossStats {
  std::size_t skipped = 0;        // non-finite log-density samples
  std::size_t clipped = 0;        // post-shift weight clips
  bool zero_weight_batch = false; // batch carried no gradient signal
};

namespace training_detail {

inline constexpr double kSkipFraction = 0.01;
inline constexpr double kWeightClip = 1e300;

struct BatchWeights {
  std::vector<double> w;
  bool all_zero = false;
};

inline BatchWeights batch_weights(const Dataset& data, std::span<const std::size_t> idx) {
  BatchWeights out;
  out.w.resize(idx.size());
  if (!data.log_space_weights) {
    bool any = false;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.w[i] = data.examples[idx[i]].weight;
      any = any || out.w[i] != 0.0;
    }
    out.all_zero = !any;
    return out;
  }
  double shift = neg_inf;
  for (std::size_t i : idx) shift = std::max(shift, data.examples[i].log_weight);
  if (shift == neg_inf) {
    out.all_zero = true;
    std::fill(out.w.begin(), out.w.end(), 0.0);
    return out;
  }
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.w[i] = std::exp(data.examples[idx[i]].log_weight - shift);
  return out;
}

}  // namespace training_detail

// Weighted negative log-density of a batch, on the tape.  Samples whose
// plain log-density is non-finite are skipped with a counter; more than 1%
// skipped aborts.
inline Value batch_loss(Tape& tape, std::span<const Value> leaves,
                        const ConditionalProposal& q, const Dataset& data,
                        std::span<const std::size_t> idx, LossStats& stats) {
  const auto bw = training_detail::batch_weights(data, idx);
  if (bw.all_zero) stats.zero_weight_batch = true;
  Value loss = tape.leaf(0.0);
  std::size_t skipped = 0;
  const double inv_b = 1.0 / static_cast<double>(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    double w = bw.w[i];
    if (w == 0.0) continue;  // no gradient contribution
    if (w > training_detail::kWeightClip) {
      w = training_detail::kWeightClip;
      ++stats.clipped;
    }
    const TrainExample& ex = data.examples[idx[i]];
    const double plain = q.log_density(ex.x, ex.cond);
    if (!std::isfinite(plain)) {
      ++skipped;
      continue;
    }
    const Value lq = q.taped_log_density(tape, leaves, ex.x, ex.cond);
    loss = tape.add(loss, tape.mul(lq, -w * inv_b));
  }
  stats.skipped += skipped;
  if (static_cast<double>(skipped) >
      training_detail::kSkipFraction * static_cast<double>(idx.size()))
    throw numerical_error("batch_loss: more than 1% of the batch had non-finite log-density");
  return loss;
}

// Same weighting without the tape, for validation.
inline double batch_loss_value(const ConditionalProposal& q, const Dataset& data,
                               std::span<const std::size_t> idx, LossStats& stats) {
  const auto bw = training_detail::batch_weights(data, idx);
  if (bw.all_zero) stats.zero_weight_batch = true;
  double loss = 0.0;
  std::size_t skipped = 0;
  const double inv_b = 1.0 / static_cast<double>(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double w = std::min(bw.w[i], training_detail::kWeightClip);
    if (w == 0.0) continue;
    const TrainExample& ex = data.examples[idx[i]];
    const double plain = q.log_density(ex.x, ex.cond);
    if (!std::isfinite(plain)) {
      ++skipped;
      continue;
    }
    loss += -w * inv_b * plain;
  }
  stats.skipped += skipped;
  if (static_cast<double>(skipped) >
      training_detail::kSkipFraction * static_cast<double>(idx.size()))
    throw numerical_error("batch_loss: more than 1% of the batch had non-finite log-density");
  return loss;
}

namespace training_detail {

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace training_detail

// --- spec'd objective entry points ----------------------------------------

// E_{p(x,y)}[-log q2(x; y)] over an explicit batch.
inline Value loss_q2(Tape& tape, std::span<const Value> leaves, const ConditionalProposal& q2,
                     const Dataset& data, LossStats& stats) {
  return batch_loss(tape, leaves, q2, data,
                    training_detail::all_indices(data.examples.size()), stats);
}

inline Value loss_q1(Tape& tape, std::span<const Value> leaves, const ConditionalProposal& q1,
                     const Dataset& data, LossStats& stats) {
  return batch_loss(tape, leaves, q1, data,
                    training_detail::all_indices(data.examples.size()), stats);
}

// --- dataset generation -----------------------------------------------------

inline Dataset generate_dataset(const Model& model, const Objective& obj, std::size_t n,
                                RngStream& rng) {
  Dataset data;
  data.examples.reserve(n);
  data.log_space_weights = obj.kind == ObjectiveKind::Q1ImportanceSampled;
  const auto lambda_of = [&](std::span<const double> y) {
    return obj.lambda ? obj.lambda(y) : 1.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    TrainExample ex;
    switch (obj.kind) {
      case ObjectiveKind::Q2Standard: {
        auto [x, y] = model.sample_joint(rng);
        ex.x = std::move(x);
        ex.cond = std::move(y);
        ex.weight = 1.0;
        break;
      }
      case ObjectiveKind::Q1FixedF:
      case ObjectiveKind::Q1ParamF: {
        auto [x, y] = model.sample_joint(rng);
        std::vector<double> theta = obj.kind == ObjectiveKind::Q1ParamF
                                        ? model.sample_theta(rng)
                                        : std::vector<double>{};
        const double fx = truncate_f(model.f(x, theta), obj.role, obj.truncation_c);
        ex.weight = fx / lambda_of(y);
        ex.x = std::move(x);
        ex.cond = concat_cond(y, theta);
        break;
      }
      case ObjectiveKind::Q1ImportanceSampled: {
        auto [theta, x] = model.sample_qprime(rng);
        std::vector<double> y = model.sample_y_given_x(x, rng);
        const double fx = truncate_f(model.f(x, theta), obj.role, obj.truncation_c);
        const double lw = fx > 0.0
                              ? model.log_theta_prior(theta) + model.log_prior_x(x) +
                                    std::log(fx) - model.log_qprime(theta, x) -
                                    std::log(lambda_of(y))
                              : neg_inf;
        ex.log_weight = lw;
        ex.x = std::move(x);
        ex.cond = concat_cond(y, theta);
        break;
      }
    }
    data.examples.push_back(std::move(ex));
  }
  return data;
}

// --- refresh regime ---------------------------------------------------------

struct RefreshRegime {
  std::size_t train_size = 10000;
  std::size_t val_size = 1000;
  int max_missteps = 2;
  int max_epochs = 30;
  std::size_t batch_size = 256;
};

// Counts validation epochs that failed to improve on the cycle's best.
// observe() returns true when the count exceeds the allowance and a new
// dataset should be drawn.
class MisstepCounter {
 public:
  explicit MisstepCounter(int max_missteps) : max_(max_missteps) {}

  bool observe(double val_loss) {
    if (val_loss <= best_) {
      best_ = val_loss;
      count_ = 0;
      return false;
    }
    ++count_;
    return count_ > max_;
  }

  void reset() {
    best_ = std::numeric_limits<double>::infinity();
    count_ = 0;
  }

  int count() const { return count_; }

 private:
  int max_;
  int count_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

// --- training run -----------------------------------------------------------

struct TraceRow {
  long step = 0;
  int epoch = 0;
  int cycle = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  int missteps = 0;
  bool refreshed = false;
};

struct TrainingConfig {
  Objective objective;
  RefreshRegime regime;
  double learning_rate = 1e-3;
  double learning_rate_final = 0.0;  // > 0: linear decay toward this rate
  double clip_norm = 10.0;           // 0 disables clipping
  std::size_t max_steps = 4000;
  std::uint64_t seed = 0;
  std::uint64_t stream_tag = 0;  // separates q1/q2 runs under one seed
};

struct TrainingResult {
  std::vector<TraceRow> trace;
  double best_val_loss = std::numeric_limits<double>::infinity();
  long steps = 0;
  std::size_t skipped_samples = 0;
  std::size_t clipped_weights = 0;
  std::size_t zero_weight_batches = 0;
};

inline TrainingResult train(const Model& model, ConditionalProposal& proposal,
                            const TrainingConfig& cfg) {
  if (!proposal.trainable()) throw std::invalid_argument("train: proposal is not trainable");
  Mlp& net = *proposal.conditioner();
  RngStream data_rng(cfg.seed, stream_id(StreamPurpose::training, cfg.stream_tag, 1));
  RngStream shuffle_rng(cfg.seed, stream_id(StreamPurpose::training, cfg.stream_tag, 2));

  AdamState adam(cfg.learning_rate);
  TrainingResult result;
  std::vector<double> best_params(net.params().begin(), net.params().end());
  Tape tape;

  int cycle = 0;
  while (result.steps < static_cast<long>(cfg.max_steps)) {
    ++cycle;
    Dataset train_set = generate_dataset(model, cfg.objective, cfg.regime.train_size, data_rng);
    Dataset val_set = generate_dataset(model, cfg.objective, cfg.regime.val_size, data_rng);
    if (cycle == 1 && proposal.standardizer()) {
      std::vector<std::vector<double>> conds;
      conds.reserve(train_set.examples.size());
      for (const TrainExample& ex : train_set.examples) conds.push_back(ex.cond);
      proposal.standardizer()->fit(conds);
    }
    const std::vector<std::size_t> val_idx = training_detail::all_indices(val_set.examples.size());

    MisstepCounter counter(cfg.regime.max_missteps);
    for (int epoch = 1; epoch <= cfg.regime.max_epochs; ++epoch) {
      std::vector<std::size_t> order = training_detail::all_indices(train_set.examples.size());
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.below(i)]);

      double epoch_loss = 0.0;
      std::size_t batches = 0;
      for (std::size_t begin = 0; begin < order.size() && result.steps < static_cast<long>(cfg.max_steps);
           begin += cfg.regime.batch_size) {
        const std::size_t end = std::min(begin + cfg.regime.batch_size, order.size());
        const std::span<const std::size_t> idx(order.data() + begin, end - begin);

        tape.clear();
        const std::vector<Value> leaves = tape.leaves(net.params());
        LossStats stats;
        const Value loss = batch_loss(tape, leaves, proposal, train_set, idx, stats);
        result.skipped_samples += stats.skipped;
        result.clipped_weights += stats.clipped;
        if (stats.zero_weight_batch) ++result.zero_weight_batches;
        const double loss_value = tape.value(loss);
        if (!std::isfinite(loss_value))
          throw numerical_error("train: non-finite loss at step " + std::to_string(result.steps + 1));
        epoch_loss += loss_value;
        ++batches;

        const std::vector<double> adj = tape.gradient(loss);
        std::vector<double> grads(net.params().size());
        for (std::size_t p = 0; p < grads.size(); ++p) grads[p] = adj[leaves[p].idx];
        if (cfg.clip_norm > 0.0) clip_by_global_norm(grads, cfg.clip_norm);
        if (cfg.learning_rate_final > 0.0) {
          const double frac = static_cast<double>(result.steps) / static_cast<double>(cfg.max_steps);
          adam.learning_rate =
              cfg.learning_rate + (cfg.learning_rate_final - cfg.learning_rate) * frac;
        }
        adam_step(adam, net.params(), grads);
        ++result.steps;
      }
      if (batches == 0) break;

      LossStats val_stats;
      const double val_loss = batch_loss_value(proposal, val_set, val_idx, val_stats);
      if (val_loss < result.best_val_loss) {
        result.best_val_loss = val_loss;
        best_params.assign(net.params().begin(), net.params().end());
      }
      const bool refresh = counter.observe(val_loss);
      result.trace.push_back({result.steps, epoch, cycle, epoch_loss / static_cast<double>(batches),
                              val_loss, counter.count(), refresh});
      if (refresh || result.steps >= static_cast<long>(cfg.max_steps)) break;
    }
  }

  std::copy(best_params.begin(), best_params.end(), net.params().begin());
  return result;
}

// step, epoch, cycle, train-loss, val-loss, misstep-count, refresh-flag
inline void save_trace_csv(const std::string& path, std::span<const TraceRow> trace) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open trace file '" + path + "'");
  out << "step,epoch,cycle,train_loss,val_loss,missteps,refresh\n";
  char buf[160];
  for (const TraceRow& r : trace) {
    std::snprintf(buf, sizeof buf, "%ld,%d,%d,%.17g,%.17g,%d,%d\n", r.step, r.epoch, r.cycle,
                  r.train_loss, r.val_loss, r.missteps, r.refreshed ? 1 : 0);
    out << buf;
  }
}

}  // namespace amci
