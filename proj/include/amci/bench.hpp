#pragma once

// Experiment harness: draws a common set of (y, theta) datapoints, runs
// every configured estimator over the N grid with per-replicate RNG
// streams, aggregates relative mean squared errors, and emits CSV plus
// plot-ready data.  Replicates are deterministic functions of
// (seed, datapoint, grid index, replicate, estimator), so results are
// byte-identical at any worker count.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>
#include <vector>

#include "amci/config.hpp"
#include "amci/estimators.hpp"
#include "amci/model.hpp"
#include "amci/models/cancer.hpp"
#include "amci/models/tail.hpp"
#include "amci/training.hpp"

#ifndef AMCI_DEFAULT_DATA_DIR
#define AMCI_DEFAULT_DATA_DIR "data"
#endif

namespace amci {

enum class EstimatorKind { amci, snis_q2, snis_q1, snis_qm, combined, snis_bound };

inline const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::amci: return "amci";
    case EstimatorKind::snis_q2: return "snis-q2";
    case EstimatorKind::snis_q1: return "snis-q1";
    case EstimatorKind::snis_qm: return "snis-qm";
    case EstimatorKind::combined: return "combined";
    case EstimatorKind::snis_bound: return "snis-bound";
  }
  return "?";
}

inline EstimatorKind parse_estimator(const std::string& s) {
  for (EstimatorKind k : {EstimatorKind::amci, EstimatorKind::snis_q2, EstimatorKind::snis_q1,
                          EstimatorKind::snis_qm, EstimatorKind::combined,
                          EstimatorKind::snis_bound})
    if (s == estimator_name(k)) return k;
  throw config_error("unknown estimator '" + s + "'");
}

struct ExperimentConfig {
  std::string model_name = "tail1d";
  std::string data_dir = AMCI_DEFAULT_DATA_DIR;
  std::vector<EstimatorKind> estimators = {EstimatorKind::amci, EstimatorKind::snis_q2,
                                           EstimatorKind::snis_qm, EstimatorKind::snis_bound};
  std::vector<std::size_t> n_grid = {2, 5, 10, 32, 100, 316, 1000, 3162, 10000};
  std::size_t datapoints = 100;
  std::size_t replicates = 100;
  std::uint64_t seed = 0;
  std::string checkpoint_q1;  // path or "oracle"
  std::string checkpoint_q2;
  std::string alpha_mode = "fixed";  // fixed | optimal-empirical
  double alpha = 1.0;
  double beta = 0.0;
  std::string truth_cache;
  std::uint64_t truth_samples = 10000000;
  std::size_t jobs = 1;
  std::string out_dir;

  static ExperimentConfig from_config(const Config& c) {
    ExperimentConfig e;
    e.model_name = c.get_string("model", e.model_name);
    e.data_dir = c.get_string("data_dir", e.data_dir);
    std::vector<std::string> fallback;
    for (EstimatorKind k : e.estimators) fallback.push_back(estimator_name(k));
    e.estimators.clear();
    for (const std::string& s : c.get_list("estimators", fallback))
      e.estimators.push_back(parse_estimator(s));
    e.n_grid = c.get_size_list("n_grid", e.n_grid);
    e.datapoints = c.get_u64("datapoints", e.datapoints);
    e.replicates = c.get_u64("replicates", e.replicates);
    e.seed = c.get_u64("seed", e.seed);
    e.checkpoint_q1 = c.get_string("checkpoint.q1", "");
    e.checkpoint_q2 = c.get_string("checkpoint.q2", "");
    e.alpha_mode = c.get_string("alpha_mode", e.alpha_mode);
    if (e.alpha_mode != "fixed" && e.alpha_mode != "optimal-empirical")
      throw config_error("config: alpha_mode must be 'fixed' or 'optimal-empirical'");
    e.alpha = c.get_double("alpha", e.alpha);
    e.beta = c.get_double("beta", e.beta);
    e.truth_cache = c.get_string("truth.cache", "");
    e.truth_samples = c.get_u64("truth.samples", e.truth_samples);
    e.jobs = c.get_u64("jobs", e.jobs);
    e.out_dir = c.get_string("out", "");
    return e;
  }

  Config to_config() const {
    Config c;
    c.set("model", model_name);
    c.set("data_dir", data_dir);
    std::string ests;
    for (EstimatorKind k : estimators) {
      if (!ests.empty()) ests += ", ";
      ests += estimator_name(k);
    }
    c.set("estimators", ests);
    std::string grid;
    for (std::size_t n : n_grid) {
      if (!grid.empty()) grid += ", ";
      grid += std::to_string(n);
    }
    c.set("n_grid", grid);
    c.set("datapoints", std::to_string(datapoints));
    c.set("replicates", std::to_string(replicates));
    c.set("seed", std::to_string(seed));
    c.set("checkpoint.q1", checkpoint_q1);
    c.set("checkpoint.q2", checkpoint_q2);
    c.set("alpha_mode", alpha_mode);
    c.set("alpha", format_double(alpha));
    c.set("beta", format_double(beta));
    c.set("truth.cache", truth_cache);
    c.set("truth.samples", std::to_string(truth_samples));
    c.set("jobs", std::to_string(jobs));
    c.set("out", out_dir);
    return c;
  }

  static std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
};

inline std::unique_ptr<Model> make_model(const ExperimentConfig& cfg) {
  std::unique_ptr<Model> m;
  if (cfg.model_name == "tail1d") {
    auto t = make_tail1d();
    t->set_oracle_samples(cfg.truth_samples);
    m = std::move(t);
  } else if (cfg.model_name == "tail5d") {
    auto t = make_tail5d(cfg.data_dir + "/tail5d_sigma1.txt");
    t->set_oracle_samples(cfg.truth_samples);
    m = std::move(t);
  } else if (cfg.model_name == "cancer") {
    auto c = std::make_unique<CancerModel>();
    c->set_oracle_samples(cfg.truth_samples);
    m = std::move(c);
  } else {
    throw config_error("unknown model '" + cfg.model_name + "'");
  }
  return m;
}

// --- training entry point -----------------------------------------------------

// Wraps training with per-model defaults; config keys under `training.`
// override them.  The q1 objective follows the model: importance-sampled
// data generation where the model ships a q', otherwise prior sampling
// (with or without a parameterized f).
inline TrainingConfig resolve_training_config(const Model& model, ProposalRole role,
                                              const Config& file, std::uint64_t seed,
                                              TruncationRole trunc = TruncationRole::none) {
  const TrainingDefaults defaults = model.training_defaults(role);
  TrainingConfig tc;
  tc.seed = seed;
  tc.stream_tag = static_cast<std::uint64_t>(role) + 1;
  tc.learning_rate = file.get_double("training.lr", defaults.learning_rate);
  tc.learning_rate_final = file.get_double("training.lr_final", defaults.learning_rate_final);
  tc.max_steps = file.get_u64("training.steps", defaults.max_steps);
  tc.clip_norm = file.get_double("training.clip_norm", 10.0);
  tc.regime.batch_size = file.get_u64("training.batch", defaults.batch_size);
  tc.regime.train_size = file.get_u64("training.train_size", tc.regime.train_size);
  tc.regime.val_size = file.get_u64("training.val_size", tc.regime.val_size);
  tc.regime.max_missteps = static_cast<int>(file.get_u64("training.max_missteps", 2));
  tc.regime.max_epochs = static_cast<int>(file.get_u64("training.max_epochs", 30));
  if (role == ProposalRole::q2) {
    tc.objective.kind = ObjectiveKind::Q2Standard;
  } else {
    tc.objective.kind = defaults.importance_sampled_q1 && model.has_qprime()
                            ? ObjectiveKind::Q1ImportanceSampled
                            : (model.theta_dim() > 0 ? ObjectiveKind::Q1ParamF
                                                     : ObjectiveKind::Q1FixedF);
    tc.objective.role = trunc;
    tc.objective.truncation_c = file.get_double("training.truncation_c", 0.0);
  }
  return tc;
}

struct TrainedProposal {
  std::unique_ptr<ConditionalProposal> proposal;
  TrainingResult result;
};

inline TrainedProposal train_proposal(const Model& model, ProposalRole role, const Config& file,
                                      std::uint64_t seed,
                                      TruncationRole trunc = TruncationRole::none) {
  const TrainingConfig tc = resolve_training_config(model, role, file, seed, trunc);
  ProposalArch arch;
  arch.hidden = file.get_size_list("proposal.hidden", {});
  arch.flow_layers = file.get_u64("proposal.flow_layers", 0);
  RngStream init_rng(tc.seed, stream_id(StreamPurpose::training, tc.stream_tag, 0));
  TrainedProposal tp;
  tp.proposal = model.make_proposal(role, init_rng, arch);
  tp.result = train(model, *tp.proposal, tc);
  return tp;
}

// --- report ------------------------------------------------------------------

struct DatapointInfo {
  std::vector<double> y;
  std::vector<double> theta;
  GroundTruth truth;
};

struct CellStats {
  double delta = 0.0;      // mean over replicates of delta-hat
  double delta_se = 0.0;
  double mse = 0.0;
  double q25_rep = 0.0;    // replicate quantiles of delta-hat
  double q75_rep = 0.0;
};

struct AggregateStats {
  double median_delta = 0.0;
  double q25_dp = 0.0;       // datapoint quantiles of delta
  double q75_dp = 0.0;
  double med_q25_rep = 0.0;  // median over datapoints of replicate quantiles
  double med_q75_rep = 0.0;
  double median_mse = 0.0;
};

struct ErrorReport {
  std::string model;
  std::uint64_t seed = 0;
  std::string checkpoint_q1, checkpoint_q2;  // as configured ("oracle" included)
  std::vector<EstimatorKind> estimators;
  std::vector<std::size_t> n_grid;
  std::vector<DatapointInfo> datapoints;
  // cells[estimator][grid][datapoint]; aggregates[estimator][grid]
  std::vector<std::vector<std::vector<CellStats>>> cells;
  std::vector<std::vector<AggregateStats>> aggregates;

  const AggregateStats& aggregate(EstimatorKind k, std::size_t n) const {
    for (std::size_t e = 0; e < estimators.size(); ++e)
      if (estimators[e] == k)
        for (std::size_t g = 0; g < n_grid.size(); ++g)
          if (n_grid[g] == n) return aggregates[e][g];
    throw std::invalid_argument("aggregate: no such (estimator, N) cell");
  }
};

// --- proposals ----------------------------------------------------------------

struct ProposalSet {
  std::unique_ptr<ConditionalProposal> q1;
  std::unique_ptr<ConditionalProposal> q2;
};

inline bool needs_q1(EstimatorKind k) {
  return k == EstimatorKind::amci || k == EstimatorKind::snis_q1 ||
         k == EstimatorKind::snis_qm || k == EstimatorKind::combined;
}

inline bool needs_q2(EstimatorKind k) { return k != EstimatorKind::snis_bound; }

inline ProposalSet resolve_proposals(const Model& model, const ExperimentConfig& cfg) {
  ProposalSet ps;
  bool want_q1 = false, want_q2 = false;
  for (EstimatorKind k : cfg.estimators) {
    want_q1 = want_q1 || needs_q1(k);
    want_q2 = want_q2 || needs_q2(k);
  }
  OracleProposals op;
  if (cfg.checkpoint_q1 == "oracle" || cfg.checkpoint_q2 == "oracle")
    op = model.oracle_proposals();
  if (want_q1) {
    if (cfg.checkpoint_q1 == "oracle") {
      ps.q1 = std::move(op.q1_plus);
    } else if (cfg.checkpoint_q1.empty()) {
      throw config_error("missing q1 checkpoint; train one with: amci train --model " +
                         cfg.model_name + " --role q1 --out <path>, then set checkpoint.q1");
    } else {
      ps.q1 = load_proposal(cfg.checkpoint_q1);
    }
  }
  if (want_q2) {
    if (cfg.checkpoint_q2 == "oracle") {
      ps.q2 = std::move(op.q2);
    } else if (cfg.checkpoint_q2.empty()) {
      throw config_error("missing q2 checkpoint; train one with: amci train --model " +
                         cfg.model_name + " --role q2 --out <path>, then set checkpoint.q2");
    } else {
      ps.q2 = load_proposal(cfg.checkpoint_q2);
    }
  }
  return ps;
}

// --- single-replicate evaluation ------------------------------------------------

inline WeightedBatch draw_batch(const Model& model, const ConditionedDist& q,
                                std::span<const double> y, std::span<const double> theta,
                                std::size_t n, RngStream& rng, bool with_f) {
  WeightedBatch b;
  b.log_weights.reserve(n);
  if (with_f) b.f_values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [x, lq] = q.sample(rng);
    b.log_weights.push_back(model.log_joint(x, y) - lq);
    if (with_f) b.f_values.push_back(model.f(x, theta));
  }
  return b;
}

namespace bench_detail {

inline double shifted_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return var / (static_cast<double>(values.size()) - 1.0);
}

}  // namespace bench_detail

inline double evaluate_estimator(EstimatorKind kind, const Model& model,
                                 const DatapointInfo& dp, std::size_t n,
                                 const ConditionedDist* q1, const ConditionedDist* q2,
                                 const std::string& alpha_mode, double alpha, double beta,
                                 RngStream& rng) {
  switch (kind) {
    case EstimatorKind::amci: {
      const WeightedBatch b1 = draw_batch(model, *q1, dp.y, dp.theta, n, rng, true);
      const WeightedBatch b2 = draw_batch(model, *q2, dp.y, dp.theta, n, rng, false);
      return amci_two_term(b1, b2).value;
    }
    case EstimatorKind::snis_q2:
      return snis_estimate(draw_batch(model, *q2, dp.y, dp.theta, n, rng, true));
    case EstimatorKind::snis_q1:
      return snis_estimate(draw_batch(model, *q1, dp.y, dp.theta, n, rng, true));
    case EstimatorKind::snis_qm: {
      const ConditionedMixture qm{q1, q2};
      WeightedBatch b;
      for (std::size_t i = 0; i < n; ++i) {
        auto [x, lqm] = qm.sample(rng);
        b.log_weights.push_back(model.log_joint(x, dp.y) - lqm);
        b.f_values.push_back(model.f(x, dp.theta));
      }
      return snis_estimate(b);
    }
    case EstimatorKind::combined: {
      const WeightedBatch b1 = draw_batch(model, *q1, dp.y, dp.theta, n, rng, true);
      const WeightedBatch b2 = draw_batch(model, *q2, dp.y, dp.theta, n, rng, true);
      CombinedAlphaBeta cab;
      cab.total_budget = 2 * n;
      cab.e1_q1 = detail::positive_mean(b1, "combined");
      cab.e1_q2 = detail::positive_mean(b2, "combined");
      cab.e2_q1 = SignedLog::from_log(log_sum_exp(b1.log_weights) -
                                      std::log(static_cast<double>(n)));
      cab.e2_q2 = SignedLog::from_log(log_sum_exp(b2.log_weights) -
                                      std::log(static_cast<double>(n)));
      if (alpha_mode == "optimal-empirical") {
        double shift = neg_inf;
        for (double lw : b1.log_weights) shift = std::max(shift, lw);
        for (double lw : b2.log_weights) shift = std::max(shift, lw);
        std::vector<double> fw1(n), fw2(n), w1(n), w2(n);
        for (std::size_t i = 0; i < n; ++i) {
          w1[i] = std::exp(b1.log_weights[i] - shift);
          w2[i] = std::exp(b2.log_weights[i] - shift);
          fw1[i] = b1.f_values[i] * w1[i];
          fw2[i] = b2.f_values[i] * w2[i];
        }
        const AlphaBetaStar star = optimal_alpha_beta(
            bench_detail::shifted_variance(fw1), bench_detail::shifted_variance(fw2),
            bench_detail::shifted_variance(w1), bench_detail::shifted_variance(w2),
            static_cast<double>(n), static_cast<double>(2 * n));
        cab.alpha = star.alpha;
        cab.beta = star.beta;
      } else {
        cab.alpha = alpha;
        cab.beta = beta;
      }
      return combined_estimate(cab);
    }
    case EstimatorKind::snis_bound:
      throw std::logic_error("snis_bound has no sampling replicates");
  }
  throw std::logic_error("evaluate_estimator: unknown kind");
}

// --- truth cache ----------------------------------------------------------------

inline void save_truth_cache(const std::string& path, std::span<const DatapointInfo> dps) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write truth cache '" + path + "'");
  if (dps.empty()) return;
  out << "index";
  for (std::size_t i = 0; i < dps[0].y.size(); ++i) out << ",y" << i;
  for (std::size_t i = 0; i < dps[0].theta.size(); ++i) out << ",theta" << i;
  out << ",mu,se,method,samples\n";
  char buf[64];
  for (std::size_t d = 0; d < dps.size(); ++d) {
    out << d;
    const auto emit = [&](double v) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    };
    for (double v : dps[d].y) emit(v);
    for (double v : dps[d].theta) emit(v);
    emit(dps[d].truth.value);
    emit(dps[d].truth.std_error);
    out << "," << dps[d].truth.method_name() << "," << dps[d].truth.oracle_samples << "\n";
  }
}

// Fills dp.truth for each datapoint from the cache; datapoint coordinates
// must match what was cached.
inline bool load_truth_cache(const std::string& path, std::span<DatapointInfo> dps) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  std::getline(in, line);  // header
  for (DatapointInfo& dp : dps) {
    if (!std::getline(in, line)) throw config_error("truth cache '" + path + "' is too short");
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    const std::size_t expect = 1 + dp.y.size() + dp.theta.size() + 4;
    if (fields.size() != expect) throw config_error("truth cache '" + path + "' has a malformed row");
    std::size_t at = 1;
    for (double v : dp.y)
      if (std::abs(std::stod(fields[at++]) - v) > 1e-9)
        throw config_error("truth cache '" + path + "' does not match the datapoint set");
    for (double v : dp.theta)
      if (std::abs(std::stod(fields[at++]) - v) > 1e-9)
        throw config_error("truth cache '" + path + "' does not match the datapoint set");
    dp.truth.value = std::stod(fields[at++]);
    dp.truth.std_error = std::stod(fields[at++]);
    const std::string& method = fields[at++];
    dp.truth.method = method == "analytic"     ? GroundTruth::Method::analytic
                      : method == "quadrature" ? GroundTruth::Method::quadrature
                                               : GroundTruth::Method::snis_oracle;
    dp.truth.oracle_samples = std::stoull(fields[at]);
  }
  return true;
}

// --- experiment run ---------------------------------------------------------------

inline std::vector<DatapointInfo> draw_datapoints(const Model& model, std::uint64_t seed,
                                                  std::size_t count) {
  std::vector<DatapointInfo> dps(count);
  RngStream rng(seed, stream_id(StreamPurpose::datapoints));
  for (std::size_t d = 0; d < count; ++d) {
    auto [x, y] = model.sample_joint(rng);
    (void)x;
    dps[d].y = std::move(y);
    dps[d].theta = model.sample_theta(rng);
  }
  return dps;
}

inline void write_results_csv(const std::string& path, const ErrorReport& report);

inline ErrorReport run_experiment(const ExperimentConfig& cfg, const Model& model,
                                  const ProposalSet& proposals) {
  ErrorReport report;
  report.model = model.name();
  report.seed = cfg.seed;
  report.checkpoint_q1 = cfg.checkpoint_q1;
  report.checkpoint_q2 = cfg.checkpoint_q2;
  report.estimators = cfg.estimators;
  report.n_grid = cfg.n_grid;
  report.datapoints = draw_datapoints(model, cfg.seed, cfg.datapoints);

  // Ground truth: cache hit, else computed (and cached when a path is set).
  const bool cached =
      !cfg.truth_cache.empty() && load_truth_cache(cfg.truth_cache, report.datapoints);
  if (!cached) {
    if (const auto* cancer = dynamic_cast<const CancerModel*>(&model))
      cancer->prepare_truth_cache(cfg.truth_samples,
                                  RngStream(cfg.seed, stream_id(StreamPurpose::truth)),
                                  std::max<std::size_t>(cfg.jobs, 1));
    RngStream truth_rng(cfg.seed, stream_id(StreamPurpose::truth, 1));
    for (DatapointInfo& dp : report.datapoints) dp.truth = model.truth(dp.y, dp.theta, truth_rng);
    if (!cfg.truth_cache.empty()) save_truth_cache(cfg.truth_cache, report.datapoints);
  }

  const std::size_t ne = cfg.estimators.size(), ng = cfg.n_grid.size(), nd = cfg.datapoints;
  report.cells.assign(ne, std::vector<std::vector<CellStats>>(ng, std::vector<CellStats>(nd)));
  report.aggregates.assign(ne, std::vector<AggregateStats>(ng));

  RngStream mad_rng(cfg.seed, stream_id(StreamPurpose::truth, 2));
  std::vector<double> mad(nd, 0.0);
  for (EstimatorKind k : cfg.estimators)
    if (k == EstimatorKind::snis_bound) {
      for (std::size_t d = 0; d < nd; ++d)
        mad[d] = model.mean_abs_dev(report.datapoints[d].y, report.datapoints[d].theta,
                                    report.datapoints[d].truth, mad_rng);
      break;
    }

  const auto run_datapoint = [&](std::size_t d) {
    const DatapointInfo& dp = report.datapoints[d];
    const double mu = dp.truth.value;
    // Condition the proposals once per datapoint.
    std::unique_ptr<ConditionedDist> c1, c2;
    if (proposals.q1) c1 = proposals.q1->condition(concat_cond(dp.y, dp.theta));
    if (proposals.q2) c2 = proposals.q2->condition(dp.y);
    for (std::size_t e = 0; e < ne; ++e) {
      const EstimatorKind kind = cfg.estimators[e];
      for (std::size_t g = 0; g < ng; ++g) {
        const std::size_t n = cfg.n_grid[g];
        CellStats& cell = report.cells[e][g][d];
        if (kind == EstimatorKind::snis_bound) {
          const double bound = snis_bound_from_mad(mad[d], static_cast<double>(n));
          cell.mse = bound;
          cell.delta = mu != 0.0 ? bound / (mu * mu) : bound;
          cell.delta_se = 0.0;
          cell.q25_rep = cell.q75_rep = cell.delta;
          continue;
        }
        std::vector<double> deltas(cfg.replicates);
        double delta_sum = 0.0, mse_sum = 0.0;
        for (std::size_t r = 0; r < cfg.replicates; ++r) {
          RngStream rng(cfg.seed, stream_id(StreamPurpose::replicate, d, g, r, e));
          const double est = evaluate_estimator(kind, model, dp, n, c1.get(), c2.get(),
                                                cfg.alpha_mode, cfg.alpha, cfg.beta, rng);
          const double err = mu - est;
          mse_sum += err * err;
          deltas[r] = mu != 0.0 ? err * err / (mu * mu) : err * err;
          delta_sum += deltas[r];
        }
        const double rcount = static_cast<double>(cfg.replicates);
        cell.delta = delta_sum / rcount;
        cell.mse = mse_sum / rcount;
        double var = 0.0;
        for (double dd : deltas) var += (dd - cell.delta) * (dd - cell.delta);
        cell.delta_se = cfg.replicates > 1 ? std::sqrt(var / (rcount - 1.0) / rcount) : 0.0;
        cell.q25_rep = quantile(deltas, 0.25);
        cell.q75_rep = quantile(deltas, 0.75);
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, nd));
  if (jobs == 1) {
    for (std::size_t d = 0; d < nd; ++d) run_datapoint(d);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t d = next.fetch_add(1); d < nd; d = next.fetch_add(1)) run_datapoint(d);
      });
    for (auto& th : pool) th.join();
  }

  for (std::size_t e = 0; e < ne; ++e)
    for (std::size_t g = 0; g < ng; ++g) {
      std::vector<double> deltas(nd), q25s(nd), q75s(nd), mses(nd);
      for (std::size_t d = 0; d < nd; ++d) {
        deltas[d] = report.cells[e][g][d].delta;
        q25s[d] = report.cells[e][g][d].q25_rep;
        q75s[d] = report.cells[e][g][d].q75_rep;
        mses[d] = report.cells[e][g][d].mse;
      }
      AggregateStats& agg = report.aggregates[e][g];
      agg.median_delta = median(deltas);
      agg.q25_dp = quantile(deltas, 0.25);
      agg.q75_dp = quantile(deltas, 0.75);
      agg.med_q25_rep = median(q25s);
      agg.med_q75_rep = median(q75s);
      agg.median_mse = median(mses);
    }

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_results_csv(cfg.out_dir + "/results.csv", report);
    cfg.to_config().write(cfg.out_dir + "/config.resolved");
  }
  return report;
}

inline ErrorReport run_experiment(const ExperimentConfig& cfg) {
  const std::unique_ptr<Model> model = make_model(cfg);
  const ProposalSet proposals = resolve_proposals(*model, cfg);
  return run_experiment(cfg, *model, proposals);
}

// --- CSV ---------------------------------------------------------------------------

inline void write_results_csv(const std::string& path, const ErrorReport& report) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write results to '" + path + "'");
  out << "estimator,n,row,datapoint,delta,delta_se,mse,delta_q25_rep,delta_q75_rep,"
         "median_delta,delta_q25_dp,delta_q75_dp,median_rep_q25,median_rep_q75,median_mse\n";
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out << buf;
  };
  for (std::size_t e = 0; e < report.estimators.size(); ++e)
    for (std::size_t g = 0; g < report.n_grid.size(); ++g) {
      for (std::size_t d = 0; d < report.datapoints.size(); ++d) {
        const CellStats& c = report.cells[e][g][d];
        out << estimator_name(report.estimators[e]) << "," << report.n_grid[g] << ",datapoint,"
            << d;
        num(c.delta);
        num(c.delta_se);
        num(c.mse);
        num(c.q25_rep);
        num(c.q75_rep);
        out << ",,,,,\n";
      }
      const AggregateStats& a = report.aggregates[e][g];
      out << estimator_name(report.estimators[e]) << "," << report.n_grid[g]
          << ",aggregate,-1,,,,,";
      num(a.median_delta);
      num(a.q25_dp);
      num(a.q75_dp);
      num(a.med_q25_rep);
      num(a.med_q75_rep);
      num(a.median_mse);
      out << "\n";
    }
}

// Reads back what write_results_csv produced (numeric cells only; the
// datapoint coordinate/truth columns live in the truth cache).
inline ErrorReport parse_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open results file '" + path + "'");
  std::string line;
  std::getline(in, line);
  ErrorReport report;
  std::map<std::string, std::size_t> est_index;
  std::map<std::size_t, std::size_t> n_index;
  const auto split = [](const std::string& s) {
    std::vector<std::string> fields;
    std::string f;
    std::istringstream ss(s);
    while (std::getline(ss, f, ',')) fields.push_back(f);
    while (fields.size() < 15) fields.push_back("");
    return fields;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line);
    const EstimatorKind kind = parse_estimator(fields[0]);
    const std::size_t n = std::stoull(fields[1]);
    if (!est_index.count(fields[0])) {
      est_index[fields[0]] = report.estimators.size();
      report.estimators.push_back(kind);
      report.cells.emplace_back();
      report.aggregates.emplace_back();
    }
    const std::size_t e = est_index[fields[0]];
    if (!n_index.count(n)) {
      n_index[n] = report.n_grid.size();
      report.n_grid.push_back(n);
    }
    const std::size_t g = n_index[n];
    if (report.cells[e].size() <= g) {
      report.cells[e].resize(g + 1);
      report.aggregates[e].resize(g + 1);
    }
    if (fields[2] == "datapoint") {
      CellStats c;
      c.delta = std::stod(fields[4]);
      c.delta_se = std::stod(fields[5]);
      c.mse = std::stod(fields[6]);
      c.q25_rep = std::stod(fields[7]);
      c.q75_rep = std::stod(fields[8]);
      report.cells[e][g].push_back(c);
    } else {
      AggregateStats a;
      a.median_delta = std::stod(fields[9]);
      a.q25_dp = std::stod(fields[10]);
      a.q75_dp = std::stod(fields[11]);
      a.med_q25_rep = std::stod(fields[12]);
      a.med_q75_rep = std::stod(fields[13]);
      a.median_mse = std::stod(fields[14]);
      report.aggregates[e][g] = a;
    }
  }
  report.datapoints.resize(report.cells.empty() ? 0 : report.cells[0][0].size());
  return report;
}

// --- plot emission -------------------------------------------------------------------

// One data file per estimator (N, median delta, and the Figure-1-style
// replicate-quantile band) plus a gnuplot script with log-log axes.
inline void emit_plots(const ErrorReport& report, const std::string& out_dir) {
  if (report.estimators.empty()) {
    std::fprintf(stderr, "emit_plots: empty estimator list, nothing to do\n");
    return;
  }
  std::filesystem::create_directories(out_dir);
  for (std::size_t e = 0; e < report.estimators.size(); ++e) {
    const std::string name = estimator_name(report.estimators[e]);
    std::ofstream out(out_dir + "/" + name + ".dat");
    if (!out) throw config_error("cannot write plot data to '" + out_dir + "'");
    out << "# " << name
        << ": N median_delta q25 q75 (quantiles over replicates, median over datapoints)\n";
    char buf[128];
    for (std::size_t g = 0; g < report.n_grid.size(); ++g) {
      const AggregateStats& a = report.aggregates[e][g];
      std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.17g\n", report.n_grid[g], a.median_delta,
                    a.med_q25_rep, a.med_q75_rep);
      out << buf;
    }
  }
  std::ofstream gp(out_dir + "/plot.gp");
  gp << "set logscale xy\n"
     << "set xlabel 'N'\n"
     << "set ylabel 'ReMSE'\n"
     << "set key bottom left\n"
     << "plot ";
  for (std::size_t e = 0; e < report.estimators.size(); ++e) {
    const std::string name = estimator_name(report.estimators[e]);
    if (e) gp << ", ";
    if (report.estimators[e] == EstimatorKind::snis_bound)
      gp << "'" << name << ".dat' using 1:2 with lines dashtype 2 title '" << name << "'";
    else
      gp << "'" << name << ".dat' using 1:2 with linespoints title '" << name << "'";
  }
  gp << "\n";
}

}  // namespace amci
