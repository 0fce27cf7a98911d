// Command-line harness: train proposals, run estimator sweeps, precompute
// ground-truth caches, and emit plot data.
//
//   amci train --model tail1d --role q2 --out ckpt/tail1d_q2.amck
//   amci truth --config cfg/cancer.cfg
//   amci run   --config cfg/tail1d.cfg --out runs/tail1d --jobs 4
//   amci plot  --results runs/tail1d/results.csv --out runs/tail1d/plots
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "amci/bench.hpp"
#include "amci/training.hpp"

namespace {

using namespace amci;

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::size_t jobs = 0;
  std::string checkpoint;
};

Config load_config(const CommonFlags& flags) {
  return flags.config_path.empty() ? Config() : Config::parse_file(flags.config_path);
}

ExperimentConfig experiment_from(const CommonFlags& flags) {
  Config file = load_config(flags);
  ExperimentConfig cfg = ExperimentConfig::from_config(file);
  if (flags.seed_set) cfg.seed = flags.seed;
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  if (flags.jobs > 0) cfg.jobs = flags.jobs;
  return cfg;
}

ProposalRole parse_role(const std::string& role) {
  if (role == "q1" || role == "q1plus" || role == "q1+") return ProposalRole::q1_plus;
  if (role == "q1minus" || role == "q1-") return ProposalRole::q1_minus;
  if (role == "q2") return ProposalRole::q2;
  throw config_error("unknown role '" + role + "' (expected q1, q1plus, q1minus or q2)");
}

int cmd_train(const CommonFlags& flags, const std::string& model_name, const std::string& role_s,
              const std::string& trace_path) {
  if (flags.out.empty()) throw config_error("train: --out CHECKPOINT is required");
  Config file = load_config(flags);
  ExperimentConfig ecfg;
  ecfg.model_name = model_name.empty() ? file.require_string("model") : model_name;
  ecfg.data_dir = file.get_string("data_dir", ecfg.data_dir);
  const std::unique_ptr<Model> model = make_model(ecfg);
  const ProposalRole role = parse_role(role_s);
  TruncationRole trunc = TruncationRole::none;
  if (role_s == "q1plus" || role_s == "q1+") trunc = TruncationRole::plus;
  if (role == ProposalRole::q1_minus) trunc = TruncationRole::minus;

  const std::uint64_t seed = flags.seed_set ? flags.seed : file.get_u64("seed", 0);
  const TrainingConfig tc = resolve_training_config(*model, role, file, seed, trunc);
  std::printf("training %s %s: lr %g, %zu steps, batch %zu\n", ecfg.model_name.c_str(),
              role_s.c_str(), tc.learning_rate, tc.max_steps, tc.regime.batch_size);
  const TrainedProposal tp = train_proposal(*model, role, file, seed, trunc);
  save_proposal(flags.out, *tp.proposal, seed);
  const std::string trace = trace_path.empty() ? flags.out + ".trace.csv" : trace_path;
  save_trace_csv(trace, tp.result.trace);
  std::printf("trained %s: best val loss %.6g after %ld steps (%zu skipped samples)\n",
              flags.out.c_str(), tp.result.best_val_loss, tp.result.steps,
              tp.result.skipped_samples);
  std::printf("trace written to %s\n", trace.c_str());
  return 0;
}

int cmd_run(const CommonFlags& flags) {
  ExperimentConfig cfg = experiment_from(flags);
  if (cfg.out_dir.empty()) throw config_error("run: set --out or the 'out' config key");
  const ErrorReport report = run_experiment(cfg);
  emit_plots(report, cfg.out_dir + "/plots");
  std::printf("run complete: %zu estimators x %zu grid points x %zu datapoints -> %s\n",
              report.estimators.size(), report.n_grid.size(), report.datapoints.size(),
              (cfg.out_dir + "/results.csv").c_str());
  return 0;
}

int cmd_truth(const CommonFlags& flags) {
  ExperimentConfig cfg = experiment_from(flags);
  if (cfg.truth_cache.empty())
    throw config_error("truth: set the 'truth.cache' config key to the cache path");
  const std::unique_ptr<Model> model = make_model(cfg);
  std::vector<DatapointInfo> dps = draw_datapoints(*model, cfg.seed, cfg.datapoints);
  if (const auto* cancer = dynamic_cast<const CancerModel*>(model.get()))
    cancer->prepare_truth_cache(cfg.truth_samples,
                                RngStream(cfg.seed, stream_id(StreamPurpose::truth)),
                                std::max<std::size_t>(cfg.jobs, 1));
  RngStream truth_rng(cfg.seed, stream_id(StreamPurpose::truth, 1));
  for (DatapointInfo& dp : dps) dp.truth = model->truth(dp.y, dp.theta, truth_rng);
  if (const auto parent = std::filesystem::path(cfg.truth_cache).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  save_truth_cache(cfg.truth_cache, dps);
  std::printf("cached %zu ground-truth values to %s\n", dps.size(), cfg.truth_cache.c_str());
  return 0;
}

int cmd_plot(const CommonFlags& flags, const std::string& results_path) {
  const ErrorReport report = parse_results_csv(results_path);
  const std::string out = flags.out.empty()
                              ? std::filesystem::path(results_path).parent_path().string() + "/plots"
                              : flags.out;
  emit_plots(report, out);
  std::printf("plot data written to %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"target-aware amortized Monte Carlo integration toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string model_name, role = "q2", trace_path, results_path;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "config file path");
    sub->add_option("--seed", flags.seed, "RNG seed")->each([&](const std::string&) {
      flags.seed_set = true;
    });
    sub->add_option("--out", flags.out, "output directory or checkpoint path");
    sub->add_option("--jobs", flags.jobs, "worker thread count");
    sub->add_option("--checkpoint", flags.checkpoint, "checkpoint path");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train an amortized proposal");
  add_common(train_cmd);
  train_cmd->add_option("--model", model_name, "tail1d | tail5d | cancer");
  train_cmd->add_option("--role", role, "q1 | q1plus | q1minus | q2");
  train_cmd->add_option("--trace", trace_path, "loss trace CSV path");

  CLI::App* run_cmd = app.add_subcommand("run", "run an estimator sweep");
  add_common(run_cmd);

  CLI::App* truth_cmd = app.add_subcommand("truth", "precompute ground-truth caches");
  add_common(truth_cmd);

  CLI::App* plot_cmd = app.add_subcommand("plot", "emit plot data from results.csv");
  add_common(plot_cmd);
  plot_cmd->add_option("--results", results_path, "results.csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(flags, model_name, role, trace_path);
    if (run_cmd->parsed()) return cmd_run(flags);
    if (truth_cmd->parsed()) return cmd_truth(flags);
    if (plot_cmd->parsed()) return cmd_plot(flags, results_path);
  } catch (const amci::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const amci::numerical_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
