#pragma once

// The experiment-model surface the training loop and the bench harness
// program against: joint sampling, pointwise unnormalized posterior
// density, a target function f(x; theta) with its pseudo-prior over theta,
// ground-truth oracles, and per-model proposal factories.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "amci/proposal.hpp"
#include "amci/rng.hpp"

namespace amci {

struct GroundTruth {
  double value = 0.0;
  enum class Method { analytic, quadrature, snis_oracle } method = Method::analytic;
  double std_error = 0.0;          // 0 for exact methods
  std::uint64_t oracle_samples = 0;

  const char* method_name() const {
    switch (method) {
      case Method::analytic: return "analytic";
      case Method::quadrature: return "quadrature";
      case Method::snis_oracle: return "snis-oracle";
    }
    return "?";
  }
};

enum class ProposalRole { q1_plus, q1_minus, q2 };

struct OracleProposals {
  std::unique_ptr<ConditionalProposal> q1_plus;  // null when f has no positive part
  std::unique_ptr<ConditionalProposal> q1_minus; // null when f >= 0
  std::unique_ptr<ConditionalProposal> q2;
};

// Per-model training defaults (learning rate per the experiment setups;
// budgets are desk-scale choices).
struct TrainingDefaults {
  double learning_rate = 1e-3;
  double learning_rate_final = 0.0;  // > 0: linear decay target
  std::size_t batch_size = 256;
  std::size_t max_steps = 4000;
  bool importance_sampled_q1 = false;  // generate q1 data from q'(theta,x) p(y|x)
};

// Conditioner architecture; empty fields mean "model default".
struct ProposalArch {
  std::vector<std::size_t> hidden;
  std::size_t flow_layers = 0;
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual std::size_t x_dim() const = 0;
  virtual std::size_t y_dim() const = 0;
  virtual std::size_t theta_dim() const = 0;  // 0 when f has no parameters

  // x ~ p(x), then y ~ p(y|x).
  virtual std::pair<std::vector<double>, std::vector<double>> sample_joint(RngStream& rng) const = 0;
  virtual std::vector<double> sample_y_given_x(std::span<const double> x, RngStream& rng) const = 0;
  virtual std::vector<double> sample_theta(RngStream& rng) const = 0;

  virtual double log_prior_x(std::span<const double> x) const = 0;
  virtual double log_joint(std::span<const double> x, std::span<const double> y) const = 0;
  virtual double f(std::span<const double> x, std::span<const double> theta) const = 0;

  // Pre-training data proposal q'(theta, x) targeting p(theta) p(x) f(x;
  // theta); present only where the model defines one.
  virtual bool has_qprime() const { return false; }
  virtual std::pair<std::vector<double>, std::vector<double>> sample_qprime(RngStream&) const {
    throw std::logic_error("sample_qprime: model has no q'");
  }
  virtual double log_qprime(std::span<const double> /*theta*/, std::span<const double> /*x*/) const {
    throw std::logic_error("log_qprime: model has no q'");
  }
  virtual double log_theta_prior(std::span<const double> /*theta*/) const {
    return 0.0;  // empty theta: the pseudo-prior is the empty product
  }

  virtual GroundTruth truth(std::span<const double> y, std::span<const double> theta,
                            RngStream& rng) const = 0;

  // E_{p(x|y)} |f(x; theta) - mu|, the ingredient of the optimal-SNIS bound.
  virtual double mean_abs_dev(std::span<const double> y, std::span<const double> theta,
                              const GroundTruth& truth, RngStream& rng) const = 0;

  virtual std::unique_ptr<ConditionalProposal> make_proposal(ProposalRole role, RngStream& rng,
                                                             const ProposalArch& arch = {}) const = 0;

  virtual TrainingDefaults training_defaults(ProposalRole role) const = 0;

  // Exact optimal proposals (Theorem-1 oracles) where tractable.
  virtual OracleProposals oracle_proposals() const {
    throw std::logic_error("oracle_proposals: unsupported for model '" + name() + "'");
  }

  std::size_t q1_cond_dim() const { return y_dim() + theta_dim(); }
  std::size_t q2_cond_dim() const { return y_dim(); }
};

inline std::vector<double> concat_cond(std::span<const double> y, std::span<const double> theta) {
  std::vector<double> cond(y.begin(), y.end());
  cond.insert(cond.end(), theta.begin(), theta.end());
  return cond;
}

}  // namespace amci
