#pragma once

// D-dimensional Gaussian tail-integral model:
//   p(x) = N(0, Sigma1),  p(y|x) = N(x, Sigma2),
//   f(x; theta) = prod_i 1{x_i > theta_i},  p(theta) = Uniform([0, u_D]^D).
// Conjugacy gives the exact posterior and evidence, which back the analytic
// ground truth, the quadrature cross-check, and the Theorem-1 oracle
// proposals.

#include <cmath>
#include <fstream>
#include <sstream>

#include "amci/estimators.hpp"
#include "amci/linalg.hpp"
#include "amci/model.hpp"

namespace amci {

namespace detail {

// Cached Cholesky form of a Gaussian with fixed covariance.
struct GaussianForm {
  Matrix chol;
  double log_det = 0.0;
  std::size_t dim = 0;

  explicit GaussianForm(const Matrix& cov) : chol(cholesky(cov)), dim(cov.rows()) {
    for (std::size_t i = 0; i < dim; ++i) log_det += 2.0 * std::log(chol(i, i));
  }

  double log_pdf_diff(std::span<const double> diff) const {
    const std::vector<double> y = forward_solve(chol, diff);
    double quad = 0.0;
    for (double v : y) quad += v * v;
    return -0.5 * (static_cast<double>(dim) * log_2pi + log_det + quad);
  }

  std::vector<double> sample_around(std::span<const double> mean, RngStream& rng) const {
    std::vector<double> x(mean.begin(), mean.end());
    std::vector<double> z(dim);
    for (double& v : z) v = rng.normal();
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j <= i; ++j) x[i] += chol(i, j) * z[j];
    return x;
  }
};

}  // namespace detail

class TailIntegralModel : public Model {
 public:
  TailIntegralModel(std::size_t d, Matrix sigma1, Matrix sigma2, double theta_upper)
      : d_(d),
        sigma1_(std::move(sigma1)),
        sigma2_(std::move(sigma2)),
        u_(theta_upper),
        prior_(sigma1_),
        like_(sigma2_),
        evidence_(sigma1_ + sigma2_) {
    const Matrix s1_inv = spd_inverse(sigma1_);
    const Matrix s2_inv = spd_inverse(sigma2_);
    post_cov_ = spd_inverse(s1_inv + s2_inv);
    post_gain_ = post_cov_ * s2_inv;  // m_post = gain * y
    post_form_ = std::make_unique<detail::GaussianForm>(post_cov_);
    post_diag_ = true;
    for (std::size_t i = 0; i < d_ && post_diag_; ++i)
      for (std::size_t j = 0; j < d_; ++j)
        if (i != j && std::abs(post_cov_(i, j)) > 1e-14) post_diag_ = false;
  }

  std::string name() const override { return d_ == 1 ? "tail1d" : "tail" + std::to_string(d_) + "d"; }
  std::size_t x_dim() const override { return d_; }
  std::size_t y_dim() const override { return d_; }
  std::size_t theta_dim() const override { return d_; }
  double theta_upper() const { return u_; }

  std::pair<std::vector<double>, std::vector<double>> sample_joint(RngStream& rng) const override {
    const std::vector<double> zero(d_, 0.0);
    std::vector<double> x = prior_.sample_around(zero, rng);
    std::vector<double> y = like_.sample_around(x, rng);
    return {std::move(x), std::move(y)};
  }

  std::vector<double> sample_y_given_x(std::span<const double> x, RngStream& rng) const override {
    return like_.sample_around(x, rng);
  }

  std::vector<double> sample_theta(RngStream& rng) const override {
    std::vector<double> theta(d_);
    for (double& t : theta) t = rng.uniform(0.0, u_);
    return theta;
  }

  double log_theta_prior(std::span<const double> theta) const override {
    for (double t : theta)
      if (t < 0.0 || t > u_) return neg_inf;
    return -static_cast<double>(d_) * std::log(u_);
  }

  double log_prior_x(std::span<const double> x) const override {
    return prior_.log_pdf_diff(x);
  }

  double log_likelihood(std::span<const double> x, std::span<const double> y) const {
    std::vector<double> diff(d_);
    for (std::size_t i = 0; i < d_; ++i) diff[i] = y[i] - x[i];
    return like_.log_pdf_diff(diff);
  }

  double log_joint(std::span<const double> x, std::span<const double> y) const override {
    return log_prior_x(x) + log_likelihood(x, y);
  }

  double f(std::span<const double> x, std::span<const double> theta) const override {
    for (std::size_t i = 0; i < d_; ++i)
      if (!(x[i] > theta[i])) return 0.0;
    return 1.0;
  }

  double log_evidence(std::span<const double> y) const { return evidence_.log_pdf_diff(y); }

  std::vector<double> posterior_mean(std::span<const double> y) const { return post_gain_.mul(y); }
  const Matrix& posterior_cov() const { return post_cov_; }

  Density posterior_density(std::span<const double> y) const {
    if (d_ == 1)
      return Density(Normal{posterior_mean(y)[0], std::sqrt(post_cov_(0, 0))});
    return Density(MultivariateNormal{posterior_mean(y), post_cov_});
  }

  // --- q'(theta, x) = p(theta) * prod_i HalfNormal(x_i; theta_i, sqrt(Sigma2_ii))
  bool has_qprime() const override { return true; }

  std::pair<std::vector<double>, std::vector<double>> sample_qprime(RngStream& rng) const override {
    std::vector<double> theta = sample_theta(rng);
    std::vector<double> x(d_);
    for (std::size_t i = 0; i < d_; ++i)
      x[i] = theta[i] + std::sqrt(sigma2_(i, i)) * std::abs(rng.normal());
    return {std::move(theta), std::move(x)};
  }

  double log_qprime(std::span<const double> theta, std::span<const double> x) const override {
    double lq = log_theta_prior(theta);
    for (std::size_t i = 0; i < d_; ++i) {
      const double s = std::sqrt(sigma2_(i, i));
      if (x[i] < theta[i]) return neg_inf;
      lq += log_2 + normal_logpdf((x[i] - theta[i]) / s) - std::log(s);
    }
    return lq;
  }

  // --- ground truth -------------------------------------------------------

  // mu(y, theta) = P(x > theta | y): analytic for D = 1, importance-sampled
  // against the analytic evidence otherwise.
  GroundTruth truth(std::span<const double> y, std::span<const double> theta,
                    RngStream& rng) const override {
    if (d_ == 1) {
      const double m = posterior_mean(y)[0];
      const double s = std::sqrt(post_cov_(0, 0));
      return {normal_sf((theta[0] - m) / s), GroundTruth::Method::analytic, 0.0, 0};
    }
    if (post_diag_) {
      double mu = 1.0;
      const auto m = posterior_mean(y);
      for (std::size_t i = 0; i < d_; ++i)
        mu *= normal_sf((theta[i] - m[i]) / std::sqrt(post_cov_(i, i)));
      return {mu, GroundTruth::Method::analytic, 0.0, 0};
    }
    return truth_oracle(y, theta, oracle_samples_, rng);
  }

  // Importance-sampled numerator E_p(x)[f p(y|x)] from the half-normal
  // proposal, normalized by the closed-form evidence.
  GroundTruth truth_oracle(std::span<const double> y, std::span<const double> theta,
                           std::uint64_t n, RngStream& rng) const {
    const double log_ev = log_evidence(y);
    std::vector<double> lt(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::vector<double> x(d_);
      double lq = 0.0;
      for (std::size_t j = 0; j < d_; ++j) {
        const double s = std::sqrt(sigma2_(j, j));
        x[j] = theta[j] + s * std::abs(rng.normal());
        lq += log_2 + normal_logpdf((x[j] - theta[j]) / s) - std::log(s);
      }
      lt[i] = log_joint(x, y) - lq;  // f = 1 on the proposal's support
    }
    const double log_e1 = log_sum_exp(lt) - std::log(static_cast<double>(n));
    const double mu = std::exp(log_e1 - log_ev);
    // Standard error of the numerator mean, propagated through the ratio.
    const double lsd = detail::log_sd_of_mean(lt);
    const double se = lsd == neg_inf ? 0.0 : std::exp(lsd - log_ev);
    return {mu, GroundTruth::Method::snis_oracle, se, n};
  }

  // Quadrature cross-check of the 1-D truth: integrates f p(x,y) and p(x,y).
  double truth_quadrature(double y, double theta) const {
    if (d_ != 1) throw std::logic_error("truth_quadrature: 1-D only");
    const double m = posterior_mean(std::span<const double>(&y, 1))[0];
    const double s = std::sqrt(post_cov_(0, 0));
    const auto joint = [&](double x) {
      return std::exp(log_joint(std::span<const double>(&x, 1), std::span<const double>(&y, 1)));
    };
    const double hi = std::max(theta, m) + 14.0 * s;
    const double num = integrate(joint, theta, hi, 1e-13);
    const double den = integrate(joint, m - 14.0 * s, hi, 1e-13);
    return num / den;
  }

  double mean_abs_dev(std::span<const double>, std::span<const double>,
                      const GroundTruth& truth, RngStream&) const override {
    return indicator_mean_abs_dev(truth.value);  // f is an indicator
  }

  void set_oracle_samples(std::uint64_t n) { oracle_samples_ = n; }

  // --- proposals ----------------------------------------------------------

  std::unique_ptr<ConditionalProposal> make_proposal(ProposalRole role, RngStream& rng,
                                                     const ProposalArch& arch = {}) const override {
    const std::size_t cond = role == ProposalRole::q2 ? q2_cond_dim() : q1_cond_dim();
    if (d_ == 1) {
      const std::vector<std::size_t> hidden =
          arch.hidden.empty() ? std::vector<std::size_t>{64, 64, 64} : arch.hidden;
      const std::size_t layers = arch.flow_layers == 0 ? 10 : arch.flow_layers;
      return std::make_unique<RadialFlowProposal>(1, layers, cond, hidden, Activation::Tanh, rng);
    }
    const std::vector<std::size_t> hidden =
        arch.hidden.empty() ? std::vector<std::size_t>{128, 128, 128} : arch.hidden;
    return std::make_unique<ParametricProposal>(
        std::vector<CoordFamily>(d_, CoordFamily::Gaussian), cond, hidden, Activation::Tanh, rng);
  }

  TrainingDefaults training_defaults(ProposalRole role) const override {
    TrainingDefaults td;
    td.learning_rate = d_ == 1 ? 1e-2 : 1e-4;
    td.learning_rate_final = d_ == 1 ? 1e-4 : 0.0;  // settle the Adam jitter
    td.batch_size = 256;
    td.max_steps = d_ == 1 ? 8000 : 6000;
    td.importance_sampled_q1 = role != ProposalRole::q2;
    return td;
  }

  // Theorem-1 oracles: q2 is the exact posterior; q1+ the posterior
  // truncated to prod_i (theta_i, inf).  Needs a diagonal posterior for the
  // per-coordinate truncation (always true for D = 1).
  OracleProposals oracle_proposals() const override {
    if (!post_diag_)
      throw std::logic_error("oracle_proposals: posterior covariance is not diagonal");
    OracleProposals op;
    const std::size_t d = d_;
    const Matrix gain = post_gain_;
    const Matrix cov = post_cov_;
    op.q2 = std::make_unique<FixedFormProposal>(
        d, y_dim(), [this](std::span<const double> cond) -> std::vector<Density> {
          return {posterior_density(cond)};
        });
    op.q1_plus = std::make_unique<FixedFormProposal>(
        d, q1_cond_dim(), [d, gain, cov](std::span<const double> cond) -> std::vector<Density> {
          const std::span<const double> y = cond.subspan(0, d);
          const std::span<const double> theta = cond.subspan(d, d);
          const std::vector<double> m = gain.mul(y);
          std::vector<Density> out;
          for (std::size_t i = 0; i < d; ++i)
            out.emplace_back(TruncatedNormal{m[i], std::sqrt(cov(i, i)), theta[i], pos_inf});
          return out;
        });
    return op;  // q1_minus stays null: f >= 0
  }

 private:
  std::size_t d_;
  Matrix sigma1_, sigma2_;
  double u_;
  detail::GaussianForm prior_, like_, evidence_;
  Matrix post_cov_, post_gain_;
  std::unique_ptr<detail::GaussianForm> post_form_;
  bool post_diag_ = false;
  std::uint64_t oracle_samples_ = 10000000;
};

inline std::unique_ptr<TailIntegralModel> make_tail1d() {
  Matrix one(1, 1);
  one(0, 0) = 1.0;
  return std::make_unique<TailIntegralModel>(1, one, one, 5.0);
}

inline Matrix load_matrix(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open matrix file '" + path + "'");
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!(in >> m(i, j))) throw config_error("matrix file '" + path + "' is truncated");
  return m;
}

inline std::unique_ptr<TailIntegralModel> make_tail5d(const std::string& sigma1_path) {
  return std::make_unique<TailIntegralModel>(5, load_matrix(sigma1_path, 5), Matrix::identity(5),
                                             3.0);
}

}  // namespace amci
