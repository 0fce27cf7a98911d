#pragma once

// Tumor-growth treatment model.  Latents x = (c0, epsilon) with priors
// c0 ~ Gamma(k=25, theta=20) and epsilon ~ Beta(5, 10); the tumor evolves
// under the coupled ODE
//   dc/dt = -lambda c log(c/K) - epsilon c,   dK/dt = phi c - psi K c^(2/3)
// from (c0, K0=700).  Noisy size measurements are taken at t = 0 and t = 5
// and the target is the expected treatment loss of the size at t = 100.
//
// The observation Gamma(k = c^2/1e4, theta = c/1e4) is applied with theta
// as a rate, giving mean c and variance 1e4: the observations are noisy
// measurements of the true sizes.  Read as a scale it would give mean
// c^3/1e8, which contradicts that.

#include <cmath>
#include <memory>
#include <mutex>
#include <thread>

#include "amci/estimators.hpp"
#include "amci/model.hpp"

namespace amci {

struct TumorOdeParams {
  double phi = 5.85;
  double psi = 0.00873;
  double lambda = 0.1923;
  double k0 = 700.0;
};

namespace detail {

struct TumorState {
  double c;
  double k;
};

inline TumorState tumor_deriv(const TumorOdeParams& p, double eps, const TumorState& s) {
  return {-p.lambda * s.c * std::log(s.c / s.k) - eps * s.c,
          p.phi * s.c - p.psi * s.k * std::cbrt(s.c * s.c)};
}

// Same system in u = log c, used when c falls below the positivity floor.
inline TumorState tumor_deriv_logc(const TumorOdeParams& p, double eps, double u, double k) {
  const double c = std::exp(u);
  return {-p.lambda * (u - std::log(k)) - eps, p.phi * c - p.psi * k * std::cbrt(c * c)};
}

inline constexpr double kPositivityFloor = 1e-6;

inline TumorState rk4_step(const TumorOdeParams& p, double eps, TumorState s, double h) {
  if (s.c < kPositivityFloor) {
    double u = std::log(s.c);
    const TumorState k1 = tumor_deriv_logc(p, eps, u, s.k);
    const TumorState k2 = tumor_deriv_logc(p, eps, u + 0.5 * h * k1.c, s.k + 0.5 * h * k1.k);
    const TumorState k3 = tumor_deriv_logc(p, eps, u + 0.5 * h * k2.c, s.k + 0.5 * h * k2.k);
    const TumorState k4 = tumor_deriv_logc(p, eps, u + h * k3.c, s.k + h * k3.k);
    u += h / 6.0 * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c);
    const double k = s.k + h / 6.0 * (k1.k + 2.0 * k2.k + 2.0 * k3.k + k4.k);
    return {std::exp(u), k};
  }
  const TumorState k1 = tumor_deriv(p, eps, s);
  const TumorState k2 = tumor_deriv(p, eps, {s.c + 0.5 * h * k1.c, s.k + 0.5 * h * k1.k});
  const TumorState k3 = tumor_deriv(p, eps, {s.c + 0.5 * h * k2.c, s.k + 0.5 * h * k2.k});
  const TumorState k4 = tumor_deriv(p, eps, {s.c + h * k3.c, s.k + h * k3.k});
  return {s.c + h / 6.0 * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c),
          s.k + h / 6.0 * (k1.k + 2.0 * k2.k + 2.0 * k3.k + k4.k)};
}

}  // namespace detail

// Fixed-step RK4 integration of the tumor system to time t (no step
// monitor; exposed for the convergence-order checks).
inline double tumor_rk4_fixed(const TumorOdeParams& p, double c0, double eps, double t,
                              double step) {
  detail::TumorState s{c0, p.k0};
  const long n = std::lround(std::ceil(t / step - 1e-12));
  for (long i = 0; i < n; ++i) {
    const double h = std::min(step, t - static_cast<double>(i) * step);
    s = detail::rk4_step(p, eps, s, h);
    if (!std::isfinite(s.c) || !std::isfinite(s.k))
      throw numerical_error("tumor ODE: non-finite state during integration");
  }
  return s.c;
}

// One fixed-step pass to t_end recording the size at t_mid on the way;
// t_mid and t_end must be multiples of the step.  Used by the oracle cache
// where millions of trajectories make the step monitor too costly (the
// fixed step is validated once by the convergence checks).
inline std::pair<double, double> tumor_rk4_path(const TumorOdeParams& p, double c0, double eps,
                                                double t_mid, double t_end, double step) {
  detail::TumorState s{c0, p.k0};
  const long n = std::lround(t_end / step);
  const long mid = std::lround(t_mid / step);
  double c_mid = c0;
  for (long i = 0; i < n; ++i) {
    s = detail::rk4_step(p, eps, s, step);
    if (i + 1 == mid) c_mid = s.c;
  }
  if (!std::isfinite(s.c) || !std::isfinite(s.k))
    throw numerical_error("tumor ODE: non-finite state during integration");
  return {c_mid, s.c};
}

// RK4 with a step-doubling monitor: integrates at h and h/2 and refines
// until the two agree to relative 1e-6, throwing after the refinement cap.
inline double simulate_tumor(const TumorOdeParams& p, double c0, double eps, double t,
                             double step = 0.05) {
  if (!(c0 > 0.0)) throw std::invalid_argument("simulate_tumor: c0 must be positive");
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("simulate_tumor: eps outside [0, 1]");
  if (t == 0.0) return c0;
  double h = step;
  double coarse = tumor_rk4_fixed(p, c0, eps, t, h);
  for (int refine = 0; refine < 6; ++refine) {
    const double fine = tumor_rk4_fixed(p, c0, eps, t, 0.5 * h);
    if (std::abs(fine - coarse) <= 1e-6 * std::max(std::abs(fine), 1.0)) return fine;
    h *= 0.5;
    coarse = fine;
  }
  throw numerical_error("simulate_tumor: step refinement cap reached without convergence");
}

// Treatment loss on the final size; strictly inside (0, 1).
inline double cancer_loss(double c) {
  return 0.5 * (1.0 - 2e-8) * (std::tanh(-(c - 300.0) / 150.0) + 1.0) + 1e-8;
}

class CancerModel : public Model {
 public:
  CancerModel() = default;

  std::string name() const override { return "cancer"; }
  std::size_t x_dim() const override { return 2; }
  std::size_t y_dim() const override { return 2; }
  std::size_t theta_dim() const override { return 0; }

  const TumorOdeParams& ode() const { return ode_; }

  // True sizes at the observation time t = 5 and the horizon t = 100,
  // from one integration pass.
  std::pair<double, double> simulate_sizes(double c0, double eps) const {
    const double c5 = simulate_tumor(ode_, c0, eps, 5.0);
    const double c100 = simulate_tumor(ode_, c0, eps, 100.0);
    return {c5, c100};
  }

  // Observation model: c'_t ~ Gamma(shape c^2/1e4, rate c/1e4).
  static Density observation_density(double c_true) {
    return Density(Gamma{c_true * c_true / 1e4, 1e4 / c_true});
  }

  std::pair<std::vector<double>, std::vector<double>> sample_joint(RngStream& rng) const override {
    const double c0 = prior_c0_.sample1(rng);
    const double eps = prior_eps_.sample1(rng);
    std::vector<double> x = {c0, eps};
    return {x, sample_y_given_x(x, rng)};
  }

  std::vector<double> sample_y_given_x(std::span<const double> x, RngStream& rng) const override {
    const double c5 = simulate_tumor(ode_, x[0], x[1], 5.0);
    return {observation_density(x[0]).sample1(rng), observation_density(c5).sample1(rng)};
  }

  std::vector<double> sample_theta(RngStream&) const override { return {}; }

  double log_prior_x(std::span<const double> x) const override {
    return prior_c0_.log_pdf(x[0]) + prior_eps_.log_pdf(x[1]);
  }

  // Inner-loop evaluations integrate at the fixed validated step; the
  // monitored simulate_tumor stays the public entry point.
  double log_likelihood(std::span<const double> x, std::span<const double> y) const {
    if (!(x[0] > 0.0) || !(x[1] >= 0.0 && x[1] <= 1.0)) return neg_inf;
    const double c5 = tumor_rk4_fixed(ode_, x[0], x[1], 5.0, 0.05);
    return observation_density(x[0]).log_pdf(y[0]) + observation_density(c5).log_pdf(y[1]);
  }

  double log_joint(std::span<const double> x, std::span<const double> y) const override {
    const double lp = log_prior_x(x);
    if (lp == neg_inf) return neg_inf;
    return lp + log_likelihood(x, y);
  }

  double f(std::span<const double> x, std::span<const double>) const override {
    return cancer_loss(tumor_rk4_fixed(ode_, x[0], x[1], 100.0, 0.05));
  }

  // --- ground truth: SNIS with the prior as proposal ----------------------

  // Prior draws with their f values and true sizes, shared across
  // datapoints (weights depend on y only through the observation
  // densities).  Build once; afterwards the cache is read-only.
  struct TruthCache {
    std::vector<double> c0, eps, c5, f;
    std::size_t size() const { return c0.size(); }
  };

  void prepare_truth_cache(std::uint64_t n, RngStream rng, std::size_t jobs = 1) const {
    auto cache = std::make_shared<TruthCache>();
    cache->c0.resize(n);
    cache->eps.resize(n);
    cache->c5.resize(n);
    cache->f.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      cache->c0[i] = prior_c0_.sample1(rng);
      cache->eps[i] = prior_eps_.sample1(rng);
    }
    const auto worker = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto [c5, c100] = tumor_rk4_path(ode_, cache->c0[i], cache->eps[i], 5.0, 100.0, 0.05);
        cache->c5[i] = c5;
        cache->f[i] = cancer_loss(c100);
      }
    };
    if (jobs <= 1) {
      worker(0, n);
    } else {
      std::vector<std::thread> pool;
      const std::size_t chunk = (n + jobs - 1) / jobs;
      for (std::size_t j = 0; j < jobs; ++j)
        pool.emplace_back(worker, std::min<std::size_t>(j * chunk, n),
                          std::min<std::size_t>((j + 1) * chunk, n));
      for (auto& th : pool) th.join();
    }
    truth_cache_ = std::move(cache);
  }

  GroundTruth truth(std::span<const double> y, std::span<const double>,
                    RngStream& rng) const override {
    std::shared_ptr<const TruthCache> cache = truth_cache_;
    if (!cache) {
      prepare_truth_cache(oracle_samples_, rng.fork(0xCAFE));
      cache = truth_cache_;
    }
    const std::size_t n = cache->size();
    std::vector<double> lw(n);
    for (std::size_t i = 0; i < n; ++i)
      lw[i] = observation_density(cache->c0[i]).log_pdf(y[0]) +
              observation_density(cache->c5[i]).log_pdf(y[1]);
    double m = neg_inf;
    for (double v : lw) m = std::max(m, v);
    if (m == neg_inf) throw numerical_error("cancer truth: degenerate weights for datapoint");
    double num = 0.0, den = 0.0;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = std::exp(lw[i] - m);
      num += cache->f[i] * w[i];
      den += w[i];
    }
    const double mu = num / den;
    // Delete-one jackknife over the ratio.
    double jk_mean = 0.0;
    std::vector<double> jk(n);
    for (std::size_t i = 0; i < n; ++i) {
      jk[i] = (num - cache->f[i] * w[i]) / (den - w[i]);
      jk_mean += jk[i];
    }
    jk_mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : jk) var += (v - jk_mean) * (v - jk_mean);
    const double se = std::sqrt(var * (static_cast<double>(n) - 1.0) / static_cast<double>(n));
    return {mu, GroundTruth::Method::snis_oracle, se, n};
  }

  double mean_abs_dev(std::span<const double> y, std::span<const double>,
                      const GroundTruth& truth, RngStream& rng) const override {
    std::shared_ptr<const TruthCache> cache = truth_cache_;
    if (!cache) {
      prepare_truth_cache(oracle_samples_, rng.fork(0xCAFE));
      cache = truth_cache_;
    }
    const std::size_t n = cache->size();
    double m = neg_inf;
    std::vector<double> lw(n);
    for (std::size_t i = 0; i < n; ++i) {
      lw[i] = observation_density(cache->c0[i]).log_pdf(y[0]) +
              observation_density(cache->c5[i]).log_pdf(y[1]);
      m = std::max(m, lw[i]);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = std::exp(lw[i] - m);
      num += std::abs(cache->f[i] - truth.value) * w;
      den += w;
    }
    return num / den;
  }

  void set_oracle_samples(std::uint64_t n) { oracle_samples_ = n; }
  std::shared_ptr<const TruthCache> truth_cache() const { return truth_cache_; }

  // --- proposals -----------------------------------------------------------

  std::unique_ptr<ConditionalProposal> make_proposal(ProposalRole, RngStream& rng,
                                                     const ProposalArch& arch = {}) const override {
    // Gamma head for c0, Beta head for epsilon; theta is empty so both
    // roles condition on y alone.
    const std::vector<std::size_t> hidden =
        arch.hidden.empty() ? std::vector<std::size_t>{128, 128, 128} : arch.hidden;
    return std::make_unique<ParametricProposal>(
        std::vector<CoordFamily>{CoordFamily::Gamma, CoordFamily::Beta}, y_dim(), hidden,
        Activation::Tanh, rng);
  }

  TrainingDefaults training_defaults(ProposalRole) const override {
    TrainingDefaults td;
    td.learning_rate = 1e-4;
    td.batch_size = 256;
    td.max_steps = 6000;
    td.importance_sampled_q1 = false;  // x is generated from the prior
    return td;
  }

 private:
  TumorOdeParams ode_;
  Density prior_c0_{Gamma{25.0, 20.0}};
  Density prior_eps_{Beta{5.0, 10.0}};
  std::uint64_t oracle_samples_ = 10000000;
  mutable std::shared_ptr<const TruthCache> truth_cache_;
};

}  // namespace amci
