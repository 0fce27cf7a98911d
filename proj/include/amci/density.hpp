#pragma once

// Probability families used across the models and proposals: log_pdf,
// sampler, and (1-D) CDF per family.  Parameter validation happens at
// construction; evaluation never throws for out-of-support points and
// returns -inf instead.

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "amci/linalg.hpp"
#include "amci/math.hpp"
#include "amci/rng.hpp"

namespace amci {

struct Normal {
  double mean = 0.0;
  double stddev = 1.0;
};

struct HalfNormal {
  double loc = 0.0;     // support is [loc, inf)
  double stddev = 1.0;
};

struct TruncatedNormal {
  double mean = 0.0;
  double stddev = 1.0;
  double lower = neg_inf;
  double upper = pos_inf;
};

struct Gamma {
  double shape = 1.0;   // k
  double scale = 1.0;   // theta; mean = k * theta
};

struct Beta {
  double alpha = 1.0;
  double beta = 1.0;
};

struct Uniform {
  double lower = 0.0;
  double upper = 1.0;
};

class Density;

struct Mixture {
  std::vector<double> weights;
  std::vector<Density> components;
};

struct MultivariateNormal {
  std::vector<double> mean;
  Matrix covariance;
};

namespace detail {

// Gamma(k, 1) draw, Marsaglia-Tsang; boosted for k < 1.
inline double gamma_standard(double k, RngStream& rng) {
  if (k < 1.0) {
    const double u = rng.uniform();
    return gamma_standard(k + 1.0, rng) * std::pow(u, 1.0 / k);
  }
  const double d = k - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z, v;
    do {
      z = rng.normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
  }
}

// Normalization mass of a truncated standard-normal interval, computed in
// whichever tail representation avoids cancellation.
inline double truncnorm_mass(double alpha, double beta) {
  if (alpha >= 0.0) return normal_sf(alpha) - normal_sf(beta);
  if (beta <= 0.0) return normal_cdf(beta) - normal_cdf(alpha);
  return normal_cdf(beta) - normal_cdf(alpha);
}

// Inverse-CDF draw from a standard normal truncated to [alpha, beta].
// Bounds on one side of the mode are handled entirely in survival space so
// that truncations far into a tail never suffer cancellation.
inline double truncnorm_sample_std(double alpha, double beta, RngStream& rng) {
  if (beta <= 0.0) {  // mirror into the right tail
    double u = rng.uniform();
    const double qa = normal_sf(-beta);
    const double qb = std::isinf(alpha) ? 0.0 : normal_sf(-alpha);
    return -normal_tail_quantile(qa + u * (qb - qa));
  }
  const double u = rng.uniform();
  if (alpha >= 0.0) {
    const double qa = normal_sf(alpha);
    const double qb = std::isinf(beta) ? 0.0 : normal_sf(beta);
    return normal_tail_quantile(qa + u * (qb - qa));
  }
  // alpha < 0 < beta: split the mass at zero.
  const double mass_left = 0.5 - normal_cdf(alpha);
  const double mass_right = 0.5 - (std::isinf(beta) ? 0.0 : normal_sf(beta));
  const double m = u * (mass_left + mass_right);
  if (m < mass_left) return -normal_tail_quantile(0.5 - (mass_left - m));
  return normal_tail_quantile(0.5 - (m - mass_left));
}

}  // namespace detail

// Tagged-union density.  1-D families expose cdf(); the multivariate
// normal caches its Cholesky factor at construction.
class Density {
 public:
  using Family = std::variant<Normal, HalfNormal, TruncatedNormal, Gamma, Beta,
                              Uniform, Mixture, MultivariateNormal>;

  Density(Normal f) : family_(validate(f)) {}
  Density(HalfNormal f) : family_(validate(f)) {}
  Density(TruncatedNormal f) : family_(validate(f)) {}
  Density(Gamma f) : family_(validate(f)) {}
  Density(Beta f) : family_(validate(f)) {}
  Density(Uniform f) : family_(validate(f)) {}
  Density(Mixture f) : family_(validate(std::move(f))) {}
  Density(MultivariateNormal f) : family_(validate(std::move(f))) { cache_cholesky(); }

  const Family& family() const { return family_; }

  std::size_t dim() const {
    if (const auto* mvn = std::get_if<MultivariateNormal>(&family_)) return mvn->mean.size();
    return 1;
  }

  double log_pdf(double x) const { return log_pdf(std::span<const double>(&x, 1)); }

  double log_pdf(std::span<const double> x) const {
    if (x.size() != dim()) throw std::invalid_argument("log_pdf: dimension mismatch");
    return std::visit([&](const auto& f) { return log_pdf_impl(f, x); }, family_);
  }

  double sample1(RngStream& rng) const {
    if (dim() != 1) throw std::invalid_argument("sample1: multivariate density");
    return sample(rng)[0];
  }

  std::vector<double> sample(RngStream& rng) const {
    return std::visit([&](const auto& f) { return sample_impl(f, rng); }, family_);
  }

  double cdf(double x) const {
    return std::visit([&](const auto& f) { return cdf_impl(f, x); }, family_);
  }

  // Mean where a closed form exists (1-D families); used by tests.
  double mean() const {
    return std::visit([&](const auto& f) { return mean_impl(f); }, family_);
  }

  // Finite interval carrying all but ~1e-14 of the mass; quadrature hook.
  std::pair<double, double> support_window() const {
    return std::visit([&](const auto& f) { return window_impl(f); }, family_);
  }

 private:
  static Normal validate(Normal f) {
    if (!(f.stddev > 0.0)) throw config_error("Normal: stddev must be positive");
    return f;
  }
  static HalfNormal validate(HalfNormal f) {
    if (!(f.stddev > 0.0)) throw config_error("HalfNormal: stddev must be positive");
    return f;
  }
  static TruncatedNormal validate(TruncatedNormal f) {
    if (!(f.stddev > 0.0)) throw config_error("TruncatedNormal: stddev must be positive");
    if (!(f.lower < f.upper)) throw config_error("TruncatedNormal: empty interval");
    return f;
  }
  static Gamma validate(Gamma f) {
    if (!(f.shape > 0.0) || !(f.scale > 0.0)) throw config_error("Gamma: nonpositive parameter");
    return f;
  }
  static Beta validate(Beta f) {
    if (!(f.alpha > 0.0) || !(f.beta > 0.0)) throw config_error("Beta: nonpositive parameter");
    return f;
  }
  static Uniform validate(Uniform f) {
    if (!(f.lower < f.upper)) throw config_error("Uniform: empty interval");
    return f;
  }
  static Mixture validate(Mixture f) {
    if (f.weights.size() != f.components.size() || f.weights.empty())
      throw config_error("Mixture: weights/components mismatch");
    double total = 0.0;
    for (double w : f.weights) {
      if (!(w >= 0.0)) throw config_error("Mixture: negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw config_error("Mixture: weights must sum to 1");
    return f;
  }
  static MultivariateNormal validate(MultivariateNormal f) {
    if (f.covariance.rows() != f.mean.size() || f.covariance.cols() != f.mean.size())
      throw config_error("MultivariateNormal: covariance shape mismatch");
    for (std::size_t i = 0; i < f.mean.size(); ++i)
      for (std::size_t j = i + 1; j < f.mean.size(); ++j)
        if (std::abs(f.covariance(i, j) - f.covariance(j, i)) > 1e-12)
          throw config_error("MultivariateNormal: covariance not symmetric");
    return f;
  }

  void cache_cholesky() {
    const auto& mvn = std::get<MultivariateNormal>(family_);
    chol_ = std::make_shared<Matrix>(cholesky(mvn.covariance));  // throws if not PD
    double ld = 0.0;
    for (std::size_t i = 0; i < chol_->rows(); ++i) ld += 2.0 * std::log((*chol_)(i, i));
    log_det_cov_ = ld;
  }

  // --- log_pdf ---
  static double log_pdf_impl(const Normal& f, std::span<const double> x) {
    const double z = (x[0] - f.mean) / f.stddev;
    return normal_logpdf(z) - std::log(f.stddev);
  }
  static double log_pdf_impl(const HalfNormal& f, std::span<const double> x) {
    if (x[0] < f.loc) return neg_inf;
    const double z = (x[0] - f.loc) / f.stddev;
    return log_2 + normal_logpdf(z) - std::log(f.stddev);
  }
  static double log_pdf_impl(const TruncatedNormal& f, std::span<const double> x) {
    if (x[0] < f.lower || x[0] > f.upper) return neg_inf;
    const double z = (x[0] - f.mean) / f.stddev;
    const double alpha = (f.lower - f.mean) / f.stddev;
    const double beta = (f.upper - f.mean) / f.stddev;
    return normal_logpdf(z) - std::log(f.stddev) -
           std::log(detail::truncnorm_mass(alpha, beta));
  }
  static double log_pdf_impl(const Gamma& f, std::span<const double> x) {
    if (x[0] <= 0.0) return neg_inf;
    return (f.shape - 1.0) * std::log(x[0]) - x[0] / f.scale - std::lgamma(f.shape) -
           f.shape * std::log(f.scale);
  }
  static double log_pdf_impl(const Beta& f, std::span<const double> x) {
    if (x[0] <= 0.0 || x[0] >= 1.0) return neg_inf;
    const double lbeta = std::lgamma(f.alpha) + std::lgamma(f.beta) - std::lgamma(f.alpha + f.beta);
    return (f.alpha - 1.0) * std::log(x[0]) + (f.beta - 1.0) * std::log1p(-x[0]) - lbeta;
  }
  static double log_pdf_impl(const Uniform& f, std::span<const double> x) {
    if (x[0] < f.lower || x[0] > f.upper) return neg_inf;
    return -std::log(f.upper - f.lower);
  }
  static double log_pdf_impl(const Mixture& f, std::span<const double> x) {
    std::vector<double> terms(f.components.size());
    for (std::size_t i = 0; i < f.components.size(); ++i)
      terms[i] = f.weights[i] > 0.0
                     ? std::log(f.weights[i]) + f.components[i].log_pdf(x)
                     : neg_inf;
    return log_sum_exp(terms);
  }
  double log_pdf_impl(const MultivariateNormal& f, std::span<const double> x) const {
    const std::size_t n = f.mean.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - f.mean[i];
    const std::vector<double> y = forward_solve(*chol_, diff);
    double quad = 0.0;
    for (double v : y) quad += v * v;
    return -0.5 * (static_cast<double>(n) * log_2pi + log_det_cov_ + quad);
  }

  // --- sample ---
  static std::vector<double> sample_impl(const Normal& f, RngStream& rng) {
    return {f.mean + f.stddev * rng.normal()};
  }
  static std::vector<double> sample_impl(const HalfNormal& f, RngStream& rng) {
    return {f.loc + f.stddev * std::abs(rng.normal())};
  }
  static std::vector<double> sample_impl(const TruncatedNormal& f, RngStream& rng) {
    const double alpha = (f.lower - f.mean) / f.stddev;
    const double beta = (f.upper - f.mean) / f.stddev;
    return {f.mean + f.stddev * detail::truncnorm_sample_std(alpha, beta, rng)};
  }
  static std::vector<double> sample_impl(const Gamma& f, RngStream& rng) {
    return {f.scale * detail::gamma_standard(f.shape, rng)};
  }
  static std::vector<double> sample_impl(const Beta& f, RngStream& rng) {
    const double g1 = detail::gamma_standard(f.alpha, rng);
    const double g2 = detail::gamma_standard(f.beta, rng);
    return {g1 / (g1 + g2)};
  }
  static std::vector<double> sample_impl(const Uniform& f, RngStream& rng) {
    return {rng.uniform(f.lower, f.upper)};
  }
  static std::vector<double> sample_impl(const Mixture& f, RngStream& rng) {
    double u = rng.uniform();
    std::size_t idx = f.components.size() - 1;
    for (std::size_t i = 0; i < f.weights.size(); ++i) {
      if (u < f.weights[i]) {
        idx = i;
        break;
      }
      u -= f.weights[i];
    }
    return f.components[idx].sample(rng);
  }
  std::vector<double> sample_impl(const MultivariateNormal& f, RngStream& rng) const {
    const std::size_t n = f.mean.size();
    std::vector<double> z(n);
    for (double& v : z) v = rng.normal();
    std::vector<double> x(f.mean.begin(), f.mean.end());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) x[i] += (*chol_)(i, j) * z[j];
    return x;
  }

  // --- cdf (1-D only) ---
  static double cdf_impl(const Normal& f, double x) {
    return normal_cdf((x - f.mean) / f.stddev);
  }
  static double cdf_impl(const HalfNormal& f, double x) {
    if (x <= f.loc) return 0.0;
    return 2.0 * normal_cdf((x - f.loc) / f.stddev) - 1.0;
  }
  static double cdf_impl(const TruncatedNormal& f, double x) {
    if (x <= f.lower) return 0.0;
    if (x >= f.upper) return 1.0;
    const double alpha = (f.lower - f.mean) / f.stddev;
    const double beta = (f.upper - f.mean) / f.stddev;
    const double z = (x - f.mean) / f.stddev;
    if (alpha >= 0.0)
      return (normal_sf(alpha) - normal_sf(z)) / detail::truncnorm_mass(alpha, beta);
    return (normal_cdf(z) - normal_cdf(alpha)) / detail::truncnorm_mass(alpha, beta);
  }
  static double cdf_impl(const Gamma& f, double x) {
    return x <= 0.0 ? 0.0 : gamma_p(f.shape, x / f.scale);
  }
  static double cdf_impl(const Beta& f, double x) { return beta_inc(f.alpha, f.beta, x); }
  static double cdf_impl(const Uniform& f, double x) {
    if (x <= f.lower) return 0.0;
    if (x >= f.upper) return 1.0;
    return (x - f.lower) / (f.upper - f.lower);
  }
  static double cdf_impl(const Mixture& f, double x) {
    double c = 0.0;
    for (std::size_t i = 0; i < f.components.size(); ++i)
      c += f.weights[i] * f.components[i].cdf(x);
    return c;
  }
  static double cdf_impl(const MultivariateNormal&, double) {
    throw std::invalid_argument("cdf: multivariate density");
  }

  // --- mean ---
  static double mean_impl(const Normal& f) { return f.mean; }
  static double mean_impl(const HalfNormal& f) {
    return f.loc + f.stddev * std::sqrt(2.0 / M_PI);
  }
  static double mean_impl(const TruncatedNormal& f) {
    const double alpha = (f.lower - f.mean) / f.stddev;
    const double beta = (f.upper - f.mean) / f.stddev;
    const double z = detail::truncnorm_mass(alpha, beta);
    const double pa = std::isinf(alpha) ? 0.0 : std::exp(normal_logpdf(alpha));
    const double pb = std::isinf(beta) ? 0.0 : std::exp(normal_logpdf(beta));
    return f.mean + f.stddev * (pa - pb) / z;
  }
  static double mean_impl(const Gamma& f) { return f.shape * f.scale; }
  static double mean_impl(const Beta& f) { return f.alpha / (f.alpha + f.beta); }
  static double mean_impl(const Uniform& f) { return 0.5 * (f.lower + f.upper); }
  static double mean_impl(const Mixture& f) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.components.size(); ++i)
      m += f.weights[i] * f.components[i].mean();
    return m;
  }
  static double mean_impl(const MultivariateNormal&) {
    throw std::invalid_argument("mean: multivariate density");
  }

  // --- support window ---
  static std::pair<double, double> window_impl(const Normal& f) {
    return {f.mean - 9.0 * f.stddev, f.mean + 9.0 * f.stddev};
  }
  static std::pair<double, double> window_impl(const HalfNormal& f) {
    return {f.loc, f.loc + 9.0 * f.stddev};
  }
  static std::pair<double, double> window_impl(const TruncatedNormal& f) {
    const double lo = std::isinf(f.lower) ? f.mean - 9.0 * f.stddev : f.lower;
    const double hi = std::isinf(f.upper) ? std::max(f.mean, f.lower) + 9.0 * f.stddev : f.upper;
    return {lo, hi};
  }
  static std::pair<double, double> window_impl(const Gamma& f) {
    const double sd = std::sqrt(f.shape) * f.scale;
    return {0.0, f.shape * f.scale + 14.0 * sd + 40.0 * f.scale};
  }
  static std::pair<double, double> window_impl(const Beta&) { return {0.0, 1.0}; }
  static std::pair<double, double> window_impl(const Uniform& f) {
    return {f.lower, f.upper};
  }
  static std::pair<double, double> window_impl(const Mixture& f) {
    auto w = f.components[0].support_window();
    for (const Density& c : f.components) {
      const auto cw = c.support_window();
      w.first = std::min(w.first, cw.first);
      w.second = std::max(w.second, cw.second);
    }
    return w;
  }
  static std::pair<double, double> window_impl(const MultivariateNormal&) {
    throw std::invalid_argument("support_window: multivariate density");
  }

  Family family_;
  std::shared_ptr<Matrix> chol_;  // MultivariateNormal only
  double log_det_cov_ = 0.0;
};

}  // namespace amci
