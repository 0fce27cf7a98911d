#pragma once

// Expectation estimators: plain importance sampling, self-normalized IS,
// the two- and three-proposal split estimators, the alpha/beta sample-reuse
// combination with its closed-form optimum, and the optimal-SNIS error
// bound.  All weight arithmetic stays in log space; signed quantities are
// carried as (sign, log|value|) pairs.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "amci/math.hpp"

namespace amci {

// Samples with log-weights log gamma(x) - log q(x) and, when the consumer
// needs them, target-function values f(x; theta) per sample.
struct WeightedBatch {
  std::vector<std::vector<double>> samples;  // optional; estimators only need the two below
  std::vector<double> log_weights;
  std::vector<double> f_values;              // empty when not required

  std::size_t size() const { return log_weights.size(); }

  void check(bool need_f) const {
    if (log_weights.empty()) throw std::invalid_argument("WeightedBatch: empty batch");
    if (need_f && f_values.size() != log_weights.size())
      throw std::invalid_argument("WeightedBatch: function values missing");
    for (double lw : log_weights)
      if (std::isnan(lw) || lw == pos_inf)
        throw std::invalid_argument("WeightedBatch: log-weight must be finite or -inf");
  }
};

namespace detail {

// Signed log of sum_i f_i * exp(lw_i).
inline SignedLog signed_weighted_sum(std::span<const double> f, std::span<const double> lw) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] > 0.0) pos.push_back(std::log(f[i]) + lw[i]);
    else if (f[i] < 0.0) neg.push_back(std::log(-f[i]) + lw[i]);
  }
  SignedLog p = pos.empty() ? SignedLog::zero() : SignedLog::from_log(log_sum_exp(pos));
  SignedLog n = neg.empty() ? SignedLog::zero() : SignedLog::from_log(log_sum_exp(neg));
  return p - n;
}

// log of the standard deviation of the mean of exp(log_terms).
inline double log_sd_of_mean(std::span<const double> log_terms) {
  const std::size_t n = log_terms.size();
  if (n < 2) return neg_inf;
  double m = neg_inf;
  for (double lt : log_terms) m = std::max(m, lt);
  if (m == neg_inf) return neg_inf;
  double mean = 0.0;
  for (double lt : log_terms) mean += std::exp(lt - m);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double lt : log_terms) {
    const double d = std::exp(lt - m) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);
  if (var == 0.0) return neg_inf;
  return m + 0.5 * std::log(var) - 0.5 * std::log(static_cast<double>(n));
}

inline double log_ess(std::span<const double> lw) {
  std::vector<double> twice(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) twice[i] = 2.0 * lw[i];
  const double denom = log_sum_exp(twice);
  if (denom == neg_inf) return neg_inf;
  return 2.0 * log_sum_exp(lw) - denom;
}

}  // namespace detail

// Plain importance sampling (1/N) sum f(x_n) w_n; weights are against the
// normalized target unless the caller wants unnormalized semantics.
inline double is_estimate(const WeightedBatch& batch) {
  batch.check(true);
  const SignedLog total = detail::signed_weighted_sum(batch.f_values, batch.log_weights);
  return total.scale(1.0 / static_cast<double>(batch.size())).value();
}

// Self-normalized importance sampling sum f w / sum w.  Weights are
// referenced to their maximum before anything touches them, which makes the
// estimate invariant to a common log-weight offset down to the last bit
// whenever the shifted weights come out identical.
inline double snis_estimate(const WeightedBatch& batch) {
  batch.check(true);
  double m = neg_inf;
  for (double lw : batch.log_weights) m = std::max(m, lw);
  if (m == neg_inf)
    throw numerical_error("snis_estimate: degenerate batch (all weights -inf)");
  std::vector<double> shifted(batch.log_weights.size());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] = batch.log_weights[i] - m;
  const double log_den = log_sum_exp(shifted);
  const SignedLog num = detail::signed_weighted_sum(batch.f_values, shifted);
  return (num / SignedLog::from_log(log_den)).value();
}

struct AmciEstimate {
  double value = 0.0;
  SignedLog e1_plus = SignedLog::zero();   // mean of f+ w over N
  SignedLog e1_minus = SignedLog::zero();  // mean of f- w over K
  SignedLog e2 = SignedLog::zero();        // mean of w over M
  std::size_t n = 0, k = 0, m = 0;
  double truncation_c = 0.0;
  // Empirical diagnostics: sd of the numerator/denominator estimators,
  // their ratio kappa = sigma1 / (|mu| sigma2), and effective sample sizes.
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double ess1 = 0.0;
  double ess2 = 0.0;
};

namespace detail {

inline SignedLog positive_mean(const WeightedBatch& b, const char* who) {
  std::vector<double> lt(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.f_values[i] < 0.0)
      throw std::invalid_argument(std::string(who) +
                                  ": negative f in a positive-part batch; use amci_positivised");
    lt[i] = b.f_values[i] > 0.0 ? std::log(b.f_values[i]) + b.log_weights[i] : neg_inf;
  }
  const double lse = log_sum_exp(lt);
  return SignedLog::from_log(lse - std::log(static_cast<double>(b.size())));
}

inline double log_sigma_of_fw_mean(const WeightedBatch& b) {
  std::vector<double> lt(b.size());
  for (std::size_t i = 0; i < b.size(); ++i)
    lt[i] = b.f_values[i] > 0.0 ? std::log(b.f_values[i]) + b.log_weights[i] : neg_inf;
  return log_sd_of_mean(lt);
}

inline AmciEstimate assemble_amci(const WeightedBatch* plus, const WeightedBatch* minus,
                                  const WeightedBatch& b2, double c) {
  AmciEstimate est;
  est.truncation_c = c;
  est.n = plus ? plus->size() : 0;
  est.k = minus ? minus->size() : 0;
  est.m = b2.size();

  if (plus) est.e1_plus = positive_mean(*plus, "amci");
  if (minus) est.e1_minus = positive_mean(*minus, "amci");
  const double lse2 = log_sum_exp(b2.log_weights);
  if (lse2 == neg_inf)
    throw numerical_error("amci: degenerate denominator (all q2 weights -inf)");
  est.e2 = SignedLog::from_log(lse2 - std::log(static_cast<double>(b2.size())));

  est.value = ((est.e1_plus - est.e1_minus) / est.e2).value() + c;

  double log_sigma1_sq = neg_inf;
  if (plus) {
    const double s = log_sigma_of_fw_mean(*plus);
    if (s != neg_inf) log_sigma1_sq = log_add_exp(log_sigma1_sq, 2.0 * s);
  }
  if (minus) {
    const double s = log_sigma_of_fw_mean(*minus);
    if (s != neg_inf) log_sigma1_sq = log_add_exp(log_sigma1_sq, 2.0 * s);
  }
  est.sigma1 = log_sigma1_sq == neg_inf ? 0.0 : std::exp(0.5 * log_sigma1_sq);
  const double ls2 = log_sd_of_mean(b2.log_weights);
  est.sigma2 = ls2 == neg_inf ? 0.0 : std::exp(ls2);
  if (est.value != c && est.sigma2 > 0.0) {
    // kappa is defined against the ratio part of the estimate.
    est.kappa = est.sigma1 / (std::abs(est.value - c) * est.sigma2);
  }
  if (plus) est.ess1 = std::exp(log_ess(plus->log_weights));
  est.ess2 = std::exp(log_ess(b2.log_weights));
  return est;
}

}  // namespace detail

// Two-proposal form: requires f >= 0 on the numerator batch.
inline AmciEstimate amci_two_term(const WeightedBatch& batch1, const WeightedBatch& batch2) {
  batch1.check(true);
  batch2.check(false);
  return detail::assemble_amci(&batch1, nullptr, batch2, 0.0);
}

// Three-proposal positivised form; `batch_plus`/`batch_minus` carry
// f+(x) = max(f - c, 0) and f-(x) = -min(f - c, 0) respectively, and c is
// added back onto the assembled ratio.  An empty minus batch is allowed
// when f >= c everywhere.
inline AmciEstimate amci_positivised(const WeightedBatch& batch_plus,
                                     const WeightedBatch& batch_minus,
                                     const WeightedBatch& batch2, double c = 0.0) {
  batch_plus.check(true);
  batch2.check(false);
  const bool have_minus = batch_minus.size() > 0;
  if (have_minus) batch_minus.check(true);
  return detail::assemble_amci(&batch_plus, have_minus ? &batch_minus : nullptr, batch2, c);
}

// ---------------------------------------------------------------------------
// Sample reuse: mu ~= (alpha E1(q1) + (1-alpha) E1(q2)) /
//                     (beta  E2(q1) + (1-beta)  E2(q2)).

struct CombinedAlphaBeta {
  double alpha = 1.0;
  double beta = 0.0;
  SignedLog e1_q1, e1_q2, e2_q1, e2_q2;
  std::size_t total_budget = 0;  // T = N + M
};

inline double combined_estimate(const CombinedAlphaBeta& cab) {
  if (!(cab.alpha >= 0.0 && cab.alpha <= 1.0 && cab.beta >= 0.0 && cab.beta <= 1.0))
    throw std::invalid_argument("combined_estimate: alpha, beta must lie in [0, 1]");
  const SignedLog num = cab.e1_q1.scale(cab.alpha) + cab.e1_q2.scale(1.0 - cab.alpha);
  const SignedLog den = cab.e2_q1.scale(cab.beta) + cab.e2_q2.scale(1.0 - cab.beta);
  if (den.is_zero()) throw numerical_error("combined_estimate: degenerate denominator");
  return (num / den).value();
}

struct AlphaBetaStar {
  double alpha = 1.0;
  double beta = 0.0;
  bool clamped = false;  // a zero variance forced a limiting value
};

// Closed-form optimum of the asymptotic variance with a total budget
// T = N + M: alpha* = N / ((T-N) Var_q1[f w] / Var_q2[f w*] + N), and the
// same form for beta* with the plain-weight variances.
inline AlphaBetaStar optimal_alpha_beta(double var_fw_q1, double var_fw_q2,
                                        double var_w_q1, double var_w_q2,
                                        double n, double t_total) {
  if (var_fw_q1 < 0.0 || var_fw_q2 < 0.0 || var_w_q1 < 0.0 || var_w_q2 < 0.0)
    throw std::invalid_argument("optimal_alpha_beta: negative variance");
  if (!(n > 0.0 && n < t_total))
    throw std::invalid_argument("optimal_alpha_beta: need 0 < N < T");
  const double m = t_total - n;
  AlphaBetaStar out;
  const auto solve = [&](double v1, double v2) -> double {
    if (v2 == 0.0) {
      out.clamped = true;
      return v1 == 0.0 ? n / t_total : 0.0;  // both zero: proportional split
    }
    if (v1 == 0.0) out.clamped = true;       // limit alpha* -> 1
    return n / (m * (v1 / v2) + n);
  };
  out.alpha = solve(var_fw_q1, var_fw_q2);
  out.beta = solve(var_w_q1, var_w_q2);
  return out;
}

// Asymptotic variance of the combined estimator (correlation term dropped),
// up to the positive constant 1/E2^2; the numerical minimizer in the tests
// and the closed form above both target this expression.
inline double combined_variance_expression(double alpha, double beta, double mu,
                                           double var_fw_q1, double var_fw_q2,
                                           double var_w_q1, double var_w_q2,
                                           double n, double t_total) {
  const double m = t_total - n;
  const double s1 = alpha * alpha / n * var_fw_q1 + (1.0 - alpha) * (1.0 - alpha) / m * var_fw_q2;
  const double s2 = beta * beta / n * var_w_q1 + (1.0 - beta) * (1.0 - beta) / m * var_w_q2;
  return s1 + mu * mu * s2;
}

// ---------------------------------------------------------------------------

// Lower bound on the SNIS mean squared error for the optimal proposal:
// (E_pi |f - mu|)^2 / N.
inline double snis_bound_from_mad(double mean_abs_dev, double n_samples) {
  return mean_abs_dev * mean_abs_dev / n_samples;
}

// For indicator targets E|f - mu| has the closed form 2 mu (1 - mu).
inline double indicator_mean_abs_dev(double mu) { return 2.0 * mu * (1.0 - mu); }

// ---------------------------------------------------------------------------

// Relative mean squared error over replicated estimates of a fixed (y,
// theta): delta-hat = (mu - mu-hat)^2 / mu^2 per replicate.
struct RemseStats {
  double delta_mean = 0.0;  // estimate of delta(y, theta)
  double delta_se = 0.0;    // standard error over replicates
  double mse_mean = 0.0;
  bool absolute_fallback = false;  // mu_truth == 0: delta reported as MSE
};

inline RemseStats remse(std::span<const double> estimates, double mu_truth) {
  if (estimates.size() < 2) throw std::invalid_argument("remse: need at least 2 replicates");
  RemseStats out;
  out.absolute_fallback = (mu_truth == 0.0);
  const double denom = out.absolute_fallback ? 1.0 : mu_truth * mu_truth;
  std::vector<double> deltas(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double err = mu_truth - estimates[i];
    out.mse_mean += err * err;
    deltas[i] = err * err / denom;
    out.delta_mean += deltas[i];
  }
  const double r = static_cast<double>(estimates.size());
  out.mse_mean /= r;
  out.delta_mean /= r;
  double var = 0.0;
  for (double d : deltas) {
    const double dd = d - out.delta_mean;
    var += dd * dd;
  }
  out.delta_se = std::sqrt(var / (r - 1.0) / r);
  return out;
}

// Quantile with linear interpolation, matching the convention used for the
// cross-datapoint medians and 25%/75% bands.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * (static_cast<double>(values.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

}  // namespace amci
