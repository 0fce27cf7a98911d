#pragma once

// Log-domain arithmetic, normal CDF/quantile, incomplete gamma/beta and
// adaptive quadrature.  Everything downstream (densities, estimators,
// training) routes its weight arithmetic through this header so that raw
// log-weights are never exponentiated before a max-shifted reduction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "amci/errors.hpp"

namespace amci {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double pos_inf = std::numeric_limits<double>::infinity();
inline constexpr double log_2pi = 1.8378770664093454835606594728112353;
inline constexpr double log_2 = 0.6931471805599453094172321214581766;
inline constexpr double sqrt_2 = 1.4142135623730950488016887242096981;

// log(1 - exp(x)) for x < 0, stable near both ends.
inline double log1mexp(double x) {
  if (x >= 0.0) return x == 0.0 ? neg_inf : std::numeric_limits<double>::quiet_NaN();
  return x > -log_2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

// Max-shifted log(sum exp(v_i)).  Empty input is a usage error; an input
// of all -inf is a legitimate empty mass and returns -inf.
inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("log_sum_exp: empty sequence");
  double m = neg_inf;
  for (double v : values) m = std::max(m, v);
  if (m == neg_inf) return neg_inf;
  if (values.size() == 1) return values[0];
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

inline double log_sum_exp(std::initializer_list<double> values) {
  return log_sum_exp(std::span<const double>(values.begin(), values.size()));
}

inline double log_add_exp(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// Signed quantity carried as (sign, log|value|).  Ratio estimators assemble
// E1+ - E1- and numerator/denominator ratios from these without leaving
// log space.
struct SignedLog {
  int sign = 0;          // -1, 0, +1
  double lg = neg_inf;   // log |value|; -inf when sign == 0

  static SignedLog zero() { return {0, neg_inf}; }
  static SignedLog from_log(double lg_abs, int sign = +1) {
    if (lg_abs == neg_inf) return zero();
    return {sign, lg_abs};
  }
  static SignedLog from_value(double v) {
    if (v == 0.0) return zero();
    return {v > 0.0 ? +1 : -1, std::log(std::abs(v))};
  }

  double value() const { return sign == 0 ? 0.0 : sign * std::exp(lg); }
  bool is_zero() const { return sign == 0; }

  SignedLog negate() const { return {-sign, lg}; }

  // Multiply by exp(log_factor) (a positive factor given in log space).
  SignedLog scale_log(double log_factor) const {
    if (sign == 0) return zero();
    return {sign, lg + log_factor};
  }
  // Multiply by a plain scalar.
  SignedLog scale(double factor) const {
    if (factor == 0.0 || sign == 0) return zero();
    int s = factor > 0.0 ? sign : -sign;
    return {s, lg + std::log(std::abs(factor))};
  }

  friend SignedLog operator+(SignedLog a, SignedLog b) {
    if (a.sign == 0) return b;
    if (b.sign == 0) return a;
    if (a.sign == b.sign) return {a.sign, log_add_exp(a.lg, b.lg)};
    if (a.lg == b.lg) return zero();
    const SignedLog& big = a.lg > b.lg ? a : b;
    const SignedLog& small = a.lg > b.lg ? b : a;
    return {big.sign, big.lg + log1mexp(small.lg - big.lg)};
  }
  friend SignedLog operator-(SignedLog a, SignedLog b) { return a + b.negate(); }
  friend SignedLog operator*(SignedLog a, SignedLog b) {
    if (a.sign == 0 || b.sign == 0) return zero();
    return {a.sign * b.sign, a.lg + b.lg};
  }
  friend SignedLog operator/(SignedLog a, SignedLog b) {
    if (b.sign == 0) throw numerical_error("SignedLog: division by zero");
    if (a.sign == 0) return zero();
    return {a.sign * b.sign, a.lg - b.lg};
  }
};

// Signed sum of terms given as (sign_i, log|t_i|).
inline SignedLog signed_log_sum(std::span<const SignedLog> terms) {
  std::vector<double> pos, neg;
  pos.reserve(terms.size());
  for (const SignedLog& t : terms) {
    if (t.sign > 0) pos.push_back(t.lg);
    else if (t.sign < 0) neg.push_back(t.lg);
  }
  SignedLog p = pos.empty() ? SignedLog::zero()
                            : SignedLog::from_log(log_sum_exp(pos));
  SignedLog n = neg.empty() ? SignedLog::zero()
                            : SignedLog::from_log(log_sum_exp(neg));
  return p - n;
}

// ---------------------------------------------------------------------------
// Standard normal CDF and quantile.

// Phi(z) via the complementary error function; absolute error well below
// 1e-14 over the whole range.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / sqrt_2); }

// Upper tail mass P(Z > z); accurate in relative terms for large z.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / sqrt_2); }

inline double normal_logpdf(double z) { return -0.5 * z * z - 0.5 * log_2pi; }

namespace detail {

// Wichura's AS241 (PPND16) rational approximations.  `r` below is
// sqrt(-log(min(p, 1-p))), which callers with a tiny tail mass can supply
// without ever forming 1-p.
inline double ppnd16_central(double q) {
  static constexpr double a[8] = {
      3.3871328727963666080e+0, 1.3314166789178437745e+2,
      1.9715909503065514427e+3, 1.3731693765509461125e+4,
      4.5921953931549871457e+4, 6.7265770927008700853e+4,
      3.3430575583588128105e+4, 2.5090809287301226727e+3};
  static constexpr double b[8] = {
      1.0,                      4.2313330701600911252e+1,
      6.8718700749205790830e+2, 5.3941960214247511077e+3,
      2.1213794301586595867e+4, 3.9307895800092710610e+4,
      2.8729085735721942674e+4, 5.2264952788528545610e+3};
  const double r = 0.180625 - q * q;
  double num = a[7], den = b[7];
  for (int i = 6; i >= 0; --i) {
    num = num * r + a[i];
    den = den * r + b[i];
  }
  return q * num / den;
}

inline double ppnd16_tail(double r) {  // r = sqrt(-log(tail mass)); returns z > 0
  if (r <= 5.0) {
    static constexpr double c[8] = {
        1.42343711074968357734e+0, 4.63033784615654529590e+0,
        5.76949722146069140550e+0, 3.64784832476320460504e+0,
        1.27045825245236838258e+0, 2.41780725177450611770e-1,
        2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static constexpr double d[8] = {
        1.0,                       2.05319162663775882187e+0,
        1.67638483018380384940e+0, 6.89767334985100004550e-1,
        1.48103976427480074590e-1, 1.51986665636164571966e-2,
        5.47593808499534494600e-4, 1.05075007164441684324e-9};
    const double s = r - 1.6;
    double num = c[7], den = d[7];
    for (int i = 6; i >= 0; --i) {
      num = num * s + c[i];
      den = den * s + d[i];
    }
    return num / den;
  }
  static constexpr double e[8] = {
      6.65790464350110377720e+0, 5.46378491116411436990e+0,
      1.78482653991729133580e+0, 2.96560571828504891230e-1,
      2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static constexpr double f[8] = {
      1.0,                       5.99832206555887937690e-1,
      1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5,
      1.42151175831644588870e-7, 2.04426310338993978564e-15};
  const double s = r - 5.0;
  double num = e[7], den = f[7];
  for (int i = 6; i >= 0; --i) {
    num = num * s + e[i];
    den = den * s + f[i];
  }
  return num / den;
}

}  // namespace detail

// z > 0 such that P(Z > z) = q, for q in (0, 0.5].  Takes the tail mass
// directly so callers never lose precision forming 1-q.
inline double normal_tail_quantile(double q) {
  if (!(q > 0.0 && q <= 0.5)) throw std::invalid_argument("normal_tail_quantile: q outside (0, 0.5]");
  if (q >= 0.075) return -detail::ppnd16_central(q - 0.5);
  return detail::ppnd16_tail(std::sqrt(-std::log(q)));
}

// Phi^{-1}(p) for p in (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0, 1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) return detail::ppnd16_central(q);
  return q < 0.0 ? -normal_tail_quantile(p) : normal_tail_quantile(1.0 - p);
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma P(a, x) and incomplete beta I_x(a, b),
// used by the CDF side of the Gamma/Beta families (KS tests, quantiles).

namespace detail {

inline double gamma_p_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw numerical_error("gamma_p: series failed to converge");
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw numerical_error("gamma_q: continued fraction failed to converge");
}

inline double beta_contfrac(double a, double b, double x) {
  const double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) return h;
  }
  throw numerical_error("beta_inc: continued fraction failed to converge");
}

}  // namespace detail

inline double gamma_p(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("gamma_p: a <= 0");
  if (x < 0.0) throw std::invalid_argument("gamma_p: x < 0");
  if (x == 0.0) return 0.0;
  return x < a + 1.0 ? detail::gamma_p_series(a, x)
                     : 1.0 - detail::gamma_q_contfrac(a, x);
}

inline double beta_inc(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("beta_inc: nonpositive shape");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbeta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  // x^a (1-x)^b appears in both the direct and the mirrored branch.
  const double front = std::exp(lbeta + a * std::log(x) + b * std::log1p(-x));
  return x < (a + 1.0) / (a + b + 2.0)
             ? front * detail::beta_contfrac(a, b, x) / a
             : 1.0 - front * detail::beta_contfrac(b, a, 1.0 - x) / b;
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod (G7, K15) quadrature on a finite interval.

namespace detail {

struct GkResult {
  double integral;
  double error;
};

inline GkResult gk15(const std::function<double(double)>& f, double a, double b) {
  static constexpr double xgk[8] = {
      0.99145537112081263920685469752633, 0.94910791234275852452618968404785,
      0.86486442335976907278971278864093, 0.74153118559939443986386477328079,
      0.58608723546769113029414483825873, 0.40584515137739716690660641207696,
      0.20778495500789846760068940377324, 0.0};
  static constexpr double wgk[8] = {
      0.02293532201052922496373200805897, 0.06309209262997855329070066318920,
      0.10479001032225018383987632254152, 0.14065325971552591874518959051024,
      0.16900472663926790282658342659855, 0.19035057806478540991325640242101,
      0.20443294007529889241416199923465, 0.20948214108472782801299917489171};
  static constexpr double wg[4] = {
      0.12948496616886969327061143267908, 0.27970539148927666790146777142378,
      0.38183005050511894495036977548898, 0.41795918367346938775510204081633};

  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = wgk[7] * fc;
  double gauss = wg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double x = h * xgk[i];
    const double fsum = f(c - x) + f(c + x);
    kron += wgk[i] * fsum;
    if (i % 2 == 1) gauss += wg[i / 2] * fsum;
  }
  kron *= h;
  gauss *= h;
  return {kron, std::abs(kron - gauss)};
}

inline void integrate_rec(const std::function<double(double)>& f, double a, double b,
                          double tol, int depth, double& total, double& unresolved) {
  const GkResult r = gk15(f, a, b);
  if (r.error <= tol || depth >= 48) {
    total += r.integral;
    if (r.error > tol) unresolved += r.error;  // e.g. an isolated jump
    return;
  }
  const double c = 0.5 * (a + b);
  integrate_rec(f, a, c, 0.5 * tol, depth + 1, total, unresolved);
  integrate_rec(f, c, b, 0.5 * tol, depth + 1, total, unresolved);
}

}  // namespace detail

// Adaptive quadrature of f over [a, b].  `tol` is treated as an absolute
// tolerance on the Kronrod error estimate, scaled to the interval.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12) {
  if (!(a < b)) throw std::invalid_argument("integrate: empty interval");
  const detail::GkResult first = detail::gk15(f, a, b);
  const double scale = std::max(std::abs(first.integral), 1e-300);
  double total = 0.0, unresolved = 0.0;
  detail::integrate_rec(f, a, b, std::max(tol * scale, 1e-305), 0, total, unresolved);
  if (unresolved > 10.0 * tol * std::max(scale, std::abs(total)))
    throw numerical_error("integrate: adaptive subdivision failed to converge");
  return total;
}

// ULP distance between two doubles of the same sign (for exactness tests).
inline std::uint64_t ulp_distance(double a, double b) {
  if (a == b) return 0;
  if (std::isnan(a) || std::isnan(b) || (a < 0) != (b < 0))
    return std::numeric_limits<std::uint64_t>::max();
  std::uint64_t ia, ib;
  std::memcpy(&ia, &a, 8);
  std::memcpy(&ib, &b, 8);
  return ia > ib ? ia - ib : ib - ia;
}

}  // namespace amci
