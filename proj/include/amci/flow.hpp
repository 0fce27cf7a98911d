#pragma once

// Radial flow layers: x = z + beta * (z - z0) / (alpha + |z - z0|), with
// beta reparameterized as -alpha + softplus(beta_hat) so every layer stays
// invertible.  Densities at external points require inverting each layer,
// which reduces to a monotone scalar radius equation solved by safeguarded
// bisection + Newton.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "amci/math.hpp"
#include "amci/rng.hpp"
#include "amci/tape.hpp"

namespace amci {

struct RadialLayer {
  std::vector<double> center;  // z0
  double alpha = 1.0;          // > 0
  double beta_hat = 0.0;       // beta = -alpha + softplus(beta_hat)

  double beta() const { return -alpha + detail::softplus(beta_hat); }
};

namespace flow_detail {

inline double radius(std::span<const double> z, std::span<const double> z0) {
  double sq = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z[i] - z0[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

// Log |det J| of the forward map at input radius r.
inline double log_det(const RadialLayer& l, double r, std::size_t dim) {
  const double apr = l.alpha + r;
  const double beta = l.beta();
  return (static_cast<double>(dim) - 1.0) * std::log1p(beta / apr) +
         std::log1p(l.alpha * beta / (apr * apr));
}

// Solve r * (alpha + r + beta) / (alpha + r) = r_x for r >= 0.  The map is
// strictly increasing, so a bracket plus safeguarded Newton converges well
// within the 100-iteration budget.
inline double invert_radius(const RadialLayer& l, double r_x) {
  if (r_x == 0.0) return 0.0;
  const double beta = l.beta();
  const auto g = [&](double r) { return r * (1.0 + beta / (l.alpha + r)); };
  const auto gp = [&](double r) {
    const double apr = l.alpha + r;
    return 1.0 + l.alpha * beta / (apr * apr);
  };
  double lo = 0.0;
  double hi = r_x * (1.0 + std::abs(beta) / l.alpha);
  // The analytic bracket can undershoot when beta is close to -alpha and
  // r_x is small; grow geometrically until it straddles the root.
  for (int i = 0; i < 200 && g(hi) < r_x; ++i) hi = 2.0 * hi + l.alpha;
  const double tol = 1e-10 * std::max(1.0, r_x);
  double r = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double resid = g(r) - r_x;
    if (std::abs(resid) <= 1e-2 * tol) return r;
    if (resid > 0.0) hi = r; else lo = r;
    const double step = resid / gp(r);
    double next = r - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // Newton left the bracket
    if (std::abs(next - r) <= tol && std::abs(g(next) - r_x) <= tol) return next;
    r = next;
  }
  const double resid = std::abs(g(r) - r_x);
  if (resid <= tol) return r;
  throw numerical_error("radial flow inversion did not converge; residual " +
                        std::to_string(resid));
}

}  // namespace flow_detail

// A stack of radial layers over a standard normal base of dimension D.
class RadialFlow {
 public:
  RadialFlow() = default;
  RadialFlow(std::size_t dim, std::vector<RadialLayer> layers)
      : dim_(dim), layers_(std::move(layers)) {
    for (const RadialLayer& l : layers_) {
      if (l.center.size() != dim_) throw config_error("RadialFlow: center dimension mismatch");
      if (!(l.alpha > 0.0)) throw config_error("RadialFlow: alpha must be positive");
    }
  }

  std::size_t dim() const { return dim_; }
  const std::vector<RadialLayer>& layers() const { return layers_; }

  // Push a base point through every layer; returns the output point and the
  // total forward log-determinant.
  std::pair<std::vector<double>, double> forward(std::span<const double> z_base) const {
    std::vector<double> z(z_base.begin(), z_base.end());
    double logdet = 0.0;
    for (const RadialLayer& l : layers_) {
      const double r = flow_detail::radius(z, l.center);
      logdet += flow_detail::log_det(l, r, dim_);
      const double factor = 1.0 + l.beta() / (l.alpha + r);
      for (std::size_t i = 0; i < dim_; ++i)
        z[i] = l.center[i] + (z[i] - l.center[i]) * factor;
    }
    return {std::move(z), logdet};
  }

  // Invert every layer; element l of the result is the input point of layer
  // l on the forward pass (element 0 is the base point).
  std::vector<std::vector<double>> inverse_inputs(std::span<const double> x) const {
    std::vector<std::vector<double>> inputs(layers_.size());
    std::vector<double> z(x.begin(), x.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const RadialLayer& lay = layers_[l];
      const double r_x = flow_detail::radius(z, lay.center);
      const double r = flow_detail::invert_radius(lay, r_x);
      if (r_x > 0.0) {
        const double scale = r / r_x;
        for (std::size_t i = 0; i < dim_; ++i)
          z[i] = lay.center[i] + (z[i] - lay.center[i]) * scale;
      } else {
        z = lay.center;
      }
      inputs[l] = z;
    }
    return inputs;
  }

  // Invert every layer; returns the base point and the same forward
  // log-determinant (evaluated at each layer's input).
  std::pair<std::vector<double>, double> inverse(std::span<const double> x) const {
    if (layers_.empty()) return {std::vector<double>(x.begin(), x.end()), 0.0};
    const std::vector<std::vector<double>> inputs = inverse_inputs(x);
    double logdet = 0.0;
    for (std::size_t l = 0; l < layers_.size(); ++l)
      logdet += flow_detail::log_det(layers_[l], flow_detail::radius(inputs[l], layers_[l].center), dim_);
    return {inputs[0], logdet};
  }

  double base_log_pdf(std::span<const double> z) const {
    double lp = 0.0;
    for (double v : z) lp += normal_logpdf(v);
    return lp;
  }

  double log_density(std::span<const double> x) const {
    const auto [z, logdet] = inverse(x);
    return base_log_pdf(z) - logdet;
  }

  std::pair<std::vector<double>, double> sample(RngStream& rng) const {
    std::vector<double> z(dim_);
    for (double& v : z) v = rng.normal();
    const double base = base_log_pdf(z);
    auto [x, logdet] = forward(z);
    return {std::move(x), base - logdet};
  }

 private:
  std::size_t dim_ = 0;
  std::vector<RadialLayer> layers_;
};

// One layer of the inverse pass with full parameter gradients.  The scalar
// radius equation is solved numerically; its root joins the tape as a
// custom node whose partials come from the implicit function theorem, so
// gradients are exact through the inversion.  Returns the layer's input
// point and its forward log-determinant contribution.
struct TapedLayerInverse {
  std::vector<Value> z;
  Value log_det;
};

inline TapedLayerInverse taped_radial_inverse(Tape& t, std::span<const Value> center, Value alpha,
                                              Value beta_hat, std::span<const Value> x) {
  const std::size_t dim = x.size();
  const Value beta = t.sub(t.softplus(beta_hat), alpha);

  std::vector<Value> diff(dim);
  Value r2 = t.leaf(0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    diff[i] = t.sub(x[i], center[i]);
    r2 = t.add(r2, t.square(diff[i]));
  }
  const Value r_x = t.sqrt(r2);

  RadialLayer plain;
  plain.center.assign(dim, 0.0);  // only alpha/beta matter for the radius
  plain.alpha = t.value(alpha);
  plain.beta_hat = t.value(beta_hat);
  const double r_val = flow_detail::invert_radius(plain, t.value(r_x));

  const double a_val = plain.alpha;
  const double b_val = plain.beta();
  const double apr_val = a_val + r_val;
  const double g_r = 1.0 + a_val * b_val / (apr_val * apr_val);
  const Value parents[3] = {r_x, alpha, beta};
  const double partials[3] = {1.0 / g_r, b_val * r_val / (apr_val * apr_val * g_r),
                              -r_val / (apr_val * g_r)};
  const Value r = t.custom(r_val, parents, partials);

  TapedLayerInverse out;
  out.z.resize(dim);
  if (t.value(r_x) > 0.0) {
    const Value scale = t.div(r, r_x);
    for (std::size_t i = 0; i < dim; ++i)
      out.z[i] = t.add(center[i], t.mul(diff[i], scale));
  } else {
    for (std::size_t i = 0; i < dim; ++i) out.z[i] = center[i];
  }

  const Value apr = t.add(alpha, r);
  const Value l1 = t.sub(t.log(t.add(apr, beta)), t.log(apr));
  const Value l2 = t.sub(t.log(t.add(t.square(apr), t.mul(alpha, beta))),
                         t.mul(t.log(apr), 2.0));
  out.log_det = t.add(t.mul(l1, static_cast<double>(dim) - 1.0), l2);
  return out;
}

}  // namespace amci
