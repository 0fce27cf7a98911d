#pragma once

// Conditional proposals q(x; cond).  An inference network (Mlp) maps the
// conditioning input to distribution parameters; the output family is
// either a product of parametric heads (Gaussian / half-normal / Gamma /
// Beta per coordinate) or a radial flow stack.  Oracle and test proposals
// plug in through FixedFormProposal.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "amci/checkpoint.hpp"
#include "amci/density.hpp"
#include "amci/flow.hpp"
#include "amci/mlp.hpp"
#include "amci/rng.hpp"
#include "amci/tape.hpp"

namespace amci {

// Input standardization for the conditioner; statistics come from the first
// training dataset and are frozen afterwards.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;
  bool frozen = false;

  void fit(std::span<const std::vector<double>> conds) {
    if (frozen || conds.empty()) return;
    const std::size_t d = conds[0].size();
    mean.assign(d, 0.0);
    stddev.assign(d, 0.0);
    for (const auto& c : conds)
      for (std::size_t i = 0; i < d; ++i) mean[i] += c[i];
    for (double& m : mean) m /= static_cast<double>(conds.size());
    for (const auto& c : conds)
      for (std::size_t i = 0; i < d; ++i) {
        const double dlt = c[i] - mean[i];
        stddev[i] += dlt * dlt;
      }
    for (double& s : stddev) {
      s = std::sqrt(s / std::max<std::size_t>(1, conds.size() - 1));
      if (!(s > 1e-12)) s = 1.0;
    }
    frozen = true;
  }

  std::vector<double> apply(std::span<const double> cond) const {
    if (!frozen) return {cond.begin(), cond.end()};
    std::vector<double> out(cond.size());
    for (std::size_t i = 0; i < cond.size(); ++i) out[i] = (cond[i] - mean[i]) / stddev[i];
    return out;
  }
};

inline std::string format_point(std::span<const double> v) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

// A proposal pinned to one conditioning input.  Conditioning runs the
// inference network once; estimator batches then sample and evaluate
// against the cached distribution parameters.
class ConditionedDist {
 public:
  virtual ~ConditionedDist() = default;
  virtual std::pair<std::vector<double>, double> sample(RngStream& rng) const = 0;
  virtual double log_density(std::span<const double> x) const = 0;
};

// Product of closed-form densities; the conditioned view of the parametric
// heads and the fixed-form proposals.
class DensityProductDist : public ConditionedDist {
 public:
  explicit DensityProductDist(std::vector<Density> parts) : parts_(std::move(parts)) {}

  std::pair<std::vector<double>, double> sample(RngStream& rng) const override {
    std::vector<double> x;
    double lq = 0.0;
    for (const Density& d : parts_) {
      const std::vector<double> part = d.sample(rng);
      lq += d.log_pdf(part);
      x.insert(x.end(), part.begin(), part.end());
    }
    return {std::move(x), lq};
  }

  double log_density(std::span<const double> x) const override {
    double lq = 0.0;
    std::size_t at = 0;
    for (const Density& d : parts_) {
      lq += d.log_pdf(x.subspan(at, d.dim()));
      at += d.dim();
    }
    return lq;
  }

 private:
  std::vector<Density> parts_;
};

class FlowDist : public ConditionedDist {
 public:
  explicit FlowDist(RadialFlow flow) : flow_(std::move(flow)) {}

  std::pair<std::vector<double>, double> sample(RngStream& rng) const override {
    return flow_.sample(rng);
  }
  double log_density(std::span<const double> x) const override { return flow_.log_density(x); }

 private:
  RadialFlow flow_;
};

class ConditionalProposal {
 public:
  virtual ~ConditionalProposal() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t cond_dim() const = 0;

  virtual std::unique_ptr<ConditionedDist> condition(std::span<const double> cond) const = 0;

  // Draw x ~ q(.; cond) together with log q(x; cond) under the same
  // conditioned distribution.
  virtual std::pair<std::vector<double>, double> sample(std::span<const double> cond,
                                                        RngStream& rng) const {
    return condition(cond)->sample(rng);
  }

  virtual double log_density(std::span<const double> x, std::span<const double> cond) const {
    return condition(cond)->log_density(x);
  }

  virtual bool trainable() const { return false; }
  virtual Mlp* conditioner() { return nullptr; }
  virtual const Mlp* conditioner() const { return nullptr; }
  virtual Standardizer* standardizer() { return nullptr; }

  // log q(x; cond) with conditioner parameters on the tape.  Callers check
  // plain log_density first and skip out-of-support samples.
  virtual Value taped_log_density(Tape&, std::span<const Value> /*param_leaves*/,
                                  std::span<const double> /*x*/,
                                  std::span<const double> /*cond*/) const {
    throw std::logic_error("taped_log_density: proposal is not trainable");
  }

  virtual void save(Checkpoint&) const {
    throw std::logic_error("save: proposal has no checkpoint form");
  }
};

// ---------------------------------------------------------------------------

enum class CoordFamily : std::uint8_t { Gaussian = 0, HalfNormal = 1, Gamma = 2, Beta = 3 };

inline std::vector<HeadTransform> head_transforms_for(const std::vector<CoordFamily>& fams) {
  std::vector<HeadTransform> heads;
  for (CoordFamily f : fams) {
    switch (f) {
      case CoordFamily::Gaussian:
      case CoordFamily::HalfNormal:
        heads.push_back(HeadTransform::Identity);  // location
        heads.push_back(HeadTransform::Softplus);  // scale
        break;
      case CoordFamily::Gamma:
      case CoordFamily::Beta:
        heads.push_back(HeadTransform::Softplus);
        heads.push_back(HeadTransform::Softplus);
        break;
    }
  }
  return heads;
}

// Product of per-coordinate parametric heads.
class ParametricProposal : public ConditionalProposal {
 public:
  static constexpr double kScaleFloor = 1e-6;

  ParametricProposal(std::vector<CoordFamily> families, std::size_t cond_dim,
                     std::vector<std::size_t> hidden, Activation act, RngStream& rng)
      : families_(std::move(families)), cond_dim_(cond_dim) {
    std::vector<std::size_t> sizes;
    sizes.push_back(cond_dim_);
    for (std::size_t h : hidden) sizes.push_back(h);
    sizes.push_back(2 * families_.size());
    net_ = Mlp(std::move(sizes), act, head_transforms_for(families_));
    net_.init(rng);
  }

  explicit ParametricProposal(const Checkpoint& ck) { restore(ck); }

  std::size_t dim() const override { return families_.size(); }
  std::size_t cond_dim() const override { return cond_dim_; }
  bool trainable() const override { return true; }
  Mlp* conditioner() override { return &net_; }
  const Mlp* conditioner() const override { return &net_; }
  Standardizer* standardizer() override { return &std_; }

  std::unique_ptr<ConditionedDist> condition(std::span<const double> cond) const override {
    return std::make_unique<DensityProductDist>(coordinate_densities(cond));
  }

  Value taped_log_density(Tape& t, std::span<const Value> leaves, std::span<const double> x,
                          std::span<const double> cond) const override {
    const std::vector<double> sc = std_.apply(cond);
    const std::vector<Value> out = net_.forward(t, leaves, sc);
    Value total = t.leaf(0.0);
    for (std::size_t i = 0; i < families_.size(); ++i) {
      const Value p0 = out[2 * i], p1 = out[2 * i + 1];
      total = t.add(total, taped_coord(t, families_[i], p0, p1, x[i]));
    }
    return total;
  }

  void save(Checkpoint& ck) const override {
    ck.set_scalar("proposal/family", 0.0);
    ck.set_scalar("proposal/dim", static_cast<double>(dim()));
    ck.set_scalar("proposal/cond_dim", static_cast<double>(cond_dim_));
    std::vector<double> fams;
    for (CoordFamily f : families_) fams.push_back(static_cast<double>(f));
    ck.set("proposal/coord_families", fams);
    save_net(ck, net_);
    ck.set("cond/mean", std_.mean);
    ck.set("cond/std", std_.stddev);
    ck.set_scalar("cond/frozen", std_.frozen ? 1.0 : 0.0);
  }

  static void save_net(Checkpoint& ck, const Mlp& net) {
    std::vector<double> sizes;
    for (std::size_t s : net.sizes()) sizes.push_back(static_cast<double>(s));
    ck.set("mlp/sizes", sizes);
    ck.set_scalar("mlp/activation", static_cast<double>(net.activation()));
    std::vector<double> heads;
    for (HeadTransform h : net.heads()) heads.push_back(static_cast<double>(h));
    ck.set("mlp/heads", heads);
    ck.set("mlp/params", {net.params().begin(), net.params().end()});
  }

  static Mlp load_net(const Checkpoint& ck) {
    std::vector<std::size_t> sizes;
    for (double s : ck.get("mlp/sizes")) sizes.push_back(static_cast<std::size_t>(s));
    std::vector<HeadTransform> heads;
    for (double h : ck.get("mlp/heads")) heads.push_back(static_cast<HeadTransform>(static_cast<int>(h)));
    Mlp net(sizes, static_cast<Activation>(static_cast<int>(ck.get_scalar("mlp/activation"))), heads);
    const auto& p = ck.get("mlp/params");
    if (p.size() != net.params().size()) throw config_error("checkpoint: parameter count mismatch");
    std::copy(p.begin(), p.end(), net.params().begin());
    return net;
  }

  static Standardizer load_standardizer(const Checkpoint& ck) {
    Standardizer s;
    s.mean = ck.get("cond/mean");
    s.stddev = ck.get("cond/std");
    s.frozen = ck.get_scalar("cond/frozen") != 0.0;
    return s;
  }

  // The per-coordinate densities the conditioner produces for `cond`;
  // sample/log_density delegate to these.
  std::vector<Density> coordinate_densities(std::span<const double> cond) const {
    const std::vector<double> sc = std_.apply(cond);
    const std::vector<double> out = net_.forward(sc);
    for (double v : out)
      if (!std::isfinite(v))
        throw numerical_error("proposal degeneracy: non-finite conditioner output at cond=" +
                              format_point(cond));
    std::vector<Density> ds;
    for (std::size_t i = 0; i < families_.size(); ++i) {
      const double p0 = out[2 * i];
      const double p1 = out[2 * i + 1] + kScaleFloor;
      switch (families_[i]) {
        case CoordFamily::Gaussian: ds.emplace_back(Normal{p0, p1}); break;
        case CoordFamily::HalfNormal: ds.emplace_back(HalfNormal{p0, p1}); break;
        case CoordFamily::Gamma: ds.emplace_back(Gamma{p0 + kScaleFloor, p1}); break;
        case CoordFamily::Beta: ds.emplace_back(Beta{p0 + kScaleFloor, p1}); break;
      }
    }
    return ds;
  }

 private:
  void restore(const Checkpoint& ck) {
    for (double f : ck.get("proposal/coord_families"))
      families_.push_back(static_cast<CoordFamily>(static_cast<int>(f)));
    cond_dim_ = static_cast<std::size_t>(ck.get_scalar("proposal/cond_dim"));
    net_ = load_net(ck);
    std_ = load_standardizer(ck);
  }

  Value taped_coord(Tape& t, CoordFamily fam, Value p0, Value p1, double x) const {
    switch (fam) {
      case CoordFamily::Gaussian: {
        const Value s = t.add(p1, kScaleFloor);
        const Value z = t.div(t.sub(x, p0), s);
        return t.sub(t.mul(t.square(z), -0.5), t.add(t.log(s), 0.5 * log_2pi));
      }
      case CoordFamily::HalfNormal: {
        const Value s = t.add(p1, kScaleFloor);
        const Value z = t.div(t.sub(x, p0), s);
        return t.add(t.sub(t.mul(t.square(z), -0.5), t.add(t.log(s), 0.5 * log_2pi)), log_2);
      }
      case CoordFamily::Gamma: {
        const Value k = t.add(p0, kScaleFloor);
        const Value scale = t.add(p1, kScaleFloor);
        Value lp = t.mul(t.add(k, -1.0), std::log(x));
        lp = t.sub(lp, t.div(x, scale));
        lp = t.sub(lp, t.lgamma(k));
        return t.sub(lp, t.mul(k, t.log(scale)));
      }
      case CoordFamily::Beta: {
        const Value a = t.add(p0, kScaleFloor);
        const Value b = t.add(p1, kScaleFloor);
        Value lp = t.mul(t.add(a, -1.0), std::log(x));
        lp = t.add(lp, t.mul(t.add(b, -1.0), std::log1p(-x)));
        const Value lbeta = t.sub(t.add(t.lgamma(a), t.lgamma(b)), t.lgamma(t.add(a, b)));
        return t.sub(lp, lbeta);
      }
    }
    throw std::logic_error("taped_coord: unknown family");
  }

  std::vector<CoordFamily> families_;
  std::size_t cond_dim_ = 0;
  Mlp net_;
  Standardizer std_;
};

// ---------------------------------------------------------------------------

// Radial flow stack whose per-layer parameters come from the conditioner.
// Conditioner output layout per layer: [z0 (D), alpha (softplus head),
// beta_hat (identity head)].
class RadialFlowProposal : public ConditionalProposal {
 public:
  static constexpr double kAlphaFloor = 1e-3;

  RadialFlowProposal(std::size_t dim, std::size_t n_layers, std::size_t cond_dim,
                     std::vector<std::size_t> hidden, Activation act, RngStream& rng)
      : dim_(dim), n_layers_(n_layers), cond_dim_(cond_dim) {
    std::vector<std::size_t> sizes;
    sizes.push_back(cond_dim_);
    for (std::size_t h : hidden) sizes.push_back(h);
    sizes.push_back(n_layers_ * (dim_ + 2));
    std::vector<HeadTransform> heads;
    for (std::size_t l = 0; l < n_layers_; ++l) {
      for (std::size_t i = 0; i < dim_; ++i) heads.push_back(HeadTransform::Identity);
      heads.push_back(HeadTransform::Softplus);   // alpha
      heads.push_back(HeadTransform::Identity);   // beta_hat
    }
    net_ = Mlp(std::move(sizes), act, heads);
    net_.init(rng);
  }

  explicit RadialFlowProposal(const Checkpoint& ck) { restore(ck); }

  std::size_t dim() const override { return dim_; }
  std::size_t cond_dim() const override { return cond_dim_; }
  std::size_t flow_layers() const { return n_layers_; }
  bool trainable() const override { return true; }
  Mlp* conditioner() override { return &net_; }
  const Mlp* conditioner() const override { return &net_; }
  Standardizer* standardizer() override { return &std_; }

  RadialFlow flow_for(std::span<const double> cond) const {
    const std::vector<double> sc = std_.apply(cond);
    const std::vector<double> out = net_.forward(sc);
    for (double v : out)
      if (!std::isfinite(v))
        throw numerical_error("proposal degeneracy: non-finite conditioner output at cond=" +
                              format_point(cond));
    std::vector<RadialLayer> layers(n_layers_);
    for (std::size_t l = 0; l < n_layers_; ++l) {
      const std::size_t base = l * (dim_ + 2);
      layers[l].center.assign(out.begin() + base, out.begin() + base + dim_);
      layers[l].alpha = out[base + dim_] + kAlphaFloor;
      layers[l].beta_hat = out[base + dim_ + 1];
    }
    return RadialFlow(dim_, std::move(layers));
  }

  std::unique_ptr<ConditionedDist> condition(std::span<const double> cond) const override {
    return std::make_unique<FlowDist>(flow_for(cond));
  }

  Value taped_log_density(Tape& t, std::span<const Value> leaves, std::span<const double> x,
                          std::span<const double> cond) const override {
    // Inverts layer by layer on the tape; each scalar root carries
    // implicit-function partials, so the gradient is exact through the
    // inversion.
    const std::vector<double> sc = std_.apply(cond);
    const std::vector<Value> out = net_.forward(t, leaves, sc);
    std::vector<Value> cur(dim_);
    for (std::size_t i = 0; i < dim_; ++i) cur[i] = t.leaf(x[i]);
    Value total_logdet = t.leaf(0.0);
    for (std::size_t l = n_layers_; l-- > 0;) {
      const std::size_t base = l * (dim_ + 2);
      const std::span<const Value> center(out.data() + base, dim_);
      const Value alpha = t.add(out[base + dim_], kAlphaFloor);
      const Value beta_hat = out[base + dim_ + 1];
      TapedLayerInverse inv = taped_radial_inverse(t, center, alpha, beta_hat, cur);
      cur = std::move(inv.z);
      total_logdet = t.add(total_logdet, inv.log_det);
    }
    Value lp = t.leaf(-0.5 * static_cast<double>(dim_) * log_2pi);
    for (std::size_t i = 0; i < dim_; ++i) lp = t.sub(lp, t.mul(t.square(cur[i]), 0.5));
    return t.sub(lp, total_logdet);
  }

  void save(Checkpoint& ck) const override {
    ck.set_scalar("proposal/family", 1.0);
    ck.set_scalar("proposal/dim", static_cast<double>(dim_));
    ck.set_scalar("proposal/cond_dim", static_cast<double>(cond_dim_));
    ck.set_scalar("proposal/flow_layers", static_cast<double>(n_layers_));
    ParametricProposal::save_net(ck, net_);
    ck.set("cond/mean", std_.mean);
    ck.set("cond/std", std_.stddev);
    ck.set_scalar("cond/frozen", std_.frozen ? 1.0 : 0.0);
  }

 private:
  void restore(const Checkpoint& ck) {
    dim_ = static_cast<std::size_t>(ck.get_scalar("proposal/dim"));
    cond_dim_ = static_cast<std::size_t>(ck.get_scalar("proposal/cond_dim"));
    n_layers_ = static_cast<std::size_t>(ck.get_scalar("proposal/flow_layers"));
    net_ = ParametricProposal::load_net(ck);
    std_ = ParametricProposal::load_standardizer(ck);
  }

  std::size_t dim_ = 0;
  std::size_t n_layers_ = 0;
  std::size_t cond_dim_ = 0;
  Mlp net_;
  Standardizer std_;
};

// ---------------------------------------------------------------------------

// Closed-form proposal built from densities per conditioning input; used
// for the Theorem-1 oracle proposals and hand-crafted test proposals.  The
// maker returns a product of densities (one multivariate entry, or one
// entry per coordinate) whose dimensions add up to dim().
class FixedFormProposal : public ConditionalProposal {
 public:
  using Maker = std::function<std::vector<Density>(std::span<const double> cond)>;

  FixedFormProposal(std::size_t dim, std::size_t cond_dim, Maker maker)
      : dim_(dim), cond_dim_(cond_dim), maker_(std::move(maker)) {}

  std::size_t dim() const override { return dim_; }
  std::size_t cond_dim() const override { return cond_dim_; }

  std::unique_ptr<ConditionedDist> condition(std::span<const double> cond) const override {
    return std::make_unique<DensityProductDist>(maker_(cond));
  }

 private:
  std::size_t dim_;
  std::size_t cond_dim_;
  Maker maker_;
};

// Equal-weight mixture of two already-conditioned distributions.
struct ConditionedMixture {
  const ConditionedDist* q1 = nullptr;
  const ConditionedDist* q2 = nullptr;

  std::pair<std::vector<double>, double> sample(RngStream& rng) const {
    const bool first = rng.uniform() < 0.5;
    std::vector<double> x = first ? q1->sample(rng).first : q2->sample(rng).first;
    const double lq = log_density(x);
    return {std::move(x), lq};
  }

  double log_density(std::span<const double> x) const {
    return log_add_exp(q1->log_density(x), q2->log_density(x)) - log_2;
  }
};

// Equal-weight two-component mixture; the components may condition on
// different inputs (q1 on (y, theta), q2 on y).
struct MixtureProposal {
  const ConditionalProposal* q1 = nullptr;
  const ConditionalProposal* q2 = nullptr;

  std::pair<std::vector<double>, double> sample(std::span<const double> cond1,
                                                std::span<const double> cond2,
                                                RngStream& rng) const {
    const auto c1 = q1->condition(cond1);
    const auto c2 = q2->condition(cond2);
    return ConditionedMixture{c1.get(), c2.get()}.sample(rng);
  }

  double log_density(std::span<const double> x, std::span<const double> cond1,
                     std::span<const double> cond2) const {
    const double l1 = q1->log_density(x, cond1);
    const double l2 = q2->log_density(x, cond2);
    return log_add_exp(l1, l2) - log_2;
  }
};

// ---------------------------------------------------------------------------

inline void save_proposal(const std::string& path, const ConditionalProposal& q,
                          std::uint64_t seed = 0) {
  Checkpoint ck;
  q.save(ck);
  ck.set_scalar("meta/seed", static_cast<double>(seed));
  ck.save(path);
}

inline std::unique_ptr<ConditionalProposal> load_proposal(const std::string& path) {
  const Checkpoint ck = Checkpoint::load(path);
  const int family = static_cast<int>(ck.get_scalar("proposal/family"));
  switch (family) {
    case 0: return std::make_unique<ParametricProposal>(ck);
    case 1: return std::make_unique<RadialFlowProposal>(ck);
    default: throw config_error("checkpoint: unknown proposal family tag");
  }
}

}  // namespace amci
