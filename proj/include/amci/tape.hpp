#pragma once

// Reverse-mode autodiff on a flat scalar tape.  Nodes cache their local
// partials at creation, so one backward sweep is a single multiply-add pass
// in reverse topological order.  Dense layers record one fused node per
// output unit rather than separate multiply/add nodes.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "amci/math.hpp"

namespace amci {

class Tape;

struct Value {
  Tape* tape = nullptr;
  std::uint32_t idx = 0;
};

namespace detail {

// Digamma via recurrence + asymptotic series; feeds the lgamma node.
inline double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x, inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
  return result;
}

inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace detail

class Tape {
 public:
  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    args_.clear();
    partials_.clear();
  }

  double value(Value v) const { return nodes_[v.idx].value; }

  // Input node: a parameter or data constant whose adjoint may be read back.
  Value leaf(double v) { return push(v, {}, {}); }

  std::vector<Value> leaves(std::span<const double> vals) {
    std::vector<Value> out;
    out.reserve(vals.size());
    for (double v : vals) out.push_back(leaf(v));
    return out;
  }

  Value add(Value a, Value b) { return push(val(a) + val(b), {a, b}, {1.0, 1.0}); }
  Value add(Value a, double c) { return push(val(a) + c, {a}, {1.0}); }
  Value sub(Value a, Value b) { return push(val(a) - val(b), {a, b}, {1.0, -1.0}); }
  Value sub(double c, Value b) { return push(c - val(b), {b}, {-1.0}); }
  Value neg(Value a) { return push(-val(a), {a}, {-1.0}); }
  Value mul(Value a, Value b) { return push(val(a) * val(b), {a, b}, {val(b), val(a)}); }
  Value mul(Value a, double c) { return push(val(a) * c, {a}, {c}); }
  Value div(Value a, Value b) {
    const double vb = val(b);
    return push(val(a) / vb, {a, b}, {1.0 / vb, -val(a) / (vb * vb)});
  }
  Value div(double c, Value b) {
    const double vb = val(b);
    return push(c / vb, {b}, {-c / (vb * vb)});
  }

  Value exp(Value a) {
    const double e = std::exp(val(a));
    return push(e, {a}, {e});
  }
  Value log(Value a) { return push(std::log(val(a)), {a}, {1.0 / val(a)}); }
  Value sqrt(Value a) {
    const double s = std::sqrt(val(a));
    return push(s, {a}, {0.5 / s});
  }
  Value square(Value a) { return push(val(a) * val(a), {a}, {2.0 * val(a)}); }
  Value tanh(Value a) {
    const double t = std::tanh(val(a));
    return push(t, {a}, {1.0 - t * t});
  }
  // Subgradient at the kink is 0.
  Value relu(Value a) {
    const double v = val(a);
    return v > 0.0 ? push(v, {a}, {1.0}) : push(0.0, {a}, {0.0});
  }
  Value softplus(Value a) {
    return push(detail::softplus(val(a)), {a}, {detail::sigmoid(val(a))});
  }
  Value sigmoid(Value a) {
    const double s = detail::sigmoid(val(a));
    return push(s, {a}, {s * (1.0 - s)});
  }
  Value lgamma(Value a) {
    return push(std::lgamma(val(a)), {a}, {detail::digamma(val(a))});
  }

  Value log_sum_exp(std::span<const Value> xs) {
    if (xs.empty()) throw std::invalid_argument("Tape::log_sum_exp: empty");
    double m = neg_inf;
    for (Value x : xs) m = std::max(m, val(x));
    double s = 0.0;
    for (Value x : xs) s += std::exp(val(x) - m);
    const double result = m == neg_inf ? neg_inf : m + std::log(s);
    std::vector<Value> vs(xs.begin(), xs.end());
    std::vector<double> ps(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      ps[i] = result == neg_inf ? 0.0 : std::exp(val(xs[i]) - result);
    return push(result, vs, ps);
  }

  // Registers an externally computed value with caller-supplied local
  // partials; used for implicit functions (root finds) whose derivatives
  // come from the implicit function theorem.
  Value custom(double value, std::span<const Value> parents, std::span<const double> partials) {
    return push(value, parents, partials);
  }

  // out = b + sum_j w_j x_j with constant inputs x (first dense layer).
  // Args stream straight into the tape arrays.
  Value affine(std::span<const Value> w, Value b, std::span<const double> x) {
    assert(w.size() == x.size());
    const std::uint32_t begin = static_cast<std::uint32_t>(args_.size());
    double acc = val(b);
    for (std::size_t j = 0; j < w.size(); ++j) {
      acc += val(w[j]) * x[j];
      args_.push_back(w[j].idx);
      partials_.push_back(x[j]);
    }
    args_.push_back(b.idx);
    partials_.push_back(1.0);
    nodes_.push_back({acc, begin, static_cast<std::uint32_t>(w.size() + 1)});
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  // out = b + sum_j w_j h_j with h on the tape (hidden layers).
  Value affine(std::span<const Value> w, Value b, std::span<const Value> h) {
    assert(w.size() == h.size());
    const std::uint32_t begin = static_cast<std::uint32_t>(args_.size());
    double acc = val(b);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double hj = val(h[j]);
      acc += val(w[j]) * hj;
      args_.push_back(w[j].idx);
      partials_.push_back(hj);
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      args_.push_back(h[j].idx);
      partials_.push_back(val(w[j]));
    }
    args_.push_back(b.idx);
    partials_.push_back(1.0);
    nodes_.push_back({acc, begin, static_cast<std::uint32_t>(2 * w.size() + 1)});
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  // Adjoints of every node given a scalar loss; index the result with
  // Value::idx (leaves of unused parameters come back exactly zero).
  std::vector<double> gradient(Value loss) const {
    if (loss.tape != this || loss.idx >= nodes_.size())
      throw std::invalid_argument("Tape::gradient: loss not on this tape");
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[loss.idx] = 1.0;
    for (std::uint32_t i = static_cast<std::uint32_t>(nodes_.size()); i-- > 0;) {
      const double a = adj[i];
      if (a == 0.0) continue;
      const Node& n = nodes_[i];
      for (std::uint32_t k = 0; k < n.n_args; ++k)
        adj[args_[n.arg_begin + k]] += a * partials_[n.arg_begin + k];
    }
    return adj;
  }

 private:
  struct Node {
    double value;
    std::uint32_t arg_begin;
    std::uint32_t n_args;
  };

  double val(Value v) const {
    assert(v.tape == this);
    return nodes_[v.idx].value;
  }

  Value push(double value, std::initializer_list<Value> vs, std::initializer_list<double> ps) {
    return push(value, std::span<const Value>(vs.begin(), vs.size()),
                std::span<const double>(ps.begin(), ps.size()));
  }

  Value push(double value, std::span<const Value> vs, std::span<const double> ps) {
    const std::uint32_t begin = static_cast<std::uint32_t>(args_.size());
    for (std::size_t i = 0; i < vs.size(); ++i) {
      assert(vs[i].tape == this);
      args_.push_back(vs[i].idx);
      partials_.push_back(ps[i]);
    }
    nodes_.push_back({value, begin, static_cast<std::uint32_t>(vs.size())});
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> args_;
  std::vector<double> partials_;
};

}  // namespace amci
