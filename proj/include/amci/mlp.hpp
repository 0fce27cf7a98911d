#pragma once

// Multilayer perceptron with per-output head transforms.  One flat
// parameter vector backs both the fast double-only forward pass used by
// estimators and the taped forward pass used by training.

#include <cstdint>
#include <span>
#include <vector>

#include "amci/rng.hpp"
#include "amci/tape.hpp"

namespace amci {

enum class Activation : std::uint8_t { Tanh = 0, Relu = 1 };

enum class HeadTransform : std::uint8_t { Identity = 0, Softplus = 1, Sigmoid = 2 };

class Mlp {
 public:
  Mlp() = default;

  // `sizes` lists every layer width including input and output.  `heads`
  // has one transform per output slot.
  Mlp(std::vector<std::size_t> sizes, Activation act, std::vector<HeadTransform> heads)
      : sizes_(std::move(sizes)), act_(act), heads_(std::move(heads)) {
    if (sizes_.size() < 2) throw config_error("Mlp: need at least input and output layer");
    if (heads_.size() != sizes_.back()) throw config_error("Mlp: one head per output slot");
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
      count += sizes_[l + 1] * (sizes_[l] + 1);
    params_.assign(count, 0.0);
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  const std::vector<HeadTransform>& heads() const { return heads_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Uniform fan-in initialization, U(-1/sqrt(in), 1/sqrt(in)) per layer.
  void init(RngStream& rng) {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (std::size_t i = 0; i < out * (in + 1); ++i)
        params_[off + i] = rng.uniform(-bound, bound);
      off += out * (in + 1);
    }
  }

  // Set the bias of output slot `slot` (handy for initializing heads to a
  // known operating point, e.g. softplus bias giving scale 1).
  void set_output_bias(std::size_t slot, double v) {
    const std::size_t l = sizes_.size() - 2;
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k) off += sizes_[k + 1] * (sizes_[k] + 1);
    off += sizes_[l + 1] * sizes_[l];  // past the weight block
    params_[off + slot] = v;
  }

  std::vector<double> forward(std::span<const double> input) const {
    if (input.size() != sizes_.front()) throw std::invalid_argument("Mlp::forward: input size mismatch");
    std::vector<double> h(input.begin(), input.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      std::vector<double> next(out);
      for (std::size_t i = 0; i < out; ++i) {
        double acc = params_[off + out * in + i];  // bias
        const double* w = &params_[off + i * in];
        for (std::size_t j = 0; j < in; ++j) acc += w[j] * h[j];
        next[i] = acc;
      }
      off += out * (in + 1);
      const bool last = (l + 2 == sizes_.size());
      if (!last)
        for (double& v : next) v = act_ == Activation::Tanh ? std::tanh(v) : std::max(v, 0.0);
      h = std::move(next);
    }
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = apply_head(heads_[i], h[i]);
    return h;
  }

  // Taped forward; `leaves` must be tape leaves for the flat parameter
  // vector in order (one leaf per parameter).
  std::vector<Value> forward(Tape& tape, std::span<const Value> leaves,
                             std::span<const double> input) const {
    if (input.size() != sizes_.front()) throw std::invalid_argument("Mlp::forward: input size mismatch");
    if (leaves.size() != params_.size()) throw std::invalid_argument("Mlp::forward: leaf count mismatch");
    std::vector<Value> h;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      std::vector<Value> next(out);
      for (std::size_t i = 0; i < out; ++i) {
        const std::span<const Value> w = leaves.subspan(off + i * in, in);
        const Value b = leaves[off + out * in + i];
        next[i] = (l == 0) ? tape.affine(w, b, input)
                           : tape.affine(w, b, std::span<const Value>(h));
      }
      off += out * (in + 1);
      const bool last = (l + 2 == sizes_.size());
      if (!last)
        for (Value& v : next) v = act_ == Activation::Tanh ? tape.tanh(v) : tape.relu(v);
      h = std::move(next);
    }
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = apply_head(tape, heads_[i], h[i]);
    return h;
  }

  static double apply_head(HeadTransform t, double v) {
    switch (t) {
      case HeadTransform::Softplus: return detail::softplus(v);
      case HeadTransform::Sigmoid: return detail::sigmoid(v);
      default: return v;
    }
  }

  static Value apply_head(Tape& tape, HeadTransform t, Value v) {
    switch (t) {
      case HeadTransform::Softplus: return tape.softplus(v);
      case HeadTransform::Sigmoid: return tape.sigmoid(v);
      default: return v;
    }
  }

 private:
  std::vector<std::size_t> sizes_;
  Activation act_ = Activation::Tanh;
  std::vector<HeadTransform> heads_;
  std::vector<double> params_;
};

}  // namespace amci
