#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "uatrpo/error.hpp"
#include "uatrpo/linalg.hpp"
#include "uatrpo/rng.hpp"

namespace uatrpo {

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Parameters live in one flat vector, layer by layer; within a layer the
/// weight matrix comes first (row-major, out x in) followed by the bias.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    require(sizes_.size() >= 2, "Mlp: need at least input and output sizes");
    for (std::size_t s : sizes_) require(s >= 1, "Mlp: layer sizes must be >= 1");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
      offsets_.push_back(offsets_.back() + sizes_[l + 1] * sizes_[l] + sizes_[l + 1]);
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  std::size_t num_params() const { return offsets_.back(); }

  // Activations of every layer; acts[0] is the input, acts.back() the output.
  struct Cache {
    std::vector<Vector> acts;
  };

  Vector forward(std::span<const double> params, std::span<const double> x, Cache* cache = nullptr) const {
    require(params.size() == num_params(), "Mlp::forward: parameter length mismatch");
    require(x.size() == input_dim(), "Mlp::forward: input length mismatch");
    Vector h(x.begin(), x.end());
    if (cache) {
      cache->acts.clear();
      cache->acts.push_back(h);
    }
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* w = params.data() + offsets_[l];
      const double* b = w + out * in;
      Vector next(out);
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * h[i];
        next[o] = (l + 1 < num_layers()) ? std::tanh(s) : s;
      }
      h = std::move(next);
      if (cache) cache->acts.push_back(h);
    }
    return h;
  }

  // Reverse pass: adds d(output . grad_out)/d(params) into grad.
  void backward(std::span<const double> params, const Cache& cache, std::span<const double> grad_out,
                std::span<double> grad) const {
    require(grad.size() == num_params(), "Mlp::backward: gradient length mismatch");
    require(grad_out.size() == output_dim(), "Mlp::backward: output gradient length mismatch");
    Vector delta(grad_out.begin(), grad_out.end());
    for (std::size_t l = num_layers(); l-- > 0;) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* w = params.data() + offsets_[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + out * in;
      const Vector& input = cache.acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += delta[o];
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * input[i];
      }
      if (l == 0) break;
      Vector prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) prev[i] += w[o * in + i] * delta[o];
      // input was produced by tanh
      for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - input[i] * input[i];
      delta = std::move(prev);
    }
  }

  /// Orthogonal init with gain sqrt(2) on hidden layers and output_gain on
  /// the last layer; biases zero.
  Vector init_params(SeededRng& rng, double output_gain) const {
    Vector params(num_params(), 0.0);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double gain = (l + 1 == num_layers()) ? output_gain : std::sqrt(2.0);
      const bool tall = out >= in;
      const DenseMatrix g = gaussian_matrix(rng, tall ? out : in, tall ? in : out);
      const auto basis = orthonormalize(g);
      double* w = params.data() + offsets_[l];
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) {
          const std::size_t r = tall ? o : i;
          const std::size_t c = tall ? i : o;
          w[o * in + i] = c < basis.rank ? gain * basis.q(r, c) : 0.0;
        }
    }
    return params;
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
};

}  // namespace uatrpo
