// SPDX-License-Identifier: Apache-2.0
//
// Hand-differentiated building blocks. Every backward here is checked
// against central differences in tests/test_numcore.cpp.

#pragma once

#include <span>
#include <vector>

#include "cdca/tensor.hpp"

namespace cdca {

/// Per-parameter gradients, aligned with a parameter list.
using LayerGrads = std::vector<Tensor>;

/// out[b,o] = sum_i x[b,i] * W[i,o] + b[o]
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct LinearGrads {
    Tensor weight;
    Tensor bias;
    Tensor input;
};

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& upstream);

Tensor relu_forward(const Tensor& z);
Tensor relu_backward(const Tensor& z, const Tensor& upstream);

struct DropoutResult {
    Tensor output;
    /// Per-element multiplier: 0 for dropped, 1/(1-rate) for kept.
    Tensor mask;
};

/// Inverted dropout. rate == 0 returns x unchanged and an all-ones mask
/// without consuming random draws.
DropoutResult dropout_forward(const Tensor& x, double rate, Rng& rng);
Tensor dropout_backward(const Tensor& upstream, const Tensor& mask);

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

inline constexpr double kLogEpsilon = 1e-12;

/// Mean over rows of -log(probs[b, labels[b]] + 1e-12).
double cross_entropy(const Tensor& probs, std::span<const int> labels);

/// Gradient of cross_entropy(softmax(logits)) with respect to the logits,
/// (p - onehot) / B. The epsilon inside the log is ignored here.
Tensor softmax_cross_entropy_grad(const Tensor& probs, std::span<const int> labels);

/// Gradient reversal: identity forward, -lambda * upstream backward.
inline const Tensor& grl_forward(const Tensor& x) { return x; }
Tensor grl_backward(const Tensor& upstream, double lambda_grl);

/// p <- p - lr * g for each aligned pair.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);

/// In-place a += b; shapes must match.
void add_inplace(Tensor& a, const Tensor& b);

/// Column sums of a rank-2 tensor, as a rank-1 tensor.
Tensor column_sum(const Tensor& x);

} // namespace cdca
