// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient verification.

#pragma once

#include <functional>
#include <span>

#include "cdca/models.hpp"
#include "cdca/tensor.hpp"

namespace cdca {

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t entries = 0;

    void merge(const GradCheckReport& other);
};

/// Denominator floor of the relative error; entries whose gradients are
/// both below it are judged by absolute error instead.
inline constexpr double kRelativeErrorFloor = 1e-4;

/// Compare `analytic[k]` against (f(p+eps) - f(p-eps)) / (2 eps) for every
/// element of every `params[k]`. Parameters are restored afterwards.
GradCheckReport compare_gradients(const std::function<double()>& loss, std::span<Tensor* const> params,
                                  std::span<const Tensor> analytic, double eps);

/// Mean cross-entropy from logits via log-sum-exp, without the epsilon that
/// cross_entropy() adds inside the log.
double exact_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Deterministic linear/ReLU/softmax/cross-entropy network on (x, labels).
GradCheckReport grad_check(Network& net, const Tensor& x, std::span<const int> labels, double eps = 1e-6);

} // namespace cdca
