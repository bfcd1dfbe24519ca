// SPDX-License-Identifier: Apache-2.0

#include "cdca/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cdca {

void GradCheckReport::merge(const GradCheckReport& other) {
    max_relative_error = std::max(max_relative_error, other.max_relative_error);
    max_absolute_error = std::max(max_absolute_error, other.max_absolute_error);
    entries += other.entries;
}

GradCheckReport compare_gradients(const std::function<double()>& loss, std::span<Tensor* const> params,
                                  std::span<const Tensor> analytic, double eps) {
    if (params.size() != analytic.size()) throw DimensionError("compare_gradients: parameter/gradient count mismatch");
    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k]->shape() != analytic[k].shape()) {
            throw DimensionError("compare_gradients: gradient " + shape_str(analytic[k].shape()) + " for parameter " +
                                 shape_str(params[k]->shape()));
        }
        auto p = params[k]->data();
        auto g = analytic[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + eps;
            const double up = loss();
            p[i] = saved - eps;
            const double down = loss();
            p[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double abs_err = std::abs(numeric - g[i]);
            const double denom = std::max({std::abs(numeric), std::abs(g[i]), kRelativeErrorFloor});
            report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
            report.max_relative_error = std::max(report.max_relative_error, abs_err / denom);
            ++report.entries;
        }
    }
    return report;
}

double exact_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        auto row = logits.row(b);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - mx);
        total += mx + std::log(s) - row[static_cast<std::size_t>(labels[b])];
    }
    return total / static_cast<double>(labels.size());
}

GradCheckReport grad_check(Network& net, const Tensor& x, std::span<const int> labels, double eps) {
    const auto trace = forward(net, x);
    const auto bp = backward(net, trace, softmax_cross_entropy_grad(trace.probs, labels));
    auto params = net.parameters();
    // Differentiate the exact expression backward() models: no epsilon in the log.
    auto loss = [&] { return exact_cross_entropy(forward(net, x).logits, labels); };
    return compare_gradients(loss, params, bp.grads, eps);
}

} // namespace cdca
