// SPDX-License-Identifier: Apache-2.0

#include "cdca/prompt.hpp"

#include <algorithm>

namespace cdca {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("prompt alpha must be in (0,1]");
}

} // namespace

std::string to_string(PromptLayout l) {
    return l == PromptLayout::full_vector ? "full_vector" : "prefix";
}

PromptLayout parse_prompt_layout(const std::string& s) {
    if (s == "full_vector") return PromptLayout::full_vector;
    if (s == "prefix") return PromptLayout::prefix;
    throw ParameterError("unknown prompt layout '" + s + "'");
}

Prompt::Prompt(PromptLayout layout, std::size_t input_width, std::size_t k, double alpha)
    : layout_(layout), input_width_(input_width), alpha_(alpha) {
    check_alpha(alpha);
    if (input_width == 0) throw ParameterError("prompt input width must be positive");
    if (layout == PromptLayout::full_vector) k = input_width;
    if (k == 0 || k > input_width) throw ParameterError("prompt prefix length must be in [1, input width]");
    values_ = Tensor({k}, 0.0);
}

Prompt::Prompt(PromptLayout layout, std::size_t input_width, Tensor values, double alpha)
    : layout_(layout), input_width_(input_width), values_(std::move(values)), alpha_(alpha) {
    check_alpha(alpha);
    if (values_.rank() != 1) throw DimensionError("prompt values must be rank 1");
    if (layout == PromptLayout::full_vector && values_.size() != input_width) {
        throw DimensionError("full_vector prompt needs " + std::to_string(input_width) + " values");
    }
    if (values_.size() > input_width) throw DimensionError("prompt prefix longer than the input width");
}

Tensor apply(const Tensor& x, const Prompt& prompt) {
    if (x.rank() != 2 || x.cols() != prompt.input_width()) {
        throw DimensionError("prompt for width " + std::to_string(prompt.input_width()) + " applied to " +
                             shape_str(x.shape()));
    }
    Tensor out = x;
    const auto phi = prompt.values().data();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < phi.size(); ++c) row[c] += phi[c];
    }
    return out;
}

Tensor prompt_gradient(const Tensor& input_grad, const Prompt& prompt) {
    if (input_grad.rank() != 2 || input_grad.cols() != prompt.input_width()) {
        throw DimensionError("prompt_gradient: input gradient " + shape_str(input_grad.shape()));
    }
    Tensor g({prompt.length()}, 0.0);
    for (std::size_t r = 0; r < input_grad.rows(); ++r) {
        auto row = input_grad.row(r);
        for (std::size_t c = 0; c < g.size(); ++c) g[c] += row[c];
    }
    return g;
}

double beta(UncertaintyScore v, double alpha) {
    return std::clamp(alpha - v.value(), 0.0, 1.0);
}

Prompt u_ema_update(const Prompt& prev, const Prompt& candidate, UncertaintyScore batch_v_unc) {
    if (!prev.same_layout(candidate)) throw ParameterError("u_ema_update: prompt layouts differ");
    const double b = beta(batch_v_unc, prev.alpha());
    Prompt next = prev;
    auto out = next.values().data();
    const auto p = prev.values().data();
    const auto c = candidate.values().data();
    // Written as p + (1-b)(c-p) so candidate == prev is an exact fixed point;
    // the clamp keeps rounding from stepping past either end.
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = p[i] + (1.0 - b) * (c[i] - p[i]);
        out[i] = std::clamp(v, std::min(p[i], c[i]), std::max(p[i], c[i]));
    }
    return next;
}

} // namespace cdca
