// SPDX-License-Identifier: Apache-2.0
//
// Learnable additive input prompt and its uncertainty-weighted EMA update.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "cdca/tensor.hpp"
#include "cdca/uncertainty.hpp"

namespace cdca {

enum class PromptLayout : std::uint8_t {
    full_vector = 0, // one value per input dimension
    prefix = 1,      // values for the first k dimensions, zero elsewhere
};

std::string to_string(PromptLayout l);
PromptLayout parse_prompt_layout(const std::string& s);

inline constexpr double kDefaultPromptAlpha = 0.999;

class Prompt {
public:
    Prompt() = default;
    /// Zero prompt. For full_vector `k` is ignored and set to input_width.
    Prompt(PromptLayout layout, std::size_t input_width, std::size_t k, double alpha = kDefaultPromptAlpha);
    /// Explicit values; their length fixes k.
    Prompt(PromptLayout layout, std::size_t input_width, Tensor values, double alpha = kDefaultPromptAlpha);

    static Prompt full(std::size_t input_width, double alpha = kDefaultPromptAlpha) {
        return Prompt(PromptLayout::full_vector, input_width, input_width, alpha);
    }

    PromptLayout layout() const noexcept { return layout_; }
    std::size_t input_width() const noexcept { return input_width_; }
    /// Number of learnable values.
    std::size_t length() const noexcept { return values_.size(); }
    double alpha() const noexcept { return alpha_; }
    const Tensor& values() const noexcept { return values_; }
    Tensor& values() noexcept { return values_; }

    bool same_layout(const Prompt& other) const noexcept {
        return layout_ == other.layout_ && input_width_ == other.input_width_ && length() == other.length();
    }

    friend bool operator==(const Prompt&, const Prompt&) = default;

private:
    PromptLayout layout_ = PromptLayout::full_vector;
    std::size_t input_width_ = 0;
    Tensor values_;
    double alpha_ = kDefaultPromptAlpha;
};

/// x* = x + prompt, broadcast over rows.
Tensor apply(const Tensor& x, const Prompt& prompt);

/// Gradient of a loss with respect to the prompt values given its gradient
/// with respect to x*: column sums restricted to the prompt's span.
Tensor prompt_gradient(const Tensor& input_grad, const Prompt& prompt);

/// clamp(alpha - v_unc, 0, 1)
double beta(UncertaintyScore v, double alpha);

/// beta * prev + (1 - beta) * candidate, with beta from prev's alpha.
Prompt u_ema_update(const Prompt& prev, const Prompt& candidate, UncertaintyScore batch_v_unc);

} // namespace cdca
