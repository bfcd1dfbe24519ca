// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every analytic gradient used in training,
// over randomly sized small networks.

#pragma once

#include <cstdint>

#include "cdca/gradcheck.hpp"

namespace cdca {

struct GradSuiteReport {
    GradCheckReport network;       // plain classifier cross-entropy
    GradCheckReport teacher;       // L_sup - λ·λ_grl·L_align
    GradCheckReport discriminator; // λ·L_align
    GradCheckReport student;       // pseudo-label cross-entropy
    GradCheckReport prompt;        // teacher-side plus student-side
    std::size_t configs = 0;

    double max_relative_error() const;
};

GradSuiteReport run_gradcheck_suite(std::size_t configs = 20, std::uint64_t seed = 20240601, double eps = 1e-6);

} // namespace cdca
