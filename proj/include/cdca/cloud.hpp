// SPDX-License-Identifier: Apache-2.0
//
// Cloud trainer. One update per uplink message, in this order:
//
//   1. teacher_step       supervised source loss plus adversarial feature
//                         alignment through a gradient reversal layer
//   2. make_pseudo_labels teacher argmax on prompted target inputs, kept
//                         when confidence >= pl_threshold
//   3. student_step       cross-entropy of the student on kept pseudo labels
//   4. prompt_step        summed prompt gradient from 1 and 3, gradient step,
//                         then uncertainty-weighted EMA blend
//
// Every sync_interval updates a DownlinkMsg with the student parameters and
// the prompt is produced.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cdca/models.hpp"
#include "cdca/prompt.hpp"
#include "cdca/stream.hpp"
#include "cdca/uncertainty.hpp"
#include "cdca/wire.hpp"

namespace cdca {

struct CloudConfig {
    double lr_teacher = 0.01;
    double lr_student = 0.01;
    double lr_prompt = 0.01;
    /// Weight of the alignment term.
    double lambda_align = 0.1;
    /// Gradient reversal scale.
    double lambda_grl = 1.0;
    double pl_threshold = 0.8;
    std::uint32_t sync_interval = 10;
    /// false freezes the teacher at its source weights.
    bool train_teacher = true;
    /// false keeps the prompt at zero.
    bool train_prompt = true;
    /// false replaces the EMA blend with the plain gradient step.
    bool uema = true;

    void validate() const;
    friend bool operator==(const CloudConfig&, const CloudConfig&) = default;
};

struct CloudState {
    Network teacher;
    Network student;
    Discriminator disc;
    Prompt prompt;
    LabeledSet source;
    CloudConfig config;
    std::uint64_t update_count = 0;
    std::uint32_t version = 0;
    Rng rng;
    /// Prompt gradient accumulated since the last prompt_step.
    Tensor prompt_grad;
    bool prompt_grad_pending = false;
};

/// Checks the capacity ordering and feature widths before wiring roles up.
CloudState make_cloud_state(Network teacher, Network student, Discriminator disc, Prompt prompt, LabeledSet source,
                            CloudConfig config, Rng rng);

struct TeacherLosses {
    double sup = 0.0;
    double align = 0.0;
};

/// Analytic gradients of one teacher pass, before any update.
///   teacher: d/dθ (L_sup - λ·λ_grl·L_align), the reversal applied at the features
///   disc:    d/dψ (λ·L_align)
///   prompt:  the teacher-side prompt gradient, same objective as `teacher`
struct TeacherGradients {
    TeacherLosses losses;
    LayerGrads teacher;
    LayerGrads disc;
    Tensor prompt;
};

TeacherGradients teacher_gradients(const CloudState& state, const Tensor& xs, std::span<const int> ys,
                                   const Tensor& xt);

/// One SGD step of teacher and discriminator on target rows `xt` paired with
/// an equal-size source batch drawn with replacement. Accumulates the prompt
/// gradient. nullopt for an empty batch or a frozen teacher.
std::optional<TeacherLosses> teacher_step(CloudState& state, const UplinkMsg& uplink);
TeacherLosses teacher_step(CloudState& state, const Tensor& xt);

struct PseudoBatch {
    Tensor inputs;            // prompted target rows, all of them
    std::vector<int> labels;  // teacher argmax per row
    std::vector<double> confidence;
    std::vector<bool> kept;

    std::size_t kept_count() const;
};

PseudoBatch make_pseudo_labels(const CloudState& state, const Tensor& xt);

struct StudentGradients {
    double loss = 0.0;
    LayerGrads student;
    Tensor prompt;
};

/// Gradients of cross-entropy of `student` on already-prompted rows.
StudentGradients student_gradients(const Network& student, const Prompt& prompt, const Tensor& prompted,
                                   std::span<const int> labels);

/// nullopt (and no change at all) when nothing was kept.
std::optional<double> student_step(CloudState& state, const PseudoBatch& pseudo);

struct PromptUpdate {
    double beta = 0.0;
    double displacement = 0.0; // L2 norm of new minus previous prompt
};

/// nullopt when no gradient is pending.
std::optional<PromptUpdate> prompt_step(CloudState& state, UncertaintyScore batch_v_unc);

struct CloudUpdateResult {
    std::optional<TeacherLosses> teacher;
    std::optional<double> student_loss;
    double kept_fraction = 0.0;
    double batch_v_unc = 0.0;
    std::optional<PromptUpdate> prompt;
    std::optional<DownlinkMsg> downlink;
};

/// No-op for an empty uplink.
CloudUpdateResult cloud_update(CloudState& state, const UplinkMsg& uplink);

DownlinkMsg make_downlink(const CloudState& state);

} // namespace cdca
