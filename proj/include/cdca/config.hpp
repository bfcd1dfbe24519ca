// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a flat `section.key = value` text format, one
// entry per line, `#` starts a comment. Unknown keys are errors.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdca/cloud.hpp"
#include "cdca/device.hpp"
#include "cdca/prompt.hpp"
#include "cdca/stream.hpp"

namespace cdca {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TransportMode { in_process, tcp };

std::string to_string(TransportMode m);
TransportMode parse_transport(const std::string& s);

struct ExperimentConfig {
    // task
    std::size_t dim = 16;
    std::size_t classes = 4;
    double center_scale = 1.0;
    double noise = 0.5;
    std::size_t source_size = 2000;

    // stream
    std::vector<DomainSpec> domains;
    std::size_t rounds = 10;
    std::size_t batches_per_domain = 25;
    std::size_t batch_size = 8;

    // models (hidden widths only; input and class widths come from the task)
    std::vector<std::size_t> student_hidden{32, 32};
    std::vector<std::size_t> teacher_hidden{128, 128, 64};
    std::vector<std::size_t> disc_hidden{32};
    double student_dropout = 0.1;
    double teacher_dropout = 0.1;

    // source pretraining
    std::size_t pretrain_epochs = 20;
    std::size_t pretrain_batch = 32;
    double pretrain_lr = 0.01;

    // uncertainty and selection
    std::size_t mc_passes = 10;
    double threshold = kDefaultUncertaintyThreshold;
    UncAggregate aggregate = UncAggregate::predicted_class;
    SelectionStrategy strategy;

    // prompt
    bool prompt_enabled = true;
    PromptLayout prompt_layout = PromptLayout::full_vector;
    std::size_t prompt_prefix = 4;
    double prompt_alpha = kDefaultPromptAlpha;

    // cloud
    bool collaborate = true;
    CloudConfig cloud;

    // transport
    TransportMode transport = TransportMode::in_process;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string preset = "full";

    ExperimentConfig();

    MLPSpec student_spec() const;
    MLPSpec teacher_spec() const;
    MLPSpec disc_spec() const;
    StreamConfig stream_config(std::uint64_t seed) const;

    /// Throws ConfigError naming the offending key.
    void validate() const;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

std::vector<DomainSpec> default_domains();

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string to_text(const ExperimentConfig& cfg);

/// Named toggle bundles:
///   source_only          no collaboration
///   pseudo_label         pseudo labels, all samples uplinked, no prompt,
///                        no feature alignment
///   pseudo_label_vpa     + prompt and feature alignment, plain gradient
///                        prompt update
///   pseudo_label_vpa_ugs + uncertainty guided sampling
///   full                 + uncertainty-weighted EMA prompt update
///   select_confidence, select_random, select_all
///                        full method with another selection strategy
///   frozen_teacher       full method with the teacher never updated
ExperimentConfig apply_preset(ExperimentConfig cfg, const std::string& name);
const std::vector<std::string>& preset_names();

} // namespace cdca
