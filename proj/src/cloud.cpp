// SPDX-License-Identifier: Apache-2.0

#include "cdca/cloud.hpp"

#include <algorithm>
#include <cmath>

namespace cdca {

namespace {

void split_rows(const Tensor& both, std::size_t first, Tensor& a, Tensor& b) {
    const std::size_t cols = both.cols();
    const auto d = both.values();
    a = Tensor({first, cols}, std::vector<double>(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(first * cols)));
    b = Tensor({both.rows() - first, cols}, std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(first * cols), d.end()));
}

void accumulate_prompt_grad(CloudState& state, const Tensor& g) {
    if (!state.config.train_prompt) return;
    if (!state.prompt_grad_pending) {
        state.prompt_grad = g;
        state.prompt_grad_pending = true;
    } else {
        add_inplace(state.prompt_grad, g);
    }
}

void add_grads(LayerGrads& into, const LayerGrads& more) {
    for (std::size_t k = 0; k < into.size(); ++k) add_inplace(into[k], more[k]);
}

} // namespace

void CloudConfig::validate() const {
    if (!(lr_teacher > 0.0 && lr_student > 0.0 && lr_prompt > 0.0)) {
        throw ParameterError("cloud learning rates must be positive");
    }
    if (!(lambda_align >= 0.0)) throw ParameterError("lambda_align must be non-negative");
    if (!(lambda_grl > 0.0)) throw ParameterError("lambda_grl must be positive");
    if (!(pl_threshold >= 0.0 && pl_threshold <= 1.0)) throw ParameterError("pl_threshold must be in [0,1]");
    if (sync_interval == 0) throw ParameterError("sync_interval must be positive");
}

CloudState make_cloud_state(Network teacher, Network student, Discriminator disc, Prompt prompt, LabeledSet source,
                            CloudConfig config, Rng rng) {
    config.validate();
    if (teacher.parameter_count() <= student.parameter_count()) {
        throw ParameterError("teacher must have more parameters than the student (" +
                             std::to_string(teacher.parameter_count()) + " vs " +
                             std::to_string(student.parameter_count()) + ")");
    }
    if (disc.input_width() != teacher.feature_width()) {
        throw DimensionError("discriminator width " + std::to_string(disc.input_width()) +
                             " does not match teacher features " + std::to_string(teacher.feature_width()));
    }
    if (teacher.input_width() != student.input_width() || teacher.classes() != student.classes() ||
        prompt.input_width() != student.input_width()) {
        throw DimensionError("teacher, student and prompt disagree on input width or class count");
    }
    if (source.size() == 0 || source.inputs.cols() != teacher.input_width()) {
        throw DimensionError("source set does not match the network input width");
    }
    CloudState s{std::move(teacher), std::move(student), std::move(disc), std::move(prompt), std::move(source),
                 config, 0, 0, rng, Tensor(), false};
    return s;
}

TeacherGradients teacher_gradients(const CloudState& state, const Tensor& xs, std::span<const int> ys,
                                   const Tensor& xt) {
    const auto& cfg = state.config;
    const Tensor xs_p = apply(xs, state.prompt);
    const Tensor xt_p = apply(xt, state.prompt);
    const auto src = forward(state.teacher, xs_p);
    const auto tgt = forward(state.teacher, xt_p);
    const std::size_t cut = state.teacher.feature_cut();

    TeacherGradients g;
    g.losses.sup = cross_entropy(src.probs, ys);

    const Tensor feats = concat_rows(src.features(cut), tgt.features(cut));
    std::vector<int> domain(feats.rows(), 1);
    std::fill_n(domain.begin(), xs.rows(), 0);
    const auto disc = forward(state.disc.net, feats);
    g.losses.align = cross_entropy(disc.probs, domain);

    // Discriminator descends λ·L_align; the features receive the reversed gradient.
    Tensor disc_logit_grad = softmax_cross_entropy_grad(disc.probs, domain);
    for (double& v : disc_logit_grad.data()) v *= cfg.lambda_align;
    auto disc_bp = backward(state.disc.net, disc, disc_logit_grad);
    g.disc = std::move(disc_bp.grads);
    Tensor feat_src_grad, feat_tgt_grad;
    split_rows(grl_backward(disc_bp.input, cfg.lambda_grl), xs.rows(), feat_src_grad, feat_tgt_grad);

    auto src_bp = backward(state.teacher, src, softmax_cross_entropy_grad(src.probs, ys), &feat_src_grad);
    auto tgt_bp = backward(state.teacher, tgt, Tensor(tgt.logits.shape(), 0.0), &feat_tgt_grad);
    g.teacher = std::move(src_bp.grads);
    add_grads(g.teacher, tgt_bp.grads);

    g.prompt = prompt_gradient(src_bp.input, state.prompt);
    add_inplace(g.prompt, prompt_gradient(tgt_bp.input, state.prompt));
    return g;
}

TeacherLosses teacher_step(CloudState& state, const Tensor& xt) {
    const std::size_t n = xt.rows();
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = state.rng.index(state.source.size());
    const Tensor xs = state.source.inputs.gather_rows(idx);
    std::vector<int> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = state.source.labels[idx[i]];

    auto g = teacher_gradients(state, xs, ys, xt);
    sgd_step(state.teacher.parameters(), g.teacher, state.config.lr_teacher);
    sgd_step(state.disc.net.parameters(), g.disc, state.config.lr_teacher);
    accumulate_prompt_grad(state, g.prompt);
    return g.losses;
}

std::optional<TeacherLosses> teacher_step(CloudState& state, const UplinkMsg& uplink) {
    if (uplink.count() == 0 || !state.config.train_teacher) return std::nullopt;
    return teacher_step(state, uplink.input_tensor());
}

std::size_t PseudoBatch::kept_count() const {
    return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), true));
}

PseudoBatch make_pseudo_labels(const CloudState& state, const Tensor& xt) {
    PseudoBatch p;
    p.inputs = apply(xt, state.prompt);
    const Tensor probs = predict(state.teacher, p.inputs);
    p.labels = argmax_rows(probs);
    p.confidence.resize(probs.rows());
    p.kept.resize(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        p.confidence[i] = confidence_score(probs.row(i));
        p.kept[i] = p.confidence[i] >= state.config.pl_threshold;
    }
    return p;
}

StudentGradients student_gradients(const Network& student, const Prompt& prompt, const Tensor& prompted,
                                   std::span<const int> labels) {
    const auto trace = forward(student, prompted);
    StudentGradients g;
    g.loss = cross_entropy(trace.probs, labels);
    auto bp = backward(student, trace, softmax_cross_entropy_grad(trace.probs, labels));
    g.student = std::move(bp.grads);
    g.prompt = prompt_gradient(bp.input, prompt);
    return g;
}

std::optional<double> student_step(CloudState& state, const PseudoBatch& pseudo) {
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    for (std::size_t i = 0; i < pseudo.kept.size(); ++i) {
        if (pseudo.kept[i]) {
            rows.push_back(i);
            labels.push_back(pseudo.labels[i]);
        }
    }
    if (rows.empty()) return std::nullopt;
    auto g = student_gradients(state.student, state.prompt, pseudo.inputs.gather_rows(rows), labels);
    sgd_step(state.student.parameters(), g.student, state.config.lr_student);
    accumulate_prompt_grad(state, g.prompt);
    return g.loss;
}

std::optional<PromptUpdate> prompt_step(CloudState& state, UncertaintyScore batch_v_unc) {
    if (!state.prompt_grad_pending) return std::nullopt;
    Prompt candidate = state.prompt;
    {
        auto c = candidate.values().data();
        const auto g = state.prompt_grad.data();
        for (std::size_t i = 0; i < c.size(); ++i) c[i] -= state.config.lr_prompt * g[i];
    }
    PromptUpdate u;
    Prompt next = state.config.uema ? u_ema_update(state.prompt, candidate, batch_v_unc) : candidate;
    u.beta = state.config.uema ? beta(batch_v_unc, state.prompt.alpha()) : 0.0;
    double d2 = 0.0;
    for (std::size_t i = 0; i < next.length(); ++i) {
        const double d = next.values()[i] - state.prompt.values()[i];
        d2 += d * d;
    }
    u.displacement = std::sqrt(d2);
    state.prompt = std::move(next);
    state.prompt_grad_pending = false;
    state.prompt_grad = Tensor();
    return u;
}

DownlinkMsg make_downlink(const CloudState& state) {
    return DownlinkMsg{state.version, state.student.layers(), state.prompt};
}

CloudUpdateResult cloud_update(CloudState& state, const UplinkMsg& uplink) {
    CloudUpdateResult r;
    if (uplink.count() == 0) return r;
    if (uplink.width != state.student.input_width()) {
        throw DimensionError("uplink width " + std::to_string(uplink.width) + " does not match the models");
    }
    const Tensor xt = uplink.input_tensor();
    double v = 0.0;
    for (double s : uplink.scores) v += s;
    r.batch_v_unc = v / static_cast<double>(uplink.count());

    if (state.config.train_teacher) r.teacher = teacher_step(state, xt);
    const PseudoBatch pseudo = make_pseudo_labels(state, xt);
    r.kept_fraction = static_cast<double>(pseudo.kept_count()) / static_cast<double>(uplink.count());
    r.student_loss = student_step(state, pseudo);
    r.prompt = prompt_step(state, UncertaintyScore(std::clamp(r.batch_v_unc, 0.0, kMaxUncertainty)));

    ++state.update_count;
    if (state.update_count % state.config.sync_interval == 0) {
        ++state.version;
        r.downlink = make_downlink(state);
    }
    return r;
}

} // namespace cdca
