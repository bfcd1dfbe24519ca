// SPDX-License-Identifier: Apache-2.0

#include "cdca/gradsuite.hpp"

#include <algorithm>

#include "cdca/cloud.hpp"

namespace cdca {

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor t({rows, cols});
    for (double& v : t.data()) v = rng.normal();
    return t;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.index(classes));
    return y;
}

// Zero biases behind a fully inactive layer put the next pre-activation
// exactly on the ReLU kink, where central differences are meaningless.
Network with_random_biases(Network net, Rng& rng) {
    auto layers = net.layers();
    for (auto& l : layers) {
        for (double& v : l.bias.data()) v = 0.1 * rng.normal();
    }
    net.assign_layers(std::move(layers));
    return net;
}

double alignment_loss(const CloudState& s, const Tensor& xs, const Tensor& xt) {
    const Tensor feats =
        concat_rows(features(s.teacher, apply(xs, s.prompt)), features(s.teacher, apply(xt, s.prompt)));
    std::vector<int> domain(feats.rows(), 1);
    std::fill_n(domain.begin(), xs.rows(), 0);
    return exact_cross_entropy(forward(s.disc.net, feats).logits, domain);
}

double teacher_objective(const CloudState& s, const Tensor& xs, std::span<const int> ys, const Tensor& xt) {
    const double sup = exact_cross_entropy(forward(s.teacher, apply(xs, s.prompt)).logits, ys);
    return sup - s.config.lambda_align * s.config.lambda_grl * alignment_loss(s, xs, xt);
}

} // namespace

double GradSuiteReport::max_relative_error() const {
    return std::max({network.max_relative_error, teacher.max_relative_error, discriminator.max_relative_error,
                     student.max_relative_error, prompt.max_relative_error});
}

GradSuiteReport run_gradcheck_suite(std::size_t configs, std::uint64_t seed, double eps) {
    GradSuiteReport report;
    Rng rng(seed);
    for (std::size_t c = 0; c < configs; ++c) {
        const std::size_t dim = pick(rng, 3, 6);
        const std::size_t classes = pick(rng, 2, 4);
        const std::size_t batch = pick(rng, 2, 4);

        MLPSpec sspec{{dim}, 0.0};
        const std::size_t s_hidden = pick(rng, 1, 2);
        for (std::size_t i = 0; i < s_hidden; ++i) sspec.widths.push_back(pick(rng, 3, 5));
        sspec.widths.push_back(classes);
        MLPSpec tspec{{dim}, 0.0};
        const std::size_t t_hidden = pick(rng, 2, 3);
        for (std::size_t i = 0; i < t_hidden; ++i) tspec.widths.push_back(pick(rng, 8, 10));
        tspec.widths.push_back(classes);
        const MLPSpec dspec{{tspec.widths[tspec.widths.size() - 2], pick(rng, 3, 5), 2}, 0.0};

        Network plain = with_random_biases(build_network(sspec, rng), rng);
        const Tensor xp = random_matrix(rng, batch, dim);
        const auto yp = random_labels(rng, batch, classes);
        report.network.merge(grad_check(plain, xp, yp, eps));

        Prompt prompt = rng.uniform() < 0.5 ? Prompt::full(dim)
                                            : Prompt(PromptLayout::prefix, dim, pick(rng, 1, dim));
        for (double& v : prompt.values().data()) v = 0.3 * rng.normal();

        CloudConfig cfg;
        cfg.lambda_align = rng.uniform(0.05, 1.0);
        cfg.lambda_grl = rng.uniform(0.5, 2.0);
        LabeledSet source{random_matrix(rng, batch, dim), random_labels(rng, batch, classes)};
        Network teacher = with_random_biases(build_network(tspec, rng), rng);
        Network student = with_random_biases(build_network(sspec, rng), rng);
        Discriminator disc{with_random_biases(build_discriminator(dspec, rng).net, rng)};
        CloudState s = make_cloud_state(std::move(teacher), std::move(student), std::move(disc), prompt, source, cfg,
                                        rng.fork(c));

        const Tensor& xs = s.source.inputs;
        const auto& ys = s.source.labels;
        const Tensor xt = random_matrix(rng, batch, dim);
        const auto yt = random_labels(rng, batch, classes);

        const TeacherGradients tg = teacher_gradients(s, xs, ys, xt);
        report.teacher.merge(compare_gradients([&] { return teacher_objective(s, xs, ys, xt); },
                                               s.teacher.parameters(), tg.teacher, eps));
        report.discriminator.merge(compare_gradients([&] { return cfg.lambda_align * alignment_loss(s, xs, xt); },
                                                     s.disc.net.parameters(), tg.disc, eps));

        auto student_loss = [&] { return exact_cross_entropy(forward(s.student, apply(xt, s.prompt)).logits, yt); };
        const StudentGradients sg = student_gradients(s.student, s.prompt, apply(xt, s.prompt), yt);
        report.student.merge(compare_gradients(student_loss, s.student.parameters(), sg.student, eps));

        Tensor total = tg.prompt;
        add_inplace(total, sg.prompt);
        Tensor* prompt_param = &s.prompt.values();
        report.prompt.merge(compare_gradients([&] { return teacher_objective(s, xs, ys, xt) + student_loss(); },
                                              std::span<Tensor* const>(&prompt_param, 1),
                                              std::span<const Tensor>(&total, 1), eps));
        ++report.configs;
    }
    return report;
}

} // namespace cdca
