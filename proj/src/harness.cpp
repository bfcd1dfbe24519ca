// SPDX-License-Identifier: Apache-2.0

#include "cdca/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <thread>

#include "cdca/channel.hpp"

namespace cdca {

namespace {

constexpr std::size_t kProbeRows = 16;

Prompt initial_prompt(const ExperimentConfig& cfg) {
    if (cfg.prompt_layout == PromptLayout::full_vector) return Prompt::full(cfg.dim, cfg.prompt_alpha);
    return Prompt(PromptLayout::prefix, cfg.dim, cfg.prompt_prefix, cfg.prompt_alpha);
}

struct DeviceRole {
    DeviceState state;
    Channel& channel;
    std::size_t samples = 0;
    std::size_t selected = 0;

    template <class OnApplied>
    void drain(OnApplied&& on_applied) {
        for (;;) {
            RecvResult r = channel.try_recv();
            if (r.status != RecvStatus::ok) return;
            if (r.frame.tag != FrameTag::downlink) throw DecodeError("device received a non-downlink frame", 0);
            const DownlinkMsg msg = decode_downlink(r.frame.payload);
            if (apply_downlink(state, msg) == DownlinkStatus::applied) on_applied();
        }
    }

    MetricsRecord step(const Batch& batch) {
        MetricsRecord rec;
        rec.round = batch.round + 1;
        rec.domain = batch.domain_id;
        rec.batch = batch.index;
        rec.version = state.model_version;

        // Labels are only read here, after the predictions are fixed.
        DeviceStepResult res = device_step(state, batch.inputs);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < batch.labels.size(); ++i) correct += res.predictions[i] == batch.labels[i];
        const double n = static_cast<double>(batch.labels.size());
        rec.accuracy = static_cast<double>(correct) / n;
        rec.v_unc_mean = mean_score(res.scores);
        rec.uplink_frac = static_cast<double>(res.selected.size()) / n;
        samples += batch.labels.size();
        selected += res.selected.size();

        if (res.uplink) channel.send(make_frame(*res.uplink));
        return rec;
    }
};

struct CloudRole {
    CloudState state;
    Channel& channel;
    MetricsSink& sink;

    void handle(const Frame& frame) {
        if (frame.tag != FrameTag::uplink) throw DecodeError("cloud received a non-uplink frame", 0);
        const UplinkMsg up = decode_uplink(frame.payload);
        const CloudUpdateResult r = cloud_update(state, up);
        CloudRecord rec;
        rec.update = state.update_count;
        if (r.teacher) {
            rec.l_sup = r.teacher->sup;
            rec.l_align = r.teacher->align;
        }
        rec.l_stu = r.student_loss.value_or(0.0);
        rec.kept_frac = r.kept_fraction;
        rec.batch_v_unc = r.batch_v_unc;
        rec.beta = r.prompt ? r.prompt->beta : 0.0;
        sink.append(rec);
        if (r.downlink) channel.send(make_frame(*r.downlink));
    }

    void drain() {
        for (;;) {
            RecvResult r = channel.try_recv();
            if (r.status != RecvStatus::ok) return;
            handle(r.frame);
        }
    }

    void serve() {
        for (;;) {
            RecvResult r = channel.recv(std::chrono::milliseconds(50));
            if (r.status == RecvStatus::closed) return;
            if (r.status == RecvStatus::ok) handle(r.frame);
        }
    }
};

CloudState make_cloud(const ExperimentConfig& cfg, const PretrainedModels& pm, std::uint64_t seed) {
    CloudConfig cc = cfg.cloud;
    cc.train_prompt = cfg.prompt_enabled;
    return make_cloud_state(pm.teacher, pm.student, pm.disc, initial_prompt(cfg), pm.source, cc, Rng(seed).fork(3));
}

} // namespace

void train_supervised(Network& net, const LabeledSet& data, std::size_t epochs, std::size_t batch, double lr,
                      Rng& rng) {
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.index(i + 1)]);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t end = std::min(n, start + batch);
            std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<int> ys(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) ys[i] = data.labels[rows[i]];
            const auto trace = forward(net, data.inputs.gather_rows(rows), &rng);
            const auto bp = backward(net, trace, softmax_cross_entropy_grad(trace.probs, ys));
            sgd_step(net.parameters(), bp.grads, lr);
        }
    }
}

double accuracy_on(const Network& net, const Tensor& inputs, std::span<const int> labels) {
    const auto pred = argmax_rows(predict(net, inputs));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

PretrainedModels pretrain(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PretrainedModels pm;
    pm.task = BaseTask::generate(cfg.dim, cfg.classes, cfg.center_scale, cfg.noise, mix64(seed ^ 0x7A5C0001ULL));
    pm.source = gen_source(pm.task, cfg.source_size, mix64(seed ^ 0x50C0002ULL));
    Rng root(seed);
    Rng init = root.fork(1);
    pm.student = build_network(cfg.student_spec(), init);
    pm.teacher = build_network(cfg.teacher_spec(), init);
    pm.disc = build_discriminator(cfg.disc_spec(), init);
    Rng order = root.fork(4);
    train_supervised(pm.student, pm.source, cfg.pretrain_epochs, cfg.pretrain_batch, cfg.pretrain_lr, order);
    train_supervised(pm.teacher, pm.source, cfg.pretrain_epochs, cfg.pretrain_batch, cfg.pretrain_lr, order);
    return pm;
}

std::uint64_t stream_seed(std::uint64_t seed) { return mix64(seed ^ 0x5EED0003ULL); }

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opts) {
    cfg.validate();
    PretrainedModels local;
    if (!opts.pretrained) local = pretrain(cfg, seed);
    const PretrainedModels& pm = opts.pretrained ? *opts.pretrained : local;

    auto [device_end, cloud_end] = make_inprocess_pair();
    std::unique_ptr<TcpListener> listener;
    const bool tcp = cfg.collaborate && cfg.transport == TransportMode::tcp;
    if (tcp) {
        listener = std::make_unique<TcpListener>(cfg.host, cfg.port);
        device_end = tcp_connect(cfg.host, listener->port());
        cloud_end = listener->accept();
    }

    DeviceState ds;
    ds.net = pm.student;
    ds.prompt = initial_prompt(cfg);
    ds.threshold = cfg.threshold;
    ds.rng = Rng(seed).fork(2);
    ds.strategy = cfg.strategy;
    ds.mc_passes = cfg.mc_passes;
    ds.aggregate = cfg.aggregate;
    ds.uplink_enabled = cfg.collaborate;
    DeviceRole device{std::move(ds), *device_end};

    MetricsSink sink;
    std::optional<CloudRole> cloud;
    if (cfg.collaborate) cloud.emplace(CloudRole{make_cloud(cfg, pm, seed), *cloud_end, sink});

    RunResult result;
    const Tensor probe = pm.source.inputs.gather_rows([&] {
        std::vector<std::size_t> rows(std::min(kProbeRows, pm.source.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        return rows;
    }());
    auto on_applied = [&] {
        if (!opts.check_consistency || tcp || !cloud) return;
        ++result.consistency_checks;
        const Tensor dev = predict(device.state.net, apply(probe, device.state.prompt));
        const Tensor cl = predict(cloud->state.student, apply(probe, cloud->state.prompt));
        if (!bit_equal(dev, cl)) ++result.consistency_failures;
    };

    std::exception_ptr cloud_error;
    std::thread cloud_thread;
    if (tcp) {
        cloud_thread = std::thread([&] {
            try {
                cloud->serve();
            } catch (...) {
                cloud_error = std::current_exception();
            }
        });
    }

    try {
        DomainStream stream(pm.task, cfg.stream_config(opts.stream_seed.value_or(stream_seed(seed))));
        while (auto batch = stream.next()) {
            if (opts.max_batches != 0 && batch->index >= opts.max_batches) break;
            device.drain(on_applied);
            MetricsRecord rec = device.step(*batch);
            if (cloud && !tcp) cloud->drain();
            rec.up_bytes = device_end->counter().uplink_bytes;
            rec.down_bytes = cloud_end->counter().downlink_bytes;
            sink.append(rec);
        }
    } catch (...) {
        device_end->close();
        if (cloud_thread.joinable()) cloud_thread.join();
        throw;
    }
    device_end->close();
    if (cloud_thread.joinable()) cloud_thread.join();
    if (cloud_error) std::rethrow_exception(cloud_error);

    result.records = sink.table();
    result.cloud_log = sink.cloud_log();
    result.mean_accuracy = mean_accuracy(result.records);
    result.samples = device.samples;
    result.selected = device.selected;
    result.uplink_fraction =
        device.samples == 0 ? 0.0 : static_cast<double>(device.selected) / static_cast<double>(device.samples);
    result.bytes.uplink_bytes = device_end->counter().uplink_bytes;
    result.bytes.downlink_bytes = cloud_end->counter().downlink_bytes;
    result.final_version = device.state.model_version;
    return result;
}

double calibrate_threshold(const ExperimentConfig& cfg, std::uint64_t seed, double target,
                           const PretrainedModels& pretrained, std::size_t batches) {
    if (!(target > 0.0 && target < 1.0)) throw ParameterError("calibration target must be in (0,1)");
    ExperimentConfig c = cfg;
    c.collaborate = true;
    c.strategy.kind = SelectionKind::ugs;
    c.transport = TransportMode::in_process;
    RunOptions o;
    o.max_batches = batches;
    o.pretrained = &pretrained;
    o.stream_seed = mix64(stream_seed(seed) ^ 0xCA11B000ULL);

    double lo = 0.0, hi = kMaxUncertainty;
    double best = 0.0, best_gap = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (lo + hi);
        c.threshold = mid;
        const double frac = run_experiment(c, seed, o).uplink_fraction;
        if (std::abs(frac - target) < best_gap) {
            best_gap = std::abs(frac - target);
            best = mid;
        }
        if (best_gap <= 0.005) break;
        // A higher threshold selects fewer samples.
        if (frac > target) lo = mid;
        else hi = mid;
    }
    return best;
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double SuiteRow::median_accuracy() const { return median(accuracy); }
double SuiteRow::median_uplink_frac() const { return median(uplink_frac); }
double SuiteRow::median_up_bytes() const { return median(std::vector<double>(up_bytes.begin(), up_bytes.end())); }

namespace {

std::vector<double> column_medians(const std::vector<std::vector<double>>& per_seed) {
    if (per_seed.empty()) return {};
    std::vector<double> out(per_seed.front().size());
    for (std::size_t d = 0; d < out.size(); ++d) {
        std::vector<double> col;
        for (const auto& row : per_seed) col.push_back(row[d]);
        out[d] = median(col);
    }
    return out;
}

void add_run(SuiteRow& row, std::uint64_t seed, const RunResult& r, double threshold, std::size_t domains) {
    row.seeds.push_back(seed);
    row.accuracy.push_back(r.mean_accuracy);
    row.uplink_frac.push_back(r.uplink_fraction);
    row.up_bytes.push_back(r.bytes.uplink_bytes);
    row.down_bytes.push_back(r.bytes.downlink_bytes);
    row.thresholds.push_back(threshold);
    const auto cells = domain_round_accuracy(r.records);
    std::vector<double> acc(domains, 0.0), forget(domains, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::size_t> count(domains, 0);
    for (const auto& [key, value] : cells) {
        acc[key.first] += value;
        ++count[key.first];
    }
    for (std::size_t d = 0; d < domains; ++d) {
        if (count[d] > 0) acc[d] /= static_cast<double>(count[d]);
        if (count[d] >= 2) forget[d] = forgetting_metric(r.records, d);
    }
    row.domain_accuracy.push_back(std::move(acc));
    row.forgetting.push_back(std::move(forget));
}

std::string target_label(const std::string& kind, double target) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s@%g", kind.c_str(), target);
    return buf;
}

} // namespace

std::vector<double> SuiteRow::median_domain_accuracy() const { return column_medians(domain_accuracy); }
std::vector<double> SuiteRow::median_forgetting() const { return column_medians(forgetting); }

std::vector<SuiteRow> run_suite(const ExperimentConfig& base, const SuiteOptions& opts) {
    if (opts.presets.empty() && !opts.sweep) throw ParameterError("run_suite needs at least one preset");
    base.validate();
    std::vector<SuiteRow> rows;
    std::map<std::string, std::size_t> index;
    auto row_for = [&](const std::string& label, const std::string& preset, double target) -> SuiteRow& {
        auto it = index.find(label);
        if (it != index.end()) return rows[it->second];
        index[label] = rows.size();
        SuiteRow r;
        r.label = label;
        r.preset = preset;
        r.target_frac = target;
        rows.push_back(std::move(r));
        return rows.back();
    };
    auto report = [&](const std::string& what) {
        if (opts.progress) opts.progress(what);
    };
    const std::size_t domains = base.domains.size();

    for (const auto seed : base.seeds) {
        const PretrainedModels pm = pretrain(base, seed);
        RunOptions ro;
        ro.pretrained = &pm;
        for (const auto& name : opts.presets) {
            const ExperimentConfig cfg = apply_preset(base, name);
            const RunResult r = run_experiment(cfg, seed, ro);
            add_run(row_for(name, name, std::numeric_limits<double>::quiet_NaN()), seed, r, cfg.threshold, domains);
            report(name + " seed " + std::to_string(seed));
        }
        if (!opts.sweep) continue;
        for (const double target : opts.sweep_targets) {
            ExperimentConfig ugs = apply_preset(base, "full");
            ugs.threshold = calibrate_threshold(ugs, seed, target, pm);
            add_run(row_for(target_label("ugs", target), "full", target), seed, run_experiment(ugs, seed, ro),
                    ugs.threshold, domains);
            for (const auto& [kind, preset] : {std::pair<std::string, std::string>{"random", "select_random"},
                                               {"confidence", "select_confidence"}}) {
                ExperimentConfig cfg = apply_preset(base, preset);
                cfg.strategy.frac = target;
                add_run(row_for(target_label(kind, target), preset, target), seed, run_experiment(cfg, seed, ro),
                        cfg.threshold, domains);
            }
            report(target_label("sweep", target) + " seed " + std::to_string(seed));
        }
    }
    return rows;
}

std::string suite_csv(const std::vector<SuiteRow>& rows) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return std::string(buf);
    };
    std::size_t domains = 0;
    for (const auto& r : rows) {
        if (!r.domain_accuracy.empty()) domains = std::max(domains, r.domain_accuracy.front().size());
    }
    std::string out = "label,preset,target_frac,seeds,median_accuracy,median_uplink_frac,median_up_bytes";
    for (std::size_t d = 0; d < domains; ++d) out += ",domain" + std::to_string(d) + "_accuracy";
    for (std::size_t d = 0; d < domains; ++d) out += ",domain" + std::to_string(d) + "_forgetting";
    out += '\n';
    for (const auto& r : rows) {
        out += r.label + ',' + r.preset + ',' + (std::isnan(r.target_frac) ? std::string() : fmt(r.target_frac)) +
               ',' + std::to_string(r.seeds.size()) + ',' + fmt(r.median_accuracy()) + ',' +
               fmt(r.median_uplink_frac()) + ',' + fmt(r.median_up_bytes());
        const auto acc = r.median_domain_accuracy();
        const auto fg = r.median_forgetting();
        for (std::size_t d = 0; d < domains; ++d) out += ',' + (d < acc.size() ? fmt(acc[d]) : std::string());
        for (std::size_t d = 0; d < domains; ++d) out += ',' + (d < fg.size() ? fmt(fg[d]) : std::string());
        out += '\n';
    }
    return out;
}

} // namespace cdca
