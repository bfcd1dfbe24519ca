// SPDX-License-Identifier: Apache-2.0
//
// cdca: run single experiments, preset suites and the gradient checks.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "cdca/config.hpp"
#include "cdca/gradsuite.hpp"
#include "cdca/harness.hpp"
#include "cdca/metrics.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// One line, machine readable: `error kind=<kind> message="<text>"`.
int fail(const std::string& kind, const std::string& message) {
    std::string escaped;
    for (char c : message) {
        if (c == '"' || c == '\\') escaped += '\\';
        escaped += c == '\n' ? ' ' : c;
    }
    std::fprintf(stderr, "error kind=%s message=\"%s\"\n", kind.c_str(), escaped.c_str());
    return 2;
}

cdca::ExperimentConfig base_config(const std::string& path) {
    return path.empty() ? cdca::ExperimentConfig{} : cdca::load_config(path);
}

int cmd_run(const std::string& config_path, const std::string& preset, std::optional<std::uint64_t> seed,
            const std::string& transport, const std::string& out_csv, const std::string& out_json) {
    cdca::ExperimentConfig cfg = base_config(config_path);
    cfg = cdca::apply_preset(cfg, preset.empty() ? cfg.preset : preset);
    if (!transport.empty()) cfg.transport = cdca::parse_transport(transport);
    cfg.validate();
    const std::uint64_t s = seed.value_or(cfg.seeds.front());
    const cdca::RunResult r = cdca::run_experiment(cfg, s);
    if (!out_csv.empty()) cdca::emit(r.records, cdca::EmitFormat::csv, out_csv);
    if (!out_json.empty()) cdca::emit(r.records, cdca::EmitFormat::json, out_json);
    std::printf("preset=%s seed=%llu transport=%s batches=%zu mean_accuracy=%.4f uplink_frac=%.4f "
                "up_bytes=%llu down_bytes=%llu version=%u\n",
                cfg.preset.c_str(), static_cast<unsigned long long>(s), cdca::to_string(cfg.transport).c_str(),
                r.records.size(), r.mean_accuracy, r.uplink_fraction,
                static_cast<unsigned long long>(r.bytes.uplink_bytes),
                static_cast<unsigned long long>(r.bytes.downlink_bytes), r.final_version);
    for (std::size_t d = 0; d < cfg.domains.size() && cfg.rounds >= 2; ++d) {
        std::printf("  domain %zu %-18s forgetting=%+.4f\n", d, cfg.domains[d].str().c_str(),
                    cdca::forgetting_metric(r.records, d));
    }
    return 0;
}

int cmd_suite(const std::string& config_path, const std::string& presets, std::size_t seeds, bool sweep,
              const std::string& out) {
    cdca::ExperimentConfig cfg = base_config(config_path);
    if (seeds > 0) {
        cfg.seeds.clear();
        for (std::size_t i = 1; i <= seeds; ++i) cfg.seeds.push_back(i);
    }
    cdca::SuiteOptions opts;
    opts.presets = split_list(presets);
    opts.sweep = sweep;
    opts.progress = [](const std::string& s) { std::fprintf(stderr, "done %s\n", s.c_str()); };
    const auto rows = cdca::run_suite(cfg, opts);
    const std::string table = cdca::suite_csv(rows);
    if (!out.empty()) cdca::write_text(table, out);
    std::fputs(table.c_str(), stdout);
    return 0;
}

int cmd_gradcheck(std::size_t configs, std::uint64_t seed) {
    const auto r = cdca::run_gradcheck_suite(configs, seed);
    auto line = [](const char* name, const cdca::GradCheckReport& g) {
        std::printf("%-14s entries=%-6zu max_rel=%.3e max_abs=%.3e\n", name, g.entries, g.max_relative_error,
                    g.max_absolute_error);
    };
    line("network", r.network);
    line("teacher", r.teacher);
    line("discriminator", r.discriminator);
    line("student", r.student);
    line("prompt", r.prompt);
    const bool ok = r.max_relative_error() < 1e-5;
    std::printf("configs=%zu max_relative_error=%.3e %s\n", r.configs, r.max_relative_error(), ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cloud-device collaborative adaptation experiments"};
    app.require_subcommand(1);

    std::string config_path, preset, transport, out_csv, out_json;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "Run one experiment and emit per-batch metrics");
    run->add_option("--config", config_path, "Config file (defaults when omitted)");
    run->add_option("--preset", preset, "Preset name");
    run->add_option("--seed", seed, "Run seed (first configured seed when omitted)");
    run->add_option("--transport", transport, "inproc or tcp")->check(CLI::IsMember({"inproc", "tcp"}));
    run->add_option("--out", out_csv, "Metrics CSV path");
    run->add_option("--json", out_json, "Metrics JSON path");

    std::string suite_config, presets = "source_only,pseudo_label,pseudo_label_vpa,full", suite_out;
    std::size_t seeds = 0;
    bool sweep = false;
    auto* suite = app.add_subcommand("suite", "Run presets over several seeds and print medians");
    suite->add_option("--config", suite_config, "Config file (defaults when omitted)");
    suite->add_option("--presets", presets, "Comma-separated preset names");
    suite->add_option("--seeds", seeds, "Use seeds 1..N instead of the configured list");
    suite->add_flag("--sweep", sweep, "Add calibrated uplink-fraction rows (0.25, 0.5, 0.75)");
    suite->add_option("--out", suite_out, "Comparison table CSV path");

    std::size_t configs = 20;
    std::uint64_t grad_seed = 20240601;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of all training gradients");
    grad->add_option("--configs", configs, "Number of random configurations");
    grad->add_option("--seed", grad_seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("usage", e.what());
    }

    try {
        if (*run) return cmd_run(config_path, preset, seed, transport, out_csv, out_json);
        if (*suite) return cmd_suite(suite_config, presets, seeds, sweep, suite_out);
        if (*grad) return cmd_gradcheck(configs, grad_seed);
    } catch (const cdca::ConfigError& e) {
        return fail("config", e.what());
    } catch (const cdca::IoError& e) {
        return fail("io", e.what());
    } catch (const cdca::DecodeError& e) {
        return fail("decode", e.what());
    } catch (const std::exception& e) {
        return fail("runtime", e.what());
    }
    return 0;
}
