// SPDX-License-Identifier: Apache-2.0

#include "cdca/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace cdca {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

double to_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

std::uint64_t to_u64(const std::string& s) {
    if (s.empty() || s[0] == '-') throw std::invalid_argument("negative");
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "on") return true;
    if (s == "false" || s == "0" || s == "off") return false;
    throw std::invalid_argument("expected true or false");
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += f(xs[i]);
    }
    return out;
}

std::vector<std::size_t> to_widths(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& p : split(s, ',')) out.push_back(static_cast<std::size_t>(to_u64(p)));
    return out;
}

std::string widths_str(const std::vector<std::size_t>& ws) {
    return join<std::size_t>(ws, [](const std::size_t& w) { return std::to_string(w); });
}

struct Field {
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define CDCA_SIZE_FIELD(KEY, MEMBER)                                                               \
    Field {                                                                                        \
        KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                   \
            [](ExperimentConfig& c, const std::string& v) { c.MEMBER = static_cast<decltype(c.MEMBER)>(to_u64(v)); } \
    }
#define CDCA_REAL_FIELD(KEY, MEMBER)                                                               \
    Field {                                                                                        \
        KEY, [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); },                       \
            [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(v); }             \
    }
#define CDCA_BOOL_FIELD(KEY, MEMBER)                                                               \
    Field {                                                                                        \
        KEY, [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); },   \
            [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_bool(v); }               \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        Field{"experiment.preset", [](const ExperimentConfig& c) { return c.preset; },
              [](ExperimentConfig& c, const std::string& v) { c.preset = v; }},
        Field{"experiment.seeds",
              [](const ExperimentConfig& c) {
                  return join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); });
              },
              [](ExperimentConfig& c, const std::string& v) {
                  c.seeds.clear();
                  for (const auto& p : split(v, ',')) c.seeds.push_back(to_u64(p));
              }},
        CDCA_SIZE_FIELD("task.dim", dim),
        CDCA_SIZE_FIELD("task.classes", classes),
        CDCA_REAL_FIELD("task.center_scale", center_scale),
        CDCA_REAL_FIELD("task.noise", noise),
        CDCA_SIZE_FIELD("task.source_size", source_size),
        Field{"stream.domains",
              [](const ExperimentConfig& c) {
                  return join<DomainSpec>(c.domains, [](const DomainSpec& d) { return d.str(); });
              },
              [](ExperimentConfig& c, const std::string& v) {
                  c.domains.clear();
                  for (const auto& p : split(v, ',')) c.domains.push_back(DomainSpec::parse(p));
              }},
        CDCA_SIZE_FIELD("stream.rounds", rounds),
        CDCA_SIZE_FIELD("stream.batches_per_domain", batches_per_domain),
        CDCA_SIZE_FIELD("stream.batch_size", batch_size),
        Field{"model.student_hidden", [](const ExperimentConfig& c) { return widths_str(c.student_hidden); },
              [](ExperimentConfig& c, const std::string& v) { c.student_hidden = to_widths(v); }},
        Field{"model.teacher_hidden", [](const ExperimentConfig& c) { return widths_str(c.teacher_hidden); },
              [](ExperimentConfig& c, const std::string& v) { c.teacher_hidden = to_widths(v); }},
        Field{"model.disc_hidden", [](const ExperimentConfig& c) { return widths_str(c.disc_hidden); },
              [](ExperimentConfig& c, const std::string& v) { c.disc_hidden = to_widths(v); }},
        CDCA_REAL_FIELD("model.student_dropout", student_dropout),
        CDCA_REAL_FIELD("model.teacher_dropout", teacher_dropout),
        CDCA_SIZE_FIELD("pretrain.epochs", pretrain_epochs),
        CDCA_SIZE_FIELD("pretrain.batch_size", pretrain_batch),
        CDCA_REAL_FIELD("pretrain.lr", pretrain_lr),
        CDCA_SIZE_FIELD("uncertainty.passes", mc_passes),
        CDCA_REAL_FIELD("uncertainty.threshold", threshold),
        Field{"uncertainty.aggregate", [](const ExperimentConfig& c) { return to_string(c.aggregate); },
              [](ExperimentConfig& c, const std::string& v) { c.aggregate = parse_unc_aggregate(v); }},
        Field{"uncertainty.strategy", [](const ExperimentConfig& c) { return to_string(c.strategy.kind); },
              [](ExperimentConfig& c, const std::string& v) { c.strategy.kind = parse_selection_kind(v); }},
        CDCA_REAL_FIELD("uncertainty.frac", strategy.frac),
        CDCA_BOOL_FIELD("prompt.enabled", prompt_enabled),
        Field{"prompt.layout", [](const ExperimentConfig& c) { return to_string(c.prompt_layout); },
              [](ExperimentConfig& c, const std::string& v) { c.prompt_layout = parse_prompt_layout(v); }},
        CDCA_SIZE_FIELD("prompt.prefix_k", prompt_prefix),
        CDCA_REAL_FIELD("prompt.alpha", prompt_alpha),
        CDCA_REAL_FIELD("prompt.lr", cloud.lr_prompt),
        CDCA_BOOL_FIELD("prompt.uema", cloud.uema),
        CDCA_BOOL_FIELD("cloud.enabled", collaborate),
        CDCA_BOOL_FIELD("cloud.train_teacher", cloud.train_teacher),
        CDCA_REAL_FIELD("cloud.lambda_align", cloud.lambda_align),
        CDCA_REAL_FIELD("cloud.lambda_grl", cloud.lambda_grl),
        CDCA_REAL_FIELD("cloud.pl_threshold", cloud.pl_threshold),
        CDCA_SIZE_FIELD("cloud.sync_interval", cloud.sync_interval),
        CDCA_REAL_FIELD("cloud.lr_teacher", cloud.lr_teacher),
        CDCA_REAL_FIELD("cloud.lr_student", cloud.lr_student),
        Field{"transport.mode", [](const ExperimentConfig& c) { return to_string(c.transport); },
              [](ExperimentConfig& c, const std::string& v) { c.transport = parse_transport(v); }},
        Field{"transport.host", [](const ExperimentConfig& c) { return c.host; },
              [](ExperimentConfig& c, const std::string& v) { c.host = v; }},
        CDCA_SIZE_FIELD("transport.port", port),
    };
    return table;
}

#undef CDCA_SIZE_FIELD
#undef CDCA_REAL_FIELD
#undef CDCA_BOOL_FIELD

void require(bool ok, const std::string& key, const std::string& why) {
    if (!ok) throw ConfigError("config key '" + key + "': " + why);
}

} // namespace

std::string to_string(TransportMode m) {
    return m == TransportMode::in_process ? "inproc" : "tcp";
}

TransportMode parse_transport(const std::string& s) {
    if (s == "inproc") return TransportMode::in_process;
    if (s == "tcp") return TransportMode::tcp;
    throw ParameterError("unknown transport '" + s + "'");
}

std::vector<DomainSpec> default_domains() {
    return {
        {CorruptionKind::bias, 2.0, 0},
        {CorruptionKind::gauss_noise, 1.0, 0},
        {CorruptionKind::rotate, 2.5, 0},
        {CorruptionKind::scale, 0.5, 0},
        {CorruptionKind::mask, 0.625, 0},
    };
}

ExperimentConfig::ExperimentConfig() : domains(default_domains()) {
    // Benchmark settings; CloudConfig keeps the library defaults.
    cloud.train_teacher = true;
    cloud.lambda_align = 1.0;
    cloud.lambda_grl = 0.3;
    cloud.lr_teacher = 0.05;
    cloud.pl_threshold = 0.95;
}

MLPSpec ExperimentConfig::student_spec() const {
    std::vector<std::size_t> w{dim};
    w.insert(w.end(), student_hidden.begin(), student_hidden.end());
    w.push_back(classes);
    return {w, student_dropout};
}

MLPSpec ExperimentConfig::teacher_spec() const {
    std::vector<std::size_t> w{dim};
    w.insert(w.end(), teacher_hidden.begin(), teacher_hidden.end());
    w.push_back(classes);
    return {w, teacher_dropout};
}

MLPSpec ExperimentConfig::disc_spec() const {
    const std::size_t feat = teacher_hidden.empty() ? dim : teacher_hidden.back();
    std::vector<std::size_t> w{feat};
    w.insert(w.end(), disc_hidden.begin(), disc_hidden.end());
    w.push_back(2);
    return {w, 0.0};
}

StreamConfig ExperimentConfig::stream_config(std::uint64_t seed) const {
    return StreamConfig{domains, rounds, batches_per_domain, batch_size, seed};
}

void ExperimentConfig::validate() const {
    require(dim > 0, "task.dim", "must be positive");
    require(classes >= 2, "task.classes", "needs at least two classes");
    require(center_scale > 0.0, "task.center_scale", "must be positive");
    require(noise >= 0.0, "task.noise", "must be non-negative");
    require(source_size >= classes, "task.source_size", "needs at least one sample per class");
    require(!domains.empty(), "stream.domains", "needs at least one domain");
    for (const auto& d : domains) {
        try {
            d.validate();
        } catch (const ParameterError& e) {
            require(false, "stream.domains", e.what());
        }
    }
    require(rounds > 0, "stream.rounds", "must be positive");
    require(batches_per_domain > 0, "stream.batches_per_domain", "must be positive");
    require(batch_size > 0, "stream.batch_size", "must be positive");
    require(!teacher_hidden.empty(), "model.teacher_hidden", "needs at least one hidden layer");
    require(student_dropout >= 0.0 && student_dropout < 1.0, "model.student_dropout", "must be in [0,1)");
    require(teacher_dropout >= 0.0 && teacher_dropout < 1.0, "model.teacher_dropout", "must be in [0,1)");
    require(pretrain_batch > 0, "pretrain.batch_size", "must be positive");
    require(pretrain_lr > 0.0, "pretrain.lr", "must be positive");
    require(mc_passes >= 2, "uncertainty.passes", "needs at least two passes");
    require(threshold >= 0.0, "uncertainty.threshold", "must be non-negative");
    require(strategy.frac >= 0.0 && strategy.frac <= 1.0, "uncertainty.frac", "must be in [0,1]");
    require(prompt_alpha > 0.0 && prompt_alpha <= 1.0, "prompt.alpha", "must be in (0,1]");
    require(prompt_layout == PromptLayout::full_vector || (prompt_prefix >= 1 && prompt_prefix <= dim),
            "prompt.prefix_k", "must be in [1, task.dim]");
    require(cloud.lr_prompt > 0.0, "prompt.lr", "must be positive");
    require(cloud.lr_teacher > 0.0, "cloud.lr_teacher", "must be positive");
    require(cloud.lr_student > 0.0, "cloud.lr_student", "must be positive");
    require(cloud.lambda_align >= 0.0, "cloud.lambda_align", "must be non-negative");
    require(cloud.lambda_grl > 0.0, "cloud.lambda_grl", "must be positive");
    require(cloud.pl_threshold >= 0.0 && cloud.pl_threshold <= 1.0, "cloud.pl_threshold", "must be in [0,1]");
    require(cloud.sync_interval > 0, "cloud.sync_interval", "must be positive");
    require(!seeds.empty(), "experiment.seeds", "needs at least one seed");
    const auto& names = preset_names();
    require(std::find(names.begin(), names.end(), preset) != names.end() || preset == "custom",
            "experiment.preset", "unknown preset '" + preset + "'");
    // Capacity ordering between teacher and student.
    std::size_t s = 0, t = 0;
    {
        const auto ss = student_spec().widths;
        for (std::size_t i = 0; i + 1 < ss.size(); ++i) s += ss[i] * ss[i + 1] + ss[i + 1];
        const auto ts = teacher_spec().widths;
        for (std::size_t i = 0; i + 1 < ts.size(); ++i) t += ts[i] * ts[i + 1] + ts[i + 1];
    }
    require(t > s, "model.teacher_hidden", "teacher must have more parameters than the student");
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> seen;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
        if (it == table.end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
        try {
            it->set(cfg, value);
        } catch (const std::exception& e) {
            throw ConfigError("config key '" + key + "': cannot parse '" + value + "' (" + e.what() + ")");
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        const std::string sec = f.key.substr(0, f.key.find('.'));
        if (sec != section) {
            if (!section.empty()) out += '\n';
            section = sec;
        }
        out += f.key + " = " + f.get(cfg) + '\n';
    }
    return out;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {
        "source_only",       "pseudo_label",  "pseudo_label_vpa", "pseudo_label_vpa_ugs", "full",
        "select_confidence", "select_random", "select_all",       "frozen_teacher",
    };
    return names;
}

ExperimentConfig apply_preset(ExperimentConfig cfg, const std::string& name) {
    auto collaborative = [&](SelectionKind kind, bool prompt, bool uema) {
        cfg.collaborate = true;
        cfg.strategy.kind = kind;
        cfg.prompt_enabled = prompt;
        cfg.cloud.train_prompt = prompt;
        cfg.cloud.uema = uema;
        cfg.cloud.train_teacher = true;
    };
    if (name == "source_only") {
        cfg.collaborate = false;
        cfg.prompt_enabled = false;
        cfg.cloud.train_prompt = false;
    } else if (name == "pseudo_label") {
        collaborative(SelectionKind::all, false, false);
        cfg.cloud.lambda_align = 0.0;
    } else if (name == "pseudo_label_vpa") {
        collaborative(SelectionKind::all, true, false);
    } else if (name == "pseudo_label_vpa_ugs") {
        collaborative(SelectionKind::ugs, true, false);
    } else if (name == "full") {
        collaborative(SelectionKind::ugs, true, true);
    } else if (name == "select_confidence") {
        collaborative(SelectionKind::confidence, true, true);
    } else if (name == "select_random") {
        collaborative(SelectionKind::random, true, true);
    } else if (name == "select_all") {
        collaborative(SelectionKind::all, true, true);
    } else if (name == "frozen_teacher") {
        collaborative(SelectionKind::ugs, true, true);
        cfg.cloud.train_teacher = false;
    } else if (name != "custom") {
        throw ConfigError("unknown preset '" + name + "'");
    }
    cfg.preset = name;
    return cfg;
}

} // namespace cdca
