// SPDX-License-Identifier: Apache-2.0

#include "cdca/stream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace cdca {

namespace {

// Orthonormal pair (u, v) spanning the rotation plane.
std::pair<std::vector<double>, std::vector<double>> rotation_plane(std::size_t dim, std::uint64_t seed) {
    Rng rng(seed ^ 0x5EEDF00DULL);
    std::vector<double> u(dim), v(dim);
    for (auto& e : u) e = rng.normal();
    for (auto& e : v) e = rng.normal();
    auto norm = [](std::vector<double>& w) {
        double s = 0.0;
        for (double e : w) s += e * e;
        s = std::sqrt(s);
        for (double& e : w) e /= s;
    };
    norm(u);
    double d = 0.0;
    for (std::size_t i = 0; i < dim; ++i) d += u[i] * v[i];
    for (std::size_t i = 0; i < dim; ++i) v[i] -= d * u[i];
    norm(v);
    return {u, v};
}

std::vector<std::size_t> mask_subset(std::size_t dim, double fraction, std::uint64_t seed) {
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(dim))),
                                           1, dim);
    std::vector<std::size_t> idx(dim);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed ^ 0x3A5CULL);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(dim - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

void add_cluster_sample(std::span<double> row, std::span<const double> center, double noise, Rng& rng) {
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = center[c] + noise * rng.normal();
}

} // namespace

BaseTask BaseTask::generate(std::size_t dim, std::size_t classes, double center_scale, double noise,
                            std::uint64_t seed) {
    if (dim == 0 || classes < 2) throw ParameterError("base task needs dim >= 1 and at least two classes");
    if (!(noise >= 0.0) || !(center_scale > 0.0)) throw ParameterError("base task scales must be non-negative");
    Rng rng(seed ^ 0xBA5E7A5CULL);
    BaseTask t{dim, classes, Tensor({classes, dim}), noise};
    for (double& v : t.centers.data()) v = center_scale * rng.normal();
    for (std::size_t a = 0; a < classes; ++a) {
        for (std::size_t b = a + 1; b < classes; ++b) {
            if (std::equal(t.centers.row(a).begin(), t.centers.row(a).end(), t.centers.row(b).begin())) {
                throw ParameterError("degenerate base task: duplicate class centers");
            }
        }
    }
    return t;
}

LabeledSet gen_source(const BaseTask& task, std::size_t n, std::uint64_t seed) {
    if (n < task.classes) throw ParameterError("source set needs at least one sample per class");
    Rng rng(seed ^ 0x50C4CEULL);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % task.classes);
    for (std::size_t i = n; i-- > 1;) std::swap(labels[i], labels[rng.index(i + 1)]);
    LabeledSet s{Tensor({n, task.dim}), std::move(labels)};
    for (std::size_t i = 0; i < n; ++i) {
        add_cluster_sample(s.inputs.row(i), task.centers.row(static_cast<std::size_t>(s.labels[i])), task.noise, rng);
    }
    return s;
}

std::string to_string(CorruptionKind k) {
    switch (k) {
    case CorruptionKind::bias: return "bias";
    case CorruptionKind::gauss_noise: return "gauss_noise";
    case CorruptionKind::rotate: return "rotate";
    case CorruptionKind::scale: return "scale";
    case CorruptionKind::mask: return "mask";
    }
    return "?";
}

CorruptionKind parse_corruption_kind(const std::string& s) {
    if (s == "bias") return CorruptionKind::bias;
    if (s == "gauss_noise") return CorruptionKind::gauss_noise;
    if (s == "rotate") return CorruptionKind::rotate;
    if (s == "scale") return CorruptionKind::scale;
    if (s == "mask") return CorruptionKind::mask;
    throw ParameterError("unknown corruption kind '" + s + "'");
}

void DomainSpec::validate() const {
    const double s = severity;
    bool ok = std::isfinite(s);
    switch (kind) {
    case CorruptionKind::bias: break;
    case CorruptionKind::gauss_noise: ok = ok && s >= 0.0; break;
    case CorruptionKind::rotate: ok = ok && s > 0.0 && s < std::numbers::pi; break;
    case CorruptionKind::scale: ok = ok && s > 0.0; break;
    case CorruptionKind::mask: ok = ok && s > 0.0 && s < 1.0; break;
    }
    if (!ok) throw ParameterError("invalid severity " + std::to_string(s) + " for " + to_string(kind));
}

std::string DomainSpec::str() const {
    std::ostringstream os;
    os.precision(17);
    os << to_string(kind) << ':' << severity;
    return os.str();
}

DomainSpec DomainSpec::parse(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ParameterError("domain spec '" + s + "' is not kind:severity");
    DomainSpec d;
    d.kind = parse_corruption_kind(s.substr(0, colon));
    try {
        std::size_t used = 0;
        d.severity = std::stod(s.substr(colon + 1), &used);
        if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
        throw ParameterError("domain spec '" + s + "' has a malformed severity");
    }
    d.validate();
    return d;
}

Tensor corrupt(const Tensor& x, const DomainSpec& domain, Rng& rng) {
    domain.validate();
    if (x.rank() != 2) throw DimensionError("corrupt expects a [B, dim] batch, got " + shape_str(x.shape()));
    Tensor out = x;
    const std::size_t dim = x.cols();
    const double s = domain.severity;
    switch (domain.kind) {
    case CorruptionKind::bias:
        for (double& v : out.data()) v += s;
        break;
    case CorruptionKind::gauss_noise:
        if (s > 0.0) {
            for (double& v : out.data()) v += s * rng.normal();
        }
        break;
    case CorruptionKind::rotate: {
        if (dim < 2) throw DimensionError("rotate needs at least two dimensions");
        const auto [u, v] = rotation_plane(dim, domain.seed);
        const double c = std::cos(s);
        const double sn = std::sin(s);
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = out.row(r);
            double a = 0.0, b = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                a += row[i] * u[i];
                b += row[i] * v[i];
            }
            const double a2 = c * a - sn * b;
            const double b2 = sn * a + c * b;
            for (std::size_t i = 0; i < dim; ++i) row[i] += (a2 - a) * u[i] + (b2 - b) * v[i];
        }
        break;
    }
    case CorruptionKind::scale:
        for (double& v : out.data()) v *= s;
        break;
    case CorruptionKind::mask: {
        const auto idx = mask_subset(dim, s, domain.seed);
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = out.row(r);
            for (auto i : idx) row[i] = 0.0;
        }
        break;
    }
    }
    return out;
}

void StreamConfig::validate() const {
    if (sequence.empty()) throw ParameterError("stream needs at least one domain");
    if (rounds == 0 || batches_per_domain == 0 || batch_size == 0) {
        throw ParameterError("stream rounds, batches_per_domain and batch_size must be positive");
    }
    for (const auto& d : sequence) d.validate();
}

DomainStream::DomainStream(BaseTask task, StreamConfig config)
    : task_(std::move(task)), config_(std::move(config)), rng_(config_.seed ^ 0x57AEA4ULL) {
    config_.validate();
    // Domains without an explicit structural seed get one derived from the stream seed.
    for (std::size_t i = 0; i < config_.sequence.size(); ++i) {
        auto& d = config_.sequence[i];
        if (d.seed == 0) d.seed = mix64(config_.seed * 31 + i + 1);
    }
}

std::optional<Batch> DomainStream::next() {
    if (position_ >= total()) return std::nullopt;
    const std::size_t per_round = config_.sequence.size() * config_.batches_per_domain;
    Batch b;
    b.index = position_;
    b.round = position_ / per_round;
    b.domain_id = (position_ % per_round) / config_.batches_per_domain;
    Tensor clean({config_.batch_size, task_.dim});
    b.labels.resize(config_.batch_size);
    for (std::size_t i = 0; i < config_.batch_size; ++i) {
        const std::size_t y = rng_.index(task_.classes);
        b.labels[i] = static_cast<int>(y);
        add_cluster_sample(clean.row(i), task_.centers.row(y), task_.noise, rng_);
    }
    b.inputs = corrupt(clean, config_.sequence[b.domain_id], rng_);
    ++position_;
    return b;
}

} // namespace cdca
