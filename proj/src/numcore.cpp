// SPDX-License-Identifier: Apache-2.0

#include "cdca/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cdca {

namespace {

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw DimensionError(std::string(what) + " must be rank 2, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

} // namespace

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_matrix(x, "linear input");
    require_matrix(weight, "linear weight");
    const std::size_t in = weight.rows();
    const std::size_t out = weight.cols();
    if (x.cols() != in || bias.rank() != 1 || bias.size() != out) {
        throw DimensionError("linear_forward: input " + shape_str(x.shape()) + " weight " +
                             shape_str(weight.shape()) + " bias " + shape_str(bias.shape()));
    }
    const std::size_t batch = x.rows();
    Tensor y({batch, out});
    const double* w = weight.data().data();
    const double* bv = bias.data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        double* yr = y.row(b).data();
        std::copy(bv, bv + out, yr);
        const double* xr = x.row(b).data();
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            if (xi == 0.0) continue;
            const double* wr = w + i * out;
            for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
        }
    }
    return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& upstream) {
    require_matrix(upstream, "linear upstream gradient");
    const std::size_t in = weight.rows();
    const std::size_t out = weight.cols();
    const std::size_t batch = x.rows();
    if (upstream.rows() != batch || upstream.cols() != out || x.cols() != in) {
        throw DimensionError("linear_backward: input " + shape_str(x.shape()) + " weight " +
                             shape_str(weight.shape()) + " upstream " + shape_str(upstream.shape()));
    }
    LinearGrads g{Tensor({in, out}), Tensor({out}), Tensor({batch, in})};
    double* gw = g.weight.data().data();
    double* gb = g.bias.data().data();
    const double* w = weight.data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = x.row(b).data();
        const double* ur = upstream.row(b).data();
        double* gx = g.input.row(b).data();
        for (std::size_t o = 0; o < out; ++o) gb[o] += ur[o];
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            double* gwr = gw + i * out;
            const double* wr = w + i * out;
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) {
                gwr[o] += xi * ur[o];
                acc += wr[o] * ur[o];
            }
            gx[i] = acc;
        }
    }
    return g;
}

Tensor relu_forward(const Tensor& z) {
    Tensor a = z;
    for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
    return a;
}

Tensor relu_backward(const Tensor& z, const Tensor& upstream) {
    require_same_shape(z, upstream, "relu_backward");
    Tensor g = upstream;
    auto zd = z.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i) {
        if (!(zd[i] > 0.0)) gd[i] = 0.0;
    }
    return g;
}

DropoutResult dropout_forward(const Tensor& x, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ParameterError("dropout rate must be in [0,1), got " + std::to_string(rate));
    }
    if (rate == 0.0) return {x, Tensor(x.shape(), 1.0)};
    const double scale = 1.0 / (1.0 - rate);
    DropoutResult r{x, Tensor(x.shape(), 0.0)};
    auto out = r.output.data();
    auto mask = r.mask.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool keep = rng.uniform() >= rate;
        mask[i] = keep ? scale : 0.0;
        out[i] *= mask[i];
    }
    return r;
}

Tensor dropout_backward(const Tensor& upstream, const Tensor& mask) {
    require_same_shape(upstream, mask, "dropout_backward");
    Tensor g = upstream;
    auto gd = g.data();
    auto md = mask.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= md[i];
    return g;
}

Tensor softmax(const Tensor& logits) {
    require_matrix(logits, "softmax input");
    Tensor p = logits;
    for (std::size_t r = 0; r < p.rows(); ++r) {
        auto row = p.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
    return p;
}

double cross_entropy(const Tensor& probs, std::span<const int> labels) {
    require_matrix(probs, "cross_entropy probabilities");
    if (labels.size() != probs.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for probabilities " +
                             shape_str(probs.shape()));
    }
    const int classes = static_cast<int>(probs.cols());
    double total = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const int y = labels[b];
        if (y < 0 || y >= classes) {
            throw ParameterError("label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
        }
        total -= std::log(probs(b, static_cast<std::size_t>(y)) + kLogEpsilon);
    }
    return total / static_cast<double>(labels.size());
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, std::span<const int> labels) {
    require_matrix(probs, "cross_entropy probabilities");
    if (labels.size() != probs.rows()) {
        throw DimensionError("softmax_cross_entropy_grad: label count does not match " + shape_str(probs.shape()));
    }
    const int classes = static_cast<int>(probs.cols());
    const double inv = 1.0 / static_cast<double>(labels.size());
    Tensor g = probs;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const int y = labels[b];
        if (y < 0 || y >= classes) {
            throw ParameterError("label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
        }
        g(b, static_cast<std::size_t>(y)) -= 1.0;
        for (double& v : g.row(b)) v *= inv;
    }
    return g;
}

Tensor grl_backward(const Tensor& upstream, double lambda_grl) {
    Tensor g = upstream;
    for (double& v : g.data()) v *= -lambda_grl;
    return g;
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
    if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
    if (params.size() != grads.size()) {
        throw DimensionError("sgd_step: " + std::to_string(params.size()) + " parameters vs " +
                             std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(*params[k], grads[k], "sgd_step");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k]->data();
        auto g = grads[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
}

void add_inplace(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add_inplace");
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

Tensor column_sum(const Tensor& x) {
    require_matrix(x, "column_sum input");
    Tensor s({x.cols()});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) s[c] += row[c];
    }
    return s;
}

} // namespace cdca
