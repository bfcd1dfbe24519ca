// SPDX-License-Identifier: Apache-2.0

#include "cdca/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cdca {

void MLPSpec::validate() const {
    if (widths.size() < 2) throw ParameterError("MLP spec needs at least an input and an output width");
    for (auto w : widths) {
        if (w == 0) throw ParameterError("MLP widths must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw ParameterError("dropout rate must be in [0,1), got " + std::to_string(dropout_rate));
    }
}

MLPSpec MLPSpec::default_student(std::size_t input_width, std::size_t classes) {
    return {{input_width, 32, 32, classes}, 0.1};
}

MLPSpec MLPSpec::default_teacher(std::size_t input_width, std::size_t classes) {
    return {{input_width, 128, 128, 64, classes}, 0.1};
}

MLPSpec MLPSpec::default_discriminator(std::size_t feature_width) {
    return {{feature_width, 32, 2}, 0.0};
}

Network::Network(MLPSpec spec, std::vector<DenseLayer> layers, std::size_t feature_cut)
    : spec_(std::move(spec)), layers_(std::move(layers)), feature_cut_(feature_cut) {
    spec_.validate();
    if (layers_.size() != spec_.layer_count()) throw DimensionError("layer count does not match spec");
    if (feature_cut_ >= layers_.size()) throw ParameterError("feature cut must index an existing layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Shape w{spec_.widths[l], spec_.widths[l + 1]};
        const Shape b{spec_.widths[l + 1]};
        if (layers_[l].weight.shape() != w || layers_[l].bias.shape() != b) {
            throw DimensionError("layer " + std::to_string(l) + " expects weight " + shape_str(w) + ", got " +
                                 shape_str(layers_[l].weight.shape()));
        }
    }
}

std::vector<Tensor*> Network::parameters() {
    std::vector<Tensor*> ps;
    for (auto& l : layers_) {
        ps.push_back(&l.weight);
        ps.push_back(&l.bias);
    }
    return ps;
}

std::vector<const Tensor*> Network::parameters() const {
    std::vector<const Tensor*> ps;
    for (const auto& l : layers_) {
        ps.push_back(&l.weight);
        ps.push_back(&l.bias);
    }
    return ps;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

void Network::assign_layers(std::vector<DenseLayer> layers) {
    if (layers.size() != layers_.size()) throw DimensionError("assign_layers: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].weight.shape() != layers_[l].weight.shape() ||
            layers[l].bias.shape() != layers_[l].bias.shape()) {
            throw DimensionError("assign_layers: layer " + std::to_string(l) + " shape " +
                                 shape_str(layers[l].weight.shape()) + " vs " + shape_str(layers_[l].weight.shape()));
        }
    }
    layers_ = std::move(layers);
}

Network build_network(const MLPSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const std::size_t in = spec.widths[l];
        const std::size_t out = spec.widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        Tensor w({in, out});
        for (double& v : w.data()) v = rng.uniform(-limit, limit);
        layers.push_back({std::move(w), Tensor({out}, 0.0)});
    }
    const std::size_t cut = layers.size() - 1;
    return Network(spec, std::move(layers), cut);
}

Network clone_params(const Network& src) {
    return Network(src.spec(), src.layers(), src.feature_cut());
}

ForwardTrace forward(const Network& net, const Tensor& x, Rng* rng) {
    if (x.rank() != 2 || x.cols() != net.input_width()) {
        throw DimensionError("network expects input width " + std::to_string(net.input_width()) + ", got " +
                             shape_str(x.shape()));
    }
    const auto& layers = net.layers();
    ForwardTrace t;
    t.inputs.reserve(layers.size());
    t.preacts.reserve(layers.size());
    Tensor a = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Tensor z = linear_forward(a, layers[l].weight, layers[l].bias);
        t.inputs.push_back(std::move(a));
        const bool hidden = l + 1 < layers.size();
        if (hidden) {
            a = relu_forward(z);
            if (rng != nullptr) {
                auto d = dropout_forward(a, net.spec().dropout_rate, *rng);
                a = std::move(d.output);
                t.masks.push_back(std::move(d.mask));
            }
        }
        t.preacts.push_back(std::move(z));
    }
    t.logits = t.preacts.back();
    t.probs = softmax(t.logits);
    return t;
}

Backprop backward(const Network& net, const ForwardTrace& trace, const Tensor& logit_grad,
                  const Tensor* feature_grad) {
    const auto& layers = net.layers();
    const std::size_t n = layers.size();
    Backprop out;
    out.grads.resize(2 * n);
    Tensor upstream = logit_grad;
    for (std::size_t l = n; l-- > 0;) {
        auto g = linear_backward(trace.inputs[l], layers[l].weight, upstream);
        out.grads[2 * l] = std::move(g.weight);
        out.grads[2 * l + 1] = std::move(g.bias);
        Tensor da = std::move(g.input);
        if (feature_grad != nullptr && l == net.feature_cut()) add_inplace(da, *feature_grad);
        if (l == 0) {
            out.input = std::move(da);
            break;
        }
        if (!trace.masks.empty()) da = dropout_backward(da, trace.masks[l - 1]);
        upstream = relu_backward(trace.preacts[l - 1], da);
    }
    return out;
}

Tensor predict(const Network& net, const Tensor& x) {
    return forward(net, x, nullptr).probs;
}

Tensor predict(const Network& net, const Tensor& x, Rng& rng) {
    return forward(net, x, &rng).probs;
}

std::vector<Tensor> mc_predict(const Network& net, const Tensor& x, std::size_t n, Rng& rng) {
    if (n < 1) throw ParameterError("mc_predict needs at least one pass");
    std::vector<Tensor> runs;
    runs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) runs.push_back(predict(net, x, rng));
    return runs;
}

Tensor features(const Network& net, const Tensor& x) {
    return forward(net, x, nullptr).inputs[net.feature_cut()];
}

Discriminator build_discriminator(const MLPSpec& spec, Rng& rng) {
    if (spec.classes() != 2) throw ParameterError("domain discriminator must have two outputs");
    return Discriminator{build_network(spec, rng)};
}

double discriminator_loss(const Discriminator& disc, const Tensor& feats_src, const Tensor& feats_tgt) {
    if (feats_src.cols() != disc.input_width() || feats_tgt.cols() != disc.input_width()) {
        throw DimensionError("discriminator expects width " + std::to_string(disc.input_width()) + ", got " +
                             shape_str(feats_src.shape()) + " and " + shape_str(feats_tgt.shape()));
    }
    const Tensor all = concat_rows(feats_src, feats_tgt);
    std::vector<int> labels(all.rows(), 1);
    std::fill_n(labels.begin(), feats_src.rows(), 0);
    return cross_entropy(predict(disc.net, all), labels);
}

std::vector<int> argmax_rows(const Tensor& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto row = probs.row(r);
        // max_element returns the first maximum: ties go to the lowest index.
        out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

} // namespace cdca
