// SPDX-License-Identifier: Apache-2.0
//
// MLP builders for the device/student network, the cloud teacher and the
// domain discriminator, with a forward trace that backward() consumes.

#pragma once

#include <cstddef>
#include <vector>

#include "cdca/numcore.hpp"
#include "cdca/tensor.hpp"

namespace cdca {

struct MLPSpec {
    /// input -> hidden... -> classes
    std::vector<std::size_t> widths;
    double dropout_rate = 0.0;

    std::size_t input_width() const { return widths.front(); }
    std::size_t classes() const { return widths.back(); }
    std::size_t layer_count() const { return widths.size() - 1; }

    /// Throws ParameterError on fewer than two widths, a zero width or a
    /// dropout rate outside [0,1).
    void validate() const;

    static MLPSpec default_student(std::size_t input_width, std::size_t classes);
    static MLPSpec default_teacher(std::size_t input_width, std::size_t classes);
    static MLPSpec default_discriminator(std::size_t feature_width);

    friend bool operator==(const MLPSpec&, const MLPSpec&) = default;
};

struct DenseLayer {
    Tensor weight; // [in, out]
    Tensor bias;   // [out]

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Linear layers with ReLU (then dropout) after every hidden layer. The
/// feature vector is the activation that enters layer `feature_cut`.
class Network {
public:
    Network() = default;
    Network(MLPSpec spec, std::vector<DenseLayer> layers, std::size_t feature_cut);

    const MLPSpec& spec() const noexcept { return spec_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::size_t feature_cut() const noexcept { return feature_cut_; }
    std::size_t feature_width() const { return spec_.widths[feature_cut_]; }
    std::size_t input_width() const { return spec_.input_width(); }
    std::size_t classes() const { return spec_.classes(); }

    /// W0, b0, W1, b1, ...
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::size_t parameter_count() const;

    /// Replace every weight and bias; shapes must match the current ones.
    void assign_layers(std::vector<DenseLayer> layers);

    friend bool operator==(const Network&, const Network&) = default;

private:
    MLPSpec spec_;
    std::vector<DenseLayer> layers_;
    std::size_t feature_cut_ = 0;
};

/// Xavier-uniform weights, zero biases. Feature cut is the last hidden layer.
Network build_network(const MLPSpec& spec, Rng& rng);

/// Deep copy; the result shares no storage with `src`.
Network clone_params(const Network& src);

struct ForwardTrace {
    std::vector<Tensor> inputs;  // input to each linear layer (post dropout)
    std::vector<Tensor> preacts; // linear output of each layer
    std::vector<Tensor> masks;   // dropout mask per hidden layer
    Tensor logits;
    Tensor probs;

    const Tensor& features(std::size_t cut) const { return inputs[cut]; }
};

/// Deterministic pass when `rng` is null; dropout after each hidden ReLU
/// otherwise.
ForwardTrace forward(const Network& net, const Tensor& x, Rng* rng = nullptr);

struct Backprop {
    LayerGrads grads; // aligned with Network::parameters()
    Tensor input;     // gradient with respect to x
};

/// Backpropagate `logit_grad` through the trace. `feature_grad`, when
/// given, is added to the gradient of the feature activation.
Backprop backward(const Network& net, const ForwardTrace& trace, const Tensor& logit_grad,
                  const Tensor* feature_grad = nullptr);

/// Softmax probabilities with dropout disabled.
Tensor predict(const Network& net, const Tensor& x);
/// Softmax probabilities with the network's dropout rate applied.
Tensor predict(const Network& net, const Tensor& x, Rng& rng);

/// n stochastic passes; rng advances between passes.
std::vector<Tensor> mc_predict(const Network& net, const Tensor& x, std::size_t n, Rng& rng);

inline constexpr std::size_t kDefaultMcPasses = 10;

/// Deterministic activations at the feature cut.
Tensor features(const Network& net, const Tensor& x);

/// Two-class domain head over feature vectors: class 0 source, 1 target.
struct Discriminator {
    Network net;

    std::size_t input_width() const { return net.input_width(); }
};

Discriminator build_discriminator(const MLPSpec& spec, Rng& rng);

/// Mean two-class cross-entropy with source rows labelled 0 and target
/// rows labelled 1.
double discriminator_loss(const Discriminator& disc, const Tensor& feats_src, const Tensor& feats_tgt);

std::vector<int> argmax_rows(const Tensor& probs);

} // namespace cdca
