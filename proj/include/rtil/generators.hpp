#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rtil/numkit.hpp"

namespace rtil {

enum class LayerKind { linear, dense_leakyrelu };

struct Layer {
    LayerKind kind = LayerKind::linear;
    DenseMatrix weight;  // out_dim x in_dim
    Vec bias;            // size 0 means no bias term
    double leak = 0.2;   // dense_leakyrelu only, in (0, 1)

    Eigen::Index in_dim() const { return weight.cols(); }
    Eigen::Index out_dim() const { return weight.rows(); }
};

Layer make_linear(DenseMatrix weight);
Layer make_dense_leakyrelu(DenseMatrix weight, Vec bias, double leak = 0.2);

// Ordered layer stack z0 -> x. Intermediate-injection points sit on every
// layer input, so the same object serves the base model and its extended
// family.
struct LayeredGenerator {
    std::vector<Layer> layers;

    Eigen::Index latent_dim() const { return layers.front().in_dim(); }
    Eigen::Index output_dim() const { return layers.back().out_dim(); }
    void validate() const;  // at least one layer, adjacent dims compatible
};

// Latent input plus optional additive vectors injected at layer inputs.
// Injection (i, v) adds v to the input of layer i before it is applied.
struct LatentAssignment {
    Vec z0;
    std::vector<std::pair<int, Vec>> injections;
};

// N latent codes combined after the first `split_layer` layers: each code's
// feature vector is scaled channel-wise by its importance vector, the scaled
// features are summed, and the remaining layers are applied to the sum.
struct MultiCodeAssignment {
    std::vector<Vec> codes;       // each of latent dim
    std::vector<Vec> importance;  // each of the split-point channel count
    int split_layer = 1;          // layers [0, split_layer) form the head
};

Vec forward(const LayeredGenerator& g, const LatentAssignment& a);
Vec forward_multicode(const LayeredGenerator& g, const MultiCodeAssignment& m);

struct GeneratorGrads {
    Vec z0;
    std::vector<std::pair<int, Vec>> injections;  // same order as the assignment
    std::vector<DenseMatrix> weights;             // one per layer
    std::vector<Vec> biases;                      // size-0 where the layer has no bias
};

// Captured forward pass; pullback maps an output cotangent to exact
// reverse-mode gradients for every input of forward().
class ForwardTrace {
public:
    const Vec& output() const { return output_; }
    GeneratorGrads pullback(const Vec& output_cotangent) const;

private:
    friend ForwardTrace forward_with_grad(const LayeredGenerator&, const LatentAssignment&);
    const LayeredGenerator* gen_ = nullptr;
    std::vector<std::pair<int, Vec>> injections_;
    std::vector<Vec> inputs_;    // input of each layer, injection included
    std::vector<Vec> preacts_;   // weight * input + bias, per layer
    Vec output_;
};

ForwardTrace forward_with_grad(const LayeredGenerator& g, const LatentAssignment& a);

struct MultiCodeGrads {
    std::vector<Vec> codes;
    std::vector<Vec> importance;
};

class MultiCodeTrace {
public:
    const Vec& output() const { return output_; }
    MultiCodeGrads pullback(const Vec& output_cotangent) const;

private:
    friend MultiCodeTrace forward_multicode_with_grad(const LayeredGenerator&,
                                                      const MultiCodeAssignment&);
    const LayeredGenerator* gen_ = nullptr;
    const MultiCodeAssignment* assign_ = nullptr;
    std::vector<std::vector<Vec>> head_inputs_;   // per code, per head layer
    std::vector<std::vector<Vec>> head_preacts_;
    std::vector<Vec> head_outputs_;               // g0(code_k)
    std::vector<Vec> tail_inputs_;                // combined features onward
    std::vector<Vec> tail_preacts_;
    Vec output_;
};

MultiCodeTrace forward_multicode_with_grad(const LayeredGenerator& g,
                                           const MultiCodeAssignment& m);

// JSON model file: {"latent_dim": int, "layers": [{"kind", "rows", "cols",
// "weight", "bias", "leak"}]}. Round trips are bit-exact.
void save_model(const LayeredGenerator& g, const std::string& path);
LayeredGenerator load_model(const std::string& path);

} // namespace rtil
