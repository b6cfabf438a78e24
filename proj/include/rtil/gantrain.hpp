#pragma once

#include <vector>

#include "rtil/generators.hpp"
#include "rtil/optim.hpp"
#include "rtil/supervised.hpp"

namespace rtil {

// Logit network: dense_leakyrelu stack ending in a single linear output.
struct Discriminator {
    LayeredGenerator net;

    double logit(const Vec& x) const { return forward(net, {x, {}})(0); }
    void validate(Eigen::Index input_dim) const;
};

enum class SyntheticKind { linear_teacher, gaussian_mixture };

struct DataSpec {
    SyntheticKind kind = SyntheticKind::linear_teacher;
    LinearTheoryInstance teacher;  // linear_teacher
    int mixture_components = 4;    // gaussian_mixture
    Eigen::Index mixture_dim = 8;
    std::uint64_t mixture_seed = 0;

    Eigen::Index signal_dim() const {
        return kind == SyntheticKind::linear_teacher ? teacher.nd : mixture_dim;
    }
};

struct TrainConfig {
    double sigma2 = 1.0;  // variance of the injected latent during training
    int steps = 1000;
    int batch = 64;
    double lr_g = 1e-3;
    double lr_d = 1e-3;
    int disc_steps_per_gen = 1;
    DataSpec data;
    std::uint64_t seed = 0;

    // rtil=false freezes the injected latent at zero: the base-model-only
    // training pipeline, with the same draw sequence for paired runs.
    bool rtil = true;
    bool saturating_gen_loss = false;  // default is the non-saturating form
    OptimizerKind optimizer = OptimizerKind::sgd;
    AdamParams adam;
    int inject_layer = 1;

    // Architecture knobs (generator shape follows the data spec).
    int gen_hidden = 16;            // gaussian_mixture generators only
    Eigen::Index gen_latent_dim = 4;
    int disc_hidden = 16;
    int disc_hidden_layers = 2;

    void validate() const;
};

struct BatchLosses {
    double d_loss = 0.0;
    double g_loss = 0.0;
};

struct GanGrads {
    std::vector<DenseMatrix> d_weights;
    std::vector<Vec> d_biases;
    std::vector<DenseMatrix> g_weights;
    std::vector<Vec> g_biases;
};

// Batch losses of the concurrent two-model objective. The discriminator sees
// one real term and the two fake terms at half weight each; the generator
// loss is the non-saturating counterpart (saturating selectable). Both models
// share the generator weights; batch_z1 entries are added at inject_layer.
BatchLosses rtil_loss_terms(const Discriminator& d, const LayeredGenerator& g,
                            const std::vector<Vec>& batch_real,
                            const std::vector<Vec>& batch_z0,
                            const std::vector<Vec>& batch_z1, int inject_layer = 1,
                            bool saturating = false);

// Same losses plus exact gradients: d_loss w.r.t. discriminator parameters,
// g_loss w.r.t. the shared generator parameters (both model branches
// contribute).
BatchLosses rtil_loss_grads(const Discriminator& d, const LayeredGenerator& g,
                            const std::vector<Vec>& batch_real,
                            const std::vector<Vec>& batch_z0,
                            const std::vector<Vec>& batch_z1, GanGrads& grads,
                            int inject_layer = 1, bool saturating = false);

struct LossRecord {
    int step = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
};

struct TrainOutput {
    LayeredGenerator gen;
    Discriminator disc;
    std::vector<LossRecord> history;
};

// Alternating minimax training, deterministic per seed. Aborts with
// NumericalError (carrying the step index) if a loss leaves the finite range.
TrainOutput train(const TrainConfig& cfg);

// Synthetic data: the linear teacher pushes (z0, z1) ~ N(0, I) through the
// ground-truth model; the mixture draws a component uniformly and adds
// 0.1-scaled noise around its mean.
std::vector<Vec> sample_synthetic(const DataSpec& spec, int n, RandomStream& stream);

} // namespace rtil
