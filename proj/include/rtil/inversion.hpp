#pragma once

#include <cstdint>
#include <vector>

#include "rtil/generators.hpp"
#include "rtil/operators.hpp"
#include "rtil/optim.hpp"
#include "rtil/supervised.hpp"

namespace rtil {

enum class LrPolicy { constant, ramp_cosine };

struct InversionConfig {
    // One budget per optimization stage: the latent stage first, then one
    // per injected layer. The full-scale schedule is {2000,1000,1000,1000,2000};
    // the default is that schedule scaled down for desk runs.
    std::vector<int> per_layer_iters = {200, 100, 100, 100, 200};
    double lr_init = 0.1;
    LrPolicy lr_policy = LrPolicy::ramp_cosine;
    double warm_frac = 0.1;  // ramp_cosine warm-up fraction of a stage
    OptimizerKind optimizer = OptimizerKind::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int n_codes = 20;       // multi-code inversion only
    int split_layer = 1;    // multi-code combination point
    bool optimize_importance = true;  // frozen importance reduces N=1 to the latent-only solver
    bool joint_refine = false;        // re-open earlier variables in later stages
    int restarts = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// Linear warm-up to lr_init over warm_frac*total steps, then cosine decay to
// zero at the last step. Pure function of (step, total).
double learning_rate_at(const InversionConfig& cfg, int step, int total_steps);

struct InversionResult {
    Vec estimate;
    LatentAssignment latents;       // csgm / ilo
    MultiCodeAssignment multicode;  // mgan
    bool used_multicode = false;
    std::vector<double> residual_history;  // |y - A(x_t)|_2 per iterate
    double final_residual = 0.0;
};

// Latent-only inversion: minimize |y - A(G(z0))|^2 over z0, initialized
// z0 ~ N(0, I); best of `restarts` restarts by final residual.
InversionResult csgm_invert(const LayeredGenerator& g, const MeasurementOperator& op,
                            const Vec& y, const InversionConfig& cfg);

// Sequential intermediate-layer optimization: stage 0 over z0, stage k >= 1
// introduces an additive injection at layer k (earlier variables frozen
// unless joint_refine is set).
InversionResult ilo_invert(const LayeredGenerator& g, const MeasurementOperator& op,
                           const Vec& y, const InversionConfig& cfg);

// Multi-code inversion: jointly optimizes n_codes latent codes and their
// channel-importance vectors; importance starts at a flat-Dirichlet split.
InversionResult mgan_invert(const LayeredGenerator& g, const MeasurementOperator& op,
                            const Vec& y, const InversionConfig& cfg);

struct LayeredSolution {
    Vec z0;
    Vec z1;
    Vec estimate;
};

// Two-stage sequential least squares on x = W1 (W0 z0 + z1): z0 by pseudo-
// inverse of A W1 W0, then the min-norm z1 on the stage-0 residual. The
// closed-form counterpart of the gradient solvers above.
LayeredSolution ilo_linear_closed(const DenseMatrix& w1, const DenseMatrix& w0,
                                  const DenseMatrix& a, const Vec& y);

// Closed-form inversion pipelines for a trained theory instance.
LayeredSolution layered_ls_vanilla(const LinearTheoryInstance& inst, const DenseMatrix& a,
                                   const Vec& y);
LayeredSolution layered_ls_rtil(const LinearTheoryInstance& inst, const DenseMatrix& a,
                                const Vec& y);

} // namespace rtil
