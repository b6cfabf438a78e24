#pragma once

#include <cstdint>

#include "rtil/numkit.hpp"

namespace rtil {

// Ground truth of the two-layer linear theory: x = W1* (W0* z0 + z1) with
// n0 < n1 < nd and both factors full rank. W0* is known to the trainer,
// W1* is what training estimates.
struct LinearTheoryInstance {
    Eigen::Index n0 = 0;
    Eigen::Index n1 = 0;
    Eigen::Index nd = 0;
    DenseMatrix w1_star;  // nd x n1
    DenseMatrix w0_star;  // n1 x n0
    std::uint64_t seed = 0;
};

struct TrainedPair {
    DenseMatrix w1_van;   // min-Frobenius-norm population solution, base model
    DenseMatrix w1_rtil;  // unique population solution, regularized model
};

// Gaussian-sampled instance, redrawn until both factors pass the rank check
// (the first draw passes with probability 1).
LinearTheoryInstance make_instance(Eigen::Index n0, Eigen::Index n1, Eigen::Index nd,
                                   std::uint64_t seed);

// W1* W0* pinv(W0*): the minimum-Frobenius-norm minimizer of the base-model
// population loss.
DenseMatrix train_vanilla_closed_form(const LinearTheoryInstance& inst);

// The regularized population loss has the unique minimizer W1*.
DenseMatrix train_rtil_closed_form(const LinearTheoryInstance& inst);

TrainedPair train_pair(const LinearTheoryInstance& inst);

// Closed-form population objectives (no sampling):
//   vanilla: |(W1* - W1) W0*|_F^2 + |W1*|_F^2
//   rtil:    |(W1* - W1) W0*|_F^2 + |W1* - W1|_F^2
double population_loss_vanilla(const LinearTheoryInstance& inst, const DenseMatrix& w1);
double population_loss_rtil(const LinearTheoryInstance& inst, const DenseMatrix& w1);

// Gradient descent on the vanilla population loss from zero initialization;
// every iterate stays orthogonal to the null space, so the limit is the
// min-norm solution. lr <= 0 selects the default 1/L, L the largest Hessian
// eigenvalue 2*s_max(W0*)^2. Throws StepSizeError on detected divergence.
DenseMatrix train_vanilla_iterative(const LinearTheoryInstance& inst, int steps,
                                    double lr = 0.0);

} // namespace rtil
