#include "rtil/supervised.hpp"

#include <cmath>

namespace rtil {

namespace {

bool full_rank(const DenseMatrix& m) {
    return numerical_rank(m) == std::min(m.rows(), m.cols());
}

// Constructed instances are strict (n0 < n1 < nd); tests may build degenerate
// square cases by hand, so consumers only insist on ordering.
void check_instance(const LinearTheoryInstance& inst) {
    if (!(inst.n0 >= 1 && inst.n0 <= inst.n1 && inst.n1 <= inst.nd)) {
        throw ContractError("instance: dimensions must satisfy 1 <= n0 <= n1 <= nd");
    }
    if (inst.w1_star.rows() != inst.nd || inst.w1_star.cols() != inst.n1 ||
        inst.w0_star.rows() != inst.n1 || inst.w0_star.cols() != inst.n0) {
        throw ContractError("instance: weight shapes disagree with dimensions");
    }
}

} // namespace

LinearTheoryInstance make_instance(Eigen::Index n0, Eigen::Index n1, Eigen::Index nd,
                                   std::uint64_t seed) {
    if (!(n0 >= 1 && n0 < n1 && n1 < nd)) {
        throw ContractError("make_instance: need 1 <= n0 < n1 < nd");
    }
    LinearTheoryInstance inst;
    inst.n0 = n0;
    inst.n1 = n1;
    inst.nd = nd;
    inst.seed = seed;
    RandomStream root(seed);
    for (std::uint64_t attempt = 0;; ++attempt) {
        RandomStream draw = root.child(attempt);
        inst.w0_star = gaussian_matrix(n1, n0, draw);
        inst.w1_star = gaussian_matrix(nd, n1, draw);
        if (full_rank(inst.w0_star) && full_rank(inst.w1_star)) break;
    }
    return inst;
}

DenseMatrix train_vanilla_closed_form(const LinearTheoryInstance& inst) {
    check_instance(inst);
    return inst.w1_star * inst.w0_star * pinv(inst.w0_star);
}

DenseMatrix train_rtil_closed_form(const LinearTheoryInstance& inst) {
    check_instance(inst);
    return inst.w1_star;
}

TrainedPair train_pair(const LinearTheoryInstance& inst) {
    return TrainedPair{train_vanilla_closed_form(inst), train_rtil_closed_form(inst)};
}

double population_loss_vanilla(const LinearTheoryInstance& inst, const DenseMatrix& w1) {
    check_instance(inst);
    if (w1.rows() != inst.nd || w1.cols() != inst.n1) {
        throw ContractError("population_loss_vanilla: W1 shape mismatch");
    }
    const DenseMatrix diff = (inst.w1_star - w1) * inst.w0_star;
    return diff.squaredNorm() + inst.w1_star.squaredNorm();
}

double population_loss_rtil(const LinearTheoryInstance& inst, const DenseMatrix& w1) {
    check_instance(inst);
    if (w1.rows() != inst.nd || w1.cols() != inst.n1) {
        throw ContractError("population_loss_rtil: W1 shape mismatch");
    }
    const DenseMatrix delta = inst.w1_star - w1;
    return (delta * inst.w0_star).squaredNorm() + delta.squaredNorm();
}

DenseMatrix train_vanilla_iterative(const LinearTheoryInstance& inst, int steps, double lr) {
    check_instance(inst);
    if (steps < 0) throw ContractError("train_vanilla_iterative: negative step count");

    // Quadratic in W1 with Hessian 2 * (W0* W0*^T  (x)  I).
    const DenseMatrix gram = inst.w0_star * inst.w0_star.transpose();
    const SvdResult f = svd(inst.w0_star);
    const double s_max = f.singular_values(0);
    const double hessian_max = 2.0 * s_max * s_max;
    if (lr <= 0.0) lr = 1.0 / hessian_max;
    if (!(lr < 2.0 / hessian_max)) {
        throw ContractError("train_vanilla_iterative: lr must be below 2/L");
    }

    DenseMatrix w1 = DenseMatrix::Zero(inst.nd, inst.n1);
    const double stationary_tol = 1e-14 * (1.0 + inst.w1_star.norm());
    double prev_loss = population_loss_vanilla(inst, w1);
    int rising = 0;
    for (int t = 0; t < steps; ++t) {
        const DenseMatrix grad = -2.0 * (inst.w1_star - w1) * gram;
        if (grad.norm() < stationary_tol) break;
        w1 -= lr * grad;
        const double loss = population_loss_vanilla(inst, w1);
        rising = loss > prev_loss ? rising + 1 : 0;
        if (rising >= 10) {
            throw StepSizeError("train_vanilla_iterative: loss rose for 10 steps at step " +
                                std::to_string(t));
        }
        prev_loss = loss;
    }
    return w1;
}

} // namespace rtil
