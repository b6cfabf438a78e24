#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rtil/supervised.hpp"

namespace rtil {

// Numerical record of the training/inversion dichotomy for one instance and
// sensing matrix: the base-trained pipeline keeps a strictly positive
// expected error while the regularized pipeline recovers exactly.
struct TheoryReport {
    Eigen::Index n0 = 0, n1 = 0, nd = 0, m = 0;
    std::uint64_t seed = 0;
    bool lemma_regime = false;  // m >= n1 (the zero-error claim needs it)

    double vanilla_err_closed = 0.0;
    double vanilla_err_mc = 0.0;
    double vanilla_err_mc_stderr = 0.0;
    double bound_err1 = 0.0;
    double rtil_err_closed = 0.0;  // max probe error; identically 0 in regime
    double rtil_err_mc = 0.0;
    double rtil_err_mc_stderr = 0.0;
    double rtil_err_mc_max = 0.0;

    std::vector<std::pair<std::string, bool>> verdicts;

    bool all_passed() const;
};

// M1 = pinv(A W1* W0*) A W1*, the n0 x n1 map that carries the unseen z1*
// into the base pipeline's latent estimate.
DenseMatrix m1_matrix(const LinearTheoryInstance& inst, const DenseMatrix& a);

// Closed-form expectation |W1* - W1* W0* M1|_F^2 of the base pipeline's
// squared reconstruction error over (z0*, z1*).
double vanilla_expected_error(const LinearTheoryInstance& inst, const DenseMatrix& a);

// Squared spectral norm of (I - P_{W1* W0*}) W1* restricted to range(W0*)^perp:
// the sensing-independent lower bound on the base pipeline's error.
double bound_err1(const LinearTheoryInstance& inst);

// Max squared error of the regularized pipeline over a probe set spanning
// the latent space (basis directions plus seeded random draws).
double rtil_expected_error(const LinearTheoryInstance& inst, const DenseMatrix& a);

// Verifies that pinv(W1* W0*) W1* minimizes M -> |W1* - W1* W0* M|_F^2:
// random perturbations never improve it, the normal equations hold, and the
// optimal value matches the projector identity.
bool optimal_m_check(const LinearTheoryInstance& inst);

// 10 log10(peak^2 / MSE); returns +infinity when the vectors coincide.
double psnr(const Vec& x, const Vec& x_hat, double peak);

struct TheoryReportOptions {
    Eigen::Index mc_error_samples = 100000;
    Eigen::Index mc_zero_samples = 1000;
    bool with_lemma1_checks = true;
};

TheoryReport make_theory_report(const LinearTheoryInstance& inst, const DenseMatrix& a,
                                const TheoryReportOptions& opts = {});

// Fixed-width table of one report per row, for terminal consumption.
std::string format_report_table(const std::vector<TheoryReport>& reports);

} // namespace rtil
