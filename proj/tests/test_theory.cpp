#include <doctest.h>

#include <cmath>

#include "rtil/inversion.hpp"
#include "rtil/theory.hpp"

using namespace rtil;

namespace {

DenseMatrix sensing(const LinearTheoryInstance& inst, Eigen::Index m, std::uint64_t seed) {
    RandomStream s = RandomStream(seed).child(777);
    return gaussian_matrix(m, inst.nd, s);
}

// Independent batched Monte Carlo of the base pipeline's expected squared
// error, written against the public layered solver formulas.
std::pair<double, double> mc_vanilla_error(const LinearTheoryInstance& inst,
                                           const DenseMatrix& a, Eigen::Index samples,
                                           std::uint64_t seed) {
    const DenseMatrix w1v = train_vanilla_closed_form(inst);
    const DenseMatrix aw1 = a * w1v;
    const DenseMatrix aw10 = aw1 * inst.w0_star;
    const DenseMatrix s0 = pinv(aw10);
    const DenseMatrix s1 = pinv(aw1);

    RandomStream stream(seed);
    double sum = 0.0, sum_sq = 0.0;
    Eigen::Index done = 0;
    while (done < samples) {
        const Eigen::Index b = std::min<Eigen::Index>(8192, samples - done);
        DenseMatrix z0(inst.n0, b), z1(inst.n1, b);
        for (Eigen::Index j = 0; j < b; ++j) {
            for (Eigen::Index i = 0; i < inst.n0; ++i) z0(i, j) = stream.gaussian();
            for (Eigen::Index i = 0; i < inst.n1; ++i) z1(i, j) = stream.gaussian();
        }
        const DenseMatrix x = inst.w1_star * (inst.w0_star * z0 + z1);
        const DenseMatrix y = a * x;
        const DenseMatrix z0h = s0 * y;
        const DenseMatrix z1h = s1 * (y - aw10 * z0h);
        const DenseMatrix est = w1v * (inst.w0_star * z0h + z1h);
        for (Eigen::Index j = 0; j < b; ++j) {
            const double e = (est.col(j) - x.col(j)).squaredNorm();
            sum += e;
            sum_sq += e * e;
        }
        done += b;
    }
    const double n = static_cast<double>(samples);
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n);
    return {mean, se};
}

} // namespace

TEST_CASE("m1 matrix shape and orthonormal special case") {
    const LinearTheoryInstance generic = make_instance(3, 5, 9, 1);
    const DenseMatrix a = sensing(generic, 6, 2);
    CHECK(m1_matrix(generic, a).rows() == 3);
    CHECK(m1_matrix(generic, a).cols() == 5);

    // W1* with orthonormal columns, W0* the first n0 columns of I, A = I:
    // A W1* W0* has orthonormal columns, so its pseudoinverse is the transpose.
    LinearTheoryInstance inst;
    inst.n0 = 2;
    inst.n1 = 4;
    inst.nd = 7;
    RandomStream s(3);
    inst.w1_star = svd(gaussian_matrix(7, 4, s)).u;
    inst.w0_star = DenseMatrix::Identity(4, 2);
    const DenseMatrix identity_a = DenseMatrix::Identity(7, 7);
    const DenseMatrix w10 = inst.w1_star * inst.w0_star;
    const DenseMatrix expect = w10.transpose() * inst.w1_star;
    CHECK((m1_matrix(inst, identity_a) - expect).norm() < 1e-10);
}

TEST_CASE("m1 matrix reproduces the layered solver estimate") {
    const LinearTheoryInstance inst = make_instance(3, 6, 14, 5);
    const DenseMatrix a = sensing(inst, 9, 6);
    RandomStream s(7);
    const Vec z0 = gaussian_vector(3, s);
    const Vec z1 = gaussian_vector(6, s);
    const Vec x = inst.w1_star * (inst.w0_star * z0 + z1);
    const LayeredSolution sol = layered_ls_vanilla(inst, a, a * x);
    const Vec via_m1 = inst.w1_star * (inst.w0_star * z0 +
                                       inst.w0_star * m1_matrix(inst, a) * z1);
    CHECK((sol.estimate - via_m1).norm() < 1e-8);
}

TEST_CASE("base-pipeline error dominates its bound and stays positive") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const LinearTheoryInstance inst = make_instance(3, 5, 11, seed);
        const DenseMatrix a = sensing(inst, 7, seed + 1);
        const double err = vanilla_expected_error(inst, a);
        const double bound = bound_err1(inst);
        CHECK(err > 0.0);
        CHECK(bound > 0.0);
        CHECK(err >= bound - 1e-8);
    }
}

TEST_CASE("closed-form error sits inside the monte carlo interval") {
    const LinearTheoryInstance inst = make_instance(4, 8, 32, 17);
    const DenseMatrix a = sensing(inst, 16, 18);
    const auto [mc, se] = mc_vanilla_error(inst, a, 100000, 19);
    CHECK(std::abs(vanilla_expected_error(inst, a) - mc) <= 3.0 * se);
}

TEST_CASE("bound hits one in the orthogonal construction") {
    LinearTheoryInstance inst;
    inst.n0 = 2;
    inst.n1 = 4;
    inst.nd = 8;
    RandomStream s(21);
    inst.w1_star = svd(gaussian_matrix(8, 4, s)).u;  // orthonormal columns
    inst.w0_star = DenseMatrix::Identity(4, 2);
    CHECK(bound_err1(inst) == doctest::Approx(1.0));
}

TEST_CASE("bound equals a random search over unit complement directions") {
    const LinearTheoryInstance inst = make_instance(3, 6, 12, 23);
    const double bound = bound_err1(inst);
    const DenseMatrix q = range_complement_basis(inst.w0_star);
    const DenseMatrix p = range_projector(inst.w1_star * inst.w0_star);
    const DenseMatrix lift =
        (DenseMatrix::Identity(inst.nd, inst.nd) - p) * inst.w1_star;
    RandomStream s(24);
    double best = 0.0;
    for (int k = 0; k < 10000; ++k) {
        Vec coeffs = gaussian_vector(q.cols(), s);
        coeffs /= coeffs.norm();
        const Vec h = q * coeffs;  // unit vector in range(W0*)^perp
        best = std::max(best, (lift * h).squaredNorm());
    }
    CHECK(best <= bound + 1e-10);
    CHECK(best >= 0.99 * bound);
}

TEST_CASE("bound ignores a change of basis in the first layer") {
    const LinearTheoryInstance base = make_instance(3, 6, 12, 25);
    const double before = bound_err1(base);
    RandomStream s(26);
    DenseMatrix t = gaussian_matrix(3, 3, s);
    while (numerical_rank(t) < 3) t = gaussian_matrix(3, 3, s);
    LinearTheoryInstance rotated = base;
    rotated.w0_star = base.w0_star * t;  // same range
    CHECK(std::abs(bound_err1(rotated) - before) < 1e-8);
}

TEST_CASE("regularized pipeline error vanishes in regime") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const LinearTheoryInstance inst = make_instance(3, 5, 11, seed + 50);
        const DenseMatrix a = sensing(inst, 7, seed + 51);  // m = 7 >= n1 = 5
        CHECK(rtil_expected_error(inst, a) <= 1e-10);
    }
}

TEST_CASE("below the regime the error is reported, not asserted") {
    const LinearTheoryInstance inst = make_instance(3, 6, 12, 71);
    const DenseMatrix a = sensing(inst, 4, 72);  // m = 4 < n1 = 6
    const double err = rtil_expected_error(inst, a);
    CHECK(std::isfinite(err));
    MESSAGE("out-of-regime max probe error: ", err);
}

TEST_CASE("the closed-form latent map is optimal") {
    for (std::uint64_t seed : {81u, 82u, 83u}) {
        CHECK(optimal_m_check(make_instance(3, 5, 10, seed)));
    }
}

TEST_CASE("psnr reference points") {
    Vec x = Vec::Zero(4);
    CHECK(std::isinf(psnr(x, x, 1.0)));

    Vec xh = Vec::Constant(4, 0.1);  // MSE = 0.01
    CHECK(psnr(x, xh, 1.0) == doctest::Approx(20.0));

    RandomStream s(91);
    const Vec a = gaussian_vector(16, s);
    const Vec b = gaussian_vector(16, s);
    double mse = 0.0;
    for (Eigen::Index i = 0; i < 16; ++i) mse += (a(i) - b(i)) * (a(i) - b(i));
    mse /= 16.0;
    CHECK(std::abs(psnr(a, b, 2.0) - 10.0 * std::log10(4.0 / mse)) < 1e-10);

    CHECK_THROWS_AS(psnr(Vec::Zero(3), Vec::Zero(4), 1.0), ContractError);
    CHECK_THROWS_AS(psnr(x, xh, 0.0), ContractError);
}

TEST_CASE("full report passes every verdict in regime") {
    const LinearTheoryInstance inst = make_instance(4, 8, 32, 97);
    const DenseMatrix a = sensing(inst, 16, 98);
    TheoryReportOptions opts;
    opts.mc_error_samples = 20000;
    opts.mc_zero_samples = 500;
    const TheoryReport rep = make_theory_report(inst, a, opts);
    CHECK(rep.lemma_regime);
    for (const auto& [name, ok] : rep.verdicts) {
        INFO("verdict: ", name);
        CHECK(ok);
    }
    CHECK(rep.vanilla_err_closed >= rep.bound_err1 - 1e-8);
    CHECK(rep.bound_err1 > 0.0);
    CHECK(rep.rtil_err_closed <= 1e-10);
    CHECK(!format_report_table({rep}).empty());
}

TEST_CASE("out-of-regime report skips the zero-error verdicts") {
    const LinearTheoryInstance inst = make_instance(4, 8, 32, 99);
    const DenseMatrix a = sensing(inst, 6, 100);  // m = 6 < n1
    TheoryReportOptions opts;
    opts.mc_error_samples = 5000;
    const TheoryReport rep = make_theory_report(inst, a, opts);
    CHECK(!rep.lemma_regime);
    for (const auto& [name, ok] : rep.verdicts) {
        CHECK(name.find("rtil_zero") == std::string::npos);
        CHECK(ok);
    }
}

TEST_CASE("monte carlo interval covers the closed form across repetitions") {
    const LinearTheoryInstance inst = make_instance(4, 8, 32, 101);
    const DenseMatrix a = sensing(inst, 16, 102);
    const double closed = vanilla_expected_error(inst, a);
    int covered = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        const auto [mc, se] = mc_vanilla_error(inst, a, 20000, 500 + r);
        if (std::abs(closed - mc) <= 3.0 * se) ++covered;
    }
    CHECK(covered >= 198);  // 99% of repetitions
}
