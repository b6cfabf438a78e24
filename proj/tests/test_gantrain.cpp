#include <doctest.h>

#include <cmath>

#include "rtil/gantrain.hpp"

using namespace rtil;

namespace {

Discriminator small_disc(Eigen::Index input_dim, std::uint64_t seed) {
    RandomStream s(seed);
    Discriminator d;
    d.net.layers.push_back(
        make_dense_leakyrelu(gaussian_matrix(5, input_dim, s), gaussian_vector(5, s), 0.2));
    d.net.layers.push_back(make_linear(gaussian_matrix(1, 5, s)));
    return d;
}

LayeredGenerator small_gen(std::uint64_t seed) {
    RandomStream s(seed);
    LayeredGenerator g;
    g.layers.push_back(make_linear(gaussian_matrix(4, 3, s)));
    g.layers.push_back(make_linear(gaussian_matrix(6, 4, s)));
    return g;
}

struct Batches {
    std::vector<Vec> real, z0, z1;
};

Batches draw_batches(Eigen::Index nd, Eigen::Index n0, Eigen::Index n1, int n,
                     std::uint64_t seed) {
    RandomStream s(seed);
    Batches b;
    for (int i = 0; i < n; ++i) {
        b.real.push_back(gaussian_vector(nd, s));
        b.z0.push_back(gaussian_vector(n0, s));
        b.z1.push_back(gaussian_vector(n1, s));
    }
    return b;
}

TrainConfig tiny_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.data.kind = SyntheticKind::linear_teacher;
    cfg.data.teacher = make_instance(3, 5, 8, 101);
    cfg.steps = 5;
    cfg.batch = 8;
    cfg.lr_g = 1e-3;
    cfg.lr_d = 1e-3;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("constant-logit discriminator gives 2 log 2") {
    Discriminator d = small_disc(6, 1);
    d.net.layers.back().weight.setZero();  // logit 0 everywhere
    const LayeredGenerator g = small_gen(2);
    const Batches b = draw_batches(6, 3, 4, 16, 3);
    const BatchLosses losses = rtil_loss_terms(d, g, b.real, b.z0, b.z1);
    CHECK(losses.d_loss == doctest::Approx(2.0 * std::log(2.0)));
    CHECK(losses.g_loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("zero injected latents collapse to the single-model loss") {
    const Discriminator d = small_disc(6, 4);
    const LayeredGenerator g = small_gen(5);
    Batches b = draw_batches(6, 3, 4, 12, 6);
    for (Vec& z1 : b.z1) z1.setZero();
    const BatchLosses losses = rtil_loss_terms(d, g, b.real, b.z0, b.z1);

    auto softplus = [](double x) {
        return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
    };
    double d_expect = 0.0, g_expect = 0.0;
    for (size_t i = 0; i < b.real.size(); ++i) {
        d_expect += softplus(-d.logit(b.real[i]));
        const double logit = d.logit(forward(g, {b.z0[i], {}}));
        d_expect += softplus(logit);
        g_expect += softplus(-logit);
    }
    d_expect /= static_cast<double>(b.real.size());
    g_expect /= static_cast<double>(b.real.size());
    CHECK(losses.d_loss == doctest::Approx(d_expect));
    CHECK(losses.g_loss == doctest::Approx(g_expect));
}

TEST_CASE("loss gradients match central finite differences") {
    const Discriminator d = small_disc(6, 7);
    const LayeredGenerator g = small_gen(8);
    const Batches b = draw_batches(6, 3, 4, 6, 9);

    GanGrads grads;
    rtil_loss_grads(d, g, b.real, b.z0, b.z1, grads);

    const double h = 1e-5;
    const auto close = [](double analytic, double numeric) {
        return std::abs(analytic - numeric) <= 1e-4 * std::abs(numeric) + 1e-6;
    };

    int checked = 0;
    for (size_t l = 0; l < d.net.layers.size(); ++l) {
        for (Eigen::Index r = 0; r < d.net.layers[l].weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < d.net.layers[l].weight.cols(); ++c) {
                Discriminator dp = d, dm = d;
                dp.net.layers[l].weight(r, c) += h;
                dm.net.layers[l].weight(r, c) -= h;
                const double numeric = (rtil_loss_terms(dp, g, b.real, b.z0, b.z1).d_loss -
                                        rtil_loss_terms(dm, g, b.real, b.z0, b.z1).d_loss) /
                                       (2 * h);
                CHECK(close(grads.d_weights[l](r, c), numeric));
                ++checked;
            }
        }
        for (Eigen::Index r = 0; r < d.net.layers[l].bias.size(); ++r) {
            Discriminator dp = d, dm = d;
            dp.net.layers[l].bias(r) += h;
            dm.net.layers[l].bias(r) -= h;
            const double numeric = (rtil_loss_terms(dp, g, b.real, b.z0, b.z1).d_loss -
                                    rtil_loss_terms(dm, g, b.real, b.z0, b.z1).d_loss) /
                                   (2 * h);
            CHECK(close(grads.d_biases[l](r), numeric));
            ++checked;
        }
    }
    for (size_t l = 0; l < g.layers.size(); ++l) {
        for (Eigen::Index r = 0; r < g.layers[l].weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < g.layers[l].weight.cols(); ++c) {
                LayeredGenerator gp = g, gm = g;
                gp.layers[l].weight(r, c) += h;
                gm.layers[l].weight(r, c) -= h;
                const double numeric = (rtil_loss_terms(d, gp, b.real, b.z0, b.z1).g_loss -
                                        rtil_loss_terms(d, gm, b.real, b.z0, b.z1).g_loss) /
                                       (2 * h);
                CHECK(close(grads.g_weights[l](r, c), numeric));
                ++checked;
            }
        }
    }
    CHECK(checked >= 70);
}

TEST_CASE("saturating generator loss gradients also match finite differences") {
    const Discriminator d = small_disc(6, 10);
    const LayeredGenerator g = small_gen(11);
    const Batches b = draw_batches(6, 3, 4, 4, 12);

    GanGrads grads;
    rtil_loss_grads(d, g, b.real, b.z0, b.z1, grads, 1, /*saturating=*/true);
    const double h = 1e-5;
    for (Eigen::Index r = 0; r < g.layers[0].weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < g.layers[0].weight.cols(); ++c) {
            LayeredGenerator gp = g, gm = g;
            gp.layers[0].weight(r, c) += h;
            gm.layers[0].weight(r, c) -= h;
            const double numeric =
                (rtil_loss_terms(d, gp, b.real, b.z0, b.z1, 1, true).g_loss -
                 rtil_loss_terms(d, gm, b.real, b.z0, b.z1, 1, true).g_loss) /
                (2 * h);
            CHECK(std::abs(grads.g_weights[0](r, c) - numeric) <=
                  1e-4 * std::abs(numeric) + 1e-6);
        }
    }
}

TEST_CASE("vanishing injected variance converges to the single-model loss") {
    const Discriminator d = small_disc(6, 13);
    const LayeredGenerator g = small_gen(14);
    Batches b = draw_batches(6, 3, 4, 10, 15);

    Batches tiny = b;
    for (Vec& z1 : tiny.z1) z1 *= std::sqrt(1e-12);
    Batches zero = b;
    for (Vec& z1 : zero.z1) z1.setZero();

    const BatchLosses a = rtil_loss_terms(d, g, tiny.real, tiny.z0, tiny.z1);
    const BatchLosses c = rtil_loss_terms(d, g, zero.real, zero.z0, zero.z1);
    CHECK(std::abs(a.d_loss - c.d_loss) < 1e-6);
    CHECK(std::abs(a.g_loss - c.g_loss) < 1e-6);
}

TEST_CASE("both model branches share the generator weights") {
    LayeredGenerator g = small_gen(16);
    RandomStream s(17);
    const Vec z0 = gaussian_vector(3, s);
    const Vec z1 = gaussian_vector(4, s);
    const Vec base_before = forward(g, {z0, {}});
    const Vec wide_before = forward(g, {z0, {{1, z1}}});

    g.layers[1].weight(2, 1) += 0.5;  // one shared parameter
    const Vec base_after = forward(g, {z0, {}});
    const Vec wide_after = forward(g, {z0, {{1, z1}}});
    CHECK((base_after - base_before).norm() > 0.0);
    CHECK((wide_after - wide_before).norm() > 0.0);
    // Linear layers: the output shift is the same rank-one response shifted
    // by the same parameter, evaluated at different layer-1 inputs.
    const double in_base = (g.layers[0].weight * z0)(1);
    const double in_wide = (g.layers[0].weight * z0 + z1)(1);
    CHECK((base_after - base_before)(2) == doctest::Approx(0.5 * in_base));
    CHECK((wide_after - wide_before)(2) == doctest::Approx(0.5 * in_wide));
}

TEST_CASE("training bookkeeping") {
    TrainConfig cfg = tiny_train_config(21);
    cfg.steps = 0;
    const TrainOutput frozen = train(cfg);
    CHECK(frozen.history.empty());
    const TrainOutput frozen_again = train(cfg);
    for (size_t l = 0; l < frozen.gen.layers.size(); ++l) {
        CHECK((frozen.gen.layers[l].weight - frozen_again.gen.layers[l].weight).norm() ==
              0.0);
    }

    cfg.steps = 7;
    const TrainOutput run = train(cfg);
    REQUIRE(run.history.size() == 7);
    for (const LossRecord& rec : run.history) {
        CHECK(std::isfinite(rec.d_loss));
        CHECK(std::isfinite(rec.g_loss));
    }

    const TrainOutput rerun = train(cfg);
    REQUIRE(rerun.history.size() == 7);
    for (size_t i = 0; i < 7; ++i) {
        CHECK(run.history[i].d_loss == rerun.history[i].d_loss);
        CHECK(run.history[i].g_loss == rerun.history[i].g_loss);
    }
}

TEST_CASE("paired runs differ only through the injected latent") {
    TrainConfig rtil_cfg = tiny_train_config(23);
    rtil_cfg.steps = 10;
    TrainConfig van_cfg = rtil_cfg;
    van_cfg.rtil = false;

    const TrainOutput rt = train(rtil_cfg);
    const TrainOutput van = train(van_cfg);
    // Same init (same seed), different trajectories.
    CHECK((rt.gen.layers[0].weight - van.gen.layers[0].weight).norm() > 0.0);

    // The base-only pipeline is insensitive to sigma2.
    TrainConfig van_cfg2 = van_cfg;
    van_cfg2.sigma2 = 7.5;
    const TrainOutput van2 = train(van_cfg2);
    for (size_t l = 0; l < van.gen.layers.size(); ++l) {
        CHECK((van.gen.layers[l].weight - van2.gen.layers[l].weight).norm() == 0.0);
    }
}

TEST_CASE("synthetic teacher samples have the stated covariance") {
    // Square identity teacher: x = z0 + z1 has covariance 2I.
    DataSpec spec;
    spec.kind = SyntheticKind::linear_teacher;
    spec.teacher.n0 = 3;
    spec.teacher.n1 = 3;
    spec.teacher.nd = 3;
    spec.teacher.w0_star = DenseMatrix::Identity(3, 3);
    spec.teacher.w1_star = DenseMatrix::Identity(3, 3);

    RandomStream s(31);
    const auto batch = sample_synthetic(spec, 100000, s);
    DenseMatrix cov = DenseMatrix::Zero(3, 3);
    Vec mean = Vec::Zero(3);
    for (const Vec& x : batch) mean += x;
    mean /= static_cast<double>(batch.size());
    for (const Vec& x : batch) cov += (x - mean) * (x - mean).transpose();
    cov /= static_cast<double>(batch.size());
    CHECK((cov - 2.0 * DenseMatrix::Identity(3, 3)).norm() < 0.2 * 2.0 * std::sqrt(3.0));
    for (int i = 0; i < 3; ++i) CHECK(std::abs(cov(i, i) - 2.0) < 0.2);
}

TEST_CASE("synthetic sampling shape and determinism") {
    DataSpec spec;
    spec.kind = SyntheticKind::gaussian_mixture;
    spec.mixture_components = 3;
    spec.mixture_dim = 5;
    spec.mixture_seed = 41;

    RandomStream s1(42), s2(42);
    const auto one = sample_synthetic(spec, 1, s1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].size() == 5);

    RandomStream s3(42);
    const auto a = sample_synthetic(spec, 10, s2);
    const auto b = sample_synthetic(spec, 10, s3);
    for (size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).norm() == 0.0);
}

TEST_CASE("batch shape violations are rejected") {
    const Discriminator d = small_disc(6, 50);
    const LayeredGenerator g = small_gen(51);
    Batches b = draw_batches(6, 3, 4, 4, 52);
    b.z1.pop_back();
    CHECK_THROWS_AS(rtil_loss_terms(d, g, b.real, b.z0, b.z1), ContractError);
}

TEST_CASE("diverging training aborts with the step index") {
    TrainConfig cfg = tiny_train_config(60);
    cfg.steps = 500;
    cfg.batch = 4;
    cfg.lr_g = 1e9;
    cfg.lr_d = 1e9;
    try {
        train(cfg);
        FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("training step") != std::string::npos);
    }
}
