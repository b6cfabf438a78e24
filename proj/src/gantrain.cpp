#include "rtil/gantrain.hpp"

#include <cmath>
#include <string>

namespace rtil {

namespace {

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void accumulate(GanGrads& grads, bool discriminator, const GeneratorGrads& g) {
    auto& weights = discriminator ? grads.d_weights : grads.g_weights;
    auto& biases = discriminator ? grads.d_biases : grads.g_biases;
    for (size_t i = 0; i < g.weights.size(); ++i) {
        weights[i] += g.weights[i];
        if (g.biases[i].size() > 0) biases[i] += g.biases[i];
    }
}

void zero_like(const LayeredGenerator& model, std::vector<DenseMatrix>& weights,
               std::vector<Vec>& biases) {
    weights.clear();
    biases.clear();
    for (const Layer& l : model.layers) {
        weights.push_back(DenseMatrix::Zero(l.weight.rows(), l.weight.cols()));
        biases.push_back(Vec::Zero(l.bias.size()));
    }
}

struct LossAccumulator {
    double d_loss = 0.0;
    double g_loss = 0.0;
};

// Core of both public entry points: walks the three batch terms once,
// accumulating losses and (optionally) gradients.
BatchLosses loss_pass(const Discriminator& d, const LayeredGenerator& g,
                      const std::vector<Vec>& batch_real, const std::vector<Vec>& batch_z0,
                      const std::vector<Vec>& batch_z1, GanGrads* grads, int inject_layer,
                      bool saturating) {
    d.validate(g.output_dim());
    if (batch_real.empty() || batch_z0.size() != batch_real.size() ||
        batch_z1.size() != batch_real.size()) {
        throw ContractError("rtil_loss_terms: batch sizes disagree");
    }
    if (inject_layer < 0 || inject_layer >= static_cast<int>(g.layers.size())) {
        throw ContractError("rtil_loss_terms: inject_layer out of range");
    }
    const double batch_n = static_cast<double>(batch_real.size());

    if (grads != nullptr) {
        zero_like(d.net, grads->d_weights, grads->d_biases);
        zero_like(g, grads->g_weights, grads->g_biases);
    }

    LossAccumulator acc;
    const Vec one = Vec::Ones(1);

    for (const Vec& x : batch_real) {
        if (grads == nullptr) {
            acc.d_loss += softplus(-d.logit(x));
            continue;
        }
        const ForwardTrace dt = forward_with_grad(d.net, {x, {}});
        const double logit = dt.output()(0);
        acc.d_loss += softplus(-logit);
        accumulate(*grads, true, dt.pullback(one * (-sigmoid(-logit) / batch_n)));
    }

    for (size_t i = 0; i < batch_z0.size(); ++i) {
        // Both branches share the generator weights; the injected branch only
        // adds batch_z1 at the split point.
        for (int branch = 0; branch < 2; ++branch) {
            LatentAssignment a{batch_z0[i], {}};
            if (branch == 1) a.injections.emplace_back(inject_layer, batch_z1[i]);

            if (grads == nullptr) {
                const Vec fake = forward(g, a);
                const double logit = d.logit(fake);
                acc.d_loss += 0.5 * softplus(logit);
                acc.g_loss += 0.5 * (saturating ? -softplus(logit) : softplus(-logit));
                continue;
            }

            const ForwardTrace gt = forward_with_grad(g, a);
            const ForwardTrace dt = forward_with_grad(d.net, {gt.output(), {}});
            const double logit = dt.output()(0);
            acc.d_loss += 0.5 * softplus(logit);
            acc.g_loss += 0.5 * (saturating ? -softplus(logit) : softplus(-logit));

            // Discriminator sees the fake at half weight.
            accumulate(*grads, true, dt.pullback(one * (0.5 * sigmoid(logit) / batch_n)));

            // Generator pullback: through the (frozen) discriminator first.
            const double dloss_dlogit = saturating ? -0.5 * sigmoid(logit) / batch_n
                                                   : -0.5 * sigmoid(-logit) / batch_n;
            const Vec input_cot = dt.pullback(one * dloss_dlogit).z0;
            accumulate(*grads, false, gt.pullback(input_cot));
        }
    }

    BatchLosses out;
    out.d_loss = acc.d_loss / batch_n;
    out.g_loss = acc.g_loss / batch_n;
    if (!std::isfinite(out.d_loss) || !std::isfinite(out.g_loss)) {
        throw NumericalError("rtil_loss_terms: non-finite loss");
    }
    return out;
}

// Per-tensor adam/sgd state for a whole model.
class ModelOptimizer {
public:
    ModelOptimizer(OptimizerKind kind, const AdamParams& params, const LayeredGenerator& model)
        : kind_(kind), p_(params) {
        if (kind_ == OptimizerKind::adam) {
            zero_like(model, mw_, mb_);
            zero_like(model, vw_, vb_);
        }
    }

    void apply(LayeredGenerator& model, const std::vector<DenseMatrix>& wg,
               const std::vector<Vec>& bg, double lr) {
        if (kind_ == OptimizerKind::sgd) {
            for (size_t i = 0; i < model.layers.size(); ++i) {
                model.layers[i].weight -= lr * wg[i];
                if (model.layers[i].bias.size() > 0) model.layers[i].bias -= lr * bg[i];
            }
            return;
        }
        ++t_;
        const double c1 = 1.0 - std::pow(p_.beta1, t_);
        const double c2 = 1.0 - std::pow(p_.beta2, t_);
        for (size_t i = 0; i < model.layers.size(); ++i) {
            auto adam_step = [&](auto& param, auto& m, auto& v, const auto& grad) {
                m = p_.beta1 * m + (1.0 - p_.beta1) * grad;
                v = p_.beta2 * v + (1.0 - p_.beta2) * grad.cwiseProduct(grad);
                param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + p_.eps);
            };
            adam_step(model.layers[i].weight, mw_[i], vw_[i], wg[i]);
            if (model.layers[i].bias.size() > 0) {
                adam_step(model.layers[i].bias, mb_[i], vb_[i], bg[i]);
            }
        }
    }

private:
    OptimizerKind kind_;
    AdamParams p_;
    std::vector<DenseMatrix> mw_, vw_;
    std::vector<Vec> mb_, vb_;
    long t_ = 0;
};

DenseMatrix init_weight(Eigen::Index rows, Eigen::Index cols, RandomStream& stream) {
    return gaussian_matrix(rows, cols, stream) / std::sqrt(static_cast<double>(cols));
}

LayeredGenerator build_generator(const TrainConfig& cfg, RandomStream& stream) {
    LayeredGenerator g;
    if (cfg.data.kind == SyntheticKind::linear_teacher) {
        const auto& t = cfg.data.teacher;
        g.layers.push_back(make_linear(init_weight(t.n1, t.n0, stream)));
        g.layers.push_back(make_linear(init_weight(t.nd, t.n1, stream)));
    } else {
        const Eigen::Index h = cfg.gen_hidden;
        const Eigen::Index out = cfg.data.signal_dim();
        g.layers.push_back(make_dense_leakyrelu(init_weight(h, cfg.gen_latent_dim, stream),
                                                Vec::Zero(h)));
        g.layers.push_back(make_dense_leakyrelu(init_weight(h, h, stream), Vec::Zero(h)));
        g.layers.push_back(make_linear(init_weight(out, h, stream)));
    }
    return g;
}

Discriminator build_discriminator(const TrainConfig& cfg, RandomStream& stream) {
    Discriminator d;
    const Eigen::Index in = cfg.data.signal_dim();
    Eigen::Index prev = in;
    for (int i = 0; i < cfg.disc_hidden_layers; ++i) {
        d.net.layers.push_back(make_dense_leakyrelu(
            init_weight(cfg.disc_hidden, prev, stream), Vec::Zero(cfg.disc_hidden)));
        prev = cfg.disc_hidden;
    }
    d.net.layers.push_back(make_linear(init_weight(1, prev, stream)));
    return d;
}

} // namespace

void Discriminator::validate(Eigen::Index input_dim) const {
    net.validate();
    if (net.latent_dim() != input_dim) {
        throw ContractError("discriminator: input dim does not match signals");
    }
    if (net.output_dim() != 1 || net.layers.back().kind != LayerKind::linear) {
        throw ContractError("discriminator: must end in a 1-dim linear logit");
    }
    for (size_t i = 0; i + 1 < net.layers.size(); ++i) {
        if (net.layers[i].kind != LayerKind::dense_leakyrelu) {
            throw ContractError("discriminator: hidden layers must be dense_leakyrelu");
        }
    }
}

void TrainConfig::validate() const {
    if (!(sigma2 > 0.0)) throw ConfigError("train config: sigma2 must be positive");
    if (steps < 0) throw ConfigError("train config: negative step count");
    if (batch < 2) throw ConfigError("train config: batch must be at least 2");
    if (!(lr_g > 0.0 && lr_d > 0.0)) throw ConfigError("train config: learning rates must be positive");
    if (disc_steps_per_gen < 1) throw ConfigError("train config: disc_steps_per_gen must be at least 1");
}

BatchLosses rtil_loss_terms(const Discriminator& d, const LayeredGenerator& g,
                            const std::vector<Vec>& batch_real,
                            const std::vector<Vec>& batch_z0,
                            const std::vector<Vec>& batch_z1, int inject_layer,
                            bool saturating) {
    return loss_pass(d, g, batch_real, batch_z0, batch_z1, nullptr, inject_layer, saturating);
}

BatchLosses rtil_loss_grads(const Discriminator& d, const LayeredGenerator& g,
                            const std::vector<Vec>& batch_real,
                            const std::vector<Vec>& batch_z0,
                            const std::vector<Vec>& batch_z1, GanGrads& grads,
                            int inject_layer, bool saturating) {
    return loss_pass(d, g, batch_real, batch_z0, batch_z1, &grads, inject_layer, saturating);
}

std::vector<Vec> sample_synthetic(const DataSpec& spec, int n, RandomStream& stream) {
    if (n < 1) throw ContractError("sample_synthetic: n must be at least 1");
    std::vector<Vec> out;
    out.reserve(static_cast<size_t>(n));
    if (spec.kind == SyntheticKind::linear_teacher) {
        const auto& t = spec.teacher;
        for (int i = 0; i < n; ++i) {
            const Vec z0 = gaussian_vector(t.n0, stream);
            const Vec z1 = gaussian_vector(t.n1, stream);
            out.push_back(t.w1_star * (t.w0_star * z0 + z1));
        }
        return out;
    }
    // Component means are a pure function of the mixture seed.
    RandomStream mean_stream(spec.mixture_seed);
    std::vector<Vec> means;
    for (int c = 0; c < spec.mixture_components; ++c) {
        means.push_back(gaussian_vector(spec.mixture_dim, mean_stream));
    }
    for (int i = 0; i < n; ++i) {
        const auto c = static_cast<size_t>(stream.next_u64() %
                                           static_cast<std::uint64_t>(spec.mixture_components));
        out.push_back(means[c] + 0.1 * gaussian_vector(spec.mixture_dim, stream));
    }
    return out;
}

TrainOutput train(const TrainConfig& cfg) {
    cfg.validate();
    RandomStream root(cfg.seed);
    RandomStream init_stream = root.child(0);
    RandomStream data_stream = root.child(1);

    TrainOutput out;
    out.gen = build_generator(cfg, init_stream);
    out.disc = build_discriminator(cfg, init_stream);
    out.disc.validate(out.gen.output_dim());
    if (out.gen.output_dim() != cfg.data.signal_dim()) {
        throw ConfigError("train: generator output dim does not match data");
    }
    const Eigen::Index inject_dim =
        out.gen.layers[static_cast<size_t>(cfg.inject_layer)].in_dim();
    const double sigma = std::sqrt(cfg.sigma2);

    ModelOptimizer g_opt(cfg.optimizer, cfg.adam, out.gen);
    ModelOptimizer d_opt(cfg.optimizer, cfg.adam, out.disc.net);

    auto draw_batches = [&](std::vector<Vec>& real, std::vector<Vec>& z0s,
                            std::vector<Vec>& z1s) {
        real = sample_synthetic(cfg.data, cfg.batch, data_stream);
        z0s.clear();
        z1s.clear();
        for (int i = 0; i < cfg.batch; ++i) {
            z0s.push_back(gaussian_vector(out.gen.latent_dim(), data_stream));
            // Paired runs consume identical draw sequences; the base-only
            // pipeline just zeroes the injected latent.
            Vec z1 = sigma * gaussian_vector(inject_dim, data_stream);
            if (!cfg.rtil) z1.setZero();
            z1s.push_back(std::move(z1));
        }
    };

    GanGrads grads;
    std::vector<Vec> real, z0s, z1s;
    for (int step = 0; step < cfg.steps; ++step) {
        double last_d_loss = 0.0;
        try {
            for (int k = 0; k < cfg.disc_steps_per_gen; ++k) {
                draw_batches(real, z0s, z1s);
                const BatchLosses losses = rtil_loss_grads(
                    out.disc, out.gen, real, z0s, z1s, grads, cfg.inject_layer,
                    cfg.saturating_gen_loss);
                d_opt.apply(out.disc.net, grads.d_weights, grads.d_biases, cfg.lr_d);
                last_d_loss = losses.d_loss;
            }
            draw_batches(real, z0s, z1s);
            const BatchLosses losses =
                rtil_loss_grads(out.disc, out.gen, real, z0s, z1s, grads, cfg.inject_layer,
                                cfg.saturating_gen_loss);
            g_opt.apply(out.gen, grads.g_weights, grads.g_biases, cfg.lr_g);
            out.history.push_back({step, last_d_loss, losses.g_loss});
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (training step " +
                                 std::to_string(step) + ")");
        }
    }
    return out;
}

} // namespace rtil
