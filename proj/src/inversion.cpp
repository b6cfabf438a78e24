#include "rtil/inversion.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace rtil {

void InversionConfig::validate() const {
    for (int it : per_layer_iters) {
        if (it < 0) throw ConfigError("inversion config: negative iteration count");
    }
    if (!(lr_init > 0.0)) throw ConfigError("inversion config: lr_init must be positive");
    if (!(warm_frac >= 0.0 && warm_frac < 1.0)) {
        throw ConfigError("inversion config: warm_frac must lie in [0, 1)");
    }
    if (n_codes < 1) throw ConfigError("inversion config: n_codes must be at least 1");
    if (restarts < 1) throw ConfigError("inversion config: restarts must be at least 1");
}

double learning_rate_at(const InversionConfig& cfg, int step, int total_steps) {
    if (cfg.lr_policy == LrPolicy::constant) return cfg.lr_init;
    if (total_steps <= 0) return cfg.lr_init;
    const double t = static_cast<double>(step);
    const double total = static_cast<double>(total_steps);
    const double warm = cfg.warm_frac * total;
    if (warm > 0.0 && t <= warm) {
        return cfg.lr_init * (t / warm);
    }
    return cfg.lr_init * 0.5 * (1.0 + std::cos(std::numbers::pi * (t - warm) / (total - warm)));
}

namespace {

FlatOptimizer make_optimizer(const InversionConfig& cfg, Eigen::Index dim) {
    return FlatOptimizer(cfg.optimizer, {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}, dim);
}

struct StageVars {
    bool z0_active = false;
    std::vector<size_t> active_injections;  // indices into assignment.injections
};

Eigen::Index stage_dim(const LatentAssignment& a, const StageVars& vars) {
    Eigen::Index dim = vars.z0_active ? a.z0.size() : 0;
    for (size_t i : vars.active_injections) dim += a.injections[i].second.size();
    return dim;
}

Vec gather_params(const LatentAssignment& a, const StageVars& vars) {
    Vec p(stage_dim(a, vars));
    Eigen::Index at = 0;
    if (vars.z0_active) {
        p.segment(at, a.z0.size()) = a.z0;
        at += a.z0.size();
    }
    for (size_t i : vars.active_injections) {
        const Vec& v = a.injections[i].second;
        p.segment(at, v.size()) = v;
        at += v.size();
    }
    return p;
}

void scatter_params(const Vec& p, const StageVars& vars, LatentAssignment& a) {
    Eigen::Index at = 0;
    if (vars.z0_active) {
        a.z0 = p.segment(at, a.z0.size());
        at += a.z0.size();
    }
    for (size_t i : vars.active_injections) {
        Vec& v = a.injections[i].second;
        v = p.segment(at, v.size());
        at += v.size();
    }
}

Vec gather_grads(const GeneratorGrads& g, const LatentAssignment& a, const StageVars& vars) {
    Vec out(stage_dim(a, vars));
    Eigen::Index at = 0;
    if (vars.z0_active) {
        out.segment(at, g.z0.size()) = g.z0;
        at += g.z0.size();
    }
    for (size_t i : vars.active_injections) {
        const Vec& v = g.injections[i].second;
        out.segment(at, v.size()) = v;
        at += v.size();
    }
    return out;
}

void check_finite_residual(double res, const char* algo, int stage, int iter) {
    if (!std::isfinite(res)) {
        throw NumericalError(std::string(algo) + ": non-finite loss at stage " +
                             std::to_string(stage) + ", iteration " + std::to_string(iter));
    }
}

// One gradient stage over the active subset of a latent assignment. Appends
// the residual of every new iterate to `history` (and the initial point's if
// the history is still empty).
void run_latent_stage(const LayeredGenerator& g, const MeasurementOperator& op, const Vec& y,
                      const InversionConfig& cfg, int iters, int stage_index,
                      LatentAssignment& a, const StageVars& vars,
                      std::vector<double>& history, const char* algo) {
    ForwardTrace trace = forward_with_grad(g, a);
    Vec r = op.apply(trace.output()) - y;
    double res = r.norm();
    check_finite_residual(res, algo, stage_index, 0);
    if (history.empty()) history.push_back(res);

    FlatOptimizer opt = make_optimizer(cfg, stage_dim(a, vars));
    for (int t = 0; t < iters; ++t) {
        const GeneratorGrads grads = trace.pullback(2.0 * op.adjoint(r));
        Vec params = gather_params(a, vars);
        opt.step(params, gather_grads(grads, a, vars), learning_rate_at(cfg, t, iters));
        scatter_params(params, vars, a);

        trace = forward_with_grad(g, a);
        r = op.apply(trace.output()) - y;
        res = r.norm();
        check_finite_residual(res, algo, stage_index, t + 1);
        history.push_back(res);
    }
}

LatentAssignment init_latent(const LayeredGenerator& g, RandomStream& stream) {
    LatentAssignment a;
    a.z0 = gaussian_vector(g.latent_dim(), stream);
    return a;
}

InversionResult finish_latent(const LayeredGenerator& g, const MeasurementOperator& op,
                              const Vec& y, LatentAssignment a, std::vector<double> history) {
    InversionResult res;
    res.estimate = forward(g, a);
    res.latents = std::move(a);
    res.residual_history = std::move(history);
    res.final_residual = (op.apply(res.estimate) - y).norm();
    return res;
}

} // namespace

InversionResult csgm_invert(const LayeredGenerator& g, const MeasurementOperator& op,
                            const Vec& y, const InversionConfig& cfg) {
    cfg.validate();
    g.validate();
    if (op.input_dim() != g.output_dim() || y.size() != op.output_dim()) {
        throw ContractError("csgm_invert: operator and generator dims disagree");
    }
    const int iters = cfg.per_layer_iters.empty() ? 0 : cfg.per_layer_iters.front();

    InversionResult best;
    bool have_best = false;
    RandomStream root(cfg.seed);
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        RandomStream stream = root.child(static_cast<std::uint64_t>(restart));
        LatentAssignment a = init_latent(g, stream);
        std::vector<double> history;
        StageVars vars;
        vars.z0_active = true;
        run_latent_stage(g, op, y, cfg, iters, 0, a, vars, history, "csgm_invert");
        InversionResult candidate = finish_latent(g, op, y, std::move(a), std::move(history));
        if (!have_best || candidate.final_residual < best.final_residual) {
            best = std::move(candidate);
            have_best = true;
        }
    }
    return best;
}

InversionResult ilo_invert(const LayeredGenerator& g, const MeasurementOperator& op,
                           const Vec& y, const InversionConfig& cfg) {
    cfg.validate();
    g.validate();
    if (op.input_dim() != g.output_dim() || y.size() != op.output_dim()) {
        throw ContractError("ilo_invert: operator and generator dims disagree");
    }
    const int stages = static_cast<int>(cfg.per_layer_iters.size());
    if (stages < 1 || stages > static_cast<int>(g.layers.size())) {
        throw ConfigError("ilo_invert: stage count must be between 1 and the layer count");
    }

    InversionResult best;
    bool have_best = false;
    RandomStream root(cfg.seed);
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        RandomStream stream = root.child(static_cast<std::uint64_t>(restart));
        LatentAssignment a = init_latent(g, stream);
        std::vector<double> history;

        StageVars vars;
        vars.z0_active = true;
        run_latent_stage(g, op, y, cfg, cfg.per_layer_iters[0], 0, a, vars, history,
                         "ilo_invert");

        for (int stage = 1; stage < stages; ++stage) {
            const Eigen::Index dim = g.layers[static_cast<size_t>(stage)].in_dim();
            a.injections.emplace_back(stage, Vec::Zero(dim));
            StageVars sv;
            sv.z0_active = cfg.joint_refine;
            if (cfg.joint_refine) {
                for (size_t i = 0; i < a.injections.size(); ++i) sv.active_injections.push_back(i);
            } else {
                sv.active_injections.push_back(a.injections.size() - 1);
            }
            run_latent_stage(g, op, y, cfg, cfg.per_layer_iters[static_cast<size_t>(stage)],
                             stage, a, sv, history, "ilo_invert");
        }

        InversionResult candidate = finish_latent(g, op, y, std::move(a), std::move(history));
        if (!have_best || candidate.final_residual < best.final_residual) {
            best = std::move(candidate);
            have_best = true;
        }
    }
    return best;
}

namespace {

Eigen::Index multicode_dim(const MultiCodeAssignment& m, bool with_importance) {
    Eigen::Index dim = 0;
    for (const Vec& c : m.codes) dim += c.size();
    if (with_importance) {
        for (const Vec& v : m.importance) dim += v.size();
    }
    return dim;
}

Vec gather_multicode(const MultiCodeAssignment& m, bool with_importance) {
    Vec p(multicode_dim(m, with_importance));
    Eigen::Index at = 0;
    for (const Vec& c : m.codes) {
        p.segment(at, c.size()) = c;
        at += c.size();
    }
    if (with_importance) {
        for (const Vec& v : m.importance) {
            p.segment(at, v.size()) = v;
            at += v.size();
        }
    }
    return p;
}

void scatter_multicode(const Vec& p, bool with_importance, MultiCodeAssignment& m) {
    Eigen::Index at = 0;
    for (Vec& c : m.codes) {
        c = p.segment(at, c.size());
        at += c.size();
    }
    if (with_importance) {
        for (Vec& v : m.importance) {
            v = p.segment(at, v.size());
            at += v.size();
        }
    }
}

Vec gather_multicode_grads(const MultiCodeGrads& g, bool with_importance) {
    Eigen::Index dim = 0;
    for (const Vec& c : g.codes) dim += c.size();
    if (with_importance) {
        for (const Vec& v : g.importance) dim += v.size();
    }
    Vec out(dim);
    Eigen::Index at = 0;
    for (const Vec& c : g.codes) {
        out.segment(at, c.size()) = c;
        at += c.size();
    }
    if (with_importance) {
        for (const Vec& v : g.importance) {
            out.segment(at, v.size()) = v;
            at += v.size();
        }
    }
    return out;
}

} // namespace

InversionResult mgan_invert(const LayeredGenerator& g, const MeasurementOperator& op,
                            const Vec& y, const InversionConfig& cfg) {
    cfg.validate();
    g.validate();
    if (op.input_dim() != g.output_dim() || y.size() != op.output_dim()) {
        throw ContractError("mgan_invert: operator and generator dims disagree");
    }
    if (cfg.split_layer < 1 || cfg.split_layer > static_cast<int>(g.layers.size())) {
        throw ConfigError("mgan_invert: split_layer out of range");
    }
    const Eigen::Index channels =
        g.layers[static_cast<size_t>(cfg.split_layer) - 1].out_dim();
    int iters = 0;
    for (int it : cfg.per_layer_iters) iters += it;

    InversionResult best;
    bool have_best = false;
    RandomStream root(cfg.seed);
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        RandomStream stream = root.child(static_cast<std::uint64_t>(restart));
        MultiCodeAssignment m;
        m.split_layer = cfg.split_layer;
        for (int k = 0; k < cfg.n_codes; ++k) {
            m.codes.push_back(gaussian_vector(g.latent_dim(), stream));
        }
        // Flat-Dirichlet split across codes, constant across channels.
        const Vec alpha_prime = dirichlet_flat(cfg.n_codes, stream);
        for (int k = 0; k < cfg.n_codes; ++k) {
            m.importance.push_back(Vec::Constant(channels, alpha_prime(k)));
        }

        std::vector<double> history;
        MultiCodeTrace trace = forward_multicode_with_grad(g, m);
        Vec r = op.apply(trace.output()) - y;
        double res = r.norm();
        check_finite_residual(res, "mgan_invert", 0, 0);
        history.push_back(res);

        FlatOptimizer opt = make_optimizer(cfg, multicode_dim(m, cfg.optimize_importance));
        for (int t = 0; t < iters; ++t) {
            const MultiCodeGrads grads = trace.pullback(2.0 * op.adjoint(r));
            Vec params = gather_multicode(m, cfg.optimize_importance);
            opt.step(params, gather_multicode_grads(grads, cfg.optimize_importance),
                     learning_rate_at(cfg, t, iters));
            scatter_multicode(params, cfg.optimize_importance, m);

            trace = forward_multicode_with_grad(g, m);
            r = op.apply(trace.output()) - y;
            res = r.norm();
            check_finite_residual(res, "mgan_invert", 0, t + 1);
            history.push_back(res);
        }

        InversionResult candidate;
        candidate.estimate = forward_multicode(g, m);
        candidate.multicode = std::move(m);
        candidate.used_multicode = true;
        candidate.residual_history = std::move(history);
        candidate.final_residual = (op.apply(candidate.estimate) - y).norm();
        if (!have_best || candidate.final_residual < best.final_residual) {
            best = std::move(candidate);
            have_best = true;
        }
    }
    return best;
}

LayeredSolution ilo_linear_closed(const DenseMatrix& w1, const DenseMatrix& w0,
                                  const DenseMatrix& a, const Vec& y) {
    if (a.cols() != w1.rows() || w1.cols() != w0.rows() || y.size() != a.rows()) {
        throw ContractError("ilo_linear_closed: dimension mismatch");
    }
    const DenseMatrix aw1 = a * w1;
    const DenseMatrix aw1w0 = aw1 * w0;
    if (numerical_rank(aw1w0) < w0.cols()) {
        throw SingularError("ilo_linear_closed: A W1 W0 is rank deficient");
    }
    LayeredSolution sol;
    sol.z0 = pinv(aw1w0) * y;
    sol.z1 = pinv(aw1) * (y - aw1w0 * sol.z0);  // min-norm stage-1 solution
    sol.estimate = w1 * (w0 * sol.z0 + sol.z1);
    return sol;
}

LayeredSolution layered_ls_vanilla(const LinearTheoryInstance& inst, const DenseMatrix& a,
                                   const Vec& y) {
    return ilo_linear_closed(train_vanilla_closed_form(inst), inst.w0_star, a, y);
}

LayeredSolution layered_ls_rtil(const LinearTheoryInstance& inst, const DenseMatrix& a,
                                const Vec& y) {
    return ilo_linear_closed(inst.w1_star, inst.w0_star, a, y);
}

} // namespace rtil
