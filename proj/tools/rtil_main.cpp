// Experiment runner: lemma verification, paired GAN training, inversion
// sweeps, and single inversions, with deterministic CSV/JSON outputs.
//
// Exit codes: 0 success, 1 check/numerical failure, 2 usage/config error.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtil/gantrain.hpp"
#include "rtil/inversion.hpp"
#include "rtil/theory.hpp"

using nlohmann::json;
using namespace rtil;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::uint64_t default_seed(const CLI::App* cmd, std::uint64_t flag_value) {
    if (cmd->count("--seed") > 0) return flag_value;
    if (const char* env = std::getenv("RTIL_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return flag_value;
}

json vec_to_json(const Vec& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vec vec_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// ---------------------------------------------------------------------------
// inversion config <-> json
// ---------------------------------------------------------------------------

json inversion_config_to_json(const InversionConfig& cfg) {
    json j;
    j["per_layer_iters"] = cfg.per_layer_iters;
    j["lr_init"] = cfg.lr_init;
    j["lr_policy"] = cfg.lr_policy == LrPolicy::constant ? "constant" : "ramp_cosine";
    j["warm_frac"] = cfg.warm_frac;
    j["optimizer"] = cfg.optimizer == OptimizerKind::sgd ? "sgd" : "adam";
    j["adam_beta1"] = cfg.adam_beta1;
    j["adam_beta2"] = cfg.adam_beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["n_codes"] = cfg.n_codes;
    j["split_layer"] = cfg.split_layer;
    j["optimize_importance"] = cfg.optimize_importance;
    j["joint_refine"] = cfg.joint_refine;
    j["restarts"] = cfg.restarts;
    j["seed"] = cfg.seed;
    return j;
}

void inversion_config_from_json(const json& j, InversionConfig& cfg) {
    if (j.contains("per_layer_iters")) {
        cfg.per_layer_iters = j.at("per_layer_iters").get<std::vector<int>>();
    }
    if (j.contains("lr_init")) cfg.lr_init = j.at("lr_init").get<double>();
    if (j.contains("lr_policy")) {
        const auto name = j.at("lr_policy").get<std::string>();
        if (name == "constant") {
            cfg.lr_policy = LrPolicy::constant;
        } else if (name == "ramp_cosine") {
            cfg.lr_policy = LrPolicy::ramp_cosine;
        } else {
            throw ConfigError("inversion.lr_policy: unknown value '" + name + "'");
        }
    }
    if (j.contains("warm_frac")) cfg.warm_frac = j.at("warm_frac").get<double>();
    if (j.contains("optimizer")) {
        const auto name = j.at("optimizer").get<std::string>();
        if (name == "sgd") {
            cfg.optimizer = OptimizerKind::sgd;
        } else if (name == "adam") {
            cfg.optimizer = OptimizerKind::adam;
        } else {
            throw ConfigError("inversion.optimizer: unknown value '" + name + "'");
        }
    }
    if (j.contains("adam_beta1")) cfg.adam_beta1 = j.at("adam_beta1").get<double>();
    if (j.contains("adam_beta2")) cfg.adam_beta2 = j.at("adam_beta2").get<double>();
    if (j.contains("adam_eps")) cfg.adam_eps = j.at("adam_eps").get<double>();
    if (j.contains("n_codes")) cfg.n_codes = j.at("n_codes").get<int>();
    if (j.contains("split_layer")) cfg.split_layer = j.at("split_layer").get<int>();
    if (j.contains("optimize_importance")) {
        cfg.optimize_importance = j.at("optimize_importance").get<bool>();
    }
    if (j.contains("joint_refine")) cfg.joint_refine = j.at("joint_refine").get<bool>();
    if (j.contains("restarts")) cfg.restarts = j.at("restarts").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyArgs {
    Eigen::Index n0 = 4, n1 = 8, nd = 32, m = 16;
    std::uint64_t seed = 1;
    int instances = 10;
    Eigen::Index mc_samples = 100000;
    std::string out_path;
};

int run_verify(const VerifyArgs& args) {
    if (!(args.n0 >= 1 && args.n0 < args.n1 && args.n1 < args.nd)) {
        std::cerr << "verify: need 1 <= n0 < n1 < nd\n";
        return kExitUsage;
    }
    if (args.m < 1 || args.m >= args.nd) {
        std::cerr << "verify: need 1 <= m < nd\n";
        return kExitUsage;
    }
    if (args.instances < 1) {
        std::cerr << "verify: need at least one instance\n";
        return kExitUsage;
    }

    json config;
    config["n0"] = args.n0;
    config["n1"] = args.n1;
    config["nd"] = args.nd;
    config["m"] = args.m;
    config["seed"] = args.seed;
    config["instances"] = args.instances;
    config["mc_samples"] = args.mc_samples;
    std::cout << "config: " << config.dump() << "\n";
    if (args.m < args.n1) {
        std::cout << "warning: m < n1 is outside the lemma regime; "
                     "zero-error checks are skipped\n";
    }

    TheoryReportOptions opts;
    opts.mc_error_samples = args.mc_samples;
    std::vector<TheoryReport> reports;
    std::vector<std::string> failures;
    for (int i = 0; i < args.instances; ++i) {
        const std::uint64_t inst_seed = args.seed + static_cast<std::uint64_t>(i);
        const LinearTheoryInstance inst =
            make_instance(args.n0, args.n1, args.nd, inst_seed);
        RandomStream a_stream = RandomStream(inst_seed).child(0xAAu);
        const DenseMatrix a = gaussian_matrix(args.m, args.nd, a_stream);
        reports.push_back(make_theory_report(inst, a, opts));
        for (const auto& [name, ok] : reports.back().verdicts) {
            if (!ok) failures.push_back("seed " + std::to_string(inst_seed) + ": " + name);
        }
    }

    std::cout << format_report_table(reports);
    if (failures.empty()) {
        std::cout << "verify: all checks passed (" << reports.size() << " instances)\n";
    } else {
        std::cout << "verify: FAILED checks:\n";
        for (const std::string& f : failures) std::cout << "  " << f << "\n";
    }

    if (!args.out_path.empty()) {
        json out;
        out["schema"] = 1;
        out["config"] = config;
        out["reports"] = json::array();
        for (const TheoryReport& r : reports) {
            json jr;
            jr["seed"] = r.seed;
            jr["m"] = r.m;
            jr["lemma_regime"] = r.lemma_regime;
            jr["vanilla_err_closed"] = r.vanilla_err_closed;
            jr["vanilla_err_mc"] = r.vanilla_err_mc;
            jr["vanilla_err_mc_stderr"] = r.vanilla_err_mc_stderr;
            jr["bound_err1"] = r.bound_err1;
            jr["rtil_err_closed"] = r.rtil_err_closed;
            jr["rtil_err_mc"] = r.rtil_err_mc;
            jr["rtil_err_mc_stderr"] = r.rtil_err_mc_stderr;
            jr["rtil_err_mc_max"] = r.rtil_err_mc_max;
            json verdicts;
            for (const auto& [name, ok] : r.verdicts) verdicts[name] = ok;
            jr["verdicts"] = verdicts;
            out["reports"].push_back(jr);
        }
        out["passed"] = failures.empty();
        std::ofstream f(args.out_path, std::ios::binary);
        if (!f) {
            std::cerr << "verify: cannot write " << args.out_path << "\n";
            return kExitUsage;
        }
        f << out.dump(2) << '\n';
    }
    return failures.empty() ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string config_path;
    std::string out_path;
    int jobs = 1;
    bool wall_clock = false;
};

struct SweepConfig {
    std::uint64_t seed = 1;
    int trials = 3;
    std::vector<double> ratios = {0.25, 0.5, 1.0};
    std::vector<std::string> algos = {"csgm", "ilo"};
    std::string operator_kind = "cs";
    std::optional<std::string> model_path;
    Eigen::Index n0 = 4, n1 = 8, nd = 32;
    std::uint64_t teacher_seed = 7;
    InversionConfig inversion;

    // Canonical form: loading the resolved config again yields the same
    // resolved config, so outputs embed their own reproduction recipe.
    json resolved() const {
        json j;
        j["seed"] = seed;
        j["trials"] = trials;
        j["ratios"] = ratios;
        j["algos"] = algos;
        j["operator"] = operator_kind;
        if (model_path) {
            j["model"] = *model_path;
        } else {
            j["teacher"] = {{"n0", n0}, {"n1", n1}, {"nd", nd}, {"seed", teacher_seed}};
        }
        j["inversion"] = inversion_config_to_json(inversion);
        return j;
    }
};

SweepConfig load_sweep_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("sweep: cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("sweep config " + path + ": " + e.what());
    }
    SweepConfig cfg;
    try {
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("trials")) cfg.trials = j.at("trials").get<int>();
        if (j.contains("ratios")) cfg.ratios = j.at("ratios").get<std::vector<double>>();
        if (j.contains("algos")) {
            cfg.algos = j.at("algos").get<std::vector<std::string>>();
        }
        if (j.contains("operator")) cfg.operator_kind = j.at("operator").get<std::string>();
        if (j.contains("model")) cfg.model_path = j.at("model").get<std::string>();
        if (j.contains("teacher")) {
            const json& t = j.at("teacher");
            cfg.n0 = t.at("n0").get<Eigen::Index>();
            cfg.n1 = t.at("n1").get<Eigen::Index>();
            cfg.nd = t.at("nd").get<Eigen::Index>();
            cfg.teacher_seed = t.at("seed").get<std::uint64_t>();
        }
        cfg.inversion.per_layer_iters = {200, 100};
        if (j.contains("inversion")) inversion_config_from_json(j.at("inversion"), cfg.inversion);
    } catch (const json::exception& e) {
        throw ConfigError("sweep config " + path + ": " + e.what());
    }
    if (cfg.trials < 0) throw ConfigError("sweep config: trials must be non-negative");
    for (const std::string& algo : cfg.algos) {
        if (algo != "csgm" && algo != "ilo" && algo != "mgan") {
            throw ConfigError("sweep config: unknown algorithm '" + algo + "'");
        }
    }
    return cfg;
}

struct SweepRow {
    std::string algo;
    double ratio = 0.0;
    int trial = 0;
    double residual = 0.0;
    double psnr_db = 0.0;
    double wall_ms = 0.0;
};

int run_sweep(const SweepArgs& args) {
    SweepConfig cfg = load_sweep_config(args.config_path);

    LayeredGenerator model;
    bool teacher_signals = true;
    LinearTheoryInstance teacher;
    if (cfg.model_path) {
        if (!std::filesystem::exists(*cfg.model_path)) {
            std::cerr << "sweep: missing model file '" << *cfg.model_path << "'\n";
            return kExitUsage;
        }
        model = load_model(*cfg.model_path);
        teacher_signals = false;
    } else {
        teacher = make_instance(cfg.n0, cfg.n1, cfg.nd, cfg.teacher_seed);
        model.layers.push_back(make_linear(teacher.w0_star));
        model.layers.push_back(make_linear(teacher.w1_star));
    }
    const Eigen::Index nd = model.output_dim();

    struct Cell {
        size_t algo;
        size_t ratio;
        int trial;
    };
    std::vector<Cell> cells;
    for (size_t ai = 0; ai < cfg.algos.size(); ++ai) {
        for (size_t ri = 0; ri < cfg.ratios.size(); ++ri) {
            for (int t = 0; t < cfg.trials; ++t) cells.push_back({ai, ri, t});
        }
    }
    std::vector<SweepRow> rows(cells.size());

    RandomStream root(cfg.seed);
    const auto run_cell = [&](size_t idx) {
        const Cell& cell = cells[idx];
        const std::string& algo = cfg.algos[cell.algo];
        const double ratio = cfg.ratios[cell.ratio];

        // Operator and signal depend on (ratio, trial) only, so algorithms
        // compare on identical problems.
        RandomStream data_stream = root.child(1000 * cell.ratio + static_cast<size_t>(cell.trial));
        const Eigen::Index factor =
            std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(1.0 / ratio)));
        const MeasurementOperator op =
            make_operator(cfg.operator_kind, nd, ratio, factor, data_stream);

        Vec x_star;
        if (teacher_signals) {
            const Vec z0 = gaussian_vector(teacher.n0, data_stream);
            const Vec z1 = gaussian_vector(teacher.n1, data_stream);
            x_star = teacher.w1_star * (teacher.w0_star * z0 + z1);
        } else {
            x_star = forward(model, {gaussian_vector(model.latent_dim(), data_stream), {}});
        }
        const Vec y = op.apply(x_star);

        InversionConfig inv = cfg.inversion;
        // Same inversion seed for every algorithm in a (ratio, trial) cell,
        // so initializations pair up across algorithms.
        inv.seed = cfg.seed ^ (0x5EEDull + 7919ull * (1000ull * cell.ratio +
                                                      static_cast<std::uint64_t>(cell.trial)));

        const auto t0 = std::chrono::steady_clock::now();
        InversionResult res;
        if (algo == "csgm") {
            res = csgm_invert(model, op, y, inv);
        } else if (algo == "ilo") {
            InversionConfig staged = inv;
            const size_t max_stages = model.layers.size();
            if (staged.per_layer_iters.size() > max_stages) {
                staged.per_layer_iters.resize(max_stages);
            }
            res = ilo_invert(model, op, y, staged);
        } else {
            res = mgan_invert(model, op, y, inv);
        }
        const auto t1 = std::chrono::steady_clock::now();

        SweepRow& row = rows[idx];
        row.algo = algo;
        row.ratio = ratio;
        row.trial = cell.trial;
        row.residual = res.final_residual;
        const double peak = std::max(x_star.cwiseAbs().maxCoeff(), 1e-12);
        row.psnr_db = psnr(x_star, res.estimate, peak);
        row.wall_ms =
            args.wall_clock
                ? std::chrono::duration<double, std::milli>(t1 - t0).count()
                : 0.0;
    };

    const int jobs = std::max(1, args.jobs);
    if (jobs == 1) {
        for (size_t i = 0; i < cells.size(); ++i) run_cell(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) {
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
                    run_cell(i);
                }
            });
        }
        for (std::thread& th : pool) th.join();
    }

    std::ostringstream csv;
    csv << "# schema,1\n# config," << cfg.resolved().dump() << "\n";
    csv << "algo,ratio,trial,residual,psnr,wall_ms\n";
    for (const SweepRow& row : rows) {
        csv << row.algo << ',' << format_double(row.ratio) << ',' << row.trial << ','
            << format_double(row.residual) << ',' << format_double(row.psnr_db) << ','
            << format_double(row.wall_ms) << '\n';
    }

    if (args.out_path.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream out(args.out_path, std::ios::binary);
        if (!out) {
            std::cerr << "sweep: cannot write " << args.out_path << "\n";
            return kExitUsage;
        }
        out << csv.str();
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    std::string out_prefix = "trained";
};

TrainConfig load_train_config(const std::string& path, json& raw) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("train: cannot open config '" + path + "'");
    try {
        raw = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("train config " + path + ": " + e.what());
    }
    TrainConfig cfg;
    try {
        if (raw.contains("sigma2")) cfg.sigma2 = raw.at("sigma2").get<double>();
        if (raw.contains("steps")) cfg.steps = raw.at("steps").get<int>();
        if (raw.contains("batch")) cfg.batch = raw.at("batch").get<int>();
        if (raw.contains("lr_g")) cfg.lr_g = raw.at("lr_g").get<double>();
        if (raw.contains("lr_d")) cfg.lr_d = raw.at("lr_d").get<double>();
        if (raw.contains("disc_steps_per_gen")) {
            cfg.disc_steps_per_gen = raw.at("disc_steps_per_gen").get<int>();
        }
        if (raw.contains("seed")) cfg.seed = raw.at("seed").get<std::uint64_t>();
        if (raw.contains("saturating_gen_loss")) {
            cfg.saturating_gen_loss = raw.at("saturating_gen_loss").get<bool>();
        }
        if (raw.contains("optimizer")) {
            const auto name = raw.at("optimizer").get<std::string>();
            if (name == "sgd") {
                cfg.optimizer = OptimizerKind::sgd;
            } else if (name == "adam") {
                cfg.optimizer = OptimizerKind::adam;
            } else {
                throw ConfigError("train config: optimizer: unknown value '" + name + "'");
            }
        }
        if (raw.contains("inject_layer")) cfg.inject_layer = raw.at("inject_layer").get<int>();
        if (raw.contains("disc_hidden")) cfg.disc_hidden = raw.at("disc_hidden").get<int>();
        if (raw.contains("disc_hidden_layers")) {
            cfg.disc_hidden_layers = raw.at("disc_hidden_layers").get<int>();
        }
        const json& data = raw.at("data");
        const auto kind = data.at("kind").get<std::string>();
        if (kind == "linear_teacher") {
            cfg.data.kind = SyntheticKind::linear_teacher;
            cfg.data.teacher = make_instance(data.at("n0").get<Eigen::Index>(),
                                             data.at("n1").get<Eigen::Index>(),
                                             data.at("nd").get<Eigen::Index>(),
                                             data.at("seed").get<std::uint64_t>());
        } else if (kind == "gaussian_mixture") {
            cfg.data.kind = SyntheticKind::gaussian_mixture;
            cfg.data.mixture_components = data.at("k").get<int>();
            cfg.data.mixture_dim = data.at("dim").get<Eigen::Index>();
            cfg.data.mixture_seed = data.at("seed").get<std::uint64_t>();
            if (data.contains("gen_latent_dim")) {
                cfg.gen_latent_dim = data.at("gen_latent_dim").get<Eigen::Index>();
            }
        } else {
            throw ConfigError("train config: data.kind: unknown value '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError("train config " + path + ": " + e.what());
    }
    return cfg;
}

void write_loss_csv(const std::string& path, const json& config,
                    const std::vector<LossRecord>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("train: cannot write " + path);
    out << "# config," << config.dump() << "\n";
    out << "step,d_loss,g_loss\n";
    for (const LossRecord& rec : history) {
        out << rec.step << ',' << format_double(rec.d_loss) << ','
            << format_double(rec.g_loss) << '\n';
    }
}

json train_config_to_json(const TrainConfig& cfg, const json& data_spec) {
    json j;
    j["sigma2"] = cfg.sigma2;
    j["steps"] = cfg.steps;
    j["batch"] = cfg.batch;
    j["lr_g"] = cfg.lr_g;
    j["lr_d"] = cfg.lr_d;
    j["disc_steps_per_gen"] = cfg.disc_steps_per_gen;
    j["seed"] = cfg.seed;
    j["saturating_gen_loss"] = cfg.saturating_gen_loss;
    j["optimizer"] = cfg.optimizer == OptimizerKind::sgd ? "sgd" : "adam";
    j["inject_layer"] = cfg.inject_layer;
    j["disc_hidden"] = cfg.disc_hidden;
    j["disc_hidden_layers"] = cfg.disc_hidden_layers;
    j["data"] = data_spec;
    return j;
}

int run_train(const TrainArgs& args) {
    json raw;
    TrainConfig base = load_train_config(args.config_path, raw);

    TrainConfig rtil_cfg = base;
    rtil_cfg.rtil = true;
    TrainConfig van_cfg = base;
    van_cfg.rtil = false;

    const TrainOutput rt = train(rtil_cfg);
    const TrainOutput van = train(van_cfg);

    json rt_meta = train_config_to_json(base, raw.at("data"));
    rt_meta["pipeline"] = "rtil";
    json van_meta = rt_meta;
    van_meta["pipeline"] = "vanilla";

    save_model(rt.gen, args.out_prefix + "_rtil.json");
    save_model(van.gen, args.out_prefix + "_vanilla.json");
    write_loss_csv(args.out_prefix + "_rtil_loss.csv", rt_meta, rt.history);
    write_loss_csv(args.out_prefix + "_vanilla_loss.csv", van_meta, van.history);
    std::cout << "train: wrote " << args.out_prefix << "_{rtil,vanilla}.json and loss CSVs\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// invert
// ---------------------------------------------------------------------------

struct InvertArgs {
    std::string model_path;
    std::string teacher_spec;  // "n0,n1,nd,seed" builds the ground-truth model
    std::string signal_path;
    bool teacher_draw = false;
    std::string algo = "ilo";
    std::string op_kind = "cs";
    double ratio = 0.5;
    Eigen::Index factor = 2;
    std::uint64_t op_seed = 1;
    std::string iters;
    double lr = 0.0;
    std::string optimizer;
    int codes = 0;
    int restarts = 0;
    std::uint64_t seed = 0;
    std::string out_path = "inversion.json";
};

std::vector<long long> parse_int_list(const std::string& text) {
    std::vector<long long> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(std::stoll(item));
    }
    return out;
}

int run_invert(const InvertArgs& args) {
    if (args.algo != "csgm" && args.algo != "ilo" && args.algo != "mgan") {
        std::cerr << "invert: unknown algorithm '" << args.algo << "'\n";
        return kExitUsage;
    }

    // A teacher spec may accompany --model: it then only sources signals.
    std::optional<LinearTheoryInstance> teacher;
    if (!args.teacher_spec.empty()) {
        const auto vals = parse_int_list(args.teacher_spec);
        if (vals.size() != 4) {
            std::cerr << "invert: --teacher expects n0,n1,nd,seed\n";
            return kExitUsage;
        }
        teacher = make_instance(vals[0], vals[1], vals[2],
                                static_cast<std::uint64_t>(vals[3]));
    }

    LayeredGenerator model;
    if (!args.model_path.empty()) {
        if (!std::filesystem::exists(args.model_path)) {
            std::cerr << "invert: missing model file '" << args.model_path << "'\n";
            return kExitUsage;
        }
        model = load_model(args.model_path);
    } else if (teacher) {
        model.layers.push_back(make_linear(teacher->w0_star));
        model.layers.push_back(make_linear(teacher->w1_star));
    } else {
        std::cerr << "invert: need --model or --teacher\n";
        return kExitUsage;
    }

    RandomStream op_stream(args.op_seed);
    const MeasurementOperator op =
        make_operator(args.op_kind, model.output_dim(), args.ratio, args.factor, op_stream);

    Vec x_star;
    if (!args.signal_path.empty()) {
        std::ifstream in(args.signal_path, std::ios::binary);
        if (!in) {
            std::cerr << "invert: missing signal file '" << args.signal_path << "'\n";
            return kExitUsage;
        }
        try {
            x_star = vec_from_json(json::parse(in));
        } catch (const json::exception& e) {
            std::cerr << "invert: signal file: " << e.what() << "\n";
            return kExitUsage;
        }
        if (x_star.size() != model.output_dim()) {
            std::cerr << "invert: signal length does not match the model output\n";
            return kExitUsage;
        }
    } else if (args.teacher_draw && teacher) {
        if (teacher->nd != model.output_dim()) {
            std::cerr << "invert: teacher nd does not match the model output dim\n";
            return kExitUsage;
        }
        RandomStream s = RandomStream(args.seed).child(0x515Eu);
        const Vec z0 = gaussian_vector(teacher->n0, s);
        const Vec z1 = gaussian_vector(teacher->n1, s);
        x_star = teacher->w1_star * (teacher->w0_star * z0 + z1);
    } else {
        std::cerr << "invert: need --signal or --teacher-draw with --teacher\n";
        return kExitUsage;
    }
    const Vec y = op.apply(x_star);

    InversionConfig cfg;
    cfg.per_layer_iters = {200, 100};
    if (!args.iters.empty()) {
        cfg.per_layer_iters.clear();
        for (long long v : parse_int_list(args.iters)) {
            cfg.per_layer_iters.push_back(static_cast<int>(v));
        }
    }
    if (args.lr > 0.0) cfg.lr_init = args.lr;
    if (!args.optimizer.empty()) {
        if (args.optimizer == "sgd") {
            cfg.optimizer = OptimizerKind::sgd;
        } else if (args.optimizer == "adam") {
            cfg.optimizer = OptimizerKind::adam;
        } else {
            std::cerr << "invert: unknown optimizer '" << args.optimizer << "'\n";
            return kExitUsage;
        }
    }
    if (args.codes > 0) cfg.n_codes = args.codes;
    if (args.restarts > 0) cfg.restarts = args.restarts;
    cfg.seed = args.seed;

    InversionResult res;
    if (args.algo == "csgm") {
        res = csgm_invert(model, op, y, cfg);
    } else if (args.algo == "ilo") {
        if (cfg.per_layer_iters.size() > model.layers.size()) {
            cfg.per_layer_iters.resize(model.layers.size());
        }
        res = ilo_invert(model, op, y, cfg);
    } else {
        res = mgan_invert(model, op, y, cfg);
    }

    json out;
    out["schema"] = 1;
    out["algo"] = args.algo;
    out["config"] = inversion_config_to_json(cfg);
    out["operator"] = {{"kind", args.op_kind},
                       {"ratio", args.ratio},
                       {"factor", args.factor},
                       {"seed", args.op_seed}};
    out["estimate"] = vec_to_json(res.estimate);
    out["final_residual"] = res.final_residual;
    out["residual_history"] = res.residual_history;
    out["true_error"] = (res.estimate - x_star).norm();
    if (res.used_multicode) {
        json codes = json::array(), importance = json::array();
        for (const Vec& c : res.multicode.codes) codes.push_back(vec_to_json(c));
        for (const Vec& a : res.multicode.importance) importance.push_back(vec_to_json(a));
        out["latents"] = {{"codes", codes},
                          {"importance", importance},
                          {"split_layer", res.multicode.split_layer}};
    } else {
        json injections = json::array();
        for (const auto& [idx, v] : res.latents.injections) {
            injections.push_back({{"layer", idx}, {"value", vec_to_json(v)}});
        }
        out["latents"] = {{"z0", vec_to_json(res.latents.z0)}, {"injections", injections}};
    }

    std::ofstream f(args.out_path, std::ios::binary);
    if (!f) {
        std::cerr << "invert: cannot write " << args.out_path << "\n";
        return kExitUsage;
    }
    f << out.dump(2) << '\n';
    std::cout << "invert: final residual " << format_double(res.final_residual) << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"layered generative prior laboratory"};
    app.require_subcommand(1);

    VerifyArgs verify_args;
    CLI::App* verify = app.add_subcommand("verify", "run the linear-theory check suite");
    verify->add_option("--n0", verify_args.n0);
    verify->add_option("--n1", verify_args.n1);
    verify->add_option("--nd", verify_args.nd);
    verify->add_option("--m", verify_args.m);
    verify->add_option("--seed", verify_args.seed);
    verify->add_option("--instances", verify_args.instances);
    verify->add_option("--mc-samples", verify_args.mc_samples);
    verify->add_option("--out", verify_args.out_path);

    SweepArgs sweep_args;
    CLI::App* sweep = app.add_subcommand("sweep", "inversion sweep over undersampling ratios");
    sweep->add_option("--config", sweep_args.config_path)->required();
    sweep->add_option("--out", sweep_args.out_path);
    sweep->add_option("--jobs", sweep_args.jobs);
    sweep->add_flag("--wall-clock", sweep_args.wall_clock,
                    "report real wall time (breaks byte determinism)");

    TrainArgs train_args;
    CLI::App* tr = app.add_subcommand("train", "paired vanilla/regularized GAN training");
    tr->add_option("--config", train_args.config_path)->required();
    tr->add_option("--out-prefix", train_args.out_prefix);

    InvertArgs invert_args;
    CLI::App* inv = app.add_subcommand("invert", "invert one signal");
    inv->add_option("--model", invert_args.model_path);
    inv->add_option("--teacher", invert_args.teacher_spec);
    inv->add_option("--signal", invert_args.signal_path);
    inv->add_flag("--teacher-draw", invert_args.teacher_draw);
    inv->add_option("--algo", invert_args.algo);
    inv->add_option("--op", invert_args.op_kind);
    inv->add_option("--ratio", invert_args.ratio);
    inv->add_option("--factor", invert_args.factor);
    inv->add_option("--op-seed", invert_args.op_seed);
    inv->add_option("--iters", invert_args.iters);
    inv->add_option("--lr", invert_args.lr);
    inv->add_option("--optimizer", invert_args.optimizer);
    inv->add_option("--codes", invert_args.codes);
    inv->add_option("--restarts", invert_args.restarts);
    inv->add_option("--seed", invert_args.seed);
    inv->add_option("--out", invert_args.out_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (verify->parsed()) {
            verify_args.seed = default_seed(verify, verify_args.seed);
            return run_verify(verify_args);
        }
        if (sweep->parsed()) return run_sweep(sweep_args);
        if (tr->parsed()) return run_train(train_args);
        if (inv->parsed()) {
            invert_args.seed = default_seed(inv, invert_args.seed);
            return run_invert(invert_args);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ContractError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitCheckFailed;
    }
    return kExitUsage;
}
