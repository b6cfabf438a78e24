#include "rtil/generators.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace rtil {

namespace {

Vec layer_preact(const Layer& layer, const Vec& x) {
    Vec pre = layer.weight * x;
    if (layer.bias.size() > 0) pre += layer.bias;
    return pre;
}

Vec layer_activate(const Layer& layer, const Vec& pre) {
    if (layer.kind == LayerKind::linear) return pre;
    Vec out = pre;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (out(i) < 0.0) out(i) *= layer.leak;
    }
    return out;
}

// Cotangent through the activation: derivative at 0 is defined as the leak.
Vec activation_backward(const Layer& layer, const Vec& pre, const Vec& cot) {
    if (layer.kind == LayerKind::linear) return cot;
    Vec dpre = cot;
    for (Eigen::Index i = 0; i < dpre.size(); ++i) {
        if (pre(i) <= 0.0) dpre(i) *= layer.leak;
    }
    return dpre;
}

void check_assignment(const LayeredGenerator& g, const LatentAssignment& a) {
    g.validate();
    if (a.z0.size() != g.latent_dim()) {
        throw ContractError("forward: z0 length does not match latent dim");
    }
    std::set<int> seen;
    for (const auto& [idx, v] : a.injections) {
        if (idx < 0 || idx >= static_cast<int>(g.layers.size())) {
            throw ContractError("forward: injection layer index out of range");
        }
        if (!seen.insert(idx).second) {
            throw ContractError("forward: duplicate injection at one layer index");
        }
        if (v.size() != g.layers[static_cast<size_t>(idx)].in_dim()) {
            throw ContractError("forward: injection length does not match layer input dim");
        }
    }
}

void check_multicode(const LayeredGenerator& g, const MultiCodeAssignment& m) {
    g.validate();
    const auto n_layers = static_cast<int>(g.layers.size());
    if (m.codes.empty()) throw ContractError("forward_multicode: needs at least one code");
    if (m.importance.size() != m.codes.size()) {
        throw ContractError("forward_multicode: one importance vector per code required");
    }
    if (m.split_layer < 1 || m.split_layer > n_layers) {
        throw ContractError("forward_multicode: split_layer out of range");
    }
    const Eigen::Index channels = g.layers[static_cast<size_t>(m.split_layer) - 1].out_dim();
    for (size_t k = 0; k < m.codes.size(); ++k) {
        if (m.codes[k].size() != g.latent_dim()) {
            throw ContractError("forward_multicode: code length does not match latent dim");
        }
        if (m.importance[k].size() != channels) {
            throw ContractError("forward_multicode: importance length does not match channels");
        }
        if (!m.importance[k].allFinite()) {
            throw ContractError("forward_multicode: non-finite importance entries");
        }
    }
}

const Vec* injection_at(const std::vector<std::pair<int, Vec>>& injections, int layer) {
    for (const auto& [idx, v] : injections) {
        if (idx == layer) return &v;
    }
    return nullptr;
}

} // namespace

Layer make_linear(DenseMatrix weight) {
    Layer l;
    l.kind = LayerKind::linear;
    l.weight = std::move(weight);
    return l;
}

Layer make_dense_leakyrelu(DenseMatrix weight, Vec bias, double leak) {
    if (!(leak > 0.0 && leak < 1.0)) {
        throw ContractError("make_dense_leakyrelu: leak must lie in (0, 1)");
    }
    Layer l;
    l.kind = LayerKind::dense_leakyrelu;
    l.weight = std::move(weight);
    l.bias = std::move(bias);
    l.leak = leak;
    return l;
}

void LayeredGenerator::validate() const {
    if (layers.empty()) throw ContractError("generator: needs at least one layer");
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].bias.size() > 0 && layers[i].bias.size() != layers[i].out_dim()) {
            throw ContractError("generator: bias length does not match layer output dim");
        }
        if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim()) {
            throw ContractError("generator: adjacent layer dims incompatible");
        }
    }
}

Vec forward(const LayeredGenerator& g, const LatentAssignment& a) {
    check_assignment(g, a);
    Vec x = a.z0;
    for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
        if (const Vec* inj = injection_at(a.injections, i)) x += *inj;
        const Layer& layer = g.layers[static_cast<size_t>(i)];
        x = layer_activate(layer, layer_preact(layer, x));
    }
    return x;
}

Vec forward_multicode(const LayeredGenerator& g, const MultiCodeAssignment& m) {
    check_multicode(g, m);
    const size_t split = static_cast<size_t>(m.split_layer);
    Vec combined;
    for (size_t k = 0; k < m.codes.size(); ++k) {
        Vec h = m.codes[k];
        for (size_t i = 0; i < split; ++i) {
            h = layer_activate(g.layers[i], layer_preact(g.layers[i], h));
        }
        Vec scaled = m.importance[k].cwiseProduct(h);
        if (k == 0) {
            combined = std::move(scaled);
        } else {
            combined += scaled;
        }
    }
    for (size_t i = split; i < g.layers.size(); ++i) {
        combined = layer_activate(g.layers[i], layer_preact(g.layers[i], combined));
    }
    return combined;
}

ForwardTrace forward_with_grad(const LayeredGenerator& g, const LatentAssignment& a) {
    check_assignment(g, a);
    ForwardTrace t;
    t.gen_ = &g;
    t.injections_ = a.injections;
    Vec x = a.z0;
    for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
        if (const Vec* inj = injection_at(a.injections, i)) x += *inj;
        t.inputs_.push_back(x);
        const Layer& layer = g.layers[static_cast<size_t>(i)];
        Vec pre = layer_preact(layer, x);
        x = layer_activate(layer, pre);
        t.preacts_.push_back(std::move(pre));
    }
    t.output_ = std::move(x);
    return t;
}

GeneratorGrads ForwardTrace::pullback(const Vec& output_cotangent) const {
    const LayeredGenerator& g = *gen_;
    if (output_cotangent.size() != output_.size()) {
        throw ContractError("pullback: cotangent length does not match output");
    }
    GeneratorGrads grads;
    grads.weights.resize(g.layers.size());
    grads.biases.resize(g.layers.size());
    grads.injections = injections_;

    Vec cot = output_cotangent;
    for (int i = static_cast<int>(g.layers.size()) - 1; i >= 0; --i) {
        const Layer& layer = g.layers[static_cast<size_t>(i)];
        const Vec dpre = activation_backward(layer, preacts_[static_cast<size_t>(i)], cot);
        grads.weights[static_cast<size_t>(i)] =
            dpre * inputs_[static_cast<size_t>(i)].transpose();
        if (layer.bias.size() > 0) grads.biases[static_cast<size_t>(i)] = dpre;
        cot = layer.weight.transpose() * dpre;
        for (auto& [idx, v] : grads.injections) {
            if (idx == i) v = cot;  // injection adds to this layer's input
        }
    }
    grads.z0 = std::move(cot);
    return grads;
}

MultiCodeTrace forward_multicode_with_grad(const LayeredGenerator& g,
                                           const MultiCodeAssignment& m) {
    check_multicode(g, m);
    MultiCodeTrace t;
    t.gen_ = &g;
    t.assign_ = &m;
    const size_t split = static_cast<size_t>(m.split_layer);

    Vec combined;
    for (size_t k = 0; k < m.codes.size(); ++k) {
        std::vector<Vec> inputs, preacts;
        Vec h = m.codes[k];
        for (size_t i = 0; i < split; ++i) {
            inputs.push_back(h);
            Vec pre = layer_preact(g.layers[i], h);
            h = layer_activate(g.layers[i], pre);
            preacts.push_back(std::move(pre));
        }
        t.head_inputs_.push_back(std::move(inputs));
        t.head_preacts_.push_back(std::move(preacts));
        t.head_outputs_.push_back(h);
        Vec scaled = m.importance[k].cwiseProduct(h);
        if (k == 0) {
            combined = std::move(scaled);
        } else {
            combined += scaled;
        }
    }
    for (size_t i = split; i < g.layers.size(); ++i) {
        t.tail_inputs_.push_back(combined);
        Vec pre = layer_preact(g.layers[i], combined);
        combined = layer_activate(g.layers[i], pre);
        t.tail_preacts_.push_back(std::move(pre));
    }
    t.output_ = std::move(combined);
    return t;
}

MultiCodeGrads MultiCodeTrace::pullback(const Vec& output_cotangent) const {
    const LayeredGenerator& g = *gen_;
    const MultiCodeAssignment& m = *assign_;
    if (output_cotangent.size() != output_.size()) {
        throw ContractError("pullback: cotangent length does not match output");
    }
    const size_t split = static_cast<size_t>(m.split_layer);

    Vec cot = output_cotangent;
    for (int i = static_cast<int>(g.layers.size()) - 1; i >= static_cast<int>(split); --i) {
        const size_t ti = static_cast<size_t>(i) - split;
        const Layer& layer = g.layers[static_cast<size_t>(i)];
        const Vec dpre = activation_backward(layer, tail_preacts_[ti], cot);
        cot = layer.weight.transpose() * dpre;
    }

    MultiCodeGrads grads;
    for (size_t k = 0; k < m.codes.size(); ++k) {
        grads.importance.push_back(cot.cwiseProduct(head_outputs_[k]));
        Vec code_cot = m.importance[k].cwiseProduct(cot);
        for (int i = static_cast<int>(split) - 1; i >= 0; --i) {
            const Layer& layer = g.layers[static_cast<size_t>(i)];
            const Vec dpre = activation_backward(
                layer, head_preacts_[k][static_cast<size_t>(i)], code_cot);
            code_cot = layer.weight.transpose() * dpre;
        }
        grads.codes.push_back(std::move(code_cot));
    }
    return grads;
}

namespace {

nlohmann::json layer_to_json(const Layer& layer) {
    nlohmann::json j;
    j["kind"] = layer.kind == LayerKind::linear ? "linear" : "dense_leakyrelu";
    j["rows"] = layer.weight.rows();
    j["cols"] = layer.weight.cols();
    std::vector<double> w(layer.weight.data(), layer.weight.data() + layer.weight.size());
    j["weight"] = w;
    if (layer.bias.size() > 0) {
        j["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
    } else {
        j["bias"] = nullptr;
    }
    if (layer.kind == LayerKind::dense_leakyrelu) {
        j["leak"] = layer.leak;
    } else {
        j["leak"] = nullptr;
    }
    return j;
}

Layer layer_from_json(const nlohmann::json& j, size_t index) {
    const std::string where = "layers[" + std::to_string(index) + "]";
    const std::string kind = j.at("kind").get<std::string>();
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto w = j.at("weight").get<std::vector<double>>();
    if (rows < 1 || cols < 1) {
        throw ParseError(where + ": non-positive dimensions");
    }
    if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
        throw ParseError(where + ": weight length " + std::to_string(w.size()) +
                         " does not equal rows*cols");
    }
    Layer layer;
    layer.weight = Eigen::Map<const DenseMatrix>(w.data(), rows, cols);
    if (j.contains("bias") && !j.at("bias").is_null()) {
        const auto b = j.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(b.size()) != rows) {
            throw ParseError(where + ": bias length does not equal rows");
        }
        layer.bias = Eigen::Map<const Vec>(b.data(), rows);
    }
    if (kind == "linear") {
        layer.kind = LayerKind::linear;
    } else if (kind == "dense_leakyrelu") {
        layer.kind = LayerKind::dense_leakyrelu;
        if (!j.contains("leak") || j.at("leak").is_null()) {
            throw ParseError(where + ": dense_leakyrelu requires a leak value");
        }
        layer.leak = j.at("leak").get<double>();
        if (!(layer.leak > 0.0 && layer.leak < 1.0)) {
            throw ParseError(where + ": leak must lie in (0, 1)");
        }
    } else {
        throw ParseError(where + ": unknown layer kind '" + kind + "'");
    }
    return layer;
}

} // namespace

void save_model(const LayeredGenerator& g, const std::string& path) {
    g.validate();
    nlohmann::json j;
    j["latent_dim"] = g.latent_dim();
    j["layers"] = nlohmann::json::array();
    for (const Layer& layer : g.layers) j["layers"].push_back(layer_to_json(layer));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("save_model: cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

LayeredGenerator load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("load_model: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_model: " + path + ": " + e.what());
    }
    LayeredGenerator g;
    try {
        const auto latent_dim = j.at("latent_dim").get<Eigen::Index>();
        const auto& layers = j.at("layers");
        if (!layers.is_array() || layers.empty()) {
            throw ParseError("load_model: " + path + ": layers must be a non-empty array");
        }
        for (size_t i = 0; i < layers.size(); ++i) {
            g.layers.push_back(layer_from_json(layers[i], i));
        }
        if (g.latent_dim() != latent_dim) {
            throw ParseError("load_model: " + path +
                             ": latent_dim does not match first layer cols");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_model: " + path + ": " + e.what());
    }
    try {
        g.validate();
    } catch (const ContractError& e) {
        throw ParseError("load_model: " + path + ": " + e.what());
    }
    return g;
}

} // namespace rtil
