#include "stgno/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "stgno/errors.hpp"
#include "stgno/util.hpp"

namespace stgno {

namespace {

struct KindName {
    ModelKind kind;
    const char* name;
};

constexpr KindName kKindNames[] = {
    {ModelKind::lr, "LR"},
    {ModelKind::fcn, "FCN"},
    {ModelKind::gcn, "GCN"},
    {ModelKind::spatial_kernel, "SpatialKernel"},
    {ModelKind::spatial_gcn, "SpatialGCN"},
    {ModelKind::graphpde, "GraphPDE"},
};

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i); }

// declaration order matters, init draws follow it
struct ParamSpec {
    std::string name;
    std::size_t rows;
    std::size_t cols;
};

void push_linear(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t in, std::size_t outw) {
    out.push_back({prefix + ".weight", in, outw});
    out.push_back({prefix + ".bias", 1, outw});
}

std::vector<std::size_t> kernel_widths(const ModelConfig& c) {
    std::vector<std::size_t> w{kEdgeAttrDim};
    w.insert(w.end(), c.kernel_net_hidden.begin(), c.kernel_net_hidden.end());
    w.push_back(c.hidden_dim * c.hidden_dim);
    return w;
}

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
    std::vector<ParamSpec> specs;
    const std::size_t d = c.model_input_dim();
    const std::size_t h = c.hidden_dim;
    switch (c.kind) {
        case ModelKind::lr:
            push_linear(specs, "readout", d, c.num_classes);
            break;
        case ModelKind::fcn:
        case ModelKind::gcn:
        case ModelKind::spatial_kernel:
        case ModelKind::spatial_gcn:
            for (std::size_t i = 0; i < c.num_layers; ++i) push_linear(specs, layer_prefix(i), i == 0 ? d : h, h);
            push_linear(specs, "readout", h, c.num_classes);
            break;
        case ModelKind::graphpde: {
            push_linear(specs, "lift", d, h);
            const auto widths = kernel_widths(c);
            for (std::size_t i = 0; i < c.num_layers; ++i) {
                push_linear(specs, layer_prefix(i), h, h);
                for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
                    push_linear(specs, layer_prefix(i) + ".kernel" + std::to_string(k), widths[k], widths[k + 1]);
                }
            }
            push_linear(specs, "readout", h, c.num_classes);
            break;
        }
    }
    return specs;
}

}  // namespace

std::string to_string(ModelKind kind) {
    for (const auto& kn : kKindNames)
        if (kn.kind == kind) return kn.name;
    return "?";
}

const std::vector<std::string>& model_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& kn : kKindNames) v.emplace_back(kn.name);
        return v;
    }();
    return names;
}

ModelKind model_kind_from_string(const std::string& name) {
    for (const auto& kn : kKindNames)
        if (lower(kn.name) == lower(name)) return kn.kind;
    std::string valid;
    for (const auto& n : model_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ParameterError("unknown model '" + name + "'; valid models: " + valid);
}

bool uses_graph(ModelKind kind) { return kind != ModelKind::lr && kind != ModelKind::fcn; }

void ModelConfig::validate() const {
    if (input_dim == 0) throw ParameterError("model input_dim must be positive");
    if (hidden_dim == 0) throw ParameterError("hidden_dim must be at least 1");
    if (num_classes < 2) throw ParameterError("num_classes must be at least 2");
    if (kind != ModelKind::lr && num_layers == 0) throw ParameterError("num_layers must be at least 1");
    if (kind == ModelKind::graphpde) {
        for (std::size_t w : kernel_net_hidden)
            if (w == 0) throw ParameterError("kernel network widths must be positive");
        if (!(edge_attr_scale > 0.0)) throw ParameterError("edge_attr_scale must be positive");
    }
    if (use_positions && !(position_scale > 0.0)) throw ParameterError("position_scale must be positive");
    if (use_positions && !(position_gain > 0.0)) throw ParameterError("position_gain must be positive");
    if (bandwidth < 0.0) throw ParameterError("bandwidth must be non-negative");
}

ModelConfig default_model_config(ModelKind kind, std::size_t input_dim) {
    ModelConfig c;
    c.kind = kind;
    c.input_dim = input_dim;
    c.num_layers = kind == ModelKind::graphpde ? 6 : (kind == ModelKind::lr ? 0 : 2);
    c.use_positions = uses_graph(kind);
    return c;
}

std::size_t expected_param_count(const ModelConfig& c) {
    const std::size_t d = c.model_input_dim();
    const std::size_t h = c.hidden_dim;
    const std::size_t k = c.num_classes;
    switch (c.kind) {
        case ModelKind::lr:
            return d * k + k;
        case ModelKind::fcn:
        case ModelKind::gcn:
        case ModelKind::spatial_kernel:
        case ModelKind::spatial_gcn:
            return (d * h + h) + (c.num_layers - 1) * (h * h + h) + (h * k + k);
        case ModelKind::graphpde: {
            std::size_t kappa = 0;
            const auto w = kernel_widths(c);
            for (std::size_t i = 0; i + 1 < w.size(); ++i) kappa += w[i] * w[i + 1] + w[i + 1];
            return (d * h + h) + c.num_layers * (h * h + h + kappa) + (h * k + k);
        }
    }
    return 0;
}

ParameterSet init_params(const ModelConfig& config) {
    config.validate();
    ParameterSet params;
    Rng rng(derive_seed(config.init_seed, 0x1417));
    for (const auto& spec : param_specs(config)) {
        DenseMatrix value(spec.rows, spec.cols);
        if (spec.name.ends_with(".weight")) {
            const double bound = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
            for (double& v : value.data()) v = rng.uniform(-bound, bound);
        }
        params.add(spec.name, std::move(value));
    }
    return params;
}

Var BoundParams::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = mutable_ != nullptr ? tape_.parameter(mutable_->at(name)) : tape_.constant(params_->at(name).value);
    bound_.emplace(name, v);
    return v;
}

GraphContext make_context(const ModelConfig& config, const GraphSample& sample) {
    GraphContext ctx;
    const std::size_t n = sample.num_nodes();
    ctx.num_nodes = n;
    if (sample.features.cols() != config.input_dim) {
        throw DimensionError("model expects " + std::to_string(config.input_dim) + " input features, sample '" +
                             sample.sample_id + "' has " + std::to_string(sample.features.cols()));
    }
    const bool spatial = config.kind == ModelKind::spatial_kernel || config.kind == ModelKind::spatial_gcn;
    if ((config.use_positions || spatial) && sample.positions.size() != n) {
        throw ContractError("sample '" + sample.sample_id + "' is missing node positions");
    }

    ctx.input = DenseMatrix(n, config.model_input_dim());
    for (std::size_t i = 0; i < n; ++i) {
        auto row = ctx.input.row(i);
        std::copy_n(sample.features.row(i).begin(), config.input_dim, row.begin());
        if (config.use_positions) {
            row[config.input_dim] = (sample.positions.x(i) - config.position_center[0]) / config.position_scale;
            row[config.input_dim + 1] = (sample.positions.y(i) - config.position_center[1]) / config.position_scale;
        }
    }
    if (!uses_graph(config.kind)) return ctx;
    if (sample.graph.num_nodes != n) throw DimensionError("graph node count does not match sample");

    ctx.src = sample.graph.sources();
    ctx.dst = sample.graph.destinations();
    if (config.kind == ModelKind::gcn || config.kind == ModelKind::spatial_gcn) {
        ctx.gcn = gcn_normalized_adjacency(sample.graph);
    }
    if (spatial) {
        if (!(config.bandwidth > 0.0)) throw ContractError("Spatial models need a resolved positive bandwidth");
        ctx.gaussian = gaussian_kernel_weights(sample.positions, sample.graph, config.bandwidth, true,
                                               config.row_normalize);
    }
    if (config.kind == ModelKind::graphpde) {
        ctx.edge_input = sample.graph.edge_attr;
        for (double& v : ctx.edge_input.data()) v /= config.edge_attr_scale;
    }
    return ctx;
}

Var linear(BoundParams& p, const std::string& prefix, Var x) {
    return add_row_broadcast(matmul(x, p(prefix + ".weight")), p(prefix + ".bias"));
}

Var lr_forward(BoundParams& p, Var features) { return linear(p, "readout", features); }

Var fcn_forward(const ModelConfig& config, BoundParams& p, Var features) {
    Var x = features;
    for (std::size_t i = 0; i < config.num_layers; ++i) x = activate(linear(p, layer_prefix(i), x), config.activation);
    return linear(p, "readout", x);
}

Var gcn_layer(BoundParams& p, const std::string& prefix, const SparseWeights& s_hat, Var h) {
    return linear(p, prefix, sparse_aggregate(s_hat, h));
}

Var gcn_forward(const ModelConfig& config, BoundParams& p, const SparseWeights& s_hat, Var features) {
    Var x = features;
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        x = activate(gcn_layer(p, layer_prefix(i), s_hat, x), config.activation);
    }
    return linear(p, "readout", x);
}

Var spatial_kernel_forward(const ModelConfig& config, BoundParams& p, const SparseWeights& kernel, Var features) {
    Var x = features;
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        x = apply_kernel(kernel, x);
        x = activate(linear(p, layer_prefix(i), x), config.activation);
    }
    return linear(p, "readout", apply_kernel(kernel, x));
}

Var spatial_gcn_forward(const ModelConfig& config, BoundParams& p, const SparseWeights& kernel,
                        const SparseWeights& s_hat, Var features) {
    Var x = features;
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        x = apply_kernel(kernel, x);
        x = activate(gcn_layer(p, layer_prefix(i), s_hat, x), config.activation);
    }
    return linear(p, "readout", x);
}

Var kernel_net_forward(const ModelConfig& config, BoundParams& p, const std::string& prefix, Var edge_attr) {
    if (edge_attr.cols() != kEdgeAttrDim) {
        throw DimensionError("kernel network expects " + std::to_string(kEdgeAttrDim) + " edge attributes, got " +
                             edge_attr.value().shape_string());
    }
    const std::size_t depth = config.kernel_net_hidden.size() + 1;
    Var x = edge_attr;
    for (std::size_t k = 0; k < depth; ++k) {
        x = linear(p, prefix + ".kernel" + std::to_string(k), x);
        if (k + 1 < depth) x = activate(x, config.activation);
    }
    return x;
}

Var graphpde_layer(const ModelConfig& config, BoundParams& p, const std::string& prefix,
                   std::span<const std::size_t> src, std::span<const std::size_t> dst, Var edge_attr, Var v) {
    if (v.cols() != config.hidden_dim) {
        throw DimensionError("GraphPDE layer expects width " + std::to_string(config.hidden_dim) + ", got " +
                             v.value().shape_string());
    }
    Var kernels = kernel_net_forward(config, p, prefix, edge_attr);
    Var messages = edge_matvec(kernels, gather_rows(v, src));
    Var aggregated = segment_mean(messages, dst, v.rows());
    return activate(add(linear(p, prefix, v), aggregated), config.activation);
}

Var graphpde_forward(const ModelConfig& config, BoundParams& p, const GraphContext& ctx, Var features) {
    Tape& tape = p.tape();
    Var edge_attr = tape.constant(ctx.edge_input);
    Var v = linear(p, "lift", features);
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        v = graphpde_layer(config, p, layer_prefix(i), ctx.src, ctx.dst, edge_attr, v);
    }
    return linear(p, "readout", v);
}

Var model_forward(const ModelConfig& config, BoundParams& p, const GraphContext& ctx) {
    Var x = p.tape().constant(ctx.input);
    switch (config.kind) {
        case ModelKind::lr: return lr_forward(p, x);
        case ModelKind::fcn: return fcn_forward(config, p, x);
        case ModelKind::gcn: return gcn_forward(config, p, ctx.gcn, x);
        case ModelKind::spatial_kernel: return spatial_kernel_forward(config, p, ctx.gaussian, x);
        case ModelKind::spatial_gcn: return spatial_gcn_forward(config, p, ctx.gaussian, ctx.gcn, x);
        case ModelKind::graphpde: return graphpde_forward(config, p, ctx, x);
    }
    throw ContractError("unhandled model kind");
}

DenseMatrix predict_logits(const ModelConfig& config, const ParameterSet& params, const GraphContext& ctx) {
    Tape tape;
    BoundParams bound(tape, params);
    return model_forward(config, bound, ctx).value();
}

}  // namespace stgno
