#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stgno/data.hpp"
#include "stgno/geometry.hpp"
#include "stgno/tensor.hpp"

namespace stgno {

enum class ModelKind { lr, fcn, gcn, spatial_kernel, spatial_gcn, graphpde };

std::string to_string(ModelKind kind);
/// Accepts the display names (LR, FCN, GCN, SpatialKernel, SpatialGCN,
/// GraphPDE) case-insensitively.
ModelKind model_kind_from_string(const std::string& name);
const std::vector<std::string>& model_names();
bool uses_graph(ModelKind kind);

struct ModelConfig {
    ModelKind kind = ModelKind::graphpde;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 16;
    std::size_t num_classes = 3;
    /// Activated hidden blocks; the linear readout is extra.
    std::size_t num_layers = 6;
    Activation activation = Activation::relu;
    /// Hidden widths of the GraphPDE edge-kernel network (3 -> ... -> h^2).
    std::vector<std::size_t> kernel_net_hidden{64};
    /// Gaussian bandwidth for the Spatial* models; 0 means "not yet resolved".
    double bandwidth = 0.0;
    bool row_normalize = true;
    /// Append standardised slide coordinates to the node input (graph models).
    bool use_positions = false;
    std::array<double, 2> position_center{0.0, 0.0};
    double position_scale = 1.0;
    /// Standardised coordinates are multiplied by this so two position
    /// columns are not drowned out by dozens of expression columns.
    double position_gain = 5.0;
    /// Edge attributes are divided by this before entering the kernel network.
    double edge_attr_scale = 1.0;
    std::uint64_t init_seed = 0;

    std::size_t model_input_dim() const noexcept { return input_dim + (use_positions ? 2 : 0); }
    void validate() const;
};

/// Per-kind defaults: depth 6 for GraphPDE, 2 hidden blocks (3 linear layers)
/// otherwise; graph models read positions.
ModelConfig default_model_config(ModelKind kind, std::size_t input_dim);

/// Analytic learnable-parameter count for a configuration.
std::size_t expected_param_count(const ModelConfig& config);

/// Glorot-uniform weights, zero biases, drawn in declaration order.
ParameterSet init_params(const ModelConfig& config);

/// Lazily places parameters of a set onto a tape, once each. Binding a const
/// set records plain constants (inference, no gradients).
class BoundParams {
public:
    BoundParams(Tape& tape, ParameterSet& params) : tape_(tape), mutable_(&params), params_(&params) {}
    BoundParams(Tape& tape, const ParameterSet& params) : tape_(tape), params_(&params) {}

    Var operator()(const std::string& name);
    Tape& tape() noexcept { return tape_; }

private:
    Tape& tape_;
    ParameterSet* mutable_ = nullptr;
    const ParameterSet* params_;
    std::map<std::string, Var> bound_;
};

/// Per-graph precomputation shared by every forward pass of one model.
struct GraphContext {
    std::size_t num_nodes = 0;
    DenseMatrix input;
    DenseMatrix edge_input;
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;
    SparseWeights gaussian;
    SparseWeights gcn;
};

GraphContext make_context(const ModelConfig& config, const GraphSample& sample);

Var linear(BoundParams& p, const std::string& prefix, Var x);

Var lr_forward(BoundParams& p, Var features);
Var fcn_forward(const ModelConfig& config, BoundParams& p, Var features);
/// S_hat * H * W + b, S_hat the self-looped symmetric normalised adjacency.
Var gcn_layer(BoundParams& p, const std::string& prefix, const SparseWeights& s_hat, Var h);
Var gcn_forward(const ModelConfig& config, BoundParams& p, const SparseWeights& s_hat, Var features);
Var spatial_kernel_forward(const ModelConfig& config, BoundParams& p, const SparseWeights& kernel, Var features);
Var spatial_gcn_forward(const ModelConfig& config, BoundParams& p, const SparseWeights& kernel,
                        const SparseWeights& s_hat, Var features);
/// Row-wise MLP on edge attributes; row e reshapes to the h x h kernel of edge e.
Var kernel_net_forward(const ModelConfig& config, BoundParams& p, const std::string& prefix, Var edge_attr);
/// v' = act(v W + b + mean over incoming edges of kappa(e) v_src).
Var graphpde_layer(const ModelConfig& config, BoundParams& p, const std::string& prefix,
                   std::span<const std::size_t> src, std::span<const std::size_t> dst, Var edge_attr, Var v);
Var graphpde_forward(const ModelConfig& config, BoundParams& p, const GraphContext& ctx, Var features);

/// Logits (n x num_classes) for any model kind.
Var model_forward(const ModelConfig& config, BoundParams& p, const GraphContext& ctx);
DenseMatrix predict_logits(const ModelConfig& config, const ParameterSet& params, const GraphContext& ctx);

}  // namespace stgno
