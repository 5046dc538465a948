#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <vector>

#include "stgno/tensor.hpp"

namespace stgno {

/// n x 2 slide-local coordinates.
class PointSet {
public:
    PointSet() : positions_(0, 2) {}
    explicit PointSet(DenseMatrix positions);

    std::size_t size() const noexcept { return positions_.rows(); }
    double x(std::size_t i) const { return positions_(i, 0); }
    double y(std::size_t i) const { return positions_(i, 1); }
    const DenseMatrix& positions() const noexcept { return positions_; }

private:
    DenseMatrix positions_;
};

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Directed edges stored in both directions, sorted by (src, dst).
/// edge_attr has one row (dx, dy, distance) per edge, displacement dst - src.
struct RadiusGraph {
    std::size_t num_nodes = 0;
    std::vector<Edge> edges;
    DenseMatrix edge_attr{0, 3};
    double radius = 0.0;

    std::size_t num_edges() const noexcept { return edges.size(); }
    std::vector<std::size_t> sources() const;
    std::vector<std::size_t> destinations() const;
    /// In-degree per node (equals out-degree since the graph is symmetric).
    std::vector<std::size_t> degrees() const;
};

inline constexpr std::size_t kEdgeAttrDim = 3;

double point_distance(const PointSet& points, std::size_t i, std::size_t j);

/// All ordered pairs i != j with distance <= radius, found through a uniform
/// grid of cell side `radius`.
RadiusGraph build_radius_graph(const PointSet& points, double radius);

DenseMatrix edge_attributes(const PointSet& points, std::span<const Edge> edges);

/// Gaussian positional weights exp(-d^2 / (2 b^2)) over the graph support,
/// laid out as rows = receiving node, columns = sending node. With
/// include_self the diagonal entry (weight 1) is the first entry of each row.
SparseWeights gaussian_kernel_weights(const PointSet& points, const RadiusGraph& graph, double bandwidth,
                                      bool include_self, bool row_normalize);

/// Symmetric degree-normalised adjacency with self loops,
/// D^-1/2 (A + I) D^-1/2.
SparseWeights gcn_normalized_adjacency(const RadiusGraph& graph);

DenseMatrix apply_kernel(const SparseWeights& weights, const DenseMatrix& features);
Var apply_kernel(const SparseWeights& weights, Var features);

struct DegreeSummary {
    std::size_t nodes = 0;
    std::size_t min = 0;
    std::size_t max = 0;
    double mean = 0.0;
    double median = 0.0;
    std::size_t isolated = 0;
};

DegreeSummary summarize_degrees(std::span<const RadiusGraph* const> graphs);

/// Radius at which the median node has `target_degree` neighbours: the median
/// over nodes of the distance to their target_degree-th nearest neighbour.
/// Point sets with too few points are ignored. Returns 0 if none qualify.
double radius_for_median_degree(std::span<const PointSet* const> point_sets, std::size_t target_degree);

}  // namespace stgno
