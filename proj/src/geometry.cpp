#include "stgno/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "stgno/errors.hpp"

namespace stgno {

PointSet::PointSet(DenseMatrix positions) : positions_(std::move(positions)) {
    if (positions_.cols() != 2) {
        throw DimensionError("point set must be n x 2, got " + positions_.shape_string());
    }
    for (double v : positions_.data()) {
        if (!std::isfinite(v)) throw ParameterError("point coordinates must be finite");
    }
}

std::vector<std::size_t> RadiusGraph::sources() const {
    std::vector<std::size_t> out;
    out.reserve(edges.size());
    for (const auto& e : edges) out.push_back(e.src);
    return out;
}

std::vector<std::size_t> RadiusGraph::destinations() const {
    std::vector<std::size_t> out;
    out.reserve(edges.size());
    for (const auto& e : edges) out.push_back(e.dst);
    return out;
}

std::vector<std::size_t> RadiusGraph::degrees() const {
    std::vector<std::size_t> deg(num_nodes, 0);
    for (const auto& e : edges) ++deg[e.dst];
    return deg;
}

double point_distance(const PointSet& points, std::size_t i, std::size_t j) {
    const double dx = points.x(j) - points.x(i);
    const double dy = points.y(j) - points.y(i);
    return std::sqrt(dx * dx + dy * dy);
}

RadiusGraph build_radius_graph(const PointSet& points, double radius) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
        throw ParameterError("radius must be positive and finite, got " + std::to_string(radius));
    }
    const std::size_t n = points.size();

    using Cell = std::pair<std::int64_t, std::int64_t>;
    std::vector<std::pair<Cell, std::size_t>> cells;
    cells.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        cells.push_back({{static_cast<std::int64_t>(std::floor(points.x(i) / radius)),
                          static_cast<std::int64_t>(std::floor(points.y(i) / radius))},
                         i});
    }
    std::sort(cells.begin(), cells.end());

    RadiusGraph g;
    g.num_nodes = n;
    g.radius = radius;
    for (const auto& [cell, i] : cells) {
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                const Cell probe{cell.first + dx, cell.second + dy};
                auto lo = std::lower_bound(cells.begin(), cells.end(), probe,
                                           [](const auto& a, const Cell& c) { return a.first < c; });
                for (auto it = lo; it != cells.end() && it->first == probe; ++it) {
                    const std::size_t j = it->second;
                    if (j != i && point_distance(points, i, j) <= radius) g.edges.push_back({i, j});
                }
            }
        }
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edge_attr = edge_attributes(points, g.edges);
    return g;
}

DenseMatrix edge_attributes(const PointSet& points, std::span<const Edge> edges) {
    DenseMatrix attr(edges.size(), kEdgeAttrDim);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [s, d] = edges[e];
        if (s >= points.size() || d >= points.size()) {
            throw IndexError("edge (" + std::to_string(s) + "," + std::to_string(d) + ") references a node outside [0, " +
                             std::to_string(points.size()) + ")");
        }
        attr(e, 0) = points.x(d) - points.x(s);
        attr(e, 1) = points.y(d) - points.y(s);
        attr(e, 2) = point_distance(points, s, d);
    }
    return attr;
}

SparseWeights gaussian_kernel_weights(const PointSet& points, const RadiusGraph& graph, double bandwidth,
                                      bool include_self, bool row_normalize) {
    if (!(bandwidth > 0.0)) throw ParameterError("bandwidth must be positive");
    if (points.size() != graph.num_nodes) {
        throw DimensionError("kernel weights: " + std::to_string(points.size()) + " points for a graph of " +
                             std::to_string(graph.num_nodes) + " nodes");
    }
    const std::size_t n = graph.num_nodes;
    // Bucket incoming edges per receiving node; edges are sorted by src so
    // each bucket ends up ordered by sender.
    std::vector<std::vector<std::size_t>> incoming(n);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) incoming[graph.edges[e].dst].push_back(e);

    const double denom = 2.0 * bandwidth * bandwidth;
    SparseWeights w;
    w.num_rows = n;
    w.num_cols = n;
    w.row_ptr.assign(1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t begin = w.col.size();
        if (include_self) {
            w.col.push_back(i);
            w.weight.push_back(1.0);
        }
        for (std::size_t e : incoming[i]) {
            const std::size_t j = graph.edges[e].src;
            const double d = point_distance(points, i, j);
            w.col.push_back(j);
            w.weight.push_back(std::exp(-(d * d) / denom));
        }
        if (row_normalize) {
            double s = 0.0;
            for (std::size_t k = begin; k < w.col.size(); ++k) s += w.weight[k];
            if (!(s > 0.0)) {
                throw NormalizationError("node " + std::to_string(i) +
                                         " has no kernel support to normalise (isolated node without self weight)");
            }
            for (std::size_t k = begin; k < w.col.size(); ++k) w.weight[k] /= s;
        }
        w.row_ptr.push_back(w.col.size());
    }
    return w;
}

SparseWeights gcn_normalized_adjacency(const RadiusGraph& graph) {
    const std::size_t n = graph.num_nodes;
    std::vector<std::vector<std::size_t>> incoming(n);
    for (const auto& e : graph.edges) incoming[e.dst].push_back(e.src);
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(incoming[i].size() + 1));

    SparseWeights w;
    w.num_rows = n;
    w.num_cols = n;
    w.row_ptr.assign(1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        w.col.push_back(i);
        w.weight.push_back(inv_sqrt[i] * inv_sqrt[i]);
        for (std::size_t j : incoming[i]) {
            w.col.push_back(j);
            w.weight.push_back(inv_sqrt[i] * inv_sqrt[j]);
        }
        w.row_ptr.push_back(w.col.size());
    }
    return w;
}

DenseMatrix apply_kernel(const SparseWeights& weights, const DenseMatrix& features) {
    Tape tape;
    return apply_kernel(weights, tape.constant(features)).value();
}

Var apply_kernel(const SparseWeights& weights, Var features) {
    if (weights.num_rows != features.rows()) {
        throw DimensionError("apply_kernel: weights for " + std::to_string(weights.num_rows) + " nodes, features have " +
                             std::to_string(features.rows()) + " rows");
    }
    return sparse_aggregate(weights, features);
}

DegreeSummary summarize_degrees(std::span<const RadiusGraph* const> graphs) {
    std::vector<std::size_t> all;
    for (const auto* g : graphs) {
        auto d = g->degrees();
        all.insert(all.end(), d.begin(), d.end());
    }
    DegreeSummary s;
    s.nodes = all.size();
    if (all.empty()) return s;
    std::sort(all.begin(), all.end());
    s.min = all.front();
    s.max = all.back();
    double total = 0.0;
    for (std::size_t d : all) {
        total += static_cast<double>(d);
        if (d == 0) ++s.isolated;
    }
    s.mean = total / static_cast<double>(all.size());
    const std::size_t mid = all.size() / 2;
    s.median = all.size() % 2 == 1 ? static_cast<double>(all[mid])
                                   : 0.5 * static_cast<double>(all[mid - 1] + all[mid]);
    return s;
}

double radius_for_median_degree(std::span<const PointSet* const> point_sets, std::size_t target_degree) {
    if (target_degree == 0) throw ParameterError("target degree must be positive");
    std::vector<double> kth;
    std::vector<double> dist;
    for (const auto* ps : point_sets) {
        const std::size_t n = ps->size();
        if (n <= target_degree) continue;
        for (std::size_t i = 0; i < n; ++i) {
            dist.clear();
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) dist.push_back(point_distance(*ps, i, j));
            std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(target_degree - 1), dist.end());
            kth.push_back(dist[target_degree - 1]);
        }
    }
    if (kth.empty()) return 0.0;
    const std::size_t mid = kth.size() / 2;
    std::nth_element(kth.begin(), kth.begin() + static_cast<std::ptrdiff_t>(mid), kth.end());
    return kth[mid];
}

}  // namespace stgno
