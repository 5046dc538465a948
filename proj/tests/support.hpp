#pragma once
// Shared oracles for the unit tests and the acceptance binary. Everything
// here is deliberately naive (loops over all pairs, dense n x n blocks) so it
// can be trusted without trusting the library code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "stgno/data.hpp"
#include "stgno/geometry.hpp"
#include "stgno/models.hpp"
#include "stgno/tensor.hpp"
#include "stgno/training.hpp"
#include "stgno/util.hpp"

namespace oracle {

using namespace stgno;

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    return denom < 1e-300 ? 0.0 : std::sqrt(diff) / denom;
}

/// Central differences of a scalar function of one matrix.
inline DenseMatrix numeric_gradient(const std::function<double(const DenseMatrix&)>& f, DenseMatrix x,
                                    double step = 1e-6) {
    DenseMatrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + step;
        const double up = f(x);
        x.data()[i] = keep - step;
        const double down = f(x);
        x.data()[i] = keep;
        g.data()[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// Builds a scalar on a fresh tape from one input leaf. Compares the tape
/// gradient with central differences; returns the relative error.
inline double gradcheck(const std::function<Var(Var)>& build, const DenseMatrix& x0, double step = 1e-6) {
    Tape tape;
    Var x = tape.variable(x0);
    Var out = build(x);
    tape.backward(out);
    const DenseMatrix analytic = tape.grad(x);
    const DenseMatrix numeric = numeric_gradient(
        [&](const DenseMatrix& xv) {
            Tape t;
            return build(t.variable(xv)).value()(0, 0);
        },
        x0, step);
    return relative_error(analytic.data(), numeric.data());
}

/// Gradient check of a loss with respect to every scalar of a parameter set.
inline double param_gradcheck(const std::function<Var(BoundParams&)>& loss_of, ParameterSet params,
                              double step = 1e-6) {
    params.zero_grads();
    {
        Tape tape;
        BoundParams bound(tape, params);
        tape.backward(loss_of(bound));
    }
    std::vector<double> analytic, numeric;
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            analytic.push_back(p.grad.data()[i]);
            const double keep = p.value.data()[i];
            auto eval = [&] {
                Tape t;
                const ParameterSet& cp = params;
                BoundParams b(t, cp);
                return loss_of(b).value()(0, 0);
            };
            p.value.data()[i] = keep + step;
            const double up = eval();
            p.value.data()[i] = keep - step;
            const double down = eval();
            p.value.data()[i] = keep;
            numeric.push_back((up - down) / (2.0 * step));
        }
    }
    return relative_error(analytic, numeric);
}

/// All ordered pairs within the radius, by exhaustive comparison.
inline std::vector<Edge> brute_force_edges(const PointSet& pts, double radius) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (i == j) continue;
            const double dx = pts.x(j) - pts.x(i), dy = pts.y(j) - pts.y(i);
            if (std::sqrt(dx * dx + dy * dy) <= radius) edges.push_back({i, j});
        }
    return edges;
}

/// Dense Gaussian kernel over the radius support, self weight 1, rows normalised.
inline DenseMatrix dense_gaussian(const PointSet& pts, double radius, double bandwidth, bool row_normalize = true) {
    const std::size_t n = pts.size();
    DenseMatrix k(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = pts.x(j) - pts.x(i), dy = pts.y(j) - pts.y(i);
            const double d = std::sqrt(dx * dx + dy * dy);
            if (i == j) k(i, j) = 1.0;
            else if (d <= radius) k(i, j) = std::exp(-d * d / (2.0 * bandwidth * bandwidth));
        }
        if (row_normalize) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += k(i, j);
            for (std::size_t j = 0; j < n; ++j) k(i, j) /= s;
        }
    }
    return k;
}

inline DenseMatrix plain_matmul(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
            c(i, j) = s;
        }
    return c;
}

inline double act(double x, Activation a) {
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

/// x W + b with plain loops; act applied when given.
inline DenseMatrix dense_linear(const DenseMatrix& x, const ParameterSet& p, const std::string& prefix) {
    DenseMatrix y = plain_matmul(x, p.at(prefix + ".weight").value);
    const DenseMatrix& b = p.at(prefix + ".bias").value;
    for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += b(0, c);
    return y;
}

inline DenseMatrix dense_act(DenseMatrix x, Activation a) {
    for (double& v : x.data()) v = act(v, a);
    return x;
}

/// One GraphPDE layer computed by materialising every n x n pair of h x h
/// kernel blocks (zero off the graph support) and summing densely.
inline DenseMatrix dense_graphpde_layer(const ModelConfig& cfg, const ParameterSet& p, const std::string& prefix,
                                        const RadiusGraph& g, const DenseMatrix& edge_input, const DenseMatrix& v) {
    const std::size_t n = v.rows(), h = cfg.hidden_dim;
    // kernel network on every edge
    DenseMatrix k = edge_input;
    const std::size_t depth = cfg.kernel_net_hidden.size() + 1;
    for (std::size_t l = 0; l < depth; ++l) {
        k = dense_linear(k, p, prefix + ".kernel" + std::to_string(l));
        if (l + 1 < depth) k = dense_act(k, cfg.activation);
    }
    // blocks[x][y] is the h*h kernel for message y -> x
    std::vector<std::vector<std::vector<double>>> blocks(n, std::vector<std::vector<double>>(n));
    std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        const auto [s, d] = g.edges[e];
        adj[d][s] = 1;
        blocks[d][s].assign(k.row(e).begin(), k.row(e).end());
    }
    DenseMatrix out = dense_linear(v, p, prefix);
    for (std::size_t x = 0; x < n; ++x) {
        std::size_t deg = 0;
        std::vector<double> acc(h, 0.0);
        for (std::size_t y = 0; y < n; ++y) {
            std::vector<double> block(h * h, 0.0);
            if (adj[x][y]) {
                block = blocks[x][y];
                ++deg;
            }
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < h; ++j) acc[i] += block[i * h + j] * v(y, j);
        }
        if (deg > 0)
            for (std::size_t i = 0; i < h; ++i) out(x, i) += acc[i] / static_cast<double>(deg);
    }
    return dense_act(out, cfg.activation);
}

/// A permuted copy of a graph sample: new node i is old node perm[i].
inline GraphSample permute_sample(const GraphSample& s, const std::vector<std::size_t>& perm) {
    const std::size_t n = s.num_nodes();
    DenseMatrix pos(n, 2), feat(n, s.features.cols());
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        pos(i, 0) = s.positions.x(perm[i]);
        pos(i, 1) = s.positions.y(perm[i]);
        std::copy(s.features.row(perm[i]).begin(), s.features.row(perm[i]).end(), feat.row(i).begin());
        labels[i] = s.labels[perm[i]];
    }
    GraphSample out;
    out.sample_id = s.sample_id;
    out.positions = PointSet(std::move(pos));
    out.features = std::move(feat);
    out.labels = std::move(labels);
    out.graph = build_radius_graph(out.positions, s.graph.radius);
    return out;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
    return p;
}

/// A small random slide: uniform points in a square, random features and labels.
inline GraphSample random_sample(std::size_t n, std::size_t d, double radius, Rng& rng, double side = 1.0,
                                 int num_classes = 3) {
    DenseMatrix pos(n, 2);
    for (double& v : pos.data()) v = rng.uniform(0.0, side);
    GraphSample s;
    s.sample_id = "s";
    s.positions = PointSet(std::move(pos));
    s.features = random_matrix(n, d, rng);
    s.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.labels[i] = static_cast<int>(rng.index(static_cast<std::uint64_t>(num_classes)));
    s.graph = build_radius_graph(s.positions, radius);
    return s;
}

/// Config with every dataset-dependent field filled by hand.
inline ModelConfig small_config(ModelKind kind, std::size_t d, std::size_t h, double radius, std::uint64_t seed = 7) {
    ModelConfig c = default_model_config(kind, d);
    c.hidden_dim = h;
    c.bandwidth = radius / 2.0;
    c.edge_attr_scale = radius;
    c.position_center = {0.5, 0.5};
    c.position_scale = 0.3;
    c.init_seed = seed;
    return c;
}

/// Metrics straight from predictions, no shared code with the library.
inline std::vector<std::vector<std::size_t>> confusion_of(const std::vector<int>& truth, const std::vector<int>& pred,
                                                          std::size_t k) {
    std::vector<std::vector<std::size_t>> c(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) ++c[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
    return c;
}

}  // namespace oracle
