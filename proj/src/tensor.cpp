#include "stgno/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Core>

#include "stgno/errors.hpp"

namespace stgno {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// C (m x n) += A (m x k) * B (k x n)
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MutMap(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
}

// C (k x n) += A^T * B with A (m x k), B (m x n)
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MutMap(c, K, N).noalias() += ConstMap(a, M, K).transpose() * ConstMap(b, M, N);
}

// C (m x n) += A * B^T with A (m x k), B (n x k)
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MutMap(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, N, K).transpose();
}

void require_same_tape(Var a, Var b) {
    if (a.tape() == nullptr || a.tape() != b.tape()) {
        throw ContractError("operands recorded on different tapes");
    }
}

void add_into(DenseMatrix& dst, const DenseMatrix& src) {
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged initializer rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return DenseMatrix(r, c, std::move(data));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void DenseMatrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string DenseMatrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul shape mismatch: " + a.shape_string() + " * " + b.shape_string());
    }
    DenseMatrix c(a.rows(), b.cols());
    gemm_acc(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
    return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

DenseMatrix SparseWeights::to_dense() const {
    DenseMatrix d(num_rows, num_cols);
    for (std::size_t i = 0; i < num_rows; ++i)
        for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) d(i, col[e]) += weight[e];
    return d;
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "?";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw ParameterError("unknown activation '" + name + "' (expected relu, tanh, identity)");
}

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, DenseMatrix value) {
    if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
    DenseMatrix grad(value.rows(), value.cols());
    params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
    return params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

Parameter& ParameterSet::at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw ContractError("no parameter named '" + name + "'");
}

const Parameter& ParameterSet::at(const std::string& name) const {
    if (const auto* p = find(name)) return *p;
    throw ContractError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterSet::zero_grads() {
    for (auto& p : params_) p.grad.fill(0.0);
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
        if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Tape

const DenseMatrix& Var::value() const {
    if (tape_ == nullptr) throw ContractError("empty Var handle");
    return tape_->value(id_);
}

Var Tape::constant(DenseMatrix value) {
    entries_.push_back(Entry{OpKind::constant, {}, std::move(value), {}, false, nullptr, {}});
    return Var(this, entries_.size() - 1);
}

Var Tape::variable(DenseMatrix value) {
    entries_.push_back(Entry{OpKind::variable, {}, std::move(value), {}, true, nullptr, {}});
    return Var(this, entries_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
    if (!param.value.same_shape(param.grad)) {
        throw ContractError("parameter '" + param.name + "' value/grad shape mismatch");
    }
    entries_.push_back(Entry{OpKind::parameter, {}, param.value, {}, true, &param, {}});
    return Var(this, entries_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, DenseMatrix value, BackwardFn backward) {
    bool needs = false;
    for (std::size_t id : inputs) {
        if (id >= entries_.size()) throw IndexError("tape input id out of range");
        needs = needs || entries_[id].requires_grad;
    }
    entries_.push_back(Entry{kind, std::move(inputs), std::move(value), {}, needs, nullptr,
                             needs ? std::move(backward) : BackwardFn{}});
    return Var(this, entries_.size() - 1);
}

DenseMatrix* Tape::grad_slot(std::size_t id) {
    Entry& e = entries_[id];
    return e.requires_grad ? &e.grad : nullptr;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw ContractError("loss was not recorded on this tape");
    const DenseMatrix& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ContractError("backward requires a 1x1 loss, got " + lv.shape_string());
    }
    for (auto& e : entries_) {
        if (e.requires_grad) {
            e.grad = DenseMatrix(e.value.rows(), e.value.cols());
        } else {
            e.grad = DenseMatrix();
        }
    }
    last_visits_ = 0;
    if (!entries_[loss.id()].requires_grad) return;
    entries_[loss.id()].grad(0, 0) = 1.0;

    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Entry& e = entries_[id];
        if (!e.requires_grad) continue;
        ++last_visits_;
        if (e.backward) e.backward(*this, id);
        if (e.param != nullptr) add_into(e.param->grad, e.grad);
    }
}

// ---------------------------------------------------------------------------
// Operations

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    Tape& t = *a.tape();
    DenseMatrix out = matmul(a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(OpKind::matmul, {ia, ib}, std::move(out), [ia, ib](Tape& tp, std::size_t self) {
        const DenseMatrix& g = tp.grad(self);
        const DenseMatrix& av = tp.value(ia);
        const DenseMatrix& bv = tp.value(ib);
        if (DenseMatrix* ga = tp.grad_slot(ia)) {
            // dA = dC * B^T
            gemm_nt_acc(g.data().data(), bv.data().data(), ga->data().data(), g.rows(), g.cols(), bv.rows());
        }
        if (DenseMatrix* gb = tp.grad_slot(ib)) {
            // dB = A^T * dC
            gemm_tn_acc(av.data().data(), g.data().data(), gb->data().data(), av.rows(), av.cols(), g.cols());
        }
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b);
    const DenseMatrix& av = a.value();
    const DenseMatrix& bv = b.value();
    if (!av.same_shape(bv)) {
        throw DimensionError("add shape mismatch: " + av.shape_string() + " + " + bv.shape_string());
    }
    DenseMatrix out = av;
    add_into(out, bv);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(OpKind::add, {ia, ib}, std::move(out), [ia, ib](Tape& tp, std::size_t self) {
        const DenseMatrix& g = tp.grad(self);
        if (DenseMatrix* ga = tp.grad_slot(ia)) add_into(*ga, g);
        if (DenseMatrix* gb = tp.grad_slot(ib)) add_into(*gb, g);
    });
}

Var add_row_broadcast(Var a, Var bias) {
    require_same_tape(a, bias);
    const DenseMatrix& av = a.value();
    const DenseMatrix& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols()) {
        throw DimensionError("bias must be 1x" + std::to_string(av.cols()) + ", got " + bv.shape_string());
    }
    DenseMatrix out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv(0, c);
    }
    const std::size_t ia = a.id(), ib = bias.id();
    return a.tape()->record(OpKind::add_row_broadcast, {ia, ib}, std::move(out),
                            [ia, ib](Tape& tp, std::size_t self) {
                                const DenseMatrix& g = tp.grad(self);
                                if (DenseMatrix* ga = tp.grad_slot(ia)) add_into(*ga, g);
                                if (DenseMatrix* gb = tp.grad_slot(ib)) {
                                    for (std::size_t r = 0; r < g.rows(); ++r) {
                                        auto row = g.row(r);
                                        for (std::size_t c = 0; c < row.size(); ++c) (*gb)(0, c) += row[c];
                                    }
                                }
                            });
}

Var relu(Var a) {
    DenseMatrix out = a.value();
    for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
    const std::size_t ia = a.id();
    return a.tape()->record(OpKind::relu, {ia}, std::move(out), [ia](Tape& tp, std::size_t self) {
        DenseMatrix* ga = tp.grad_slot(ia);
        if (ga == nullptr) return;
        auto g = tp.grad(self).data();
        auto x = tp.value(ia).data();
        auto d = ga->data();
        for (std::size_t i = 0; i < d.size(); ++i)
            if (x[i] > 0.0) d[i] += g[i];
    });
}

Var tanh(Var a) {
    DenseMatrix out = a.value();
    for (double& x : out.data()) x = std::tanh(x);
    const std::size_t ia = a.id();
    return a.tape()->record(OpKind::tanh, {ia}, std::move(out), [ia](Tape& tp, std::size_t self) {
        DenseMatrix* ga = tp.grad_slot(ia);
        if (ga == nullptr) return;
        auto g = tp.grad(self).data();
        auto y = tp.value(self).data();
        auto d = ga->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var activate(Var a, Activation act) {
    switch (act) {
        case Activation::relu: return relu(a);
        case Activation::tanh: return tanh(a);
        case Activation::identity: return a;
    }
    return a;
}

Var log_softmax_rows(Var a) {
    const DenseMatrix& av = a.value();
    if (av.cols() < 2) throw DimensionError("log_softmax_rows needs at least 2 columns, got " + av.shape_string());
    DenseMatrix out(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto in = av.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double s = 0.0;
        for (double x : in) s += std::exp(x - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - lse;
    }
    const std::size_t ia = a.id();
    return a.tape()->record(OpKind::log_softmax_rows, {ia}, std::move(out), [ia](Tape& tp, std::size_t self) {
        DenseMatrix* ga = tp.grad_slot(ia);
        if (ga == nullptr) return;
        const DenseMatrix& g = tp.grad(self);
        const DenseMatrix& y = tp.value(self);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            auto gr = g.row(r);
            auto yr = y.row(r);
            auto dr = ga->row(r);
            double gs = 0.0;
            for (double v : gr) gs += v;
            for (std::size_t c = 0; c < yr.size(); ++c) dr[c] += gr[c] - std::exp(yr[c]) * gs;
        }
    });
}

Var segment_mean(Var values, std::span<const std::size_t> segment_ids, std::size_t num_segments) {
    const DenseMatrix& v = values.value();
    if (segment_ids.size() != v.rows()) {
        throw DimensionError("segment_mean: " + std::to_string(segment_ids.size()) + " ids for " +
                             std::to_string(v.rows()) + " rows");
    }
    std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
    std::vector<double> counts(num_segments, 0.0);
    for (std::size_t s : ids) {
        if (s >= num_segments) {
            throw IndexError("segment id " + std::to_string(s) + " out of range [0, " +
                             std::to_string(num_segments) + ")");
        }
        counts[s] += 1.0;
    }
    DenseMatrix out(num_segments, v.cols());
    for (std::size_t r = 0; r < v.rows(); ++r) {
        auto o = out.row(ids[r]);
        auto in = v.row(r);
        for (std::size_t c = 0; c < in.size(); ++c) o[c] += in[c];
    }
    for (std::size_t s = 0; s < num_segments; ++s) {
        if (counts[s] == 0.0) continue;
        for (double& x : out.row(s)) x /= counts[s];
    }
    const std::size_t iv = values.id();
    return values.tape()->record(
        OpKind::segment_mean, {iv}, std::move(out),
        [iv, ids = std::move(ids), counts = std::move(counts)](Tape& tp, std::size_t self) {
            DenseMatrix* gv = tp.grad_slot(iv);
            if (gv == nullptr) return;
            const DenseMatrix& g = tp.grad(self);
            for (std::size_t r = 0; r < ids.size(); ++r) {
                auto gs = g.row(ids[r]);
                auto d = gv->row(r);
                const double n = counts[ids[r]];
                for (std::size_t c = 0; c < d.size(); ++c) d[c] += gs[c] / n;
            }
        });
}

Var sum(Var a) {
    double s = 0.0;
    for (double x : a.value().data()) s += x;
    const std::size_t ia = a.id();
    return a.tape()->record(OpKind::sum, {ia}, DenseMatrix(1, 1, s), [ia](Tape& tp, std::size_t self) {
        DenseMatrix* ga = tp.grad_slot(ia);
        if (ga == nullptr) return;
        const double g = tp.grad(self)(0, 0);
        for (double& d : ga->data()) d += g;
    });
}

Var square(Var a) {
    DenseMatrix out = a.value();
    for (double& x : out.data()) x *= x;
    const std::size_t ia = a.id();
    return a.tape()->record(OpKind::square, {ia}, std::move(out), [ia](Tape& tp, std::size_t self) {
        DenseMatrix* ga = tp.grad_slot(ia);
        if (ga == nullptr) return;
        auto g = tp.grad(self).data();
        auto x = tp.value(ia).data();
        auto d = ga->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += 2.0 * x[i] * g[i];
    });
}

Var scale(Var a, double factor) {
    DenseMatrix out = a.value();
    for (double& x : out.data()) x *= factor;
    const std::size_t ia = a.id();
    return a.tape()->record(OpKind::scale, {ia}, std::move(out), [ia, factor](Tape& tp, std::size_t self) {
        DenseMatrix* ga = tp.grad_slot(ia);
        if (ga == nullptr) return;
        auto g = tp.grad(self).data();
        auto d = ga->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    const DenseMatrix& av = a.value();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    DenseMatrix out(idx.size(), av.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= av.rows()) {
            throw IndexError("gather_rows: row " + std::to_string(idx[r]) + " out of range for " +
                             av.shape_string());
        }
        std::copy_n(av.row(idx[r]).begin(), av.cols(), out.row(r).begin());
    }
    const std::size_t ia = a.id();
    return a.tape()->record(OpKind::gather_rows, {ia}, std::move(out),
                            [ia, idx = std::move(idx)](Tape& tp, std::size_t self) {
                                DenseMatrix* ga = tp.grad_slot(ia);
                                if (ga == nullptr) return;
                                const DenseMatrix& g = tp.grad(self);
                                for (std::size_t r = 0; r < idx.size(); ++r) {
                                    auto gr = g.row(r);
                                    auto d = ga->row(idx[r]);
                                    for (std::size_t c = 0; c < d.size(); ++c) d[c] += gr[c];
                                }
                            });
}

Var edge_matvec(Var kernels, Var vectors) {
    require_same_tape(kernels, vectors);
    const DenseMatrix& k = kernels.value();
    const DenseMatrix& v = vectors.value();
    const std::size_t h = v.cols();
    if (k.rows() != v.rows() || k.cols() != h * h) {
        throw DimensionError("edge_matvec: kernels " + k.shape_string() + " incompatible with vectors " +
                             v.shape_string());
    }
    DenseMatrix out(v.rows(), h);
    for (std::size_t e = 0; e < v.rows(); ++e) {
        const double* ke = k.row(e).data();
        const double* ve = v.row(e).data();
        double* oe = out.row(e).data();
        for (std::size_t i = 0; i < h; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < h; ++j) s += ke[i * h + j] * ve[j];
            oe[i] = s;
        }
    }
    const std::size_t ik = kernels.id(), iv = vectors.id();
    return kernels.tape()->record(OpKind::edge_matvec, {ik, iv}, std::move(out),
                                  [ik, iv, h](Tape& tp, std::size_t self) {
                                      const DenseMatrix& g = tp.grad(self);
                                      const DenseMatrix& kv = tp.value(ik);
                                      const DenseMatrix& vv = tp.value(iv);
                                      DenseMatrix* gk = tp.grad_slot(ik);
                                      DenseMatrix* gv = tp.grad_slot(iv);
                                      for (std::size_t e = 0; e < g.rows(); ++e) {
                                          const double* ge = g.row(e).data();
                                          const double* ve = vv.row(e).data();
                                          const double* ke = kv.row(e).data();
                                          if (gk != nullptr) {
                                              double* dk = gk->row(e).data();
                                              for (std::size_t i = 0; i < h; ++i)
                                                  for (std::size_t j = 0; j < h; ++j) dk[i * h + j] += ge[i] * ve[j];
                                          }
                                          if (gv != nullptr) {
                                              double* dv = gv->row(e).data();
                                              for (std::size_t i = 0; i < h; ++i)
                                                  for (std::size_t j = 0; j < h; ++j) dv[j] += ke[i * h + j] * ge[i];
                                          }
                                      }
                                  });
}

Var sparse_aggregate(const SparseWeights& weights, Var x) {
    const DenseMatrix& xv = x.value();
    if (weights.num_cols != xv.rows()) {
        throw DimensionError("sparse_aggregate: weights expect " + std::to_string(weights.num_cols) +
                             " nodes, features have " + std::to_string(xv.rows()));
    }
    DenseMatrix out(weights.num_rows, xv.cols());
    for (std::size_t i = 0; i < weights.num_rows; ++i) {
        auto o = out.row(i);
        for (std::size_t e = weights.row_ptr[i]; e < weights.row_ptr[i + 1]; ++e) {
            const double w = weights.weight[e];
            auto in = xv.row(weights.col[e]);
            for (std::size_t c = 0; c < o.size(); ++c) o[c] += w * in[c];
        }
    }
    const std::size_t ix = x.id();
    // The weights are captured by value: graphs may be rebuilt between steps.
    return x.tape()->record(OpKind::sparse_aggregate, {ix}, std::move(out),
                            [ix, w = weights](Tape& tp, std::size_t self) {
                                DenseMatrix* gx = tp.grad_slot(ix);
                                if (gx == nullptr) return;
                                const DenseMatrix& g = tp.grad(self);
                                for (std::size_t i = 0; i < w.num_rows; ++i) {
                                    auto gi = g.row(i);
                                    for (std::size_t e = w.row_ptr[i]; e < w.row_ptr[i + 1]; ++e) {
                                        auto d = gx->row(w.col[e]);
                                        for (std::size_t c = 0; c < d.size(); ++c) d[c] += w.weight[e] * gi[c];
                                    }
                                }
                            });
}

Var weighted_nll(Var log_probs, std::span<const int> labels, std::span<const double> class_weights) {
    const DenseMatrix& lp = log_probs.value();
    if (labels.size() != lp.rows()) {
        throw DimensionError("weighted_nll: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(lp.rows()) + " rows");
    }
    if (class_weights.size() != lp.cols()) {
        throw DimensionError("weighted_nll: " + std::to_string(class_weights.size()) + " class weights for " +
                             std::to_string(lp.cols()) + " classes");
    }
    std::vector<int> y(labels.begin(), labels.end());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= lp.cols()) {
            throw IndexError("label " + std::to_string(y[i]) + " out of range for " + std::to_string(lp.cols()) +
                             " classes");
        }
        const double w = class_weights[static_cast<std::size_t>(y[i])];
        num += w * lp(i, static_cast<std::size_t>(y[i]));
        den += w;
    }
    if (!(den > 0.0)) throw ContractError("weighted_nll: total weight must be positive");
    std::vector<double> cw(class_weights.begin(), class_weights.end());
    const std::size_t il = log_probs.id();
    return log_probs.tape()->record(OpKind::weighted_nll, {il}, DenseMatrix(1, 1, -num / den),
                                    [il, y = std::move(y), cw = std::move(cw), den](Tape& tp, std::size_t self) {
                                        DenseMatrix* gl = tp.grad_slot(il);
                                        if (gl == nullptr) return;
                                        const double g = tp.grad(self)(0, 0);
                                        for (std::size_t i = 0; i < y.size(); ++i) {
                                            const auto c = static_cast<std::size_t>(y[i]);
                                            (*gl)(i, c) -= g * cw[c] / den;
                                        }
                                    });
}

}  // namespace stgno
