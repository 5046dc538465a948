#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace stgno {

/// Row-major 2-D array of doubles. The only numeric carrier in the library.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    void fill(double value);
    bool same_shape(const DenseMatrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_string() const;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Plain (untaped) product, used by the tape and by reference code.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

/// Compressed sparse rows of constant weights: out_i = sum_j w_ij x_j.
/// Entries within a row are kept in insertion order so summation is stable.
struct SparseWeights {
    std::size_t num_rows = 0;
    std::size_t num_cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::size_t> col;
    std::vector<double> weight;

    std::size_t nnz() const noexcept { return col.size(); }
    DenseMatrix to_dense() const;
};

enum class Activation { relu, tanh, identity };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct Parameter {
    std::string name;
    DenseMatrix value;
    DenseMatrix grad;
};

/// Ordered, uniquely named parameter collection. Parameters are stored in a
/// deque so references handed to a Tape stay valid while more are added.
class ParameterSet {
public:
    Parameter& add(std::string name, DenseMatrix value);

    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    const Parameter* find(const std::string& name) const;
    Parameter* find(const std::string& name);

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const noexcept;
    void zero_grads();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    friend bool operator==(const ParameterSet& a, const ParameterSet& b);

private:
    std::deque<Parameter> params_;
};

enum class OpKind {
    constant,
    variable,
    parameter,
    matmul,
    add,
    add_row_broadcast,
    relu,
    tanh,
    log_softmax_rows,
    segment_mean,
    sum,
    square,
    scale,
    gather_rows,
    edge_matvec,
    sparse_aggregate,
    weighted_nll,
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    const DenseMatrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode recording of primitive operations. Entries are appended in
/// evaluation order, so the tape is topologically sorted by construction.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(DenseMatrix value);
    /// Leaf that receives a gradient but is not bound to a Parameter.
    Var variable(DenseMatrix value);
    /// Leaf bound to `param`; backward() accumulates into param.grad.
    Var parameter(Parameter& param);

    Var record(OpKind kind, std::vector<std::size_t> inputs, DenseMatrix value, BackwardFn backward);

    const DenseMatrix& value(std::size_t id) const { return entries_[id].value; }
    const DenseMatrix& value(Var v) const { return value(v.id()); }
    /// Gradient from the most recent backward(); empty if not reached.
    const DenseMatrix& grad(Var v) const { return entries_[v.id()].grad; }
    OpKind kind(std::size_t id) const { return entries_[id].kind; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return entries_[id].inputs; }
    bool requires_grad(std::size_t id) const { return entries_[id].requires_grad; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Accumulate `g` into the gradient slot of entry `id` (no-op when the
    /// entry does not require a gradient).
    DenseMatrix* grad_slot(std::size_t id);
    const DenseMatrix& grad(std::size_t id) const { return entries_[id].grad; }

    /// Seed d(loss)/d(loss) = 1 and sweep the tape in reverse. Gradients of
    /// parameters are added to Parameter::grad, never overwritten.
    void backward(Var loss);

    /// Number of entries visited by the last backward sweep.
    std::size_t last_backward_visits() const noexcept { return last_visits_; }

private:
    struct Entry {
        OpKind kind;
        std::vector<std::size_t> inputs;
        DenseMatrix value;
        DenseMatrix grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };

    std::deque<Entry> entries_;
    std::size_t last_visits_ = 0;
};

// Differentiable operations. All inputs must live on the same tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_row_broadcast(Var a, Var bias);
Var relu(Var a);
Var tanh(Var a);
Var activate(Var a, Activation act);
Var log_softmax_rows(Var a);
/// Row i of the result is the mean of rows whose id is i; empty segments are zero.
Var segment_mean(Var values, std::span<const std::size_t> segment_ids, std::size_t num_segments);
Var sum(Var a);
Var square(Var a);
Var scale(Var a, double factor);
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// kernels is m x (h*h), each row a row-major h x h block; vectors is m x h.
/// Row e of the result is block_e * vectors_e.
Var edge_matvec(Var kernels, Var vectors);
Var sparse_aggregate(const SparseWeights& weights, Var x);
/// -(sum_i w[y_i] * log_probs[i, y_i]) / sum_i w[y_i], as a 1x1 value.
Var weighted_nll(Var log_probs, std::span<const int> labels, std::span<const double> class_weights);

}  // namespace stgno
