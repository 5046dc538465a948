#include <doctest.h>

#include <cmath>
#include <map>

#include "stgno/errors.hpp"
#include "support.hpp"

using namespace stgno;
using namespace oracle;

namespace {

Var sq(Var v) { return sum(square(v)); }

}  // namespace

TEST_CASE("matmul values and shape errors") {
    Tape t;
    Var i2 = t.constant(DenseMatrix::identity(2));
    Var m = t.constant(DenseMatrix::from_rows({{1, 2}, {3, 4}}));
    CHECK(matmul(i2, m).value() == DenseMatrix::from_rows({{1, 2}, {3, 4}}));
    Var r = t.constant(DenseMatrix::from_rows({{1, 2}}));
    Var c = t.constant(DenseMatrix::from_rows({{3}, {4}}));
    CHECK(matmul(r, c).value() == DenseMatrix::from_rows({{11}}));
    try {
        matmul(r, r);
        FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
        const std::string what = e.what();
        CHECK(what.find("1x2") != std::string::npos);
    }
}

TEST_CASE("untaped matmul agrees with the naive triple loop") {
    Rng rng(3);
    for (auto [m, k, n] : {std::tuple{1, 1, 1}, {7, 3, 5}, {33, 64, 17}, {4, 0, 3}}) {
        const auto a = random_matrix(m, k, rng), b = random_matrix(k, n, rng);
        CHECK(max_abs_diff(matmul(a, b), plain_matmul(a, b)) < 1e-12);
    }
}

TEST_CASE("matmul gradient against finite differences") {
    Rng rng(5);
    const auto a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
    CHECK(gradcheck([&](Var x) { return sum(matmul(x, x.tape()->constant(b))); }, a) < 1e-6);
    CHECK(gradcheck([&](Var x) { return sum(matmul(x.tape()->constant(a), x)); }, b) < 1e-6);
}

TEST_CASE("add_row_broadcast") {
    Tape t;
    Var a = t.constant(DenseMatrix::from_rows({{1, 1}, {2, 2}}));
    CHECK(add_row_broadcast(a, t.constant(DenseMatrix(1, 2))).value() == a.value());
    Var one = t.constant(DenseMatrix::from_rows({{1, 1}}));
    CHECK(add_row_broadcast(one, t.constant(DenseMatrix::from_rows({{1, 2}}))).value() ==
          DenseMatrix::from_rows({{2, 3}}));
    CHECK_THROWS_AS(add_row_broadcast(a, t.constant(DenseMatrix(1, 3))), DimensionError);
    CHECK_THROWS_AS(add_row_broadcast(a, t.constant(DenseMatrix(2, 2))), DimensionError);

    // bias gradient is the column sum of the upstream gradient
    Rng rng(7);
    const auto x = random_matrix(5, 3, rng);
    Tape tape;
    Var bias = tape.variable(DenseMatrix(1, 3));
    Var y = add_row_broadcast(tape.constant(x), bias);
    // upstream gradient of sum(y^2)/2 is y itself
    tape.backward(scale(sq(y), 0.5));
    for (std::size_t c = 0; c < 3; ++c) {
        double col = 0.0;
        for (std::size_t r = 0; r < 5; ++r) col += y.value()(r, c);
        CHECK(tape.grad(bias)(0, c) == doctest::Approx(col).epsilon(1e-12));
    }
    CHECK(gradcheck([&](Var b) { return sq(add_row_broadcast(b.tape()->constant(x), b)); }, random_matrix(1, 3, rng)) <
          1e-6);
}

TEST_CASE("relu and tanh") {
    Tape t;
    CHECK(relu(t.constant(DenseMatrix::from_rows({{-1, 2}}))).value() == DenseMatrix::from_rows({{0, 2}}));
    CHECK(tanh(t.constant(DenseMatrix::from_rows({{0}}))).value() == DenseMatrix::from_rows({{0}}));
    CHECK(activate(t.constant(DenseMatrix::from_rows({{-3}})), Activation::identity).value()(0, 0) == -3.0);
    Rng rng(9);
    const auto x = random_matrix(4, 4, rng);
    CHECK(gradcheck([](Var v) { return sq(relu(v)); }, x) < 1e-6);
    CHECK(gradcheck([](Var v) { return sq(tanh(v)); }, x) < 1e-6);
}

TEST_CASE("activation names round-trip") {
    for (auto a : {Activation::relu, Activation::tanh, Activation::identity})
        CHECK(activation_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(activation_from_string("sigmoid"), ParameterError);
}

TEST_CASE("log_softmax_rows") {
    Tape t;
    const auto out = log_softmax_rows(t.constant(DenseMatrix::from_rows({{0, 0, 0}}))).value();
    for (double v : out.data()) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));

    const auto big = log_softmax_rows(t.constant(DenseMatrix::from_rows({{1000, 0}}))).value();
    for (double v : big.data()) CHECK(std::isfinite(v));
    CHECK(big(0, 0) == 0.0);

    Rng rng(11);
    const auto x = random_matrix(6, 4, rng, -30, 30);
    const auto ls = log_softmax_rows(t.constant(x)).value();
    for (std::size_t r = 0; r < ls.rows(); ++r) {
        double s = 0.0;
        for (double v : ls.row(r)) s += std::exp(v);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK(gradcheck([](Var v) { return sq(log_softmax_rows(v)); }, random_matrix(3, 3, rng)) < 1e-6);
    CHECK_THROWS_AS(log_softmax_rows(t.constant(DenseMatrix(2, 1))), DimensionError);
}

TEST_CASE("segment_mean") {
    Tape t;
    const std::vector<std::size_t> ids{0, 0};
    CHECK(segment_mean(t.constant(DenseMatrix::from_rows({{2}, {4}})), ids, 1).value() ==
          DenseMatrix::from_rows({{3}}));
    const auto two = segment_mean(t.constant(DenseMatrix::from_rows({{2, 1}, {4, 1}})), ids, 2).value();
    CHECK(two.row(1)[0] == 0.0);
    CHECK(two.row(1)[1] == 0.0);
    const std::vector<std::size_t> bad{0, 3};
    CHECK_THROWS_AS(segment_mean(t.constant(DenseMatrix(2, 1)), bad, 3), IndexError);

    // group-by oracle on 50 x 4 with 7 segments, exact
    Rng rng(13);
    const auto x = random_matrix(50, 4, rng);
    std::vector<std::size_t> seg(50);
    for (auto& s : seg) s = rng.index(7);
    const auto got = segment_mean(t.constant(x), seg, 7).value();
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < 50; ++i) groups[seg[i]].push_back(i);
    for (std::size_t s = 0; s < 7; ++s)
        for (std::size_t c = 0; c < 4; ++c) {
            double acc = 0.0;
            for (auto i : groups[s]) acc += x(i, c);
            const double want = groups[s].empty() ? 0.0 : acc / static_cast<double>(groups[s].size());
            CHECK(got(s, c) == want);
        }

    // gradient mass: scattered grads of one segment sum to that segment's upstream gradient
    Tape tape;
    Var xv = tape.variable(x);
    Var y = segment_mean(xv, seg, 7);
    tape.backward(scale(sq(y), 0.5));  // upstream = y
    for (std::size_t s = 0; s < 7; ++s)
        for (std::size_t c = 0; c < 4; ++c) {
            double mass = 0.0;
            for (auto i : groups[s]) mass += tape.grad(xv)(i, c);
            CHECK(mass == doctest::Approx(groups[s].empty() ? 0.0 : y.value()(s, c)).epsilon(1e-12));
        }
    CHECK(gradcheck([&](Var v) { return sq(segment_mean(v, seg, 7)); }, x) < 1e-6);
}

TEST_CASE("gather, scale, edge_matvec and sparse_aggregate gradients") {
    Rng rng(15);
    const std::vector<std::size_t> rows{2, 2, 0};
    CHECK(gradcheck([&](Var v) { return sq(gather_rows(v, rows)); }, random_matrix(3, 2, rng)) < 1e-6);
    CHECK(gradcheck([&](Var v) { return sq(scale(v, 3.0)); }, random_matrix(2, 2, rng)) < 1e-6);
    const auto k = random_matrix(4, 9, rng), v = random_matrix(4, 3, rng);
    CHECK(gradcheck([&](Var x) { return sq(edge_matvec(x, x.tape()->constant(v))); }, k) < 1e-6);
    CHECK(gradcheck([&](Var x) { return sq(edge_matvec(x.tape()->constant(k), x)); }, v) < 1e-6);
    Tape t;
    CHECK_THROWS_AS(edge_matvec(t.constant(k), t.constant(random_matrix(4, 2, rng))), DimensionError);
    // edge_matvec against explicit blocks
    const auto out = edge_matvec(t.constant(k), t.constant(v)).value();
    for (std::size_t e = 0; e < 4; ++e)
        for (std::size_t i = 0; i < 3; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 3; ++j) s += k(e, i * 3 + j) * v(e, j);
            CHECK(out(e, i) == doctest::Approx(s).epsilon(1e-14));
        }
    CHECK_THROWS_AS(gather_rows(t.constant(v), std::vector<std::size_t>{4}), IndexError);
}

TEST_CASE("backward semantics") {
    ParameterSet ps;
    Parameter& w = ps.add("w", DenseMatrix::from_rows({{1, -2}, {3, 0.5}}));
    {
        Tape t;
        t.backward(sum(t.parameter(w)));
    }
    CHECK(w.grad == DenseMatrix(2, 2, 1.0));

    // repeated backward accumulates
    ps.zero_grads();
    Rng rng(17);
    const auto x = random_matrix(2, 3, rng);
    auto run = [&] {
        Tape t;
        t.backward(sq(matmul(t.parameter(w), t.constant(x))));
    };
    run();
    const DenseMatrix once = w.grad;
    run();
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad.data()[i] == 2.0 * once.data()[i]);

    // loss = sum((W x)^2) vs finite differences
    const auto numeric = numeric_gradient(
        [&](const DenseMatrix& wv) {
            Tape t;
            return sq(matmul(t.constant(wv), t.constant(x))).value()(0, 0);
        },
        w.value);
    CHECK(relative_error(once.data(), numeric.data()) < 1e-6);

    Tape t;
    Var m = t.variable(DenseMatrix(2, 2));
    CHECK_THROWS_AS(t.backward(m), ContractError);
}

TEST_CASE("tape is topological and backward visits each entry once") {
    Tape t;
    Var a = t.variable(DenseMatrix::from_rows({{1, 2}}));
    Var b = relu(scale(a, 2.0));
    Var c = add(b, a);
    Var loss = sum(square(c));
    for (std::size_t id = 0; id < t.size(); ++id)
        for (auto in : t.inputs(id)) CHECK(in < id);
    t.backward(loss);
    CHECK(t.last_backward_visits() == t.size());
}

TEST_CASE("operations are deterministic") {
    Rng rng(19);
    const auto x = random_matrix(20, 6, rng), w = random_matrix(6, 6, rng);
    auto go = [&] {
        Tape t;
        Var wv = t.variable(w);
        Var y = log_softmax_rows(tanh(matmul(t.constant(x), wv)));
        t.backward(sq(y));
        return std::pair{y.value(), DenseMatrix(t.grad(wv))};
    };
    CHECK(go() == go());
}

TEST_CASE("parameter set names are unique") {
    ParameterSet ps;
    ps.add("a", DenseMatrix(1, 1));
    CHECK_THROWS_AS(ps.add("a", DenseMatrix(1, 1)), ContractError);
    CHECK(ps.find("b") == nullptr);
    CHECK(ps.at("a").grad.same_shape(ps.at("a").value));
}

TEST_CASE("sparse weights densify") {
    SparseWeights w;
    w.num_rows = 2;
    w.num_cols = 3;
    w.col = {2, 0};
    w.weight = {0.5, 2.0};
    w.row_ptr = {0, 1, 2};
    CHECK(w.to_dense() == DenseMatrix::from_rows({{0, 0, 0.5}, {2, 0, 0}}));
}
