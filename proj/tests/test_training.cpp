#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>
#include <unistd.h>

#include "stgno/errors.hpp"
#include "support.hpp"

using namespace stgno;
using namespace oracle;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("stgno_test_training_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const PreparedDataset& small_dataset() {
    static const PreparedDataset ds = [] {
        SyntheticConfig c;
        c.num_samples = 6;
        c.spots_per_sample = 50;
        c.num_genes = 5;
        c.seed = 3;
        const auto syn = generate_synthetic(c);
        PrepareOptions o;
        o.holdout_k = 2;
        o.min_classes = 1;
        o.seed = 1;
        return prepare_dataset(syn.table, syn.table.gene_names, syn.label_map, o);
    }();
    return ds;
}

TrainConfig quick(std::size_t epochs = 3, std::size_t runs = 1) {
    TrainConfig t;
    t.epochs = epochs;
    t.num_runs = runs;
    t.learning_rate = 1e-2;
    return t;
}

ModelConfig resolved(ModelKind kind) {
    auto c = default_model_config(kind, 0);
    c.hidden_dim = 4;
    c.kernel_net_hidden = {6};
    if (kind == ModelKind::graphpde) c.num_layers = 2;
    return resolve_for_dataset(c, small_dataset());
}

double ce(const DenseMatrix& logits, const std::vector<int>& y, const std::vector<double>& w) {
    Tape t;
    return weighted_cross_entropy(t.constant(logits), y, w).value()(0, 0);
}

}  // namespace

TEST_CASE("weighted cross entropy") {
    const std::vector<double> ones{1, 1, 1};
    CHECK(ce(DenseMatrix(4, 3), {0, 1, 2, 2}, ones) == doctest::Approx(std::log(3.0)).epsilon(1e-15));

    // growing the correct logit lowers the loss
    double prev = INFINITY;
    for (double s : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const double l = ce(DenseMatrix::from_rows({{s, 0, 0}, {0, s, 0}}), {0, 1}, ones);
        CHECK(l < prev);
        prev = l;
    }

    // scaling every weight leaves the loss unchanged
    Rng rng(61);
    const auto logits = random_matrix(20, 3, rng, -3, 3);
    std::vector<int> y(20);
    for (auto& v : y) v = static_cast<int>(rng.index(3));
    const std::vector<double> w{0.3, 2.0, 1.1};
    std::vector<double> w7;
    for (double v : w) w7.push_back(7.0 * v);
    CHECK(std::abs(ce(logits, y, w) - ce(logits, y, w7)) < 1e-12);

    // by hand: two spots, weights 3 and 1
    const auto two = DenseMatrix::from_rows({{1, 0}, {0, 2}});
    const double l0 = -(1.0 - std::log(std::exp(1.0) + 1.0));
    const double l1 = -(2.0 - std::log(1.0 + std::exp(2.0)));
    CHECK(ce(two, {0, 1}, {3, 1}) == doctest::Approx((3 * l0 + l1) / 4).epsilon(1e-14));
    CHECK(ce(two, {0, 1}, {1, 1}) == doctest::Approx((l0 + l1) / 2).epsilon(1e-14));

    CHECK(gradcheck([&](Var x) { return weighted_cross_entropy(x, y, w); }, logits) < 1e-7);
    Tape t;
    CHECK_THROWS(weighted_cross_entropy(t.constant(DenseMatrix(2, 3)), std::vector<int>{0}, w));
}

TEST_CASE("class weights") {
    const std::vector<int> y{0, 0, 0, 1, 2, 2};
    const auto w = class_weights(y, 3);
    CHECK(w[0] == doctest::Approx(6.0 / 9.0));
    CHECK(w[1] == doctest::Approx(2.0));
    CHECK(w[2] == doctest::Approx(1.0));
    // every class contributes the same total weight
    CHECK(3 * w[0] == doctest::Approx(1 * w[1]));
    CHECK_THROWS_AS(class_weights(std::vector<int>{0, 0, 2}, 3), DegenerateDataError);
    CHECK_THROWS_AS(class_weights(std::vector<int>{0, 3}, 3), IndexError);
}

TEST_CASE("adam") {
    TrainConfig tc;
    tc.learning_rate = 0.01;
    ParameterSet p;
    p.add("w", DenseMatrix::from_rows({{1.0, -2.0, 0.5}}));
    Optimizer opt(p, tc);
    p.at("w").grad = DenseMatrix::from_rows({{0.3, -4.0, 0.0}});
    opt.step(p, 1);
    const auto& v = p.at("w").value;
    CHECK(v(0, 0) == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(v(0, 1) == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-12));
    CHECK(v(0, 2) == 0.5);
    for (double g : p.at("w").grad.data()) CHECK(g == 0.0);

    // constant gradient: each step tends to -lr * sign(g)
    ParameterSet q;
    q.add("w", DenseMatrix(1, 1, 0.0));
    Optimizer o2(q, tc);
    for (std::size_t s = 1; s <= 100; ++s) {
        q.at("w").grad.fill(2.5);
        o2.step(q, s);
    }
    CHECK(q.at("w").value(0, 0) == doctest::Approx(-100 * 0.01).epsilon(0.1));

    // SGD is plain descent
    tc.optimizer = OptimizerKind::sgd;
    ParameterSet r;
    r.add("w", DenseMatrix(1, 2, 1.0));
    Optimizer o3(r, tc);
    r.at("w").grad = DenseMatrix::from_rows({{1.0, -3.0}});
    o3.step(r, 1);
    CHECK(r.at("w").value == DenseMatrix::from_rows({{0.99, 1.03}}));
    ParameterSet wider = r;
    wider.add("extra", DenseMatrix(1, 1));
    CHECK_THROWS_AS(o3.step(wider, 2), ContractError);
}

TEST_CASE("names and config validation") {
    CHECK(optimizer_from_string("adam") == OptimizerKind::adam);
    CHECK(optimizer_from_string(to_string(OptimizerKind::sgd)) == OptimizerKind::sgd);
    CHECK_THROWS_AS(optimizer_from_string("lbfgs"), ParameterError);
    CHECK(f1_mode_from_string("weighted") == F1Mode::weighted);
    CHECK_THROWS_AS(f1_mode_from_string("micro"), ParameterError);
    TrainConfig t;
    t.validate();
    t.learning_rate = 0.0;
    CHECK_THROWS_AS(t.validate(), ParameterError);
    t = {};
    t.num_runs = 0;
    CHECK_THROWS_AS(t.validate(), ParameterError);
}

TEST_CASE("metrics") {
    const std::vector<int> truth{0, 0, 0, 1, 1, 2, 2, 2, 2};
    const std::vector<int> pred{0, 1, 0, 1, 2, 2, 2, 0, 2};
    const auto m = Metrics::from_confusion(confusion_of(truth, pred, 3));
    CHECK(m.total == 9);
    CHECK(m.accuracy == doctest::Approx(6.0 / 9.0));
    // by hand: class 0 p = 2/3 r = 2/3, class 1 p = 1/2 r = 1/2, class 2 p = 3/4 r = 3/4
    CHECK(m.per_class_f1[0] == doctest::Approx(2.0 / 3.0));
    CHECK(m.per_class_f1[1] == doctest::Approx(0.5));
    CHECK(m.per_class_f1[2] == doctest::Approx(0.75));
    CHECK(m.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.5 + 0.75) / 3.0));
    CHECK(m.weighted_f1 == doctest::Approx((3 * 2.0 / 3.0 + 2 * 0.5 + 4 * 0.75) / 9.0));
    CHECK(m.f1(F1Mode::weighted) == m.weighted_f1);

    // perfect prediction, and a class never predicted
    CHECK(Metrics::from_confusion(confusion_of(truth, truth, 3)).macro_f1 == 1.0);
    const std::vector<int> all0(9, 0);
    const auto z = Metrics::from_confusion(confusion_of(truth, all0, 3));
    CHECK(z.per_class_f1[1] == 0.0);
    CHECK(z.per_class_f1[0] == doctest::Approx(2.0 * (3.0 / 9.0) / (3.0 / 9.0 + 1.0)));
    CHECK_THROWS_AS(Metrics::from_confusion({{1, 2}, {3}}), DimensionError);

    CHECK(argmax_rows(DenseMatrix::from_rows({{1, 3, 3}, {0, 0, 0}, {-1, -2, -0.5}})) == std::vector<int>{1, 0, 2});
}

TEST_CASE("evaluate") {
    // LR that copies its input: prediction is the argmax feature
    ModelConfig c = default_model_config(ModelKind::lr, 3);
    c.use_positions = false;
    auto p = init_params(c);
    p.at("readout.weight").value = DenseMatrix::identity(3);
    Rng rng(63);
    std::vector<GraphSample> gs;
    std::vector<int> truth, pred;
    for (int i = 0; i < 3; ++i) {
        gs.push_back(random_sample(20, 3, 0.2, rng));
        const auto a = argmax_rows(gs.back().features);
        truth.insert(truth.end(), gs.back().labels.begin(), gs.back().labels.end());
        pred.insert(pred.end(), a.begin(), a.end());
    }
    const auto m = evaluate(c, p, gs);
    CHECK(m.confusion == confusion_of(truth, pred, 3));
    CHECK(m.total == 60);
    // slide order does not matter
    std::vector<GraphSample> rev(gs.rbegin(), gs.rend());
    CHECK(evaluate(c, p, rev).confusion == m.confusion);
    CHECK_THROWS_AS(evaluate(c, p, std::vector<GraphSample>{}), ContractError);
}

TEST_CASE("resolve for dataset") {
    const auto& ds = small_dataset();
    const auto c = resolved(ModelKind::spatial_kernel);
    CHECK(c.input_dim == 5);
    CHECK(c.num_classes == 3);
    CHECK(c.bandwidth == ds.radius / 2);
    CHECK(c.edge_attr_scale == ds.radius);
    // center is the training mean of the coordinates
    double sx = 0.0;
    std::size_t n = 0;
    for (const auto& g : ds.train)
        for (std::size_t i = 0; i < g.num_nodes(); ++i, ++n) sx += g.positions.x(i);
    CHECK(c.position_center[0] == doctest::Approx(sx / static_cast<double>(n)));
    CHECK(c.position_scale > 0.0);
}

TEST_CASE("training is deterministic and learns") {
    const auto& ds = small_dataset();
    for (ModelKind k : {ModelKind::fcn, ModelKind::graphpde}) {
        const auto c = resolved(k);
        auto tc = quick(15);
        std::vector<double> seen;
        const auto a = train(c, ds.train, tc, [&](std::size_t, double l, double) { seen.push_back(l); });
        const auto b = train(c, ds.train, tc);
        CHECK(a.params == b.params);
        CHECK(a.loss_history == b.loss_history);
        CHECK(seen == a.loss_history);
        REQUIRE(a.loss_history.size() == 15);
        CHECK(a.loss_history.back() < a.loss_history.front());
        auto other = c;
        other.init_seed = c.init_seed + 1;
        CHECK_FALSE(train(other, ds.train, tc).loss_history == a.loss_history);
    }
    CHECK_THROWS_AS(train(resolved(ModelKind::lr), std::vector<GraphSample>{}, quick()), ContractError);

    // a huge SGD step blows up and names where
    auto tc = quick(5);
    tc.optimizer = OptimizerKind::sgd;
    tc.learning_rate = 1e200;
    CHECK_THROWS_AS(train(resolved(ModelKind::fcn), ds.train, tc), DivergenceError);
}

TEST_CASE("experiments") {
    const auto& ds = small_dataset();
    const auto dir = scratch("exp");
    std::vector<ModelConfig> cfgs{resolved(ModelKind::lr), resolved(ModelKind::gcn)};
    auto tc = quick(2, 3);
    ExperimentOptions opts;
    opts.log_dir = dir / "logs";
    const auto rep = run_experiment(cfgs, ds, tc, opts);
    REQUIRE(rep.models.size() == 2);
    CHECK(rep.models[0].config.kind == ModelKind::lr);
    CHECK(rep.models[1].config.kind == ModelKind::gcn);
    for (const auto& m : rep.models) {
        CHECK(m.runs.size() == 3);
        CHECK_FALSE(m.single_run);
        CHECK(m.param_count == expected_param_count(m.config));
        // the report means are recomputed from the per-run logs
        std::vector<double> acc, f1;
        for (std::size_t r = 0; r < 3; ++r) {
            CHECK(m.runs[r].init_seed == tc.seed + r);
            std::ifstream in(dir / "logs" / run_log_name(m.config, r));
            std::string line, last;
            std::size_t lines = 0;
            while (std::getline(in, line)) {
                last = line;
                ++lines;
            }
            CHECK(lines == tc.epochs + 1);
            const auto j = nlohmann::json::parse(last);
            CHECK(j["event"] == "result");
            acc.push_back(j["accuracy"].get<double>());
            f1.push_back(j["macro_f1"].get<double>());
        }
        double am = 0.0, fm = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
            am += acc[r] / 3.0;
            fm += f1[r] / 3.0;
        }
        double av = 0.0;
        for (double a : acc) av += (a - am) * (a - am) / 2.0;
        CHECK(m.accuracy_mean == doctest::Approx(am).epsilon(1e-12));
        CHECK(m.f1_mean == doctest::Approx(fm).epsilon(1e-12));
        CHECK(m.accuracy_std == doctest::Approx(std::sqrt(av)).epsilon(1e-9));
        const auto best = m.best_run();
        for (const auto& r : m.runs) CHECK(r.train_metrics.macro_f1 <= m.runs[best].train_metrics.macro_f1);
    }

    // worker count never changes the result
    tc.jobs = 2;
    CHECK(report_to_json(run_experiment(cfgs, ds, tc)) == report_to_json(rep));

    // a single run has std 0 and is flagged
    const auto one = run_experiment({cfgs[0]}, ds, quick(2, 1));
    CHECK(one.models[0].single_run);
    CHECK(one.models[0].accuracy_std == 0.0);
    CHECK(one.models[0].f1_std == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("mean and std") {
    const std::vector<double> v{1, 2, 3, 4};
    const auto [m, s] = mean_and_std(v);
    CHECK(m == 2.5);
    CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(mean_and_std(std::vector<double>{7}).second == 0.0);
}

TEST_CASE("checkpoints") {
    const auto dir = scratch("ckpt");
    Checkpoint ck{resolved(ModelKind::graphpde), {}, preprocessing_of(small_dataset())};
    ck.params = train(ck.config, small_dataset().train, quick(1)).params;
    save_checkpoint(ck, dir / "a.json");
    const auto back = load_checkpoint(dir / "a.json");
    CHECK(back.params == ck.params);
    CHECK(back.config.kind == ck.config.kind);
    CHECK(back.config.num_layers == ck.config.num_layers);
    CHECK(back.config.kernel_net_hidden == ck.config.kernel_net_hidden);
    CHECK(back.config.position_center == ck.config.position_center);
    CHECK(back.config.position_scale == ck.config.position_scale);
    CHECK(back.config.edge_attr_scale == ck.config.edge_attr_scale);
    REQUIRE(back.preprocessing.has_value());
    CHECK(back.preprocessing->gene_names == small_dataset().gene_names);
    CHECK(back.preprocessing->radius == small_dataset().radius);
    // same bytes after a second save
    save_checkpoint(back, dir / "b.json");
    CHECK(read_file(dir / "a.json") == read_file(dir / "b.json"));

    auto j = nlohmann::json::parse(read_file(dir / "a.json"));
    auto tampered = j;
    tampered["params"][3]["values"].erase(0);
    tampered["params"][3]["rows"] = tampered["params"][3]["rows"].get<int>() - 1;
    const std::string name = tampered["params"][3]["name"];
    try {
        checkpoint_from_json(tampered.dump());
        FAIL("expected a load error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find(name) != std::string::npos);
    }
    auto missing = j;
    missing["params"].erase(missing["params"].begin() + 2);
    CHECK_THROWS_AS(checkpoint_from_json(missing.dump()), LoadError);
    auto version = j;
    version["version"] = 99;
    CHECK_THROWS_AS(checkpoint_from_json(version.dump()), LoadError);
    CHECK_THROWS_AS(checkpoint_from_json("{not json"), LoadError);
    CHECK_THROWS_AS(load_checkpoint(dir / "nope.json"), LoadError);
    fs::remove_all(dir);
}

TEST_CASE("report table grammar") {
    const auto& ds = small_dataset();
    std::vector<ModelConfig> cfgs{resolved(ModelKind::lr), resolved(ModelKind::spatial_gcn)};
    for (std::size_t runs : {1u, 2u}) {
        auto tc = quick(1, runs);
        tc.f1 = runs == 1 ? F1Mode::weighted : F1Mode::macro;
        const auto rep = run_experiment(cfgs, ds, tc);
        std::istringstream in(format_report_table(rep));
        std::vector<std::string> lines;
        for (std::string l; std::getline(in, l);) lines.push_back(l);
        REQUIRE(lines.size() == (runs == 1 ? 5u : 4u));
        CHECK(std::regex_match(lines[0], std::regex(R"(^model\s+accuracy \(%\)\s+(macro|weighted)-F1 \(%\)\s+params$)")));
        const std::regex row(R"(^(\S+)\s+(\d+\.\d{2}) ± (\d+\.\d{2})\s+(\d+\.\d{2}) ± (\d+\.\d{2})\s+(\d+)( \*)?$)");
        for (std::size_t i = 0; i < 2; ++i) {
            std::smatch m;
            REQUIRE(std::regex_match(lines[1 + i], m, row));
            const auto& mr = rep.models[i];
            CHECK(m[1] == to_string(mr.config.kind));
            CHECK(std::abs(std::stod(m[2]) - 100 * mr.accuracy_mean) <= 0.005 + 1e-9);
            CHECK(std::abs(std::stod(m[4]) - 100 * mr.f1_mean) <= 0.005 + 1e-9);
            CHECK(std::stoul(m[6]) == mr.param_count);
            CHECK(m[7].matched == (runs == 1));
        }
        // columns line up: the ± sits at the same character offset on every row
        CHECK(lines[1].find("±") == lines[2].find("±"));
        CHECK(lines[3] == "runs: " + std::to_string(runs) + ", epochs: 1");
        if (runs == 1) CHECK(lines[4] == "* single run, std not defined");
    }
}
