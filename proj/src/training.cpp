#include "stgno/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "stgno/errors.hpp"
#include "stgno/util.hpp"

namespace stgno {

using nlohmann::json;

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw ParameterError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string to_string(F1Mode mode) { return mode == F1Mode::macro ? "macro" : "weighted"; }

F1Mode f1_mode_from_string(const std::string& name) {
    if (name == "macro") return F1Mode::macro;
    if (name == "weighted") return F1Mode::weighted;
    throw ParameterError("unknown F1 flavour '" + name + "' (expected macro or weighted)");
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ParameterError("epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
    if (num_runs == 0) throw ParameterError("num_runs must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw ParameterError("Adam requires 0 <= beta < 1 and epsilon > 0");
    }
}

std::vector<double> class_weights(std::span<const int> labels, std::size_t num_classes) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
            throw IndexError("label " + std::to_string(l) + " out of range for " + std::to_string(num_classes) + " classes");
        }
        ++counts[static_cast<std::size_t>(l)];
    }
    std::vector<double> w(num_classes);
    const auto total = static_cast<double>(labels.size());
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) {
            throw DegenerateDataError("class " + std::to_string(c) + " does not occur in the training labels");
        }
        w[c] = total / (static_cast<double>(num_classes) * static_cast<double>(counts[c]));
    }
    return w;
}

Var weighted_cross_entropy(Var logits, std::span<const int> labels, std::span<const double> weights) {
    return weighted_nll(log_softmax_rows(logits), labels, weights);
}

Optimizer::Optimizer(const ParameterSet& params, const TrainConfig& config) : config_(config) {
    for (const auto& p : params) {
        m_.emplace_back(p.value.rows(), p.value.cols());
        v_.emplace_back(p.value.rows(), p.value.cols());
    }
}

void Optimizer::step(ParameterSet& params, std::size_t step_index) {
    if (params.size() != m_.size()) throw ContractError("optimizer was built for a different parameter set");
    const double lr = config_.learning_rate;
    const double b1 = config_.beta1, b2 = config_.beta2, eps = config_.epsilon;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_index));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_index));
    std::size_t k = 0;
    for (auto& p : params) {
        auto value = p.value.data();
        auto grad = p.grad.data();
        if (config_.optimizer == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
        } else {
            auto m = m_[k].data();
            auto v = v_[k].data();
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                const double mhat = m[i] / c1;
                const double vhat = v[i] / c2;
                value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
        ++k;
    }
    params.zero_grads();
}

Metrics Metrics::from_confusion(std::vector<std::vector<std::size_t>> confusion) {
    Metrics m;
    const std::size_t k = confusion.size();
    for (const auto& row : confusion)
        if (row.size() != k) throw DimensionError("confusion matrix must be square");
    m.confusion = std::move(confusion);
    std::size_t trace = 0;
    std::vector<std::size_t> support(k, 0), predicted(k, 0);
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t p = 0; p < k; ++p) {
            m.total += m.confusion[t][p];
            support[t] += m.confusion[t][p];
            predicted[p] += m.confusion[t][p];
        }
        trace += m.confusion[t][t];
    }
    m.accuracy = m.total == 0 ? 0.0 : static_cast<double>(trace) / static_cast<double>(m.total);
    m.per_class_f1.assign(k, 0.0);
    double macro = 0.0, weighted = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        const double tp = static_cast<double>(m.confusion[c][c]);
        const double precision = predicted[c] == 0 ? 0.0 : tp / static_cast<double>(predicted[c]);
        const double recall = support[c] == 0 ? 0.0 : tp / static_cast<double>(support[c]);
        const double f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        m.per_class_f1[c] = f1;
        macro += f1;
        weighted += f1 * static_cast<double>(support[c]);
    }
    m.macro_f1 = k == 0 ? 0.0 : macro / static_cast<double>(k);
    m.weighted_f1 = m.total == 0 ? 0.0 : weighted / static_cast<double>(m.total);
    return m;
}

std::vector<int> argmax_rows(const DenseMatrix& logits) {
    std::vector<int> out(logits.rows(), 0);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
            if (row[c] > row[best]) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

ModelConfig resolve_for_dataset(ModelConfig config, const PreparedDataset& dataset) {
    config.input_dim = dataset.num_features();
    config.num_classes = dataset.num_classes();
    if (config.bandwidth == 0.0) config.bandwidth = dataset.radius / 2.0;
    config.edge_attr_scale = dataset.radius > 0.0 ? dataset.radius : 1.0;
    if (config.use_positions) {
        double sx = 0, sy = 0, n = 0;
        for (const auto& g : dataset.train)
            for (std::size_t i = 0; i < g.num_nodes(); ++i, n += 1) {
                sx += g.positions.x(i);
                sy += g.positions.y(i);
            }
        const double cx = n > 0 ? sx / n : 0.0, cy = n > 0 ? sy / n : 0.0;
        double vx = 0, vy = 0;
        for (const auto& g : dataset.train)
            for (std::size_t i = 0; i < g.num_nodes(); ++i) {
                vx += (g.positions.x(i) - cx) * (g.positions.x(i) - cx);
                vy += (g.positions.y(i) - cy) * (g.positions.y(i) - cy);
            }
        const double s = n > 0 ? std::sqrt(std::max(vx, vy) / n) : 0.0;
        config.position_center = {cx, cy};
        config.position_scale = (s > 0.0 ? s : 1.0) / config.position_gain;
    }
    config.validate();
    return config;
}

TrainResult train(const ModelConfig& config, std::span<const GraphSample> graphs, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
    tc.validate();
    config.validate();
    if (graphs.empty()) throw ContractError("training set is empty");

    std::vector<GraphContext> contexts;
    std::vector<int> all_labels;
    for (const auto& g : graphs) {
        g.validate(config.num_classes);
        contexts.push_back(make_context(config, g));
        all_labels.insert(all_labels.end(), g.labels.begin(), g.labels.end());
    }
    const std::vector<double> weights = tc.class_weighting ? class_weights(all_labels, config.num_classes)
                                                           : std::vector<double>(config.num_classes, 1.0);

    TrainResult result;
    result.params = init_params(config);
    Optimizer optimizer(result.params, tc);
    Rng order_rng(derive_seed(config.init_seed, 0x0D3E));

    std::vector<std::size_t> order(graphs.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.index(i))]);
        }
        double loss_sum = 0.0;
        std::size_t counted = 0;
        for (std::size_t gi : order) {
            if (graphs[gi].num_nodes() == 0) continue;
            Tape tape;
            BoundParams bound(tape, result.params);
            Var logits = model_forward(config, bound, contexts[gi]);
            Var loss = weighted_cross_entropy(logits, graphs[gi].labels, weights);
            const double lv = loss.value()(0, 0);
            if (!std::isfinite(lv)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1) + " on graph '" +
                                          graphs[gi].sample_id + "'",
                                      static_cast<int>(epoch + 1), graphs[gi].sample_id);
            }
            tape.backward(loss);
            optimizer.step(result.params, ++step);
            loss_sum += lv;
            ++counted;
        }
        const double mean = counted == 0 ? 0.0 : loss_sum / static_cast<double>(counted);
        result.loss_history.push_back(mean);
        if (on_epoch) {
            const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            on_epoch(epoch + 1, mean, elapsed);
        }
    }
    return result;
}

Metrics evaluate(const ModelConfig& config, const ParameterSet& params, std::span<const GraphSample> graphs) {
    if (graphs.empty()) throw ContractError("evaluate needs at least one graph");
    std::vector<std::vector<std::size_t>> confusion(config.num_classes, std::vector<std::size_t>(config.num_classes, 0));
    for (const auto& g : graphs) {
        g.validate(config.num_classes);
        const auto pred = argmax_rows(predict_logits(config, params, make_context(config, g)));
        for (std::size_t i = 0; i < pred.size(); ++i) {
            ++confusion[static_cast<std::size_t>(g.labels[i])][static_cast<std::size_t>(pred[i])];
        }
    }
    return Metrics::from_confusion(std::move(confusion));
}

std::size_t ModelReport::best_run() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i)
        if (runs[i].train_metrics.macro_f1 > runs[best].train_metrics.macro_f1) best = i;
    return best;
}

std::pair<double, double> mean_and_std(std::span<const double> values) {
    if (values.empty()) return {0.0, 0.0};
    double s = 0.0;
    for (double v : values) s += v;
    const double mean = s / static_cast<double>(values.size());
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::string run_log_name(const ModelConfig& config, std::size_t run_index) {
    return to_string(config.kind) + "_run" + std::to_string(run_index) + ".jsonl";
}

RunReport run_experiment(const std::vector<ModelConfig>& configs, const PreparedDataset& dataset,
                         const TrainConfig& tc, const ExperimentOptions& options) {
    tc.validate();
    if (dataset.train.empty()) throw ContractError("prepared dataset has no training graphs");
    if (dataset.holdout.empty()) throw ContractError("prepared dataset has no holdout graphs");
    if (options.log_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*options.log_dir, ec);
        if (ec) throw IoError("cannot create log directory '" + options.log_dir->string() + "'");
    }

    RunReport report;
    report.train_config = tc;
    struct Task {
        std::size_t model;
        std::size_t run;
    };
    std::vector<Task> tasks;
    for (std::size_t m = 0; m < configs.size(); ++m) {
        ModelReport mr;
        mr.config = configs[m];
        mr.config.validate();
        mr.param_count = expected_param_count(mr.config);
        mr.runs.resize(tc.num_runs);
        report.models.push_back(std::move(mr));
        for (std::size_t r = 0; r < tc.num_runs; ++r) tasks.push_back({m, r});
    }

    auto run_task = [&](const Task& t) {
        ModelConfig cfg = report.models[t.model].config;
        cfg.init_seed = tc.seed + t.run;
        std::string log;
        TrainResult tr = train(cfg, dataset.train, tc, [&](std::size_t epoch, double loss, double elapsed) {
            log += json{{"epoch", epoch}, {"mean_loss", loss}, {"elapsed", elapsed}}.dump() + "\n";
        });
        RunRecord& rec = report.models[t.model].runs[t.run];
        rec.run_index = t.run;
        rec.init_seed = cfg.init_seed;
        rec.loss_history = std::move(tr.loss_history);
        rec.train_metrics = evaluate(cfg, tr.params, dataset.train);
        rec.holdout_metrics = evaluate(cfg, tr.params, dataset.holdout);
        rec.params = std::move(tr.params);
        if (options.log_dir) {
            log += json{{"event", "result"},
                        {"seed", rec.init_seed},
                        {"accuracy", rec.holdout_metrics.accuracy},
                        {"macro_f1", rec.holdout_metrics.macro_f1},
                        {"weighted_f1", rec.holdout_metrics.weighted_f1},
                        {"confusion", rec.holdout_metrics.confusion}}
                       .dump() +
                   "\n";
            write_file_atomic(*options.log_dir / run_log_name(cfg, t.run), log);
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(tc.jobs, tasks.size()));
    if (jobs == 1) {
        for (const auto& t : tasks) run_task(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < tasks.size(); i = next++) {
                    try {
                        run_task(tasks[i]);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& w : workers) w.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (auto& mr : report.models) {
        std::vector<double> acc, f1;
        for (const auto& r : mr.runs) {
            acc.push_back(r.holdout_metrics.accuracy);
            f1.push_back(r.holdout_metrics.f1(tc.f1));
        }
        std::tie(mr.accuracy_mean, mr.accuracy_std) = mean_and_std(acc);
        std::tie(mr.f1_mean, mr.f1_std) = mean_and_std(f1);
        mr.single_run = mr.runs.size() == 1;
    }
    return report;
}

}  // namespace stgno
