// stgno: synth / prepare / train / eval / report / predict
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stgno/data.hpp"
#include "stgno/dataset_io.hpp"
#include "stgno/errors.hpp"
#include "stgno/models.hpp"
#include "stgno/training.hpp"
#include "stgno/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stgno;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << "error[" << kind << "]: " << one_line(message) << "\n";
    return code;
}

std::string command_line(const std::vector<std::string>& args) {
    std::string out = "stgno";
    for (const auto& a : args) {
        out += ' ';
        if (a.find_first_of(" \t\"'") != std::string::npos) out += '\'' + a + '\'';
        else out += a;
    }
    return out;
}

// "auto" or a number
std::optional<double> auto_or_double(const std::string& text, const std::string& flag) {
    if (text == "auto") return std::nullopt;
    double v = 0.0;
    if (!parse_double(text, v)) throw ParameterError(flag + " expects a number or 'auto', got '" + text + "'");
    return v;
}

std::optional<std::size_t> auto_or_count(const std::string& text, const std::string& flag) {
    if (text == "auto") return std::nullopt;
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
        throw ParameterError(flag + " expects a non-negative integer or 'auto', got '" + text + "'");
    }
    return v;
}

void ensure_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

void ensure_parent_dir(const fs::path& file) {
    const fs::path parent = file.parent_path();
    if (!parent.empty()) ensure_output_dir(parent);
}

// Appends "--key value" for config-file keys not already given on the command line.
std::vector<std::string> merge_config(std::vector<std::string> args) {
    std::optional<std::string> config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!config_path) return args;

    json j;
    try {
        j = json::parse(read_file(*config_path));
    } catch (const json::exception& e) {
        throw ParseError(*config_path + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(*config_path + ": config must be a JSON object");

    auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
    };
    std::vector<std::string> extra;
    for (const auto& [key, value] : j.items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (flag == "--config" || given(flag)) continue;
        std::string text;
        if (value.is_string()) text = value.get<std::string>();
        else if (value.is_boolean()) text = value.get<bool>() ? "true" : "false";
        else if (value.is_array()) {
            for (const auto& v : value) {
                if (!text.empty()) text += ',';
                text += v.is_string() ? v.get<std::string>() : v.dump();
            }
        } else text = value.dump();
        extra.push_back(flag);
        extra.push_back(text);
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    SyntheticConfig cfg;
    std::string mode = "informative";
};

int run_synth(const SynthArgs& a) {
    SyntheticConfig cfg = a.cfg;
    cfg.expression_mode = expression_mode_from_string(a.mode);
    cfg.validate();
    ensure_output_dir(a.out);
    const auto ds = generate_synthetic(cfg);
    const fs::path dir = a.out;
    write_spot_table(ds.table, dir / "spots.csv");
    write_gene_list(ds.table.gene_names, dir / "genes.txt");
    write_label_map(ds.label_map, dir / "labels.tsv");
    std::cout << "wrote " << ds.table.num_spots() << " spots (" << cfg.num_samples << " samples x "
              << cfg.spots_per_sample << " spots, " << cfg.num_genes << " genes, mode " << a.mode << ") to "
              << dir.string() << "\n";
    return 0;
}

struct PrepareArgs {
    std::string spots, genes, labels, out;
    std::string radius = "auto";
    PrepareOptions opts;
};

int run_prepare(const PrepareArgs& a) {
    PrepareOptions opts = a.opts;
    opts.radius = auto_or_double(a.radius, "--radius");
    ensure_output_dir(a.out);
    const auto genes = load_gene_list(a.genes);
    const auto labels = load_label_map(a.labels);
    LoadOptions lo;
    lo.keep_genes = genes;
    const auto table = load_spot_table(a.spots, lo);
    auto ds = prepare_dataset(table, genes, labels, opts);
    ds.flags.emplace_back("spots", a.spots);
    ds.flags.emplace_back("genes", a.genes);
    ds.flags.emplace_back("labels", a.labels);
    write_prepared_dataset(ds, a.out);

    std::size_t n_train = 0, n_hold = 0;
    std::vector<std::size_t> per_class(ds.num_classes(), 0);
    for (const auto& g : ds.train) {
        n_train += g.num_nodes();
        for (int l : g.labels) ++per_class[static_cast<std::size_t>(l)];
    }
    for (const auto& g : ds.holdout) n_hold += g.num_nodes();
    std::cout << "spots: " << n_train + n_hold << " (train " << n_train << " in " << ds.train.size()
              << " samples, holdout " << n_hold << " in " << ds.holdout.size() << " samples)\n";
    std::cout << "features: " << ds.num_features() << " genes\n";
    std::cout << "classes (train spots):";
    for (std::size_t c = 0; c < ds.num_classes(); ++c) std::cout << " " << ds.class_names[c] << "=" << per_class[c];
    std::cout << "\n";
    std::cout << "radius: " << format_double(ds.radius) << " (" << ds.radius_source << ")\n";
    std::cout << "train degrees: " << degree_summary_line(ds.train_degrees) << "\n";
    std::cout << "holdout degrees: " << degree_summary_line(ds.holdout_degrees) << "\n";
    std::cout << "holdout: ";
    for (std::size_t i = 0; i < ds.split.holdout_sample_ids.size(); ++i)
        std::cout << (i ? "," : "") << ds.split.holdout_sample_ids[i];
    std::cout << "\n";
    for (const auto& w : ds.warnings) std::cerr << "warning: " << one_line(w) << "\n";
    return 0;
}

struct ModelArgs {
    std::size_t hidden = 16;
    std::string layers = "auto";
    std::string activation = "relu";
    std::string bandwidth = "auto";
    std::size_t kernel_hidden = 64;
    double position_gain = 5.0;
};

ModelConfig build_model_config(ModelKind kind, const ModelArgs& m, const PreparedDataset& ds) {
    ModelConfig cfg = default_model_config(kind, ds.num_features());
    cfg.num_classes = ds.num_classes();
    cfg.hidden_dim = m.hidden;
    if (auto layers = auto_or_count(m.layers, "--layers")) cfg.num_layers = *layers;
    cfg.activation = activation_from_string(m.activation);
    if (auto bw = auto_or_double(m.bandwidth, "--bandwidth")) {
        if (!(*bw > 0.0)) throw ParameterError("--bandwidth must be positive");
        cfg.bandwidth = *bw;
    }
    cfg.kernel_net_hidden = {m.kernel_hidden};
    cfg.position_gain = m.position_gain;
    return resolve_for_dataset(cfg, ds);
}

struct TrainingArgs {
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::size_t runs = 10;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string f1 = "macro";
    std::string optimizer = "adam";
};

TrainConfig build_train_config(const TrainingArgs& t) {
    TrainConfig tc;
    tc.epochs = t.epochs;
    tc.learning_rate = t.lr;
    tc.num_runs = t.runs;
    tc.seed = t.seed;
    tc.jobs = t.jobs;
    tc.f1 = f1_mode_from_string(t.f1);
    tc.optimizer = optimizer_from_string(t.optimizer);
    tc.validate();
    return tc;
}

struct TrainArgs {
    std::string data, out;
    std::string model = "GraphPDE";
    ModelArgs m;
    TrainingArgs t;
};

int run_train(const TrainArgs& a) {
    const ModelKind kind = model_kind_from_string(a.model);
    const TrainConfig tc = build_train_config(a.t);
    const auto ds = read_prepared_dataset(a.data);
    const ModelConfig cfg = build_model_config(kind, a.m, ds);
    const fs::path out = a.out;
    ensure_output_dir(out);

    ExperimentOptions eo;
    eo.log_dir = out / "logs";
    const RunReport report = run_experiment({cfg}, ds, tc, eo);
    const ModelReport& mr = report.models.front();
    for (const auto& run : mr.runs) {
        Checkpoint ck{mr.config, run.params, preprocessing_of(ds)};
        ck.config.init_seed = run.init_seed;
        save_checkpoint(ck, out / ("run_" + std::to_string(run.run_index) + ".ckpt.json"));
    }
    const auto& best = mr.runs[mr.best_run()];
    Checkpoint ck{mr.config, best.params, preprocessing_of(ds)};
    ck.config.init_seed = best.init_seed;
    save_checkpoint(ck, out / "best.ckpt.json");
    write_file_atomic(out / "report.json", report_to_json(report));

    std::cout << format_report_table(report);
    std::cout << "best run: " << best.run_index << " (train macro-F1 " << format_double(best.train_metrics.macro_f1)
              << ")\n";
    return 0;
}

void check_compatible(const Checkpoint& ck, const PreparedDataset& ds) {
    if (ck.config.input_dim != ds.num_features() || ck.config.num_classes != ds.num_classes()) {
        throw ContractError("checkpoint expects " + std::to_string(ck.config.input_dim) + " features and " +
                            std::to_string(ck.config.num_classes) + " classes, prepared data has " +
                            std::to_string(ds.num_features()) + " and " + std::to_string(ds.num_classes()));
    }
    if (ck.preprocessing && ck.preprocessing->gene_names != ds.gene_names) {
        throw ContractError("checkpoint was trained on a different gene list");
    }
}

struct EvalArgs {
    std::string data, checkpoint, out;
    std::string split = "holdout";
};

int run_eval(const EvalArgs& a) {
    if (a.split != "holdout" && a.split != "train") throw ParameterError("--split must be holdout or train");
    const auto ck = load_checkpoint(a.checkpoint);
    const auto ds = read_prepared_dataset(a.data);
    check_compatible(ck, ds);
    const auto& graphs = a.split == "holdout" ? ds.holdout : ds.train;
    const Metrics m = evaluate(ck.config, ck.params, graphs);
    const std::string text = metrics_to_json(m, ds.class_names);
    if (!a.out.empty()) {
        ensure_parent_dir(a.out);
        write_file_atomic(a.out, text);
    }
    std::cout << text;
    return 0;
}

struct ReportArgs {
    std::string data, out, log_dir, table;
    std::vector<std::string> models = model_names();
    ModelArgs m;
    TrainingArgs t;
};

int run_report(const ReportArgs& a) {
    const TrainConfig tc = build_train_config(a.t);
    std::vector<ModelKind> kinds;
    for (const auto& name : a.models) kinds.push_back(model_kind_from_string(name));
    if (kinds.empty()) throw ParameterError("--models is empty");
    const auto ds = read_prepared_dataset(a.data);
    std::vector<ModelConfig> configs;
    for (ModelKind k : kinds) {
        ModelArgs m = a.m;
        // one --layers value cannot suit LR (no hidden blocks) and GraphPDE alike
        if (k == ModelKind::lr) m.layers = "auto";
        configs.push_back(build_model_config(k, m, ds));
    }
    if (!a.out.empty()) ensure_parent_dir(a.out);
    if (!a.table.empty()) ensure_parent_dir(a.table);

    ExperimentOptions eo;
    if (!a.log_dir.empty()) eo.log_dir = fs::path(a.log_dir);
    const RunReport report = run_experiment(configs, ds, tc, eo);
    const std::string table = format_report_table(report);
    if (!a.out.empty()) write_file_atomic(a.out, report_to_json(report));
    if (!a.table.empty()) write_file_atomic(a.table, table);
    std::cout << table;
    return 0;
}

struct PredictArgs {
    std::string checkpoint, spots, out;
};

int run_predict(const PredictArgs& a) {
    const auto ck = load_checkpoint(a.checkpoint);
    if (!ck.preprocessing) throw ContractError("checkpoint carries no preprocessing record; cannot rebuild inputs");
    const Preprocessing& pp = *ck.preprocessing;
    if (pp.gene_names.size() != ck.config.input_dim || pp.class_names.size() != ck.config.num_classes) {
        throw ContractError("checkpoint preprocessing record disagrees with its model configuration");
    }
    ensure_parent_dir(a.out);
    LoadOptions lo;
    lo.keep_genes = pp.gene_names;
    const auto raw = load_spot_table(a.spots, lo);
    auto filtered = filter_genes(raw, pp.gene_names);
    if (!filtered.missing.empty()) {
        throw ContractError("spot table lacks " + std::to_string(filtered.missing.size()) +
                            " gene(s) the checkpoint was trained on, first '" + filtered.missing.front() + "'");
    }
    SpotTable& table = filtered.table;

    std::map<std::string, std::vector<std::size_t>> rows_of;
    for (std::size_t i = 0; i < table.num_spots(); ++i) rows_of[table.sample_ids[i]].push_back(i);
    std::vector<int> predicted(table.num_spots(), 0);
    for (const auto& [sid, rows] : rows_of) {
        GraphSample g = make_graph_sample(table, rows, sid, pp.radius);
        pp.standardization.apply(g.features);
        const auto pred = argmax_rows(predict_logits(ck.config, ck.params, make_context(ck.config, g)));
        for (std::size_t k = 0; k < rows.size(); ++k) predicted[rows[k]] = pred[k];
    }

    std::string csv = "sample_id,x,y,predicted_class\n";
    for (std::size_t i = 0; i < table.num_spots(); ++i) {
        csv += table.sample_ids[i] + "," + format_double(table.positions(i, 0)) + "," +
               format_double(table.positions(i, 1)) + "," + pp.class_names[static_cast<std::size_t>(predicted[i])] +
               "\n";
    }
    write_file_atomic(a.out, csv);
    std::cout << "wrote " << table.num_spots() << " predictions to " << a.out << "\n";
    return 0;
}

void add_model_options(CLI::App* app, ModelArgs& m) {
    app->add_option("--hidden", m.hidden, "Hidden width");
    app->add_option("--layers", m.layers, "Hidden blocks; auto = 6 for GraphPDE, 2 otherwise");
    app->add_option("--activation", m.activation, "relu, tanh or identity");
    app->add_option("--bandwidth", m.bandwidth, "Gaussian kernel bandwidth; auto = radius / 2");
    app->add_option("--kernel-hidden", m.kernel_hidden, "Hidden width of the GraphPDE edge kernel network");
    app->add_option("--position-gain", m.position_gain, "Multiplier on standardised coordinates (graph models)");
}

void add_training_options(CLI::App* app, TrainingArgs& t) {
    app->add_option("--epochs", t.epochs, "Training epochs");
    app->add_option("--lr", t.lr, "Learning rate");
    app->add_option("--runs", t.runs, "Independent runs (seeds seed .. seed+runs-1)");
    app->add_option("--seed", t.seed, "Base seed");
    app->add_option("--jobs", t.jobs, "Worker threads for independent runs");
    app->add_option("--f1", t.f1, "F1 flavour in the summary: macro or weighted");
    app->add_option("--optimizer", t.optimizer, "adam or sgd");
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> original(argv + 1, argv + argc);

    CLI::App app{"Graph neural operators for spatial transcriptomics region classification", "stgno"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    std::string config_file;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "JSON file whose keys mirror flags; flags win");
    };

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write a synthetic spot table, gene list and label map");
    c_synth->add_option("--out", synth.out, "Output directory")->required();
    c_synth->add_option("--samples", synth.cfg.num_samples, "Number of slides");
    c_synth->add_option("--spots", synth.cfg.spots_per_sample, "Spots per slide");
    c_synth->add_option("--genes", synth.cfg.num_genes, "Genes per spot");
    c_synth->add_option("--mode", synth.mode, "informative or noise_only");
    c_synth->add_option("--separation", synth.cfg.class_separation, "Class mean offset (informative mode)");
    c_synth->add_option("--noise", synth.cfg.noise_scale, "Expression noise standard deviation");
    c_synth->add_option("--seed", synth.cfg.seed, "Generator seed");
    add_config(c_synth);

    PrepareArgs prep;
    auto* c_prep = app.add_subcommand("prepare", "Filter, bin, split and build radius graphs");
    c_prep->add_option("--spots", prep.spots, "Spot table CSV")->required()->check(CLI::ExistingFile);
    c_prep->add_option("--genes", prep.genes, "Gene list, one per line")->required()->check(CLI::ExistingFile);
    c_prep->add_option("--labels", prep.labels, "Label map TSV (raw_label<TAB>class)")
        ->required()
        ->check(CLI::ExistingFile);
    c_prep->add_option("--radius", prep.radius, "Radius graph cutoff; auto = median degree 6 on training slides");
    c_prep->add_option("--holdout-k", prep.opts.holdout_k, "Slides held out for validation");
    c_prep->add_option("--min-classes", prep.opts.min_classes, "Distinct raw labels a holdout slide must cover");
    c_prep->add_option("--standardize", prep.opts.standardize, "Per-gene standardisation fit on training spots");
    c_prep->add_option("--seed", prep.opts.seed, "Split seed");
    c_prep->add_option("--out", prep.out, "Prepared dataset directory")->required();
    add_config(c_prep);

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train one model for several runs and write checkpoints");
    c_train->add_option("--data", tr.data, "Prepared dataset directory")->required()->check(CLI::ExistingDirectory);
    c_train->add_option("--model", tr.model, "LR, FCN, GCN, SpatialKernel, SpatialGCN or GraphPDE");
    add_model_options(c_train, tr.m);
    add_training_options(c_train, tr.t);
    c_train->add_option("--out", tr.out, "Output directory for checkpoints, logs and report.json")->required();
    add_config(c_train);

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on prepared data");
    c_eval->add_option("--data", ev.data, "Prepared dataset directory")->required()->check(CLI::ExistingDirectory);
    c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    c_eval->add_option("--split", ev.split, "holdout or train");
    c_eval->add_option("--out", ev.out, "Also write the metrics JSON here (empty = stdout only)");
    add_config(c_eval);

    ReportArgs rep;
    auto* c_rep = app.add_subcommand("report", "Train and compare several models, print the summary table");
    c_rep->add_option("--data", rep.data, "Prepared dataset directory")->required()->check(CLI::ExistingDirectory);
    c_rep->add_option("--models", rep.models, "Comma-separated model names")->delimiter(',');
    add_model_options(c_rep, rep.m);
    add_training_options(c_rep, rep.t);
    c_rep->add_option("--out", rep.out, "Report JSON path (empty = none)");
    c_rep->add_option("--table", rep.table, "Also write the text table here (empty = stdout only)");
    c_rep->add_option("--log-dir", rep.log_dir, "Per-run JSON-lines logs (empty = none)");
    add_config(c_rep);

    PredictArgs pr;
    auto* c_pred = app.add_subcommand("predict", "Per-spot class predictions for a spot table");
    c_pred->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    c_pred->add_option("--spots", pr.spots, "Spot table CSV")->required()->check(CLI::ExistingFile);
    c_pred->add_option("--out", pr.out, "Prediction CSV (sample_id,x,y,predicted_class)")->required();
    add_config(c_pred);

    try {
        std::vector<std::string> args = merge_config(original);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), kExitUsage);
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), kExitUsage);
    }

    try {
        if (*c_synth) return run_synth(synth);
        if (*c_prep) return run_prepare(prep);
        if (*c_train) return run_train(tr);
        if (*c_eval) return run_eval(ev);
        if (*c_rep) return run_report(rep);
        if (*c_pred) return run_predict(pr);
    } catch (const DivergenceError& e) {
        return fail(e.kind(), std::string(e.what()) + "; reproduce with: " + command_line(original), kExitDivergence);
    } catch (const ParameterError& e) {
        return fail(e.kind(), e.what(), kExitUsage);
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), kExitData);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), kExitData);
    }
    return kExitUsage;
}
