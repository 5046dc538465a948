#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "stgno/errors.hpp"
#include "stgno/training.hpp"
#include "stgno/util.hpp"

namespace stgno {

using nlohmann::json;

namespace {

json config_to_json(const ModelConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"input_dim", c.input_dim},
            {"hidden_dim", c.hidden_dim},
            {"num_classes", c.num_classes},
            {"num_layers", c.num_layers},
            {"activation", to_string(c.activation)},
            {"kernel_net_hidden", c.kernel_net_hidden},
            {"bandwidth", c.bandwidth},
            {"row_normalize", c.row_normalize},
            {"use_positions", c.use_positions},
            {"position_center", c.position_center},
            {"position_scale", c.position_scale},
            {"position_gain", c.position_gain},
            {"edge_attr_scale", c.edge_attr_scale},
            {"init_seed", c.init_seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.kernel_net_hidden = j.at("kernel_net_hidden").get<std::vector<std::size_t>>();
    c.bandwidth = j.at("bandwidth").get<double>();
    c.row_normalize = j.at("row_normalize").get<bool>();
    c.use_positions = j.at("use_positions").get<bool>();
    c.position_center = j.at("position_center").get<std::array<double, 2>>();
    c.position_scale = j.at("position_scale").get<double>();
    c.position_gain = j.at("position_gain").get<double>();
    c.edge_attr_scale = j.at("edge_attr_scale").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

json train_config_to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"learning_rate", t.learning_rate},
            {"optimizer", to_string(t.optimizer)},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"epsilon", t.epsilon},
            {"seed", t.seed},
            {"num_runs", t.num_runs},
            {"class_weighting", t.class_weighting},
            {"f1", to_string(t.f1)}};
}

json metrics_json(const Metrics& m) {
    return {{"total", m.total},
            {"accuracy", m.accuracy},
            {"macro_f1", m.macro_f1},
            {"weighted_f1", m.weighted_f1},
            {"per_class_f1", m.per_class_f1},
            {"confusion", m.confusion}};
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return buf;
}

// pads to a display width; counts UTF-8 code points, not bytes
std::string pad(std::string s, std::size_t width) {
    const auto shown = static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char ch) { return (static_cast<unsigned char>(ch) & 0xC0) != 0x80; }));
    if (shown < width) s.append(width - shown, ' ');
    return s;
}

}  // namespace

Preprocessing preprocessing_of(const PreparedDataset& dataset) {
    return {dataset.gene_names, dataset.class_names, dataset.standardization, dataset.radius};
}

std::string checkpoint_to_json(const Checkpoint& ck) {
    json params = json::array();
    for (const auto& p : ck.params) {
        json rows = json::array();
        for (std::size_t r = 0; r < p.value.rows(); ++r) {
            auto row = p.value.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"values", rows}});
    }
    json j = {{"format", "stgno-checkpoint"},
              {"version", kCheckpointVersion},
              {"config", config_to_json(ck.config)},
              {"params", params}};
    if (ck.preprocessing) {
        const auto& pp = *ck.preprocessing;
        j["preprocessing"] = {{"gene_names", pp.gene_names},
                              {"class_names", pp.class_names},
                              {"radius", pp.radius},
                              {"standardization",
                               {{"enabled", pp.standardization.enabled},
                                {"mean", pp.standardization.mean},
                                {"scale", pp.standardization.scale}}}};
    }
    return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw LoadError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (!j.is_object() || j.value("format", "") != "stgno-checkpoint") throw LoadError("not a checkpoint file");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw LoadError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
        }
        Checkpoint ck;
        ck.config = config_from_json(j.at("config"));
        ck.config.validate();

        // Expected layout comes from the configuration; the file must match it exactly.
        const ParameterSet expected = init_params(ck.config);
        std::map<std::string, const json*> stored;
        for (const auto& p : j.at("params")) stored[p.at("name").get<std::string>()] = &p;
        for (const auto& e : expected) {
            auto it = stored.find(e.name);
            if (it == stored.end()) throw LoadError("checkpoint is missing parameter '" + e.name + "'");
            const json& p = *it->second;
            const auto rows = p.at("rows").get<std::size_t>();
            const auto cols = p.at("cols").get<std::size_t>();
            const auto values = p.at("values").get<std::vector<std::vector<double>>>();
            bool ragged = values.size() != rows;
            for (const auto& row : values) ragged = ragged || row.size() != cols;
            if (rows != e.value.rows() || cols != e.value.cols() || ragged) {
                throw LoadError("parameter '" + e.name + "' has shape " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", expected " + e.value.shape_string());
            }
            DenseMatrix m(rows, cols);
            for (std::size_t r = 0; r < rows; ++r) std::copy(values[r].begin(), values[r].end(), m.row(r).begin());
            ck.params.add(e.name, std::move(m));
        }
        if (stored.size() != expected.size()) {
            for (const auto& [name, _] : stored)
                if (!expected.find(name)) throw LoadError("checkpoint has unexpected parameter '" + name + "'");
        }
        if (j.contains("preprocessing")) {
            const auto& pj = j.at("preprocessing");
            Preprocessing pp;
            pp.gene_names = pj.at("gene_names").get<std::vector<std::string>>();
            pp.class_names = pj.at("class_names").get<std::vector<std::string>>();
            pp.radius = pj.at("radius").get<double>();
            const auto& st = pj.at("standardization");
            pp.standardization.enabled = st.at("enabled").get<bool>();
            pp.standardization.mean = st.at("mean").get<std::vector<double>>();
            pp.standardization.scale = st.at("scale").get<std::vector<double>>();
            ck.preprocessing = std::move(pp);
        }
        return ck;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed checkpoint: ") + e.what());
    } catch (const ParameterError& e) {
        throw LoadError(std::string("checkpoint configuration rejected: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    write_file_atomic(path, checkpoint_to_json(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw LoadError(e.what());
    }
    return checkpoint_from_json(text);
}

std::string format_report_table(const RunReport& report) {
    const std::string f1_head = to_string(report.train_config.f1) + "-F1 (%)";
    std::size_t name_w = 5;
    for (const auto& m : report.models) name_w = std::max(name_w, to_string(m.config.kind).size());
    name_w += 2;
    const std::size_t col_w = 18;

    std::string out = pad("model", name_w) + pad("accuracy (%)", col_w) + pad(f1_head, col_w) + "params\n";
    bool any_single = false;
    for (const auto& m : report.models) {
        out += pad(to_string(m.config.kind), name_w);
        out += pad(percent(m.accuracy_mean) + " ± " + percent(m.accuracy_std), col_w);
        out += pad(percent(m.f1_mean) + " ± " + percent(m.f1_std), col_w);
        out += std::to_string(m.param_count);
        if (m.single_run) {
            out += " *";
            any_single = true;
        }
        out += "\n";
    }
    out += "runs: " + std::to_string(report.train_config.num_runs) +
           ", epochs: " + std::to_string(report.train_config.epochs) + "\n";
    if (any_single) out += "* single run, std not defined\n";
    return out;
}

std::string report_to_json(const RunReport& report) {
    json models = json::array();
    for (const auto& m : report.models) {
        json runs = json::array();
        for (const auto& r : m.runs) {
            runs.push_back({{"run", r.run_index},
                            {"seed", r.init_seed},
                            {"final_loss", r.loss_history.empty() ? 0.0 : r.loss_history.back()},
                            {"train", metrics_json(r.train_metrics)},
                            {"holdout", metrics_json(r.holdout_metrics)}});
        }
        models.push_back({{"model", to_string(m.config.kind)},
                          {"config", config_to_json(m.config)},
                          {"params", m.param_count},
                          {"accuracy_mean", m.accuracy_mean},
                          {"accuracy_std", m.accuracy_std},
                          {"f1_mean", m.f1_mean},
                          {"f1_std", m.f1_std},
                          {"single_run", m.single_run},
                          {"best_run", m.runs.empty() ? 0 : m.best_run()},
                          {"runs", runs}});
    }
    json j = {{"train_config", train_config_to_json(report.train_config)}, {"models", models}};
    return j.dump(2) + "\n";
}

std::string metrics_to_json(const Metrics& metrics, const std::vector<std::string>& class_names) {
    json j = metrics_json(metrics);
    j["class_names"] = class_names;
    return j.dump(2) + "\n";
}

}  // namespace stgno
