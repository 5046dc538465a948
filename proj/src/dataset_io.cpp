#include "stgno/dataset_io.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "stgno/errors.hpp"
#include "stgno/util.hpp"

namespace stgno {

using nlohmann::json;

namespace {

json matrix_to_json(const DenseMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows.push_back(json(std::vector<double>(row.begin(), row.end())));
    }
    return rows;
}

DenseMatrix matrix_from_json(const json& j, std::size_t expected_cols, const std::string& what) {
    if (!j.is_array()) throw LoadError(what + ": expected an array of rows");
    DenseMatrix m(j.size(), expected_cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto& row = j[r];
        if (!row.is_array() || row.size() != expected_cols) {
            throw LoadError(what + ": row " + std::to_string(r) + " does not have " + std::to_string(expected_cols) +
                            " entries");
        }
        for (std::size_t c = 0; c < expected_cols; ++c) m(r, c) = row[c].get<double>();
    }
    return m;
}

json degrees_to_json(const DegreeSummary& s) {
    return {{"nodes", s.nodes}, {"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"median", s.median},
            {"isolated", s.isolated}};
}

DegreeSummary degrees_from_json(const json& j) {
    DegreeSummary s;
    s.nodes = j.at("nodes").get<std::size_t>();
    s.min = j.at("min").get<std::size_t>();
    s.max = j.at("max").get<std::size_t>();
    s.mean = j.at("mean").get<double>();
    s.median = j.at("median").get<double>();
    s.isolated = j.at("isolated").get<std::size_t>();
    return s;
}

json sample_to_json(const GraphSample& g) {
    json edges = json::array();
    for (const auto& e : g.graph.edges) edges.push_back({e.src, e.dst});
    return {{"sample_id", g.sample_id},
            {"radius", g.graph.radius},
            {"positions", matrix_to_json(g.positions.positions())},
            {"features", matrix_to_json(g.features)},
            {"edges", edges},
            {"edge_attr", matrix_to_json(g.graph.edge_attr)},
            {"labels", g.labels}};
}

GraphSample sample_from_json(const json& j, std::size_t num_features, std::size_t num_classes) {
    GraphSample g;
    g.sample_id = j.at("sample_id").get<std::string>();
    const std::string what = "sample '" + g.sample_id + "'";
    g.positions = PointSet(matrix_from_json(j.at("positions"), 2, what + " positions"));
    g.features = matrix_from_json(j.at("features"), num_features, what + " features");
    g.labels = j.at("labels").get<std::vector<int>>();
    g.graph.num_nodes = g.positions.size();
    g.graph.radius = j.at("radius").get<double>();
    for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2) throw LoadError(what + ": malformed edge");
        g.graph.edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
    }
    g.graph.edge_attr = matrix_from_json(j.at("edge_attr"), kEdgeAttrDim, what + " edge_attr");
    g.validate(num_classes);
    return g;
}

std::vector<const RadiusGraph*> graph_ptrs(const std::vector<GraphSample>& samples) {
    std::vector<const RadiusGraph*> out;
    for (const auto& g : samples) out.push_back(&g.graph);
    return out;
}

}  // namespace

std::string degree_summary_line(const DegreeSummary& s) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "nodes=%zu degree min=%zu median=%g mean=%.3f max=%zu isolated=%zu", s.nodes, s.min,
                  s.median, s.mean, s.max, s.isolated);
    return buf;
}

PreparedDataset prepare_dataset(const SpotTable& table, const std::vector<std::string>& gene_list,
                                const LabelMap& label_map, const PrepareOptions& options) {
    auto filtered = filter_genes(table, gene_list);
    SpotTable binned = bin_labels(std::move(filtered.table), label_map);
    DatasetSplit split = select_holdout(binned, options.holdout_k, options.min_classes, options.seed);

    PreparedDataset ds;
    ds.seed = options.seed;
    ds.class_names = label_map.class_names;
    ds.gene_names = binned.gene_names;
    ds.missing_genes = filtered.missing;

    if (options.radius) {
        ds.radius = *options.radius;
        ds.radius_source = "flag";
    } else {
        // Infer from the training slides only.
        std::set<std::string> train_ids(split.train_sample_ids.begin(), split.train_sample_ids.end());
        std::map<std::string, std::vector<double>> coords;
        for (std::size_t i = 0; i < binned.num_spots(); ++i) {
            if (!train_ids.contains(binned.sample_ids[i])) continue;
            auto& v = coords[binned.sample_ids[i]];
            v.push_back(binned.positions(i, 0));
            v.push_back(binned.positions(i, 1));
        }
        std::vector<PointSet> sets;
        for (auto& [id, v] : coords) {
            const std::size_t n = v.size() / 2;
            sets.emplace_back(DenseMatrix(n, 2, std::move(v)));
        }
        std::vector<const PointSet*> ptrs;
        for (const auto& s : sets) ptrs.push_back(&s);
        ds.radius = radius_for_median_degree(ptrs, kTargetMedianDegree);
        ds.radius_source = "median-degree-" + std::to_string(kTargetMedianDegree);
        if (!(ds.radius > 0.0)) {
            throw ParameterError("cannot infer a radius from the training slides (too few distinct spots); pass --radius");
        }
    }

    auto assembled = assemble_graphs(binned, split, ds.radius, options.standardize);
    ds.split = std::move(split);
    ds.standardization = std::move(assembled.standardization);
    ds.warnings = std::move(assembled.warnings);
    ds.train = std::move(assembled.train);
    ds.holdout = std::move(assembled.holdout);
    ds.train_degrees = summarize_degrees(graph_ptrs(ds.train));
    ds.holdout_degrees = summarize_degrees(graph_ptrs(ds.holdout));
    if (ds.train_degrees.median < 3.0 || ds.train_degrees.median > 12.0) {
        ds.warnings.push_back("median training degree " + format_double(ds.train_degrees.median) +
                              " is outside [3, 12]; consider adjusting --radius");
    }
    if (!ds.missing_genes.empty()) {
        ds.warnings.push_back(std::to_string(ds.missing_genes.size()) + " listed gene(s) not found in the spot table");
    }

    ds.flags = {{"radius", options.radius ? format_double(*options.radius) : std::string("auto")},
                {"holdout_k", std::to_string(options.holdout_k)},
                {"min_classes", std::to_string(options.min_classes)},
                {"standardize", options.standardize ? "true" : "false"},
                {"seed", std::to_string(options.seed)}};
    return ds;
}

std::string sample_file_name(const std::string& sample_id) {
    std::string safe;
    for (char c : sample_id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        safe.push_back(ok ? c : '_');
    }
    if (safe.empty() || safe[0] == '.') safe.insert(safe.begin(), '_');
    return safe + ".graph.json";
}

void write_prepared_dataset(const PreparedDataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "'");

    json samples = json::array();
    std::set<std::string> used;
    auto emit = [&](const std::vector<GraphSample>& list, const char* split) {
        for (const auto& g : list) {
            std::string file = sample_file_name(g.sample_id);
            if (!used.insert(file).second) {
                throw IoError("sample ids '" + g.sample_id + "' collide on file name '" + file + "'");
            }
            write_file_atomic(dir / file, sample_to_json(g).dump());
            samples.push_back({{"sample_id", g.sample_id},
                               {"file", file},
                               {"split", split},
                               {"nodes", g.num_nodes()},
                               {"edges", g.graph.num_edges()}});
        }
    };
    emit(ds.train, "train");
    emit(ds.holdout, "holdout");

    json flags = json::object();
    for (const auto& [k, v] : ds.flags) flags[k] = v;

    json manifest = {
        {"format", "stgno-prepared"},
        {"version", kPreparedFormatVersion},
        {"radius", ds.radius},
        {"radius_source", ds.radius_source},
        {"seed", ds.seed},
        {"flags", flags},
        {"split",
         {{"train", ds.split.train_sample_ids},
          {"holdout", ds.split.holdout_sample_ids},
          {"candidates", ds.split.candidate_sample_ids},
          {"seed", ds.split.seed},
          {"min_classes", ds.split.min_classes}}},
        {"standardization",
         {{"enabled", ds.standardization.enabled},
          {"mean", ds.standardization.mean},
          {"scale", ds.standardization.scale}}},
        {"class_names", ds.class_names},
        {"gene_names", ds.gene_names},
        {"missing_genes", ds.missing_genes},
        {"degree_summary", {{"train", degrees_to_json(ds.train_degrees)}, {"holdout", degrees_to_json(ds.holdout_degrees)}}},
        {"warnings", ds.warnings},
        {"samples", samples},
    };
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

PreparedDataset read_prepared_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw LoadError("'" + manifest_path.string() + "': " + e.what());
    }
    try {
        if (m.at("format") != "stgno-prepared") throw LoadError("'" + manifest_path.string() + "' is not a prepared dataset");
        if (m.at("version").get<int>() != kPreparedFormatVersion) {
            throw LoadError("prepared dataset version " + m.at("version").dump() + " unsupported (expected " +
                            std::to_string(kPreparedFormatVersion) + ")");
        }
        PreparedDataset ds;
        ds.radius = m.at("radius").get<double>();
        ds.radius_source = m.at("radius_source").get<std::string>();
        ds.seed = m.at("seed").get<std::uint64_t>();
        for (const auto& [k, v] : m.at("flags").items()) ds.flags.emplace_back(k, v.get<std::string>());
        const auto& sp = m.at("split");
        ds.split.train_sample_ids = sp.at("train").get<std::vector<std::string>>();
        ds.split.holdout_sample_ids = sp.at("holdout").get<std::vector<std::string>>();
        ds.split.candidate_sample_ids = sp.at("candidates").get<std::vector<std::string>>();
        ds.split.seed = sp.at("seed").get<std::uint64_t>();
        ds.split.min_classes = sp.at("min_classes").get<std::size_t>();
        const auto& st = m.at("standardization");
        ds.standardization.enabled = st.at("enabled").get<bool>();
        ds.standardization.mean = st.at("mean").get<std::vector<double>>();
        ds.standardization.scale = st.at("scale").get<std::vector<double>>();
        ds.class_names = m.at("class_names").get<std::vector<std::string>>();
        ds.gene_names = m.at("gene_names").get<std::vector<std::string>>();
        ds.missing_genes = m.at("missing_genes").get<std::vector<std::string>>();
        ds.train_degrees = degrees_from_json(m.at("degree_summary").at("train"));
        ds.holdout_degrees = degrees_from_json(m.at("degree_summary").at("holdout"));
        ds.warnings = m.at("warnings").get<std::vector<std::string>>();

        for (const auto& s : m.at("samples")) {
            const auto file = s.at("file").get<std::string>();
            json gj;
            try {
                gj = json::parse(read_file(dir / file));
            } catch (const json::exception& e) {
                throw LoadError("'" + (dir / file).string() + "': " + e.what());
            }
            auto g = sample_from_json(gj, ds.gene_names.size(), ds.class_names.size());
            (s.at("split") == "train" ? ds.train : ds.holdout).push_back(std::move(g));
        }
        return ds;
    } catch (const json::exception& e) {
        throw LoadError("'" + manifest_path.string() + "': " + e.what());
    }
}

}  // namespace stgno
