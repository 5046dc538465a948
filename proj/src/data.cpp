#include "stgno/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "stgno/errors.hpp"
#include "stgno/util.hpp"

namespace stgno {

namespace {

constexpr const char* kRequiredColumns[] = {"sample_id", "x", "y", "label"};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    q.push_back('"');
    return q;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
    return s.substr(b);
}

}  // namespace

std::vector<std::string> SpotTable::samples() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& s : sample_ids)
        if (seen.insert(s).second) out.push_back(s);
    return out;
}

void SpotTable::validate() const {
    const std::size_t n = sample_ids.size();
    if (positions.rows() != n || positions.cols() != 2) throw DimensionError("spot positions must be n x 2");
    if (expression.rows() != n || expression.cols() != gene_names.size()) {
        throw DimensionError("expression matrix " + expression.shape_string() + " does not match " +
                             std::to_string(n) + " spots x " + std::to_string(gene_names.size()) + " genes");
    }
    if (raw_labels.size() != n) throw DimensionError("raw label count does not match spot count");
    if (!classes.empty() && classes.size() != n) throw DimensionError("class count does not match spot count");
    for (const auto& s : sample_ids)
        if (s.empty()) throw ContractError("sample ids must be non-empty");
}

void LabelMap::add(const std::string& raw_label, const std::string& class_name) {
    auto it = std::find(class_names.begin(), class_names.end(), class_name);
    int idx;
    if (it == class_names.end()) {
        class_names.push_back(class_name);
        idx = static_cast<int>(class_names.size() - 1);
    } else {
        idx = static_cast<int>(it - class_names.begin());
    }
    auto [pos, inserted] = mapping.emplace(raw_label, idx);
    if (!inserted && pos->second != idx) {
        throw MappingError("raw label '" + raw_label + "' mapped to two classes");
    }
}

std::optional<int> LabelMap::find(const std::string& raw_label) const {
    auto it = mapping.find(raw_label);
    if (it == mapping.end()) return std::nullopt;
    return it->second;
}

SpotTable load_spot_table(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open spot table '" + path.string() + "'");
    const std::string where = path.string();

    std::string line;
    if (!std::getline(in, line)) throw ParseError(where + ":1: empty file, expected header");
    auto header = split_csv_line(line);
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

    std::size_t col_of[4];
    for (int r = 0; r < 4; ++r) {
        auto it = std::find(header.begin(), header.end(), kRequiredColumns[r]);
        if (it == header.end()) {
            throw ParseError(where + ":1: missing required column '" + std::string(kRequiredColumns[r]) + "'");
        }
        col_of[r] = static_cast<std::size_t>(it - header.begin());
    }

    SpotTable t;
    std::vector<std::size_t> gene_cols;
    {
        std::set<std::string> keep;
        if (options.keep_genes) keep.insert(options.keep_genes->begin(), options.keep_genes->end());
        std::set<std::string> seen;
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (std::find(std::begin(col_of), std::end(col_of), c) != std::end(col_of)) continue;
            if (header[c].empty()) throw ParseError(where + ":1: empty gene name in column " + std::to_string(c + 1));
            if (!seen.insert(header[c]).second) throw ParseError(where + ":1: duplicate gene column '" + header[c] + "'");
            if (options.keep_genes && !keep.contains(header[c])) continue;
            gene_cols.push_back(c);
            t.gene_names.push_back(header[c]);
        }
    }

    std::vector<double> pos, expr;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError(where + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        }
        auto number = [&](std::size_t c) {
            double v;
            if (!parse_double(fields[c], v) || !std::isfinite(v)) {
                throw ParseError(where + ":" + std::to_string(line_no) + ": column '" + header[c] +
                                 "' is not a finite number: '" + fields[c] + "'");
            }
            return v;
        };
        const std::string sid = trim(fields[col_of[0]]);
        if (sid.empty()) throw ParseError(where + ":" + std::to_string(line_no) + ": empty sample_id");
        t.sample_ids.push_back(sid);
        pos.push_back(number(col_of[1]));
        pos.push_back(number(col_of[2]));
        t.raw_labels.push_back(fields[col_of[3]]);
        for (std::size_t c : gene_cols) expr.push_back(number(c));
    }
    const std::size_t n = t.sample_ids.size();
    t.positions = DenseMatrix(n, 2, std::move(pos));
    t.expression = DenseMatrix(n, t.gene_names.size(), std::move(expr));
    return t;
}

std::string spot_table_to_csv(const SpotTable& t) {
    t.validate();
    std::string out = "sample_id,x,y,label";
    for (const auto& g : t.gene_names) out += "," + csv_field(g);
    out += "\n";
    for (std::size_t i = 0; i < t.num_spots(); ++i) {
        out += csv_field(t.sample_ids[i]);
        out += ",";
        out += format_double(t.positions(i, 0));
        out += ",";
        out += format_double(t.positions(i, 1));
        out += ",";
        out += csv_field(t.raw_labels[i]);
        for (double v : t.expression.row(i)) {
            out += ",";
            out += format_double(v);
        }
        out += "\n";
    }
    return out;
}

void write_spot_table(const SpotTable& table, const std::filesystem::path& path) {
    write_file_atomic(path, spot_table_to_csv(table));
}

std::vector<std::string> load_gene_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open gene list '" + path.string() + "'");
    std::vector<std::string> genes;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty()) genes.push_back(line);
    }
    return genes;
}

void write_gene_list(std::span<const std::string> genes, const std::filesystem::path& path) {
    std::string out;
    for (const auto& g : genes) out += g + "\n";
    write_file_atomic(path, out);
}

LabelMap load_label_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open label map '" + path.string() + "'");
    LabelMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected raw_label<TAB>class_name");
        }
        const std::string raw = line.substr(0, tab);
        const std::string cls = trim(line.substr(tab + 1));
        if (raw.empty() || cls.empty()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty label or class name");
        }
        map.add(raw, cls);
    }
    return map;
}

void write_label_map(const LabelMap& map, const std::filesystem::path& path) {
    // Emit class by class so that reloading reproduces the class order.
    std::string out;
    for (std::size_t c = 0; c < map.class_names.size(); ++c)
        for (const auto& [raw, idx] : map.mapping)
            if (idx == static_cast<int>(c)) out += raw + "\t" + map.class_names[c] + "\n";
    write_file_atomic(path, out);
}

GeneFilterResult filter_genes(const SpotTable& table, std::span<const std::string> gene_list) {
    if (gene_list.empty()) throw EmptyFeatureSetError("gene list is empty");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t g = 0; g < table.gene_names.size(); ++g) index.emplace(table.gene_names[g], g);

    GeneFilterResult r;
    std::vector<std::size_t> cols;
    std::set<std::string> taken;
    for (const auto& name : gene_list) {
        auto it = index.find(name);
        if (it == index.end()) {
            r.missing.push_back(name);
        } else if (taken.insert(name).second) {
            cols.push_back(it->second);
        }
    }
    if (cols.empty()) {
        throw EmptyFeatureSetError("none of the " + std::to_string(gene_list.size()) + " listed genes occur in the table");
    }
    r.table = table;
    r.table.gene_names.clear();
    for (std::size_t c : cols) r.table.gene_names.push_back(table.gene_names[c]);
    r.table.expression = DenseMatrix(table.num_spots(), cols.size());
    for (std::size_t i = 0; i < table.num_spots(); ++i)
        for (std::size_t k = 0; k < cols.size(); ++k) r.table.expression(i, k) = table.expression(i, cols[k]);
    return r;
}

SpotTable bin_labels(SpotTable table, const LabelMap& label_map) {
    std::set<std::string> unmapped;
    std::vector<int> classes(table.num_spots());
    for (std::size_t i = 0; i < table.num_spots(); ++i) {
        auto c = label_map.find(table.raw_labels[i]);
        if (!c) {
            unmapped.insert(table.raw_labels[i]);
            continue;
        }
        classes[i] = *c;
    }
    if (!unmapped.empty()) {
        std::string list;
        for (const auto& l : unmapped) list += (list.empty() ? "'" : ", '") + l + "'";
        throw MappingError("label map has no entry for: " + list);
    }
    table.classes = std::move(classes);
    return table;
}

DatasetSplit select_holdout(const SpotTable& table, std::size_t k, std::size_t min_classes, std::uint64_t seed) {
    if (k == 0) throw ParameterError("holdout size k must be at least 1");
    const auto samples = table.samples();
    std::map<std::string, std::set<std::string>> labels_of;
    for (std::size_t i = 0; i < table.num_spots(); ++i) labels_of[table.sample_ids[i]].insert(table.raw_labels[i]);

    DatasetSplit split;
    split.seed = seed;
    split.min_classes = min_classes;
    for (const auto& s : samples)
        if (labels_of[s].size() >= min_classes) split.candidate_sample_ids.push_back(s);

    if (split.candidate_sample_ids.size() < k) {
        throw ThresholdError("only " + std::to_string(split.candidate_sample_ids.size()) +
                             " samples cover at least " + std::to_string(min_classes) + " raw labels; need " +
                             std::to_string(k) + " for the holdout");
    }
    if (k >= samples.size()) {
        throw ThresholdError("holdout of " + std::to_string(k) + " samples would leave the training set empty (" +
                             std::to_string(samples.size()) + " samples total)");
    }

    // Partial Fisher-Yates over the candidates.
    auto pool = split.candidate_sample_ids;
    Rng rng(derive_seed(seed, 0x5D11));
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.index(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    std::set<std::string> held(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    for (const auto& s : samples) {
        (held.contains(s) ? split.holdout_sample_ids : split.train_sample_ids).push_back(s);
    }
    return split;
}

void GraphSample::validate(std::size_t num_classes) const {
    const std::size_t n = labels.size();
    if (features.rows() != n || positions.size() != n || graph.num_nodes != n) {
        throw DimensionError("graph sample '" + sample_id + "' has inconsistent node counts");
    }
    if (graph.edge_attr.rows() != graph.edges.size() || graph.edge_attr.cols() != kEdgeAttrDim) {
        throw DimensionError("graph sample '" + sample_id + "' edge attributes do not match its edges");
    }
    for (const auto& e : graph.edges) {
        if (e.src >= n || e.dst >= n) throw IndexError("graph sample '" + sample_id + "' has an out-of-range edge");
    }
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
            throw IndexError("graph sample '" + sample_id + "' has label " + std::to_string(l));
        }
    }
}

void Standardization::apply(DenseMatrix& features) const {
    if (!enabled) return;
    if (features.cols() != mean.size()) {
        throw DimensionError("standardization fit on " + std::to_string(mean.size()) + " genes, features have " +
                             std::to_string(features.cols()));
    }
    for (std::size_t r = 0; r < features.rows(); ++r) {
        auto row = features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / scale[c];
    }
}

Standardization fit_standardization(const DenseMatrix& x) {
    Standardization s;
    s.enabled = true;
    s.mean.assign(x.cols(), 0.0);
    s.scale.assign(x.cols(), 1.0);
    if (x.rows() == 0) return s;
    const double n = static_cast<double>(x.rows());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) m += x(r, c);
        m /= n;
        double v = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) v += (x(r, c) - m) * (x(r, c) - m);
        const double sd = std::sqrt(v / n);
        // Constant genes are passed through untouched.
        if (sd > 0.0) {
            s.mean[c] = m;
            s.scale[c] = sd;
        }
    }
    return s;
}

GraphSample make_graph_sample(const SpotTable& table, std::span<const std::size_t> rows, const std::string& sample_id,
                              double radius) {
    GraphSample g;
    g.sample_id = sample_id;
    const std::size_t n = rows.size();
    DenseMatrix pos(n, 2);
    g.features = DenseMatrix(n, table.num_genes());
    g.labels.resize(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = rows[k];
        pos(k, 0) = table.positions(i, 0);
        pos(k, 1) = table.positions(i, 1);
        std::copy_n(table.expression.row(i).begin(), table.num_genes(), g.features.row(k).begin());
        if (!table.classes.empty()) g.labels[k] = table.classes[i];
    }
    g.positions = PointSet(std::move(pos));
    g.graph = build_radius_graph(g.positions, radius);
    return g;
}

AssembledGraphs assemble_graphs(const SpotTable& table, const DatasetSplit& split, double radius, bool standardize) {
    table.validate();
    if (!table.binned()) throw ContractError("assemble_graphs requires binned labels");
    std::map<std::string, std::vector<std::size_t>> rows_of;
    for (std::size_t i = 0; i < table.num_spots(); ++i) rows_of[table.sample_ids[i]].push_back(i);

    AssembledGraphs out;
    auto build = [&](const std::vector<std::string>& ids, std::vector<GraphSample>& dst) {
        for (const auto& id : ids) {
            auto it = rows_of.find(id);
            if (it == rows_of.end()) throw ContractError("split names unknown sample '" + id + "'");
            if (it->second.size() < 2) {
                out.warnings.push_back("sample '" + id + "' has " + std::to_string(it->second.size()) +
                                       " spot(s); kept as an edgeless graph");
            }
            dst.push_back(make_graph_sample(table, it->second, id, radius));
        }
    };
    build(split.train_sample_ids, out.train);
    build(split.holdout_sample_ids, out.holdout);

    if (standardize) {
        std::size_t total = 0;
        for (const auto& g : out.train) total += g.num_nodes();
        DenseMatrix stacked(total, table.num_genes());
        std::size_t r = 0;
        for (const auto& g : out.train)
            for (std::size_t i = 0; i < g.num_nodes(); ++i, ++r)
                std::copy_n(g.features.row(i).begin(), table.num_genes(), stacked.row(r).begin());
        out.standardization = fit_standardization(stacked);
        for (auto& g : out.train) out.standardization.apply(g.features);
        for (auto& g : out.holdout) out.standardization.apply(g.features);
    }
    return out;
}

std::string to_string(ExpressionMode mode) {
    return mode == ExpressionMode::informative ? "informative" : "noise_only";
}

ExpressionMode expression_mode_from_string(const std::string& name) {
    if (name == "informative") return ExpressionMode::informative;
    if (name == "noise_only") return ExpressionMode::noise_only;
    throw ParameterError("unknown expression mode '" + name + "' (expected informative or noise_only)");
}

void SyntheticConfig::validate() const {
    if (num_samples == 0 || spots_per_sample == 0 || num_genes == 0 || num_classes == 0 || region_seeds_per_class == 0) {
        throw ParameterError("synthetic config counts must all be positive");
    }
    if (num_classes != kDefaultClassNames.size()) {
        throw ParameterError("synthetic generator produces exactly " + std::to_string(kDefaultClassNames.size()) +
                             " classes");
    }
    if (!std::isfinite(class_separation) || !std::isfinite(noise_scale) || noise_scale < 0.0) {
        throw ParameterError("class_separation must be finite and noise_scale non-negative");
    }
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    enum Stream : std::uint64_t { kSites = 1, kPattern = 2, kSample = 3 };

    const std::size_t num_sites = cfg.num_classes * cfg.region_seeds_per_class;
    struct Site {
        double x, y;
        int cls;
        std::string raw_label;
    };
    std::vector<Site> sites;
    {
        Rng rng(derive_seed(cfg.seed, kSites));
        for (std::size_t s = 0; s < num_sites; ++s) {
            const double x = rng.uniform01();
            const double y = rng.uniform01();
            const int cls = static_cast<int>(s % cfg.num_classes);
            sites.push_back({x, y, cls,
                             kDefaultClassNames[static_cast<std::size_t>(cls)] + "_r" +
                                 std::to_string(s / cfg.num_classes)});
        }
    }

    DenseMatrix class_means(cfg.num_classes, cfg.num_genes);
    {
        Rng rng(derive_seed(cfg.seed, kPattern));
        for (double& v : class_means.data()) v = (rng.next() >> 63) != 0 ? cfg.class_separation : -cfg.class_separation;
    }

    SyntheticDataset out;
    for (std::size_t c = 0; c < cfg.num_classes; ++c)
        for (const auto& s : sites)
            if (s.cls == static_cast<int>(c)) out.label_map.add(s.raw_label, kDefaultClassNames[c]);

    SpotTable& t = out.table;
    const std::size_t n = cfg.num_samples * cfg.spots_per_sample;
    for (std::size_t g = 0; g < cfg.num_genes; ++g) {
        std::string name = std::to_string(g);
        t.gene_names.push_back("gene_" + std::string(name.size() < 3 ? 3 - name.size() : 0, '0') + name);
    }
    t.positions = DenseMatrix(n, 2);
    t.expression = DenseMatrix(n, cfg.num_genes);
    const std::size_t width = std::to_string(cfg.num_samples - 1).size();

    std::size_t row = 0;
    for (std::size_t s = 0; s < cfg.num_samples; ++s) {
        std::string idx = std::to_string(s);
        const std::string sid = "sample_" + std::string(width > idx.size() ? width - idx.size() : 0, '0') + idx;
        Rng rng(derive_seed(cfg.seed, kSample, s));
        for (std::size_t k = 0; k < cfg.spots_per_sample; ++k, ++row) {
            const double x = rng.uniform01();
            const double y = rng.uniform01();
            std::size_t best = 0;
            double best_d = INFINITY;
            for (std::size_t q = 0; q < sites.size(); ++q) {
                const double d = (sites[q].x - x) * (sites[q].x - x) + (sites[q].y - y) * (sites[q].y - y);
                if (d < best_d) {
                    best_d = d;
                    best = q;
                }
            }
            const auto cls = static_cast<std::size_t>(sites[best].cls);
            t.sample_ids.push_back(sid);
            t.raw_labels.push_back(sites[best].raw_label);
            t.positions(row, 0) = x;
            t.positions(row, 1) = y;
            for (std::size_t g = 0; g < cfg.num_genes; ++g) {
                const double noise = cfg.noise_scale * rng.normal();
                t.expression(row, g) =
                    cfg.expression_mode == ExpressionMode::informative ? class_means(cls, g) + noise : noise;
            }
        }
    }
    return out;
}

}  // namespace stgno
