#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgno/geometry.hpp"
#include "stgno/tensor.hpp"

namespace stgno {

/// Ingested spots, one row per spot in file order.
struct SpotTable {
    std::vector<std::string> gene_names;
    std::vector<std::string> sample_ids;
    DenseMatrix positions{0, 2};
    DenseMatrix expression;
    std::vector<std::string> raw_labels;
    /// Coarse class per spot; empty until bin_labels has run.
    std::vector<int> classes;

    std::size_t num_spots() const noexcept { return sample_ids.size(); }
    std::size_t num_genes() const noexcept { return gene_names.size(); }
    bool binned() const noexcept { return !classes.empty() || sample_ids.empty(); }
    /// Distinct sample ids in order of first appearance.
    std::vector<std::string> samples() const;
    void validate() const;

    friend bool operator==(const SpotTable&, const SpotTable&) = default;
};

/// Raw (fine) label to coarse class index. Class order is the order in which
/// class names first appear.
struct LabelMap {
    std::map<std::string, int> mapping;
    std::vector<std::string> class_names;

    std::size_t num_classes() const noexcept { return class_names.size(); }
    void add(const std::string& raw_label, const std::string& class_name);
    std::optional<int> find(const std::string& raw_label) const;
};

struct LoadOptions {
    /// When set, expression columns not in this list are skipped while
    /// reading (the full header is still validated).
    std::optional<std::vector<std::string>> keep_genes;
};

SpotTable load_spot_table(const std::filesystem::path& path, const LoadOptions& options = {});
void write_spot_table(const SpotTable& table, const std::filesystem::path& path);
std::string spot_table_to_csv(const SpotTable& table);

std::vector<std::string> load_gene_list(const std::filesystem::path& path);
void write_gene_list(std::span<const std::string> genes, const std::filesystem::path& path);

LabelMap load_label_map(const std::filesystem::path& path);
void write_label_map(const LabelMap& map, const std::filesystem::path& path);

struct GeneFilterResult {
    SpotTable table;
    /// Listed genes absent from the table, in list order.
    std::vector<std::string> missing;
    std::size_t warning_count() const noexcept { return missing.size(); }
};

GeneFilterResult filter_genes(const SpotTable& table, std::span<const std::string> gene_list);

SpotTable bin_labels(SpotTable table, const LabelMap& label_map);

struct DatasetSplit {
    std::vector<std::string> train_sample_ids;
    std::vector<std::string> holdout_sample_ids;
    std::vector<std::string> candidate_sample_ids;
    std::uint64_t seed = 0;
    std::size_t min_classes = 0;
};

/// Hold out k samples drawn uniformly from those whose spots cover at least
/// min_classes distinct raw labels.
DatasetSplit select_holdout(const SpotTable& table, std::size_t k, std::size_t min_classes, std::uint64_t seed);

struct GraphSample {
    std::string sample_id;
    DenseMatrix features;
    PointSet positions;
    RadiusGraph graph;
    std::vector<int> labels;

    std::size_t num_nodes() const noexcept { return labels.size(); }
    void validate(std::size_t num_classes) const;
};

/// Per-gene affine transform x' = (x - mean) / scale fit on training spots.
struct Standardization {
    bool enabled = false;
    std::vector<double> mean;
    std::vector<double> scale;

    void apply(DenseMatrix& features) const;
};

Standardization fit_standardization(const DenseMatrix& train_features);

struct AssembledGraphs {
    std::vector<GraphSample> train;
    std::vector<GraphSample> holdout;
    Standardization standardization;
    std::vector<std::string> warnings;
};

/// One graph per sample id; node order is file order within the sample.
AssembledGraphs assemble_graphs(const SpotTable& table, const DatasetSplit& split, double radius, bool standardize);
GraphSample make_graph_sample(const SpotTable& table, std::span<const std::size_t> rows, const std::string& sample_id,
                              double radius);

enum class ExpressionMode { informative, noise_only };

std::string to_string(ExpressionMode mode);
ExpressionMode expression_mode_from_string(const std::string& name);

struct SyntheticConfig {
    std::size_t num_samples = 20;
    std::size_t spots_per_sample = 300;
    std::size_t num_genes = 32;
    std::size_t num_classes = 3;
    std::size_t region_seeds_per_class = 5;
    ExpressionMode expression_mode = ExpressionMode::informative;
    double class_separation = 1.0;
    double noise_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticDataset {
    SpotTable table;
    LabelMap label_map;
};

inline const std::vector<std::string> kDefaultClassNames{"brain_stem", "cerebellum", "cerebrum"};

/// Desk-scale stand-in for an atlas: every slide samples the same unit-square
/// domain whose regions are the Voronoi cells of a shared set of sites.
/// Each site carries its own raw label; sites are dealt round-robin to classes.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

}  // namespace stgno
