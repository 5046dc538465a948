#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stgno/data.hpp"
#include "stgno/geometry.hpp"

namespace stgno {

inline constexpr int kPreparedFormatVersion = 1;
/// Median node degree targeted when no radius is given.
inline constexpr std::size_t kTargetMedianDegree = 6;

struct PrepareOptions {
    std::optional<double> radius;
    std::size_t holdout_k = 7;
    std::size_t min_classes = 10;
    bool standardize = false;
    std::uint64_t seed = 0;
};

/// Everything written to (and read back from) a prepared-dataset directory.
struct PreparedDataset {
    double radius = 0.0;
    std::string radius_source;
    std::uint64_t seed = 0;
    DatasetSplit split;
    Standardization standardization;
    std::vector<std::string> class_names;
    std::vector<std::string> gene_names;
    std::vector<std::string> missing_genes;
    /// Provenance: every flag value used to build the dataset.
    std::vector<std::pair<std::string, std::string>> flags;
    DegreeSummary train_degrees;
    DegreeSummary holdout_degrees;
    std::vector<std::string> warnings;

    std::vector<GraphSample> train;
    std::vector<GraphSample> holdout;

    std::size_t num_features() const noexcept { return gene_names.size(); }
    std::size_t num_classes() const noexcept { return class_names.size(); }
};

/// filter -> bin -> split -> assemble, on an in-memory table.
PreparedDataset prepare_dataset(const SpotTable& table, const std::vector<std::string>& gene_list,
                                const LabelMap& label_map, const PrepareOptions& options);

/// File name used for a sample inside a prepared directory.
std::string sample_file_name(const std::string& sample_id);

void write_prepared_dataset(const PreparedDataset& dataset, const std::filesystem::path& dir);
PreparedDataset read_prepared_dataset(const std::filesystem::path& dir);

std::string degree_summary_line(const DegreeSummary& s);

}  // namespace stgno
