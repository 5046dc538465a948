#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgno/data.hpp"
#include "stgno/dataset_io.hpp"
#include "stgno/models.hpp"
#include "stgno/tensor.hpp"

namespace stgno {

enum class OptimizerKind { adam, sgd };
enum class F1Mode { macro, weighted };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);
std::string to_string(F1Mode mode);
F1Mode f1_mode_from_string(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::size_t num_runs = 10;
    bool class_weighting = true;
    F1Mode f1 = F1Mode::macro;
    /// Worker threads for independent runs; results do not depend on it.
    std::size_t jobs = 1;

    void validate() const;
};

/// w_c = N / (K * N_c) over all training spots.
std::vector<double> class_weights(std::span<const int> labels, std::size_t num_classes);

/// -(sum_i w[y_i] log softmax(logits_i)[y_i]) / sum_i w[y_i]
Var weighted_cross_entropy(Var logits, std::span<const int> labels, std::span<const double> weights);

/// Adam (bias-corrected) or plain SGD; every step zeroes the gradients.
class Optimizer {
public:
    Optimizer(const ParameterSet& params, const TrainConfig& config);

    /// step_index counts from 1.
    void step(ParameterSet& params, std::size_t step_index);

private:
    TrainConfig config_;
    std::vector<DenseMatrix> m_;
    std::vector<DenseMatrix> v_;
};

struct Metrics {
    /// rows = true class, cols = predicted class
    std::vector<std::vector<std::size_t>> confusion;
    std::size_t total = 0;
    double accuracy = 0.0;
    std::vector<double> per_class_f1;
    double macro_f1 = 0.0;
    /// Support-weighted mean of the per-class F1 scores.
    double weighted_f1 = 0.0;

    double f1(F1Mode mode) const noexcept { return mode == F1Mode::macro ? macro_f1 : weighted_f1; }
    static Metrics from_confusion(std::vector<std::vector<std::size_t>> confusion);
};

/// Lowest class index wins ties.
std::vector<int> argmax_rows(const DenseMatrix& logits);

struct TrainResult {
    ParameterSet params;
    std::vector<double> loss_history;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss, double elapsed_seconds)>;

/// Fill in the dataset-dependent fields of a model configuration: input and
/// class counts, bandwidth (radius / 2 when unset), edge attribute scale
/// (the radius) and the coordinate normalisation from the training slides.
ModelConfig resolve_for_dataset(ModelConfig config, const PreparedDataset& dataset);

TrainResult train(const ModelConfig& config, std::span<const GraphSample> graphs, const TrainConfig& train_config,
                  const EpochCallback& on_epoch = {});

Metrics evaluate(const ModelConfig& config, const ParameterSet& params, std::span<const GraphSample> graphs);

struct RunRecord {
    std::size_t run_index = 0;
    std::uint64_t init_seed = 0;
    std::vector<double> loss_history;
    Metrics train_metrics;
    Metrics holdout_metrics;
    ParameterSet params;
};

struct ModelReport {
    ModelConfig config;
    std::size_t param_count = 0;
    std::vector<RunRecord> runs;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
    double f1_mean = 0.0;
    double f1_std = 0.0;
    bool single_run = false;

    /// Index of the run with the best training-set macro-F1 (first on ties).
    std::size_t best_run() const;
};

struct RunReport {
    TrainConfig train_config;
    std::vector<ModelReport> models;
};

struct ExperimentOptions {
    /// When set, one JSON-lines log per run is written here.
    std::optional<std::filesystem::path> log_dir;
};

/// Mean and sample (n - 1) standard deviation; std is 0 for one value.
std::pair<double, double> mean_and_std(std::span<const double> values);

RunReport run_experiment(const std::vector<ModelConfig>& configs, const PreparedDataset& dataset,
                         const TrainConfig& train_config, const ExperimentOptions& options = {});

std::string run_log_name(const ModelConfig& config, std::size_t run_index);

// Checkpoints -----------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

/// What is needed to rebuild model inputs from a raw spot table.
struct Preprocessing {
    std::vector<std::string> gene_names;
    std::vector<std::string> class_names;
    Standardization standardization;
    double radius = 0.0;
};

struct Checkpoint {
    ModelConfig config;
    ParameterSet params;
    std::optional<Preprocessing> preprocessing;
};

Preprocessing preprocessing_of(const PreparedDataset& dataset);

std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Reports ---------------------------------------------------------------------

/// Aligned table: model, accuracy mean +- std (%), F1 mean +- std (%), params.
std::string format_report_table(const RunReport& report);
std::string report_to_json(const RunReport& report);
std::string metrics_to_json(const Metrics& metrics, const std::vector<std::string>& class_names);

}  // namespace stgno
