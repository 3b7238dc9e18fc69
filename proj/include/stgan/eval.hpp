#pragma once

// Regression metrics, distress-level classification with one-vs-rest ROC/AUC,
// generalization splits, and the experiment drivers that train and score a
// configured model (single runs, environmental masking, generalization).

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgan/dataset.hpp"
#include "stgan/model.hpp"
#include "stgan/stgraph.hpp"
#include "stgan/trainer.hpp"

namespace stgan::eval {

struct RegressionMetrics {
    std::size_t n = 0;
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;

    nlohmann::json to_json() const;
};

/// Throws MetricError on empty or unequal inputs.
RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> y_hat);

enum class Level { healthy, good, severe, very_severe };
inline constexpr std::array<Level, 4> kLevels = {Level::healthy, Level::good, Level::severe, Level::very_severe};

std::string_view level_name(Level level);

/// [0,1) healthy, [1,5) good, [5,10) severe, [10,inf) very severe.
/// Negative or NaN values are a DomainError.
Level classify_level(double value);

/// Class-c score for a regression output: minus the distance from y_hat to
/// the class interval (0 inside it).
double class_affinity(double y_hat, Level level);

/// Area under the ROC curve of `scores` for the positive labels; tied scores
/// take midpoint ranks. nullopt when either label is absent.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

/// Points at every distinct threshold, descending, starting from (0, 0).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const bool> positive);

struct ClassAuc {
    Level level = Level::healthy;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::optional<double> auc;  // nullopt: undefined (class absent or universal)
};

std::array<ClassAuc, 4> roc_auc_ovr(std::span<const Level> truth, std::span<const double> y_hat);

/// "class,fpr,tpr,threshold" rows for every class with a defined curve.
std::string roc_csv(std::span<const Level> truth, std::span<const double> y_hat);

/// counts[true][predicted]; predictions below 0 count as healthy.
using Confusion = std::array<std::array<std::size_t, 4>, 4>;
Confusion confusion_counts(std::span<const double> y, std::span<const double> y_hat);

enum class Axis { time, longitude, latitude };
std::string_view axis_name(Axis axis);
Axis parse_axis(std::string_view name);

struct GeneralizationSplit {
    Axis axis = Axis::time;
    std::size_t k = 0;
    std::size_t s = 0;
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> removed;
    std::vector<std::int64_t> test;
};

/// Stable sort by the axis (ties by node id); first k train, next s removed,
/// rest test. Throws SplitError when k + s >= n.
GeneralizationSplit generalization_split(std::span<const data::ProcessedNode> nodes, Axis axis, std::size_t k,
                                         std::size_t s);

struct NodePrediction {
    std::int64_t id = 0;
    double y = 0.0;
    double y_hat = 0.0;
};

struct EvalReport {
    std::string variant;
    std::string strategy;
    RegressionMetrics train;
    RegressionMetrics test;
    std::array<ClassAuc, 4> auc{};
    Confusion confusion{};
    std::vector<NodePrediction> predictions;  // test nodes
    std::optional<GeneralizationSplit> split;

    nlohmann::json to_json() const;
};

// ---------------------------------------------------------------- experiments

/// Time-sorted records turned into model-ready nodes with a temporal
/// init/train/test partition. Node ids are 1-based positions in time order.
struct Prepared {
    std::vector<data::RawRecord> records;
    data::FeatureSchema schema;
    data::FeatureLayout layout;
    data::PreprocessStats stats;
    std::vector<data::ProcessedNode> nodes;
    std::vector<std::int64_t> init_ids;
    std::vector<std::int64_t> train_ids;
    std::vector<std::int64_t> test_ids;
    trainer::LocationTable locations;

    const data::ProcessedNode& node(std::int64_t id) const { return nodes.at(static_cast<std::size_t>(id - 1)); }
};

/// Temporal split; statistics fit on init + train rows.
Prepared prepare(std::vector<data::RawRecord> records, const data::SplitFractions& fractions,
                 const data::FeatureSchema& schema);

/// Explicit partition (used by generalization splits): `init` and `train`
/// must be disjoint; statistics fit on their union.
Prepared prepare_partition(std::vector<data::RawRecord> records, const data::FeatureSchema& schema,
                           std::span<const std::size_t> init_rows, std::span<const std::size_t> train_rows,
                           std::span<const std::size_t> test_rows);

/// Graph settings a variant trains with: the w/o-TOP ablation drops TOP edges (K = 0).
graph::GraphConfig variant_graph_config(model::Variant variant, graph::GraphConfig config);

/// Graph over init + train nodes.
graph::STGraph training_graph(const Prepared& prepared, const graph::GraphConfig& config);

/// Model config whose input width and slot names follow the prepared layout.
model::ModelConfig fit_model_config(model::ModelConfig base, const Prepared& prepared);

struct ExperimentConfig {
    data::SplitFractions split;
    data::FeatureSchema schema;
    graph::GraphConfig graph;
    model::ModelConfig model;
    trainer::TrainConfig train;
    trainer::Strategy strategy = trainer::Strategy::ignore;
    /// Instrumentation hooks applied to every training and inference forward.
    model::ForwardOptions forward;
};

struct Timings {
    double graph_s = 0.0;
    double train_s = 0.0;
    double inference_s = 0.0;
};

struct ExperimentResult {
    model::ModelConfig model;  // as trained (input width fitted)
    trainer::TrainResult trained;
    EvalReport report;
    Timings timings;
};

/// Trains on init + train, predicts the test block with the configured strategy.
ExperimentResult run_experiment(const Prepared& prepared, const ExperimentConfig& config,
                                const trainer::EpochLogger& logger = {});

/// Scores test nodes of `prepared` with already-trained parameters.
EvalReport evaluate(const Prepared& prepared, const graph::STGraph& graph, const model::ParamSet& params,
                    const model::ModelConfig& model_config, trainer::Strategy strategy, bool enforce_time_order = true,
                    const model::ForwardOptions& forward = {});

/// Training-split metrics from one full-graph forward.
RegressionMetrics training_metrics(const Prepared& prepared, const graph::STGraph& graph,
                                   const model::ParamSet& params, const model::ModelConfig& model_config);

struct MaskRow {
    std::string feature;
    double test_mae = 0.0;
    double delta = 0.0;  // test_mae minus the full-feature test MAE
};

struct MaskStudy {
    double base_test_mae = 0.0;
    std::vector<MaskRow> rows;  // one per environmental feature, file order
};

/// Retrains with each environmental feature removed from x_full.
MaskStudy env_masking_study(std::span<const data::RawRecord> records, const ExperimentConfig& config);

/// Trains on the generalization split's train block (earliest share of it as
/// init, per config.split) and scores its test block with the ignore strategy.
ExperimentResult run_generalization(std::span<const data::RawRecord> records, const ExperimentConfig& config,
                                    Axis axis, std::size_t k, std::size_t s);

}  // namespace stgan::eval
