#pragma once

// Run configuration and the command implementations behind the `stgan`
// executable. Every command writes into the run's output directory and
// refreshes its manifest.json (SHA-256 of each deterministic artifact).
// Wall-clock timings go to <out>/timing/, which the manifest does not cover.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgan/dataset.hpp"
#include "stgan/eval.hpp"
#include "stgan/model.hpp"
#include "stgan/stgraph.hpp"
#include "stgan/trainer.hpp"

namespace stgan::cli {

struct RunConfig {
    std::optional<std::string> dataset_path;
    data::TimeFormat time_format = data::TimeFormat::fractional_days;
    std::optional<data::SyntheticConfig> synthetic;
    data::SplitFractions split;
    data::FeatureSchema schema;
    graph::GraphConfig graph;
    model::ModelConfig model;
    trainer::TrainConfig train;
    trainer::Strategy strategy = trainer::Strategy::ignore;
    std::string out_dir = "out";
    std::uint64_t seed = 0;

    /// Exactly one dataset source; component configs valid.
    void validate() const;
    nlohmann::json to_json() const;
    /// Requires "seed". The synthetic section inherits it when it has none.
    static RunConfig from_json(const nlohmann::json& j);

    eval::ExperimentConfig experiment() const;
};

/// Applies "dotted.path=value" to a JSON document. The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Records for the configured source (file or generator).
std::vector<data::RawRecord> load_dataset(const RunConfig& config);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Rewrites <out>/manifest.json listing every regular file under <out>
/// except the manifest itself and the timing/ directory.
void write_manifest(const std::filesystem::path& out_dir, const nlohmann::json& run_config);

// Commands. Each returns the main artifact's path.
std::filesystem::path cmd_gen_data(const RunConfig& config, std::ostream& log);
std::filesystem::path cmd_build_graph(const RunConfig& config, std::ostream& log);
std::filesystem::path cmd_train(const RunConfig& config, std::ostream& log);
std::filesystem::path cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                                   trainer::Strategy strategy, std::ostream& log);

struct PredictRequest {
    std::int64_t location_id = 0;
    double time_days = 0.0;
    trainer::Strategy strategy = trainer::Strategy::ignore;
};

/// Test-block records up to the query time are replayed under the strategy
/// (observed values for true, predictions for predicted, nothing for ignore);
/// then the query is answered.
double cmd_predict(const RunConfig& config, const std::filesystem::path& checkpoint, const PredictRequest& request,
                   std::ostream& log);

/// Known axes: variant, heads, layers, env_mask, generalization.
inline const std::vector<std::string> kMatrixAxes = {"variant", "heads", "layers", "env_mask", "generalization"};

struct MatrixAxes {
    std::vector<std::string> axes;
    std::vector<std::size_t> heads = {1, 5, 10};
    std::vector<std::size_t> layers = {1, 2, 3};
    /// Generalization cells hold the test block at this share of the nodes
    /// and vary the removed interval s; k = n - test - s.
    double test_fraction = 0.2;
    std::vector<std::size_t> gaps = {0, 100, 200};
};

struct MatrixRow {
    std::string axis;
    std::string variant;
    std::size_t heads = 0;
    std::size_t layers = 0;
    std::string masked;  // environmental feature removed, or empty
    std::string split;   // generalization split descriptor, or "temporal"
    double train_mae = 0.0;
    eval::RegressionMetrics test;
    eval::Timings timings;
};

/// Throws UsageError for unknown axes.
MatrixAxes parse_axes(const std::string& csv);

std::vector<MatrixRow> run_matrix(const RunConfig& config, const MatrixAxes& axes, std::ostream& log);

/// Deterministic comparison table (no wall times).
std::string matrix_csv(const std::vector<MatrixRow>& rows);
/// Per-row wall times, keyed like matrix_csv.
std::string matrix_timing_csv(const std::vector<MatrixRow>& rows);

std::filesystem::path cmd_matrix(const RunConfig& config, const MatrixAxes& axes, std::ostream& log);

/// Entry point used by the executable; returns the process exit code
/// (0 success, 1 runtime error, 2 usage error).
int run_cli(int argc, char** argv);

}  // namespace stgan::cli
