#pragma once

// Full-graph training with MAE loss and Adam, autoregressive inference with
// three continuation strategies, and checkpoint persistence.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgan/dataset.hpp"
#include "stgan/model.hpp"
#include "stgan/ndgrad.hpp"
#include "stgan/stgraph.hpp"

namespace stgan::trainer {

struct TrainConfig {
    std::size_t epochs = 200;
    double lr = 0.004;
    std::uint64_t seed = 7;
    std::size_t log_every = 0;  // 0 disables progress callbacks

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainResult {
    model::ParamSet params;
    ndgrad::AdamState adam;
    std::vector<double> loss_trace;  // loss of epoch e, measured before its update
    double final_train_mae = 0.0;    // loss at the returned parameters
    std::vector<std::int64_t> touched_ids;  // node ids the training forward read
};

using EpochLogger = std::function<void(std::size_t epoch, double mae)>;

/// Full-batch training over every node of `graph`; the loss averages |y - y_hat|
/// over rows whose id is in `loss_ids`. Throws DivergenceError on a non-finite loss.
TrainResult train(const graph::STGraph& graph, std::span<const data::ProcessedNode> nodes,
                  const model::ModelConfig& model_config, const TrainConfig& config,
                  std::span<const std::int64_t> loss_ids, const EpochLogger& logger = {},
                  const model::ForwardOptions& forward = {});

/// Predictions for every graph position from one full-graph forward.
std::vector<double> forward_graph(const model::ParamSet& params, const model::ModelConfig& model_config,
                                  const graph::STGraph& graph, std::span<const data::ProcessedNode> nodes);

enum class Strategy { true_feedback, predicted_feedback, ignore };

std::string_view strategy_name(Strategy s);
/// Accepts "true", "predicted", "ignore"; anything else is a UsageError.
Strategy parse_strategy(std::string_view name);

struct LocationInfo {
    double lon = 0.0;
    double lat = 0.0;
    int distress_type = 11;  // latest observed type
};
using LocationTable = std::map<std::int64_t, LocationInfo>;

LocationTable location_table(std::span<const data::RawRecord> records);

struct InferenceContext {
    const model::ParamSet* params = nullptr;
    model::ModelConfig model;
    data::PreprocessStats stats;
    data::FeatureLayout layout;
    LocationTable locations;
    /// Reject queries earlier than the latest node in the graph. Spatial
    /// generalization splits turn this off and rely on connect()'s t <= t' filter.
    bool enforce_time_order = true;
    model::ForwardOptions forward;
};

struct Query {
    std::int64_t node_id = 0;
    std::int64_t location_id = 0;
    double t_raw = 0.0;
};

struct QueryResult {
    double y_hat = 0.0;
    data::ProcessedNode node;         // query features: spatial/temporal slots only
    graph::GraphNode graph_node;
    std::vector<graph::Edge> parents;
};

/// Attaches the query to a copy of the graph and evaluates it. The graph is
/// not modified. Observations at the query's own (coordinates, time) are not
/// used as parents.
QueryResult predict_query(const InferenceContext& ctx, const graph::STGraph& graph,
                          std::span<const data::ProcessedNode> nodes, const Query& query);

double predict_one(const InferenceContext& ctx, const graph::STGraph& graph,
                   std::span<const data::ProcessedNode> nodes, const Query& query);

/// Appends a predicted node to the graph with the parents found at prediction
/// time and `features` as its node data.
void commit(graph::STGraph& graph, std::vector<data::ProcessedNode>& nodes, const QueryResult& result,
            data::ProcessedNode features);

/// Node data committed under predicted feedback: y_hat in the distress slot,
/// the location's type one-hot, every other reading zero.
data::ProcessedNode predicted_features(const InferenceContext& ctx, const QueryResult& result);

/// Predicts time-sorted queries one by one. `observations` (same order as
/// `queries`) are required for true feedback and ignored otherwise.
std::vector<double> predict_sequence(const InferenceContext& ctx, const graph::STGraph& graph,
                                     std::span<const data::ProcessedNode> nodes, std::span<const Query> queries,
                                     Strategy strategy, std::span<const data::RawRecord> observations = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    model::ModelConfig model;
    graph::GraphConfig graph;
    data::PreprocessStats stats;
    data::FeatureSchema schema;
    TrainConfig train;
    nlohmann::json run_config = nlohmann::json::object();
    model::ParamSet params;
    ndgrad::AdamState adam;
    std::vector<double> loss_trace;
    double final_train_mae = 0.0;
};

nlohmann::json schema_to_json(const data::FeatureSchema& schema);
data::FeatureSchema schema_from_json(const nlohmann::json& j);

/// Binary layout:
///   "STGANCKP" | u32 version | u64 manifest bytes | u32 manifest crc32 | manifest JSON | sections
/// Sections are raw little-endian float64 arrays listed in the manifest with
/// offset (from the first section byte), shape and crc32.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loss trace as "epoch,mae" CSV.
std::string loss_csv(std::span<const double> trace);

}  // namespace stgan::trainer
