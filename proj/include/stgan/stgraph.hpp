#pragma once

// Directed spatiotemporal graph over (location, time) nodes. Edges point from
// parent (earlier) to child. The initialization block is built with hard
// connections in both directions; every later node is attached by expand().

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgan/errors.hpp"

namespace stgan::graph {

enum class DistanceMetric { equirectangular, haversine };

/// How TOP edges combine with hard edges.
enum class TopMode {
    merged,             // K nearest among all earlier nodes, union with hard edges
    strict_additional,  // K nearest among earlier nodes that are not hard-connected
};

struct GraphConfig {
    double l_res_m = 200.0;
    double t_res_days = 14.0;
    std::size_t top_k = 5;
    DistanceMetric metric = DistanceMetric::equirectangular;
    TopMode top_mode = TopMode::merged;

    void validate() const;
    nlohmann::json to_json() const;
    static GraphConfig from_json(const nlohmann::json& j);
    friend bool operator==(const GraphConfig&, const GraphConfig&) = default;
};

struct Coord {
    double lon = 0.0;
    double lat = 0.0;
};

/// Distance in meters. Equirectangular: R * sqrt(dphi^2 + (cos(mean phi) * dlambda)^2).
double location_distance(Coord a, Coord b, DistanceMetric metric = DistanceMetric::equirectangular);

struct GraphNode {
    std::int64_t id = 0;
    Coord coord;
    double t_raw = 0.0;
    double t_norm = 0.0;
    bool is_init = false;
};

enum class EdgeOrigin { hard, top, init };

std::string_view origin_name(EdgeOrigin origin);

struct Edge {
    std::size_t parent = 0;  // position of the parent in the graph's node list
    EdgeOrigin origin = EdgeOrigin::hard;
    double dt_raw = 0.0;  // |t_child - t_parent| in days
    double dist_m = 0.0;
};

/// A candidate parent as seen by the connection rules.
struct Candidate {
    std::size_t position = 0;
    std::int64_t id = 0;
    Coord coord;
    double t_raw = 0.0;
};

/// Candidates within l_res and t_res of `node`, in candidate order.
std::vector<std::size_t> hard_edges(const GraphNode& node, std::span<const Candidate> candidates,
                                    const GraphConfig& config);

/// Indices (into `candidates`) of the min(K, n) best candidates by
/// dist/l_res + |dt|/t_res, ascending, ties by smaller id.
std::vector<std::size_t> top_edges(const GraphNode& node, std::span<const Candidate> candidates,
                                   const GraphConfig& config);

class STGraph {
public:
    STGraph() = default;
    explicit STGraph(GraphConfig config) : config_(config) {}

    const GraphConfig& config() const { return config_; }
    std::size_t size() const { return nodes_.size(); }
    std::size_t init_count() const { return init_count_; }
    const std::vector<GraphNode>& nodes() const { return nodes_; }
    const GraphNode& node(std::size_t position) const { return nodes_.at(position); }
    const std::vector<Edge>& parents(std::size_t position) const { return parents_.at(position); }
    std::size_t edge_count() const;
    std::optional<std::size_t> position_of(std::int64_t id) const;

    /// Parents the connection rules would give `node` among the current nodes
    /// with t_raw <= node.t_raw, skipping positions listed in `exclude`.
    /// Does not modify the graph.
    std::vector<Edge> connect(const GraphNode& node, std::span<const std::size_t> exclude = {}) const;

    /// Appends a node in temporal order with connect() parents. Returns its position.
    std::size_t expand(GraphNode node);

    /// Appends a node with explicitly supplied parents (used when replaying a
    /// stored graph). Parents must reference existing positions.
    std::size_t append(GraphNode node, std::vector<Edge> parents);

    nlohmann::json to_json() const;

    friend STGraph build_init_graph(std::span<const GraphNode> init_nodes, const GraphConfig& config);

private:
    GraphConfig config_;
    std::vector<GraphNode> nodes_;
    std::vector<std::vector<Edge>> parents_;
    std::unordered_map<std::int64_t, std::size_t> index_;
    std::size_t init_count_ = 0;
    double max_non_init_time_ = -std::numeric_limits<double>::infinity();
};

/// Initialization block: every ordered pair satisfying the hard condition in
/// both directions is connected; no TOP edges.
STGraph build_init_graph(std::span<const GraphNode> init_nodes, const GraphConfig& config);

/// build_init_graph on the first `init_count` nodes, then expand() the rest in order.
STGraph build_graph(std::span<const GraphNode> nodes, std::size_t init_count, const GraphConfig& config);

struct EdgeAnnotation {
    std::size_t child = 0;
    std::size_t parent = 0;
    double dt_norm = 0.0;
    double dist_m = 0.0;
};

/// One annotation per edge, ordered by child position then parent-list order.
std::vector<EdgeAnnotation> edge_annotations(const STGraph& graph);

}  // namespace stgan::graph
