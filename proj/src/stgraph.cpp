#include "stgan/stgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace stgan::graph {

namespace {

constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = std::numbers::pi / 180.0;

Candidate as_candidate(const GraphNode& n, std::size_t position) {
    return Candidate{position, n.id, n.coord, n.t_raw};
}

std::string_view metric_name(DistanceMetric m) {
    return m == DistanceMetric::haversine ? "haversine" : "equirectangular";
}

std::string_view top_mode_name(TopMode m) {
    return m == TopMode::strict_additional ? "strict_additional" : "merged";
}

}  // namespace

void GraphConfig::validate() const {
    if (!(l_res_m > 0.0) || !(t_res_days > 0.0)) {
        throw ConfigError("graph config: l_res and t_res must be positive");
    }
}

nlohmann::json GraphConfig::to_json() const {
    return {{"l_res_m", l_res_m},
            {"t_res_days", t_res_days},
            {"top_k", top_k},
            {"metric", metric_name(metric)},
            {"top_mode", top_mode_name(top_mode)}};
}

GraphConfig GraphConfig::from_json(const nlohmann::json& j) {
    GraphConfig c;
    c.l_res_m = j.value("l_res_m", c.l_res_m);
    c.t_res_days = j.value("t_res_days", c.t_res_days);
    c.top_k = j.value("top_k", c.top_k);
    const std::string metric = j.value("metric", std::string(metric_name(c.metric)));
    if (metric == "equirectangular") {
        c.metric = DistanceMetric::equirectangular;
    } else if (metric == "haversine") {
        c.metric = DistanceMetric::haversine;
    } else {
        throw ConfigError("graph config: unknown metric '" + metric + "'");
    }
    const std::string mode = j.value("top_mode", std::string(top_mode_name(c.top_mode)));
    if (mode == "merged") {
        c.top_mode = TopMode::merged;
    } else if (mode == "strict_additional") {
        c.top_mode = TopMode::strict_additional;
    } else {
        throw ConfigError("graph config: unknown top_mode '" + mode + "'");
    }
    c.validate();
    return c;
}

double location_distance(Coord a, Coord b, DistanceMetric metric) {
    if (!std::isfinite(a.lon) || !std::isfinite(a.lat) || !std::isfinite(b.lon) || !std::isfinite(b.lat)) {
        throw NumericError("location_distance: non-finite coordinate");
    }
    const double phi_a = a.lat * kDegToRad;
    const double phi_b = b.lat * kDegToRad;
    const double dphi = phi_b - phi_a;
    const double dlambda = (b.lon - a.lon) * kDegToRad;
    if (metric == DistanceMetric::haversine) {
        const double s1 = std::sin(0.5 * dphi);
        const double s2 = std::sin(0.5 * dlambda);
        const double h = s1 * s1 + std::cos(phi_a) * std::cos(phi_b) * s2 * s2;
        return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
    }
    // Symmetric in (a, b): the mean latitude and squared differences are.
    const double x = std::cos(0.5 * (phi_a + phi_b)) * dlambda;
    return kEarthRadiusM * std::sqrt(dphi * dphi + x * x);
}

std::string_view origin_name(EdgeOrigin origin) {
    switch (origin) {
        case EdgeOrigin::hard: return "hard";
        case EdgeOrigin::top: return "top";
        case EdgeOrigin::init: return "init";
    }
    return "unknown";
}

std::vector<std::size_t> hard_edges(const GraphNode& node, std::span<const Candidate> candidates,
                                    const GraphConfig& config) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const Candidate& c = candidates[k];
        if (location_distance(node.coord, c.coord, config.metric) <= config.l_res_m &&
            std::abs(node.t_raw - c.t_raw) <= config.t_res_days) {
            out.push_back(k);
        }
    }
    return out;
}

std::vector<std::size_t> top_edges(const GraphNode& node, std::span<const Candidate> candidates,
                                   const GraphConfig& config) {
    const std::size_t k = std::min(config.top_k, candidates.size());
    if (k == 0) {
        return {};
    }
    std::vector<std::tuple<double, std::int64_t, std::size_t>> scored;
    scored.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Candidate& c = candidates[i];
        const double s = location_distance(node.coord, c.coord, config.metric) / config.l_res_m +
                         std::abs(node.t_raw - c.t_raw) / config.t_res_days;
        scored.emplace_back(s, c.id, i);
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(k), scored.end());
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(std::get<2>(scored[i]));
    }
    return out;
}

std::size_t STGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& p : parents_) {
        n += p.size();
    }
    return n;
}

std::optional<std::size_t> STGraph::position_of(std::int64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<Edge> STGraph::connect(const GraphNode& node, std::span<const std::size_t> exclude) const {
    std::vector<Candidate> candidates;
    candidates.reserve(nodes_.size());
    for (std::size_t p = 0; p < nodes_.size(); ++p) {
        if (nodes_[p].t_raw <= node.t_raw && std::find(exclude.begin(), exclude.end(), p) == exclude.end()) {
            candidates.push_back(as_candidate(nodes_[p], p));
        }
    }
    const auto hard = hard_edges(node, candidates, config_);
    std::vector<std::size_t> top;
    if (config_.top_mode == TopMode::merged) {
        top = top_edges(node, candidates, config_);
    } else {
        std::vector<bool> is_hard(candidates.size(), false);
        for (std::size_t h : hard) {
            is_hard[h] = true;
        }
        std::vector<Candidate> rest;
        std::vector<std::size_t> back;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (!is_hard[i]) {
                rest.push_back(candidates[i]);
                back.push_back(i);
            }
        }
        for (std::size_t r : top_edges(node, rest, config_)) {
            top.push_back(back[r]);
        }
    }
    // Origin bookkeeping: TOP wins when both rules select a candidate.
    std::vector<std::pair<std::size_t, EdgeOrigin>> chosen;
    for (std::size_t t : top) {
        chosen.emplace_back(t, EdgeOrigin::top);
    }
    for (std::size_t h : hard) {
        if (std::find(top.begin(), top.end(), h) == top.end()) {
            chosen.emplace_back(h, EdgeOrigin::hard);
        }
    }
    std::vector<Edge> edges;
    edges.reserve(chosen.size());
    for (const auto& [idx, origin] : chosen) {
        const Candidate& c = candidates[idx];
        edges.push_back(Edge{c.position, origin, node.t_raw - c.t_raw,
                             location_distance(node.coord, c.coord, config_.metric)});
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.parent < b.parent; });
    return edges;
}

std::size_t STGraph::append(GraphNode node, std::vector<Edge> parents) {
    if (index_.contains(node.id)) {
        throw GraphError("node id " + std::to_string(node.id) + " already present");
    }
    for (const Edge& e : parents) {
        if (e.parent >= nodes_.size()) {
            throw GraphError("edge references unknown parent position " + std::to_string(e.parent));
        }
    }
    const std::size_t pos = nodes_.size();
    index_.emplace(node.id, pos);
    if (node.is_init) {
        ++init_count_;
    } else {
        max_non_init_time_ = std::max(max_non_init_time_, node.t_raw);
    }
    nodes_.push_back(node);
    parents_.push_back(std::move(parents));
    return pos;
}

std::size_t STGraph::expand(GraphNode node) {
    if (index_.contains(node.id)) {
        throw GraphError("expand: node id " + std::to_string(node.id) + " already present");
    }
    if (node.t_raw < max_non_init_time_) {
        throw TemporalError("expand: node " + std::to_string(node.id) + " at t=" + std::to_string(node.t_raw) +
                            " precedes the latest node at t=" + std::to_string(max_non_init_time_));
    }
    node.is_init = false;
    auto parents = connect(node);
    return append(node, std::move(parents));
}

nlohmann::json STGraph::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    nlohmann::json edges = nlohmann::json::array();
    for (std::size_t p = 0; p < nodes_.size(); ++p) {
        const GraphNode& n = nodes_[p];
        nodes.push_back({{"id", n.id},
                         {"lon", n.coord.lon},
                         {"lat", n.coord.lat},
                         {"t_raw", n.t_raw},
                         {"t_norm", n.t_norm},
                         {"is_init", n.is_init}});
        for (const Edge& e : parents_[p]) {
            edges.push_back({{"from", nodes_[e.parent].id},
                             {"to", n.id},
                             {"origin", origin_name(e.origin)},
                             {"dt_norm", std::abs(n.t_norm - nodes_[e.parent].t_norm)},
                             {"dist_m", e.dist_m}});
        }
    }
    return {{"nodes", nodes}, {"edges", edges}};
}

STGraph build_init_graph(std::span<const GraphNode> init_nodes, const GraphConfig& config) {
    config.validate();
    if (init_nodes.empty()) {
        throw GraphError("build_init_graph: empty initialization set");
    }
    STGraph g(config);
    std::vector<Candidate> all;
    for (std::size_t p = 0; p < init_nodes.size(); ++p) {
        all.push_back(as_candidate(init_nodes[p], p));
    }
    for (std::size_t p = 0; p < init_nodes.size(); ++p) {
        GraphNode n = init_nodes[p];
        n.is_init = true;
        std::vector<Edge> parents;
        for (std::size_t k : hard_edges(n, all, config)) {
            if (k == p) {
                continue;
            }
            parents.push_back(Edge{k, EdgeOrigin::init, std::abs(n.t_raw - init_nodes[k].t_raw),
                                   location_distance(n.coord, init_nodes[k].coord, config.metric)});
        }
        // Parents may be later nodes of the block; validate ids after insertion.
        if (g.index_.contains(n.id)) {
            throw GraphError("build_init_graph: duplicate node id " + std::to_string(n.id));
        }
        g.index_.emplace(n.id, p);
        g.nodes_.push_back(n);
        g.parents_.push_back(std::move(parents));
        ++g.init_count_;
    }
    return g;
}

STGraph build_graph(std::span<const GraphNode> nodes, std::size_t init_count, const GraphConfig& config) {
    if (init_count > nodes.size()) {
        throw GraphError("build_graph: init count exceeds node count");
    }
    STGraph g = init_count > 0 ? build_init_graph(nodes.subspan(0, init_count), config) : STGraph(config);
    for (std::size_t p = init_count; p < nodes.size(); ++p) {
        g.expand(nodes[p]);
    }
    return g;
}

std::vector<EdgeAnnotation> edge_annotations(const STGraph& graph) {
    std::vector<EdgeAnnotation> out;
    out.reserve(graph.edge_count());
    for (std::size_t p = 0; p < graph.size(); ++p) {
        for (const Edge& e : graph.parents(p)) {
            out.push_back(EdgeAnnotation{p, e.parent, std::abs(graph.node(p).t_norm - graph.node(e.parent).t_norm),
                                         e.dist_m});
        }
    }
    return out;
}

}  // namespace stgan::graph
