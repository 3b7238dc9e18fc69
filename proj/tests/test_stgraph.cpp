#include <doctest.h>

#include <algorithm>
#include <random>

#include "stgan/errors.hpp"
#include "stgan/stgraph.hpp"
#include "support/oracles.hpp"

using namespace stgan;
using namespace stgan::graph;

namespace {

GraphNode node(std::int64_t id, double lon, double lat, double t) { return {id, {lon, lat}, t, 0.0, false}; }

}  // namespace

TEST_CASE("distances agree with reference values") {
    // One degree of latitude on a 6371 km sphere.
    CHECK(location_distance({0, 0}, {0, 1}) == doctest::Approx(111194.93).epsilon(1e-6));
    CHECK(location_distance({0, 0}, {0, 1}, DistanceMetric::haversine) == doctest::Approx(111194.93).epsilon(1e-6));
    const Coord a{121.40, 31.15}, b{121.41, 31.16};
    CHECK(location_distance(a, b) == doctest::Approx(oracle::distance_m(a, b)).epsilon(1e-12));
    CHECK(location_distance(a, b) == location_distance(b, a));
    // At city scale the two metrics agree to well under a meter.
    CHECK(std::abs(location_distance(a, b) - location_distance(a, b, DistanceMetric::haversine)) < 0.5);
    CHECK_THROWS_AS(location_distance({NAN, 0}, b), NumericError);
}

TEST_CASE("hard edges need both thresholds") {
    GraphConfig cfg;
    cfg.top_k = 0;
    const GraphNode q = node(9, 121.4, 31.15, 100.0);
    const std::vector<Candidate> cands = {
        {0, 1, {121.4, 31.15}, 90.0},     // same place, 10 days earlier
        {1, 2, {121.4, 31.15}, 80.0},     // same place, too old
        {2, 3, {121.41, 31.15}, 99.0},    // ~950 m away
        {3, 4, {121.4015, 31.15}, 99.0},  // ~143 m away
    };
    CHECK(hard_edges(q, cands, cfg) == std::vector<std::size_t>{0, 3});
}

TEST_CASE("top edges rank by the normalized sum and break ties by id") {
    GraphConfig cfg;
    cfg.top_k = 2;
    const GraphNode q = node(9, 121.4, 31.15, 100.0);
    const std::vector<Candidate> cands = {
        {0, 5, {121.4, 31.15}, 72.0},  // score 2.0
        {1, 3, {121.4, 31.15}, 72.0},  // score 2.0, smaller id
        {2, 4, {121.4, 31.15}, 93.0},  // score 0.5
    };
    CHECK(top_edges(q, cands, cfg) == std::vector<std::size_t>{2, 1});
    cfg.top_k = 10;
    CHECK(top_edges(q, cands, cfg).size() == 3);
}

TEST_CASE("init block is mutually visible under the hard condition only") {
    GraphConfig cfg;
    const std::vector<GraphNode> init = {node(1, 121.4, 31.15, 10), node(2, 121.4005, 31.15, 12),
                                         node(3, 121.5, 31.2, 12)};
    const STGraph g = build_init_graph(init, cfg);
    CHECK(g.init_count() == 3);
    CHECK(g.edge_count() == 2);
    CHECK(g.parents(0).size() == 1);
    CHECK(g.parents(0)[0].origin == EdgeOrigin::init);
    CHECK(g.parents(2).empty());
    CHECK(build_init_graph(std::vector<GraphNode>{node(1, 0, 0, 0)}, cfg).edge_count() == 0);
    CHECK_THROWS_AS(build_init_graph(std::vector<GraphNode>{}, cfg), GraphError);
}

TEST_CASE("init block matches the symmetric brute-force oracle") {
    std::mt19937_64 rng(4);
    const auto nodes = oracle::random_nodes(rng, 10, 0.004, 30.0);
    GraphConfig cfg;
    const STGraph g = build_init_graph(nodes, cfg);
    CHECK(oracle::edge_set(g) == oracle::brute_force_edges(nodes, nodes.size(), cfg));
}

TEST_CASE("expansion rejects out-of-order and duplicate nodes") {
    GraphConfig cfg;
    STGraph g = build_graph(std::vector<GraphNode>{node(1, 121.4, 31.15, 10), node(2, 121.4, 31.15, 20)}, 1, cfg);
    CHECK_THROWS_AS(g.expand(node(3, 121.4, 31.15, 15)), TemporalError);
    CHECK_THROWS_AS(g.expand(node(2, 121.4, 31.15, 25)), GraphError);
    const auto pos = g.expand(node(4, 121.4, 31.15, 20));
    CHECK(g.parents(pos).size() == 2);
}

TEST_CASE("first non-init node with no init predecessor in range still gets TOP parents") {
    GraphConfig cfg;
    cfg.top_k = 1;
    STGraph g = build_graph(std::vector<GraphNode>{node(1, 121.4, 31.15, 0), node(2, 121.6, 31.3, 100)}, 1, cfg);
    REQUIRE(g.parents(1).size() == 1);
    CHECK(g.parents(1)[0].origin == EdgeOrigin::top);
    CHECK(g.parents(1)[0].dt_raw == 100.0);
}

TEST_CASE("random graphs: soundness, TOP guarantee, brute-force equality and K=0 subset") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        const auto nodes = oracle::random_nodes(rng, 200, 0.02, 60.0, 50);
        GraphConfig cfg;
        const STGraph g = build_graph(nodes, 20, cfg);
        for (std::size_t i = 20; i < g.size(); ++i) {
            std::size_t prior = 0;
            for (std::size_t j = 0; j < i; ++j) prior += g.node(j).t_raw <= g.node(i).t_raw;
            CHECK(g.parents(i).size() >= std::min(cfg.top_k, prior));
            for (const auto& e : g.parents(i)) CHECK(g.node(e.parent).t_raw <= g.node(i).t_raw);
        }
        CHECK(oracle::edge_set(g) == oracle::brute_force_edges(nodes, 20, cfg));
        GraphConfig k0 = cfg;
        k0.top_k = 0;
        const auto sub = oracle::edge_set(build_graph(nodes, 20, k0));
        const auto full = oracle::edge_set(g);
        CHECK(std::includes(full.begin(), full.end(), sub.begin(), sub.end()));
    }
}

TEST_CASE("strict TOP mode adds K parents beyond the hard set") {
    std::mt19937_64 rng(12);
    const auto nodes = oracle::random_nodes(rng, 80, 0.01, 30.0, 10);
    GraphConfig merged, strict;
    strict.top_mode = TopMode::strict_additional;
    const STGraph a = build_graph(nodes, 8, merged);
    const STGraph b = build_graph(nodes, 8, strict);
    for (std::size_t i = 8; i < a.size(); ++i) {
        CHECK(b.parents(i).size() >= a.parents(i).size());
        std::size_t hard = 0;
        for (const auto& e : b.parents(i)) hard += e.origin == EdgeOrigin::hard;
        CHECK(b.parents(i).size() == hard + std::min<std::size_t>(merged.top_k, i - hard));
    }
}

TEST_CASE("connect honours exclusions and leaves the graph untouched") {
    GraphConfig cfg;
    const std::vector<GraphNode> ns = {node(1, 121.4, 31.15, 0), node(2, 121.4, 31.15, 1), node(3, 121.4, 31.15, 2)};
    const STGraph g = build_graph(ns, 1, cfg);
    const auto before = oracle::edge_set(g);
    const std::size_t skip[] = {1};
    const auto parents = g.connect(node(7, 121.4, 31.15, 3), skip);
    CHECK(parents.size() == 2);
    for (const auto& e : parents) CHECK(e.parent != 1);
    CHECK(oracle::edge_set(g) == before);
}

TEST_CASE("graph JSON lists nodes and annotated edges") {
    GraphConfig cfg;
    const std::vector<GraphNode> ns = {{1, {121.4, 31.15}, 0.0, 0.0, false}, {2, {121.4, 31.15}, 5.0, 0.5, false}};
    const STGraph g = build_graph(ns, 1, cfg);
    const auto j = g.to_json();
    CHECK(j.at("nodes").size() == 2);
    REQUIRE(j.at("edges").size() == 1);
    CHECK(j.at("edges")[0].at("from") == 1);
    CHECK(j.at("edges")[0].at("to") == 2);
    CHECK(j.at("edges")[0].at("dt_norm").get<double>() == 0.5);
    CHECK(GraphConfig::from_json(cfg.to_json()) == cfg);
    CHECK_THROWS_AS(GraphConfig::from_json({{"metric", "manhattan"}}), ConfigError);
    CHECK_THROWS_AS(GraphConfig::from_json({{"l_res_m", 0}}), ConfigError);
}
