#pragma once

// Small seeded model instances shared by the model tests and the acceptance binary.

#include <random>

#include "stgan/model.hpp"
#include "stgan/stgraph.hpp"
#include "support/oracles.hpp"

namespace fixture {

struct Instance {
    stgan::graph::STGraph graph;
    std::vector<stgan::data::ProcessedNode> nodes;  // aligned with graph positions
    stgan::model::ModelConfig config;
    stgan::model::ParamSet params;
};

inline stgan::model::ModelConfig small_config(stgan::model::Variant v, std::size_t d = 7) {
    stgan::model::ModelConfig c;
    c.variant = v;
    c.full_dim = d;
    c.extractor_widths = {5, 4};
    c.head_hidden = 6;
    c.heads = 2;
    c.layers = 1;
    return c;
}

/// Random graph of `n` nodes (first `n_init` form the init block) spread over
/// a few sites so hard, TOP and init edges all occur.
inline Instance random_instance(std::uint64_t seed, std::size_t n, std::size_t n_init,
                                stgan::model::ModelConfig config) {
    std::mt19937_64 rng(seed);
    const auto nodes = oracle::random_nodes(rng, n, 0.004, 20.0, std::max<std::size_t>(2, n / 2));
    stgan::graph::GraphConfig gcfg;
    gcfg.top_k = config.variant == stgan::model::Variant::stgan_no_top ? 0 : 2;
    Instance inst{stgan::graph::build_graph(nodes, n_init, gcfg), {}, config, {}};
    inst.nodes = oracle::random_features(rng, inst.graph, config.full_dim);
    inst.params = stgan::model::init_params(config, seed + 1);
    // Nonzero biases so every term of the forward is exercised.
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (std::size_t k = 0; k < inst.params.size(); ++k) {
        if (inst.params.names()[k].find(".b") != std::string::npos) {
            for (auto& v : inst.params.values()[k].values()) v = u(rng);
        }
    }
    return inst;
}

}  // namespace fixture
