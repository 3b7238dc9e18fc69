#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "stgan/errors.hpp"
#include "stgan/model.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace stgan;
using namespace stgan::model;

namespace {

std::vector<double> predict_all(const fixture::Instance& inst) {
    return predict_values(inst.params, inst.config, make_batch(inst.graph, inst.nodes, inst.config));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("variant names round-trip and classify") {
    for (Variant v : kAllVariants) CHECK(parse_variant(variant_name(v)) == v);
    CHECK_THROWS_AS(parse_variant("lstm"), ConfigError);
    CHECK(is_baseline(Variant::gat));
    CHECK(is_ablation(Variant::stgan_eam));
    CHECK_FALSE(uses_attention(Variant::gcn));
}

TEST_CASE("config validation and JSON round trip") {
    ModelConfig c;
    CHECK(ModelConfig::from_json(c.to_json()) == c);
    c.heads = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.extractor_widths = {};
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("initialization is seeded per name and per input feature") {
    const ModelConfig c = fixture::small_config(Variant::stgan);
    CHECK(init_params(c, 3) == init_params(c, 3));
    CHECK_FALSE(init_params(c, 3) == init_params(c, 4));
    ModelConfig named = c;
    named.input_names = {"a", "b", "c", "d", "longitude_gcj", "latitude_gcj", "collect_time"};
    ModelConfig dropped = named;
    dropped.full_dim = 6;
    dropped.input_names.erase(dropped.input_names.begin() + 1);
    const auto full = init_params(named, 9).at("extract.full.w1");
    const auto less = init_params(dropped, 9).at("extract.full.w1");
    // Glorot bounds differ with fan-in, so compare the draws up to scale.
    const double ratio = std::sqrt((7.0 + 5.0) / (6.0 + 5.0));
    for (std::size_t col = 0; col < 5; ++col) {
        CHECK(less(0, col) == doctest::Approx(full(0, col) * ratio).epsilon(1e-12));
        CHECK(less(3, col) == doctest::Approx(full(4, col) * ratio).epsilon(1e-12));
    }
    const auto p = init_params(c, 1);
    const double bound = std::sqrt(6.0 / (7.0 + 5.0));
    for (double v : p.at("extract.full.w1").values()) CHECK(std::abs(v) <= bound);
    for (double v : p.at("extract.full.b1").values()) CHECK(v == 0.0);
}

TEST_CASE("edge-list forward equals the dense masked-matrix oracle") {
    for (Variant v : kAllVariants) {
        for (std::size_t layers : {1, 2}) {
            for (bool shared : {false, true}) {
                if (!uses_attention(v) && (layers > 1 || shared)) continue;
                CAPTURE(variant_name(v));
                CAPTURE(layers);
                CAPTURE(shared);
                ModelConfig c = fixture::small_config(v);
                c.layers = layers;
                c.share_attention = shared;
                for (std::uint64_t seed = 1; seed <= 4; ++seed) {
                    const auto inst = fixture::random_instance(seed, 3 + seed, 2, c);
                    CHECK(max_abs_diff(predict_all(inst), oracle::dense_forward(inst.graph, inst.nodes, c, inst.params)) <
                          1e-9);
                }
            }
        }
    }
}

TEST_CASE("three-node chain matches the dense oracle") {
    const ModelConfig c = fixture::small_config(Variant::stgan);
    std::vector<graph::GraphNode> ns = {
        {1, {121.4, 31.15}, 0.0, 0.0, false}, {2, {121.4, 31.15}, 5.0, 0.5, false}, {3, {121.4, 31.15}, 10.0, 1.0, false}};
    graph::GraphConfig gcfg;
    gcfg.top_k = 1;
    gcfg.t_res_days = 6.0;
    fixture::Instance inst{graph::build_graph(ns, 1, gcfg), {}, c, init_params(c, 2)};
    std::mt19937_64 rng(2);
    inst.nodes = oracle::random_features(rng, inst.graph, c.full_dim);
    CHECK(inst.graph.edge_count() == 2);
    CHECK(max_abs_diff(predict_all(inst), oracle::dense_forward(inst.graph, inst.nodes, c, inst.params)) < 1e-9);
}

TEST_CASE("own features never reach a node's prediction") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> noise(0.0, 3.0);
    for (Variant v : kAllVariants) {
        CAPTURE(variant_name(v));
        ModelConfig c = fixture::small_config(v);
        const auto inst = fixture::random_instance(7, 8, 2, c);
        const auto base = predict_all(inst);
        const auto st = c.st_slots();
        for (std::size_t i = inst.graph.init_count(); i < inst.nodes.size(); ++i) {
            auto perturbed = inst;
            for (std::size_t k = 0; k < c.full_dim; ++k) {
                if (std::find(st.begin(), st.end(), k) == st.end()) perturbed.nodes[i].x_full[k] += noise(rng);
            }
            perturbed.nodes[i].y += 10.0;
            CHECK(predict_all(perturbed)[i] == base[i]);
        }
    }
}

TEST_CASE("attention coefficients sum to one per target, head and layer") {
    for (Variant v : {Variant::stgan, Variant::gat, Variant::stgan_eam, Variant::stgan_no_td}) {
        ModelConfig c = fixture::small_config(v);
        c.layers = 3;
        const auto inst = fixture::random_instance(5, 8, 2, c);
        std::size_t calls = 0;
        double worst = 0.0;
        ForwardOptions opts;
        opts.probe = [&](std::size_t, const ndgrad::Matrix& a, const std::vector<std::size_t>& off) {
            ++calls;
            for (std::size_t s = 0; s + 1 < off.size(); ++s)
                for (std::size_t h = 0; h < a.cols(); ++h) {
                    double acc = 0.0;
                    for (std::size_t e = off[s]; e < off[s + 1]; ++e) acc += a(e, h);
                    worst = std::max(worst, std::abs(acc - 1.0));
                }
        };
        predict_values(inst.params, c, make_batch(inst.graph, inst.nodes, c), opts);
        CHECK(calls == 3);
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("isolated node: self coefficient one and prediction from x_st only") {
    for (Variant v : kAllVariants) {
        CAPTURE(variant_name(v));
        const ModelConfig c = fixture::small_config(v);
        const std::vector<graph::GraphNode> one = {{1, {121.4, 31.15}, 0.0, 0.0, false}};
        fixture::Instance inst{graph::build_graph(one, 0, {}), {}, c, init_params(c, 3)};
        std::mt19937_64 rng(8);
        inst.nodes = oracle::random_features(rng, inst.graph, c.full_dim);
        const double base = predict_all(inst)[0];
        for (std::size_t k = 0; k + 3 < c.full_dim; ++k) inst.nodes[0].x_full[k] = 42.0;
        CHECK(predict_all(inst)[0] == base);
        if (uses_attention(v)) {
            ForwardOptions opts;
            opts.probe = [](std::size_t, const ndgrad::Matrix& a, const std::vector<std::size_t>&) {
                for (double x : a.values()) CHECK(x == 1.0);
            };
            predict_values(inst.params, c, make_batch(inst.graph, inst.nodes, c), opts);
        }
    }
}

TEST_CASE("zero parameters predict zero") {
    for (Variant v : kAllVariants) {
        const ModelConfig c = fixture::small_config(v);
        auto inst = fixture::random_instance(2, 6, 2, c);
        for (auto& m : inst.params.values())
            for (auto& x : m.values()) x = 0.0;
        for (double y : predict_all(inst)) CHECK(y == 0.0);
    }
}

TEST_CASE("identical heads tile one head's aggregation") {
    ModelConfig c = fixture::small_config(Variant::stgan);
    c.heads = 3;
    auto inst = fixture::random_instance(4, 7, 2, c);
    auto& w = inst.params.at("attn.l1");
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t h = 1; h < 3; ++h) w(r, h) = w(r, 0);
    ndgrad::Tape t;
    const Bound p(t, inst.params, false);
    const auto batch = make_batch(inst.graph, inst.nodes, c);
    const Features f = extract_features(p, c, t.constant(batch.x_full), t.constant(batch.x_st));
    const Var coef =
        attention_coefficients(p, c, batch, 1, f.z_st, f.z_st, batch.edge_src, ScoreInput::spatiotemporal, false);
    const auto& rep = t.value(gconv_first(t, batch, coef, f.z, f.z_st, 3));
    const std::size_t h = c.hidden();
    for (std::size_t r = 0; r < rep.rows(); ++r)
        for (std::size_t k = 0; k < h; ++k) {
            CHECK(rep(r, h + k) == rep(r, k));
            CHECK(rep(r, 2 * h + k) == rep(r, k));
        }
}

TEST_CASE("EAM with gamma zero reduces to all-feature attention") {
    ModelConfig eam = fixture::small_config(Variant::stgan_eam);
    eam.eam_gamma = 0.0;
    ModelConfig gat = eam;
    gat.variant = Variant::gat;
    auto inst = fixture::random_instance(6, 8, 2, eam);
    const auto a = predict_all(inst);
    inst.config = gat;
    CHECK(predict_all(inst) == a);
}

TEST_CASE("zero time weight makes STGAN identical to the no-TD ablation") {
    ModelConfig st = fixture::small_config(Variant::stgan);
    ModelConfig td = st;
    td.variant = Variant::stgan_no_td;
    auto inst = fixture::random_instance(8, 8, 2, st);
    auto& w = inst.params.at("attn.l1");
    for (std::size_t h = 0; h < st.heads; ++h) w(2 * st.hidden(), h) = 0.0;
    const auto a = predict_all(inst);

    auto other = inst;
    other.config = td;
    other.params = init_params(td, 1);
    for (std::size_t k = 0; k < inst.params.size(); ++k) {
        const auto& name = inst.params.names()[k];
        if (name == "attn.l1") {
            auto& dst = other.params.at(name);
            for (std::size_t r = 0; r < dst.rows(); ++r)
                for (std::size_t h = 0; h < dst.cols(); ++h) dst(r, h) = w(r, h);
        } else {
            other.params.at(name) = inst.params.values()[k];
        }
    }
    CHECK(predict_all(other) == a);
}

TEST_CASE("receptive-field batches reproduce full-graph predictions") {
    for (Variant v : kAllVariants) {
        CAPTURE(variant_name(v));
        ModelConfig c = fixture::small_config(v);
        if (uses_attention(v)) c.layers = 2;
        const auto inst = fixture::random_instance(9, 12, 3, c);
        const auto full = predict_all(inst);
        for (std::size_t target = inst.graph.init_count(); target < inst.graph.size(); ++target) {
            const std::size_t t[] = {target};
            const auto batch = make_batch(inst.graph, inst.nodes, c, t, receptive_hops(c));
            const auto sub = predict_values(inst.params, c, batch);
            CHECK(sub[*batch.row_of(inst.graph.node(target).id)] == doctest::Approx(full[target]).epsilon(1e-12));
        }
    }
}

TEST_CASE("node storage order does not matter") {
    const ModelConfig c = fixture::small_config(Variant::stgan);
    auto inst = fixture::random_instance(10, 8, 2, c);
    const auto a = predict_all(inst);
    std::reverse(inst.nodes.begin(), inst.nodes.end());
    CHECK(predict_all(inst) == a);
}

TEST_CASE("batch edges: parents first, self last, GCN normalization") {
    const ModelConfig c = fixture::small_config(Variant::gcn);
    const auto inst = fixture::random_instance(11, 8, 2, c);
    const auto b = make_batch(inst.graph, inst.nodes, c);
    CHECK(b.offsets.size() == b.rows() + 1);
    for (std::size_t r = 0; r < b.rows(); ++r) {
        const std::size_t last = b.offsets[r + 1] - 1;
        CHECK(b.edge_self[last]);
        CHECK(b.edge_src[last] == r);
        CHECK(b.gcn_coef[last] == 1.0 / static_cast<double>(inst.graph.parents(r).size() + 1));
        for (std::size_t e = b.offsets[r]; e < last; ++e) CHECK_FALSE(b.edge_self[e]);
    }
}

TEST_CASE("shape errors surface from forward") {
    const ModelConfig c = fixture::small_config(Variant::stgan);
    auto inst = fixture::random_instance(3, 5, 2, c);
    ModelConfig wrong = c;
    wrong.full_dim = 9;
    CHECK_THROWS_AS(make_batch(inst.graph, inst.nodes, wrong), DimensionError);
    ndgrad::Tape t;
    CHECK_THROWS_AS(forward_baseline(Bound(t, inst.params, false), c, make_batch(inst.graph, inst.nodes, c)),
                    ConfigError);
}
