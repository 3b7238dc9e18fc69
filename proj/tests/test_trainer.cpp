#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "stgan/errors.hpp"
#include "stgan/eval.hpp"
#include "stgan/trainer.hpp"
#include "support/fixtures.hpp"

using namespace stgan;
using namespace stgan::trainer;

namespace {

eval::Prepared small_prepared() {
    data::SyntheticConfig cfg;
    cfg.n_locations = 30;
    cfg.total_records = 150;
    cfg.seed = 21;
    return eval::prepare(data::generate_synthetic(cfg).records, {}, {});
}

model::ModelConfig small_model(const eval::Prepared& p, model::Variant v = model::Variant::stgan) {
    return eval::fit_model_config(fixture::small_config(v), p);
}

std::vector<std::int64_t> loss_ids(const eval::Prepared& p) { return p.train_ids; }

InferenceContext context(const eval::Prepared& p, const model::ModelConfig& m, const model::ParamSet& params) {
    InferenceContext ctx;
    ctx.params = &params;
    ctx.model = m;
    ctx.stats = p.stats;
    ctx.layout = p.layout;
    ctx.locations = p.locations;
    return ctx;
}

std::vector<data::ProcessedNode> graph_nodes(const eval::Prepared& p, const graph::STGraph& g) {
    std::vector<data::ProcessedNode> out;
    for (std::size_t i = 0; i < g.size(); ++i) out.push_back(p.node(g.node(i).id));
    return out;
}

TrainConfig quick(std::size_t epochs) {
    TrainConfig t;
    t.epochs = epochs;
    t.seed = 5;
    return t;
}

}  // namespace

TEST_CASE("training lowers the loss and reports it faithfully") {
    const auto p = small_prepared();
    const auto m = small_model(p);
    const auto g = eval::training_graph(p, {});
    const auto nodes = graph_nodes(p, g);
    const auto ids = loss_ids(p);
    std::vector<std::size_t> logged;
    TrainConfig cfg = quick(40);
    cfg.log_every = 10;
    const auto r = train(g, nodes, m, cfg, ids, [&](std::size_t e, double) { logged.push_back(e); });
    REQUIRE(r.loss_trace.size() == 40);
    CHECK(r.final_train_mae < r.loss_trace.front());
    CHECK(logged.size() >= 4);

    // Independent recomputation of the loss at the returned parameters.
    const auto pred = forward_graph(r.params, m, g, nodes);
    const std::set<std::int64_t> want(ids.begin(), ids.end());
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (want.count(g.node(i).id)) {
            acc += std::abs(nodes[i].y - pred[i]);
            ++count;
        }
    }
    CHECK(count == ids.size());
    CHECK(r.final_train_mae == doctest::Approx(acc / static_cast<double>(count)).epsilon(1e-12));
    CHECK(r.adam.steps() == 40);
}

TEST_CASE("zero epochs returns the seeded initialization") {
    const auto p = small_prepared();
    const auto m = small_model(p);
    const auto g = eval::training_graph(p, {});
    const auto r = train(g, graph_nodes(p, g), m, quick(0), loss_ids(p));
    CHECK(r.params == model::init_params(m, 5));
    CHECK(r.loss_trace.empty());
}

TEST_CASE("training reads no test node") {
    const auto p = small_prepared();
    const auto m = small_model(p);
    const auto g = eval::training_graph(p, {});
    const auto r = train(g, graph_nodes(p, g), m, quick(1), loss_ids(p));
    const std::set<std::int64_t> test(p.test_ids.begin(), p.test_ids.end());
    for (auto id : r.touched_ids) CHECK(test.count(id) == 0);
    CHECK(r.touched_ids.size() == p.init_ids.size() + p.train_ids.size());
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto p = small_prepared();
    for (auto v : {model::Variant::stgan, model::Variant::gcn, model::Variant::top_mlp}) {
        const auto m = small_model(p, v);
        const auto g = eval::training_graph(p, eval::variant_graph_config(v, {}));
        const auto nodes = graph_nodes(p, g);
        const auto a = train(g, nodes, m, quick(5), loss_ids(p));
        const auto b = train(g, nodes, m, quick(5), loss_ids(p));
        CHECK(a.params == b.params);
        CHECK(a.loss_trace == b.loss_trace);
    }
}

TEST_CASE("non-finite targets raise a divergence error") {
    const auto p = small_prepared();
    const auto m = small_model(p);
    const auto g = eval::training_graph(p, {});
    auto nodes = graph_nodes(p, g);
    nodes.back().y = std::numeric_limits<double>::infinity();
    std::vector<std::int64_t> ids = {g.node(g.size() - 1).id};
    CHECK_THROWS_AS(train(g, nodes, m, quick(3), ids), DivergenceError);
    CHECK_THROWS_AS(train(g, graph_nodes(p, g), m, quick(3), std::vector<std::int64_t>{}), ContractError);
}

TEST_CASE("strategy names") {
    CHECK(parse_strategy("true") == Strategy::true_feedback);
    CHECK(parse_strategy("predicted") == Strategy::predicted_feedback);
    CHECK(parse_strategy("ignore") == Strategy::ignore);
    CHECK(strategy_name(Strategy::predicted_feedback) == "predicted");
    CHECK_THROWS_AS(parse_strategy("oracle"), UsageError);
}

TEST_CASE("queries leave the graph untouched and skip same-point observations") {
    const auto p = small_prepared();
    const auto m = small_model(p);
    const auto params = model::init_params(m, 3);
    const auto g = eval::training_graph(p, {});
    const auto nodes = graph_nodes(p, g);
    auto ctx = context(p, m, params);
    const auto& last = g.node(g.size() - 1);
    const Query q{1000, nodes.back().location_id, last.t_raw};
    const auto before = g.edge_count();
    const auto r = predict_query(ctx, g, nodes, q);
    CHECK(g.edge_count() == before);
    for (const auto& e : r.parents) CHECK(e.parent != g.size() - 1);
    CHECK(r.y_hat == predict_one(ctx, g, nodes, q));
    CHECK_THROWS_AS(predict_one(ctx, g, nodes, {1001, nodes.back().location_id, last.t_raw - 5.0}), TemporalError);
    CHECK_THROWS_AS(predict_one(ctx, g, nodes, {1002, 987654, last.t_raw + 1.0}), LocationError);
    CHECK_THROWS_AS(predict_one(ctx, g, nodes, {last.id, nodes.back().location_id, last.t_raw + 1.0}), GraphError);
    ctx.enforce_time_order = false;
    CHECK_NOTHROW(predict_one(ctx, g, nodes, {1001, nodes.back().location_id, last.t_raw - 5.0}));
}

TEST_CASE("continuation strategies") {
    const auto p = small_prepared();
    const auto m = small_model(p);
    const auto g = eval::training_graph(p, {});
    const auto nodes = graph_nodes(p, g);
    const auto params = train(g, nodes, m, quick(10), loss_ids(p)).params;
    const auto ctx = context(p, m, params);
    std::vector<Query> queries;
    std::vector<data::RawRecord> obs;
    for (auto id : p.test_ids) {
        const auto& rec = p.records.at(static_cast<std::size_t>(id - 1));
        queries.push_back({id, rec.location_id, rec.collect_time});
        obs.push_back(rec);
    }
    const auto ign = predict_sequence(ctx, g, nodes, queries, Strategy::ignore);
    const auto pred = predict_sequence(ctx, g, nodes, queries, Strategy::predicted_feedback);
    const auto tru = predict_sequence(ctx, g, nodes, queries, Strategy::true_feedback, obs);
    REQUIRE(ign.size() == queries.size());
    // Nothing is committed before the first query.
    CHECK(pred[0] == ign[0]);
    CHECK(tru[0] == ign[0]);
    for (std::size_t k = 0; k < queries.size(); ++k) CHECK(ign[k] == predict_one(ctx, g, nodes, queries[k]));
    CHECK(pred != ign);
    CHECK(tru != pred);
    CHECK_THROWS_AS(predict_sequence(ctx, g, nodes, queries, Strategy::true_feedback), ContractError);

    // Manual replay of true feedback for the second query.
    auto work = g;
    auto work_nodes = nodes;
    const auto first = predict_query(ctx, work, work_nodes, queries[0]);
    commit(work, work_nodes, first, data::apply_preprocess(obs[0], p.stats, p.layout, queries[0].node_id));
    CHECK(work.size() == g.size() + 1);
    CHECK(predict_one(ctx, work, work_nodes, queries[1]) == tru[1]);

    const auto pf = predicted_features(ctx, first);
    CHECK(pf.x_full[p.layout.distress_slot] == p.stats.standardize("detect_info", first.y_hat));
    CHECK(pf.x_st == first.node.x_st);
    CHECK(pf.y == first.y_hat);
}

TEST_CASE("checkpoint round-trip is bit exact and damage is detected") {
    const auto p = small_prepared();
    const auto m = small_model(p);
    const auto g = eval::training_graph(p, {});
    const auto r = train(g, graph_nodes(p, g), m, quick(3), loss_ids(p));
    Checkpoint ck;
    ck.model = m;
    ck.stats = p.stats;
    ck.train = quick(3);
    ck.run_config = {{"seed", 5}};
    ck.params = r.params;
    ck.adam = r.adam;
    ck.loss_trace = r.loss_trace;
    ck.final_train_mae = r.final_train_mae;
    const std::string bytes = serialize_checkpoint(ck);
    const Checkpoint back = parse_checkpoint(bytes);
    CHECK(back.params == ck.params);
    CHECK(back.model == ck.model);
    CHECK(back.stats == ck.stats);
    CHECK(back.loss_trace == ck.loss_trace);
    CHECK(back.final_train_mae == ck.final_train_mae);
    CHECK(back.adam.steps() == 3);
    CHECK(back.adam.first_moment() == ck.adam.first_moment());
    CHECK(serialize_checkpoint(back) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "stgan_test_ckpt.bin";
    save_checkpoint(path, ck);
    CHECK(load_checkpoint(path).params == ck.params);
    std::filesystem::remove(path);

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse_checkpoint(bad), IntegrityError);
    bad = bytes;
    bad[8] = static_cast<char>(bytes[8] + 1);
    CHECK_THROWS_AS(parse_checkpoint(bad), VersionError);
    bad = bytes;
    bad[bad.size() - 3] = static_cast<char>(bad[bad.size() - 3] ^ 0x10);
    CHECK_THROWS_AS(parse_checkpoint(bad), IntegrityError);
    CHECK_THROWS_AS(parse_checkpoint(std::string_view(bytes).substr(0, bytes.size() - 8)), IntegrityError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), Error);
}

TEST_CASE("train config and loss CSV") {
    TrainConfig t;
    CHECK(TrainConfig::from_json(t.to_json()) == t);
    t.lr = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    const std::vector<double> trace = {2.5, 1.25};
    CHECK(loss_csv(trace) == "epoch,mae\n0,2.5\n1,1.25\n");
}
