#include "stgan/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>

namespace stgan::eval {

namespace {

constexpr std::array<double, 5> kLevelEdges = {0.0, 1.0, 5.0, 10.0, std::numeric_limits<double>::infinity()};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

nlohmann::json auc_json(const ClassAuc& c) {
    nlohmann::json j = {{"class", level_name(c.level)}, {"positives", c.positives}, {"negatives", c.negatives}};
    j["auc"] = c.auc ? nlohmann::json(*c.auc) : nlohmann::json("undefined");
    return j;
}

std::vector<std::size_t> rows_of(std::span<const std::int64_t> ids) {
    std::vector<std::size_t> rows;
    rows.reserve(ids.size());
    for (auto id : ids) {
        rows.push_back(static_cast<std::size_t>(id - 1));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

}  // namespace

nlohmann::json RegressionMetrics::to_json() const {
    return {{"n", n}, {"mae", mae}, {"mse", mse}, {"rmse", rmse}};
}

RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> y_hat) {
    if (y.empty() || y.size() != y_hat.size()) {
        throw MetricError("regression_metrics: need equal, non-zero lengths (got " + std::to_string(y.size()) +
                          " and " + std::to_string(y_hat.size()) + ")");
    }
    double abs_acc = 0.0;
    double sq_acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y_hat[i] - y[i];
        abs_acc += std::abs(e);
        sq_acc += e * e;
    }
    const auto n = static_cast<double>(y.size());
    RegressionMetrics m;
    m.n = y.size();
    m.mae = abs_acc / n;
    m.mse = sq_acc / n;
    m.rmse = std::sqrt(m.mse);
    return m;
}

std::string_view level_name(Level level) {
    switch (level) {
        case Level::healthy: return "healthy";
        case Level::good: return "good";
        case Level::severe: return "severe";
        case Level::very_severe: return "very_severe";
    }
    return "unknown";
}

Level classify_level(double value) {
    if (!(value >= 0.0)) {
        throw DomainError("classify_level: value must be non-negative, got " + std::to_string(value));
    }
    if (value < 1.0) return Level::healthy;
    if (value < 5.0) return Level::good;
    if (value < 10.0) return Level::severe;
    return Level::very_severe;
}

double class_affinity(double y_hat, Level level) {
    const auto c = static_cast<std::size_t>(level);
    const double lo = c == 0 ? -std::numeric_limits<double>::infinity() : kLevelEdges[c];
    const double hi = kLevelEdges[c + 1];
    if (y_hat < lo) return -(lo - y_hat);
    if (y_hat >= hi) return -(y_hat - hi);
    return 0.0;
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) {
        throw MetricError("binary_auc: scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (positive[order[k]]) {
                pos_rank_sum += mid_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        return std::nullopt;
    }
    const double np = static_cast<double>(n_pos);
    const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) {
        throw MetricError("roc_curve: scores and labels differ in length");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const auto n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
    const double n_neg = static_cast<double>(scores.size()) - n_pos;
    std::vector<RocPoint> out{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
    if (n_pos == 0 || n_neg == 0) {
        return out;
    }
    double tp = 0.0;
    double fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double thr = scores[order[i]];
        while (i < order.size() && scores[order[i]] == thr) {
            (positive[order[i]] ? tp : fp) += 1.0;
            ++i;
        }
        out.push_back({fp / n_neg, tp / n_pos, thr});
    }
    return out;
}

std::array<ClassAuc, 4> roc_auc_ovr(std::span<const Level> truth, std::span<const double> y_hat) {
    if (truth.size() != y_hat.size()) {
        throw MetricError("roc_auc_ovr: labels and predictions differ in length");
    }
    std::array<ClassAuc, 4> out{};
    std::vector<double> scores(y_hat.size());
    for (Level c : kLevels) {
        ClassAuc& r = out[static_cast<std::size_t>(c)];
        r.level = c;
        std::unique_ptr<bool[]> pos(new bool[y_hat.size()]);
        for (std::size_t i = 0; i < y_hat.size(); ++i) {
            scores[i] = class_affinity(y_hat[i], c);
            pos[i] = truth[i] == c;
            r.positives += pos[i] ? 1 : 0;
        }
        r.negatives = y_hat.size() - r.positives;
        r.auc = binary_auc(scores, std::span<const bool>(pos.get(), y_hat.size()));
    }
    return out;
}

std::string roc_csv(std::span<const Level> truth, std::span<const double> y_hat) {
    std::string out = "class,fpr,tpr,threshold\n";
    std::vector<double> scores(y_hat.size());
    std::unique_ptr<bool[]> pos(new bool[y_hat.size()]);
    char buf[128];
    for (Level c : kLevels) {
        std::size_t n_pos = 0;
        for (std::size_t i = 0; i < y_hat.size(); ++i) {
            scores[i] = class_affinity(y_hat[i], c);
            pos[i] = truth[i] == c;
            n_pos += pos[i] ? 1 : 0;
        }
        if (n_pos == 0 || n_pos == y_hat.size()) {
            continue;
        }
        for (const auto& p : roc_curve(scores, std::span<const bool>(pos.get(), y_hat.size()))) {
            const int n = std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", std::string(level_name(c)).c_str(),
                                        p.fpr, p.tpr, p.threshold);
            out.append(buf, static_cast<std::size_t>(n));
        }
    }
    return out;
}

Confusion confusion_counts(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) {
        throw MetricError("confusion_counts: inputs differ in length");
    }
    Confusion c{};
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto t = static_cast<std::size_t>(classify_level(y[i]));
        const auto p = static_cast<std::size_t>(classify_level(std::max(0.0, y_hat[i])));
        ++c[t][p];
    }
    return c;
}

std::string_view axis_name(Axis axis) {
    switch (axis) {
        case Axis::time: return "time";
        case Axis::longitude: return "longitude";
        case Axis::latitude: return "latitude";
    }
    return "unknown";
}

Axis parse_axis(std::string_view name) {
    for (Axis a : {Axis::time, Axis::longitude, Axis::latitude}) {
        if (axis_name(a) == name) {
            return a;
        }
    }
    throw UsageError("unknown split axis '" + std::string(name) + "' (expected time, longitude or latitude)");
}

GeneralizationSplit generalization_split(std::span<const data::ProcessedNode> nodes, Axis axis, std::size_t k,
                                         std::size_t s) {
    if (k + s >= nodes.size()) {
        throw SplitError("generalization_split: k + s = " + std::to_string(k + s) + " leaves no test nodes among " +
                         std::to_string(nodes.size()));
    }
    auto key = [axis](const data::ProcessedNode& n) {
        switch (axis) {
            case Axis::time: return n.t_raw;
            case Axis::longitude: return n.lon;
            case Axis::latitude: return n.lat;
        }
        return 0.0;
    };
    std::vector<const data::ProcessedNode*> sorted;
    for (const auto& n : nodes) {
        sorted.push_back(&n);
    }
    std::stable_sort(sorted.begin(), sorted.end(), [&](const auto* a, const auto* b) {
        const double ka = key(*a);
        const double kb = key(*b);
        if (ka != kb) return ka < kb;
        return a->node_id < b->node_id;
    });
    GeneralizationSplit out;
    out.axis = axis;
    out.k = k;
    out.s = s;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        auto& dest = i < k ? out.train : (i < k + s ? out.removed : out.test);
        dest.push_back(sorted[i]->node_id);
    }
    return out;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json aucs = nlohmann::json::array();
    for (const auto& c : auc) {
        aucs.push_back(auc_json(c));
    }
    nlohmann::json conf = nlohmann::json::array();
    for (const auto& row : confusion) {
        conf.push_back(row);
    }
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : predictions) {
        preds.push_back({{"id", p.id}, {"y", p.y}, {"y_hat", p.y_hat}});
    }
    nlohmann::json j = {{"variant", variant},
                        {"strategy", strategy},
                        {"train", train.to_json()},
                        {"test", test.to_json()},
                        {"auc", aucs},
                        {"confusion", conf},
                        {"predictions", preds}};
    if (split) {
        j["split"] = {{"axis", axis_name(split->axis)},
                      {"k", split->k},
                      {"s", split->s},
                      {"train", split->train.size()},
                      {"removed", split->removed.size()},
                      {"test", split->test.size()}};
    }
    return j;
}

// ---------------------------------------------------------------- experiments

Prepared prepare_partition(std::vector<data::RawRecord> records, const data::FeatureSchema& schema,
                           std::span<const std::size_t> init_rows, std::span<const std::size_t> train_rows,
                           std::span<const std::size_t> test_rows) {
    Prepared p;
    p.records = std::move(records);
    p.schema = schema;
    p.layout = data::FeatureLayout::make(schema);
    std::vector<data::RawRecord> fit;
    for (auto r : init_rows) fit.push_back(p.records.at(r));
    for (auto r : train_rows) fit.push_back(p.records.at(r));
    p.stats = data::fit_standardizer(fit, p.records);
    p.nodes.reserve(p.records.size());
    for (std::size_t i = 0; i < p.records.size(); ++i) {
        p.nodes.push_back(data::apply_preprocess(p.records[i], p.stats, p.layout, static_cast<std::int64_t>(i + 1)));
    }
    for (auto r : init_rows) p.init_ids.push_back(static_cast<std::int64_t>(r + 1));
    for (auto r : train_rows) p.train_ids.push_back(static_cast<std::int64_t>(r + 1));
    for (auto r : test_rows) p.test_ids.push_back(static_cast<std::int64_t>(r + 1));
    p.locations = trainer::location_table(p.records);
    return p;
}

Prepared prepare(std::vector<data::RawRecord> records, const data::SplitFractions& fractions,
                 const data::FeatureSchema& schema) {
    std::stable_sort(records.begin(), records.end(), [](const data::RawRecord& a, const data::RawRecord& b) {
        if (a.collect_time != b.collect_time) return a.collect_time < b.collect_time;
        return a.location_id < b.location_id;
    });
    const auto sizes = data::split_sizes(records.size(), fractions);
    std::vector<std::size_t> init(sizes.init), train(sizes.train), test(sizes.test);
    std::iota(init.begin(), init.end(), 0);
    std::iota(train.begin(), train.end(), sizes.init);
    std::iota(test.begin(), test.end(), sizes.init + sizes.train);
    return prepare_partition(std::move(records), schema, init, train, test);
}

graph::GraphConfig variant_graph_config(model::Variant variant, graph::GraphConfig config) {
    if (variant == model::Variant::stgan_no_top) {
        config.top_k = 0;
    }
    return config;
}

graph::STGraph training_graph(const Prepared& p, const graph::GraphConfig& config) {
    std::vector<graph::GraphNode> nodes;
    auto add = [&](std::int64_t id, bool is_init) {
        const auto& n = p.node(id);
        nodes.push_back(graph::GraphNode{id, {n.lon, n.lat}, n.t_raw, n.t_norm, is_init});
    };
    for (auto id : p.init_ids) add(id, true);
    for (auto id : p.train_ids) add(id, false);
    return graph::build_graph(nodes, p.init_ids.size(), config);
}

model::ModelConfig fit_model_config(model::ModelConfig base, const Prepared& p) {
    base.full_dim = p.layout.full_dim();
    base.st_dim = data::FeatureLayout::st_dim();
    base.input_names = p.layout.names;
    base.validate();
    return base;
}

RegressionMetrics training_metrics(const Prepared& p, const graph::STGraph& graph, const model::ParamSet& params,
                                   const model::ModelConfig& model_config) {
    const auto y_hat_all = trainer::forward_graph(params, model_config, graph, p.nodes);
    std::vector<double> y, y_hat;
    for (auto id : p.train_ids) {
        const auto pos = graph.position_of(id);
        if (!pos) {
            throw ContractError("training_metrics: train node " + std::to_string(id) + " is not in the graph");
        }
        y.push_back(p.node(id).y);
        y_hat.push_back(y_hat_all[*pos]);
    }
    return regression_metrics(y, y_hat);
}

EvalReport evaluate(const Prepared& p, const graph::STGraph& graph, const model::ParamSet& params,
                    const model::ModelConfig& model_config, trainer::Strategy strategy, bool enforce_time_order,
                    const model::ForwardOptions& forward) {
    trainer::InferenceContext ctx;
    ctx.params = &params;
    ctx.model = model_config;
    ctx.stats = p.stats;
    ctx.layout = p.layout;
    ctx.locations = p.locations;
    ctx.enforce_time_order = enforce_time_order;
    ctx.forward = forward;

    std::vector<std::int64_t> ids = p.test_ids;
    std::stable_sort(ids.begin(), ids.end(), [&](auto a, auto b) { return p.node(a).t_raw < p.node(b).t_raw; });
    std::vector<trainer::Query> queries;
    std::vector<data::RawRecord> observed;
    for (auto id : ids) {
        const auto& n = p.node(id);
        queries.push_back({id, n.location_id, n.t_raw});
        observed.push_back(p.records.at(static_cast<std::size_t>(id - 1)));
    }
    std::vector<data::ProcessedNode> graph_nodes;
    for (std::size_t pos = 0; pos < graph.size(); ++pos) {
        graph_nodes.push_back(p.node(graph.node(pos).id));
    }
    const auto y_hat = trainer::predict_sequence(ctx, graph, graph_nodes, queries, strategy, observed);

    EvalReport r;
    r.variant = model::variant_name(model_config.variant);
    r.strategy = trainer::strategy_name(strategy);
    r.train = training_metrics(p, graph, params, model_config);
    std::vector<double> y;
    std::vector<Level> levels;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        y.push_back(p.node(ids[i]).y);
        levels.push_back(classify_level(y.back()));
        r.predictions.push_back({ids[i], y.back(), y_hat[i]});
    }
    r.test = regression_metrics(y, y_hat);
    r.auc = roc_auc_ovr(levels, y_hat);
    r.confusion = confusion_counts(y, y_hat);
    return r;
}

ExperimentResult run_experiment(const Prepared& p, const ExperimentConfig& config,
                                const trainer::EpochLogger& logger) {
    ExperimentResult out;
    out.model = fit_model_config(config.model, p);
    auto t0 = std::chrono::steady_clock::now();
    const graph::STGraph graph = training_graph(p, variant_graph_config(config.model.variant, config.graph));
    out.timings.graph_s = seconds_since(t0);

    std::vector<std::int64_t> loss_ids = p.train_ids;
    t0 = std::chrono::steady_clock::now();
    out.trained = trainer::train(graph, p.nodes, out.model, config.train, loss_ids, logger, config.forward);
    out.timings.train_s = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    out.report = evaluate(p, graph, out.trained.params, out.model, config.strategy, true, config.forward);
    out.timings.inference_s = seconds_since(t0);
    return out;
}

MaskStudy env_masking_study(std::span<const data::RawRecord> records, const ExperimentConfig& config) {
    for (const char* f : data::kEnvFeatures) {
        if (std::find(config.schema.masked_env.begin(), config.schema.masked_env.end(), f) !=
            config.schema.masked_env.end()) {
            throw SchemaError(std::string("env_masking_study: feature '") + f + "' is already masked");
        }
    }
    const std::vector<data::RawRecord> rows(records.begin(), records.end());
    MaskStudy study;
    study.base_test_mae = run_experiment(prepare(rows, config.split, config.schema), config).report.test.mae;
    for (const char* f : data::kEnvFeatures) {
        ExperimentConfig masked = config;
        masked.schema.masked_env.push_back(f);
        const double mae = run_experiment(prepare(rows, masked.split, masked.schema), masked).report.test.mae;
        study.rows.push_back({f, mae, mae - study.base_test_mae});
    }
    return study;
}

ExperimentResult run_generalization(std::span<const data::RawRecord> records, const ExperimentConfig& config,
                                    Axis axis, std::size_t k, std::size_t s) {
    std::vector<data::RawRecord> rows(records.begin(), records.end());
    std::stable_sort(rows.begin(), rows.end(), [](const data::RawRecord& a, const data::RawRecord& b) {
        if (a.collect_time != b.collect_time) return a.collect_time < b.collect_time;
        return a.location_id < b.location_id;
    });
    std::vector<data::ProcessedNode> keys(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        keys[i].node_id = static_cast<std::int64_t>(i + 1);
        keys[i].lon = rows[i].longitude_gcj;
        keys[i].lat = rows[i].latitude_gcj;
        keys[i].t_raw = rows[i].collect_time;
    }
    const GeneralizationSplit split = generalization_split(keys, axis, k, s);

    // The train block keeps temporal order; its earliest share forms the init block.
    std::vector<std::size_t> train_rows = rows_of(split.train);
    const double init_share = config.split.init / (config.split.init + config.split.train);
    const auto n_init = static_cast<std::size_t>(std::floor(static_cast<double>(train_rows.size()) * init_share + 1e-9));
    if (n_init == 0 || n_init >= train_rows.size()) {
        throw SplitError("run_generalization: train block of " + std::to_string(train_rows.size()) +
                         " nodes cannot hold both init and train nodes");
    }
    const std::vector<std::size_t> init_rows(train_rows.begin(), train_rows.begin() + static_cast<long>(n_init));
    train_rows.erase(train_rows.begin(), train_rows.begin() + static_cast<long>(n_init));
    const std::vector<std::size_t> test_rows = rows_of(split.test);

    const Prepared p = prepare_partition(std::move(rows), config.schema, init_rows, train_rows, test_rows);
    ExperimentResult out;
    out.model = fit_model_config(config.model, p);
    auto t0 = std::chrono::steady_clock::now();
    const graph::STGraph graph = training_graph(p, variant_graph_config(config.model.variant, config.graph));
    out.timings.graph_s = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    out.trained = trainer::train(graph, p.nodes, out.model, config.train, p.train_ids, {}, config.forward);
    out.timings.train_s = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    out.report = evaluate(p, graph, out.trained.params, out.model, trainer::Strategy::ignore,
                          axis == Axis::time, config.forward);
    out.timings.inference_s = seconds_since(t0);
    out.report.split = split;
    return out;
}

}  // namespace stgan::eval
