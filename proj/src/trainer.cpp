#include "stgan/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <unordered_set>

namespace stgan::trainer {

using ndgrad::Matrix;
using ndgrad::Tape;
using ndgrad::Var;

static_assert(std::endian::native == std::endian::little, "checkpoint sections are written as native little-endian");

namespace {

constexpr char kMagic[8] = {'S', 'T', 'G', 'A', 'N', 'C', 'K', 'P'};

std::uint32_t crc_of(const void* data, std::size_t bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    const auto* p = static_cast<const Bytef*>(data);
    while (bytes > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
        crc = crc32(crc, p, chunk);
        p += chunk;
        bytes -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& at, const char* what) {
    if (bytes.size() < at + sizeof(T)) {
        throw IntegrityError(std::string("checkpoint truncated in ") + what);
    }
    T v;
    std::memcpy(&v, bytes.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
}

std::vector<std::size_t> loss_rows(const model::GraphBatch& batch, std::span<const std::int64_t> loss_ids) {
    const std::unordered_set<std::int64_t> wanted(loss_ids.begin(), loss_ids.end());
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        if (wanted.contains(batch.ids[r])) {
            rows.push_back(r);
        }
    }
    return rows;
}

double max_time(const graph::STGraph& g) {
    double t = -std::numeric_limits<double>::infinity();
    for (const auto& n : g.nodes()) {
        t = std::max(t, n.t_raw);
    }
    return t;
}

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ConfigError("train config: lr must be positive");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs}, {"lr", lr}, {"seed", seed}, {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("epochs") && j.at("epochs").is_number_integer() && j.at("epochs").get<long long>() < 0) {
        throw ConfigError("train config: epochs must be non-negative");
    }
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.log_every = j.value("log_every", c.log_every);
    c.validate();
    return c;
}

// ---------------------------------------------------------------- training

TrainResult train(const graph::STGraph& graph, std::span<const data::ProcessedNode> nodes,
                  const model::ModelConfig& model_config, const TrainConfig& config,
                  std::span<const std::int64_t> loss_ids, const EpochLogger& logger,
                  const model::ForwardOptions& forward) {
    config.validate();
    model_config.validate();
    const model::GraphBatch batch = model::make_batch(graph, nodes, model_config);
    const auto rows = loss_rows(batch, loss_ids);
    if (rows.empty()) {
        throw ContractError("train: no graph node carries a training target");
    }

    TrainResult result;
    result.params = model::init_params(model_config, config.seed);
    result.adam = ndgrad::AdamState(ndgrad::AdamConfig{.lr = config.lr}, result.params.values());
    result.touched_ids = batch.ids;
    result.loss_trace.reserve(config.epochs);

    std::vector<Matrix> grads(result.params.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Tape tape;
        const model::Bound bound(tape, result.params, true);
        const Var pred = model::forward(bound, model_config, batch, forward);
        const Var loss = ndgrad::mae(tape, pred, batch.y, rows);
        const double value = tape.value(loss)[0];
        if (!std::isfinite(value)) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": loss is " +
                                  std::to_string(value));
        }
        result.loss_trace.push_back(value);
        if (logger && config.log_every > 0 && epoch % config.log_every == 0) {
            logger(epoch, value);
        }
        tape.backward(loss);
        for (std::size_t k = 0; k < grads.size(); ++k) {
            grads[k] = tape.grad(bound.leaves()[k]);
        }
        result.adam.step(result.params.values(), grads);
    }

    const auto final_pred = model::predict_values(result.params, model_config, batch, forward);
    double acc = 0.0;
    for (std::size_t r : rows) {
        acc += std::abs(final_pred[r] - batch.y[r]);
    }
    result.final_train_mae = acc / static_cast<double>(rows.size());
    if (!std::isfinite(result.final_train_mae)) {
        throw DivergenceError("training diverged after epoch " + std::to_string(config.epochs));
    }
    return result;
}

std::vector<double> forward_graph(const model::ParamSet& params, const model::ModelConfig& model_config,
                                  const graph::STGraph& graph, std::span<const data::ProcessedNode> nodes) {
    return model::predict_values(params, model_config, model::make_batch(graph, nodes, model_config));
}

// ---------------------------------------------------------------- inference

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::true_feedback: return "true";
        case Strategy::predicted_feedback: return "predicted";
        case Strategy::ignore: return "ignore";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (Strategy s : {Strategy::true_feedback, Strategy::predicted_feedback, Strategy::ignore}) {
        if (strategy_name(s) == name) {
            return s;
        }
    }
    throw UsageError("unknown strategy '" + std::string(name) + "' (expected true, predicted or ignore)");
}

LocationTable location_table(std::span<const data::RawRecord> records) {
    LocationTable table;
    for (const auto& r : records) {
        table[r.location_id] = LocationInfo{r.longitude_gcj, r.latitude_gcj, r.distress_type};
    }
    return table;
}

QueryResult predict_query(const InferenceContext& ctx, const graph::STGraph& graph,
                          std::span<const data::ProcessedNode> nodes, const Query& query) {
    if (ctx.params == nullptr) {
        throw ContractError("predict: inference context has no parameters");
    }
    const auto loc = ctx.locations.find(query.location_id);
    if (loc == ctx.locations.end()) {
        throw LocationError("unknown location " + std::to_string(query.location_id));
    }
    if (!std::isfinite(query.t_raw)) {
        throw TemporalError("query time is not finite");
    }
    if (ctx.enforce_time_order) {
        const double latest = max_time(graph);
        if (query.t_raw < latest) {
            throw TemporalError("query at t=" + std::to_string(query.t_raw) + " precedes the latest observation at t=" +
                                std::to_string(latest));
        }
    }
    if (graph.position_of(query.node_id)) {
        throw GraphError("query node id " + std::to_string(query.node_id) + " already present");
    }

    QueryResult out;
    out.node = data::query_node(query.node_id, query.location_id, loc->second.lon, loc->second.lat, query.t_raw,
                                loc->second.distress_type, ctx.stats, ctx.layout);
    out.graph_node = graph::GraphNode{query.node_id, {loc->second.lon, loc->second.lat}, query.t_raw,
                                      out.node.t_norm, false};
    std::vector<std::size_t> same_point;
    for (std::size_t p = 0; p < graph.size(); ++p) {
        const auto& n = graph.node(p);
        if (n.t_raw == query.t_raw && n.coord.lon == loc->second.lon && n.coord.lat == loc->second.lat) {
            same_point.push_back(p);
        }
    }
    out.parents = graph.connect(out.graph_node, same_point);

    graph::STGraph work = graph;
    const std::size_t pos = work.append(out.graph_node, out.parents);
    std::vector<data::ProcessedNode> work_nodes(nodes.begin(), nodes.end());
    work_nodes.push_back(out.node);
    const std::size_t target[] = {pos};
    const auto batch =
        model::make_batch(work, work_nodes, ctx.model, target, model::receptive_hops(ctx.model));
    const auto values = model::predict_values(*ctx.params, ctx.model, batch, ctx.forward);
    out.y_hat = values[*batch.row_of(query.node_id)];
    return out;
}

double predict_one(const InferenceContext& ctx, const graph::STGraph& graph,
                   std::span<const data::ProcessedNode> nodes, const Query& query) {
    return predict_query(ctx, graph, nodes, query).y_hat;
}

void commit(graph::STGraph& graph, std::vector<data::ProcessedNode>& nodes, const QueryResult& result,
            data::ProcessedNode features) {
    if (features.node_id != result.graph_node.id) {
        throw ContractError("commit: features belong to node " + std::to_string(features.node_id) + ", not " +
                            std::to_string(result.graph_node.id));
    }
    graph.append(result.graph_node, result.parents);
    nodes.push_back(std::move(features));
}

data::ProcessedNode predicted_features(const InferenceContext& ctx, const QueryResult& result) {
    data::ProcessedNode n = result.node;
    n.x_full[ctx.layout.distress_slot] = ctx.stats.standardize("detect_info", result.y_hat);
    if (ctx.layout.type_slot) {
        const auto hot = data::one_hot_type(n.distress_type);
        std::copy(hot.begin(), hot.end(), n.x_full.begin() + static_cast<long>(*ctx.layout.type_slot));
    }
    n.y = result.y_hat;
    return n;
}

std::vector<double> predict_sequence(const InferenceContext& ctx, const graph::STGraph& graph,
                                     std::span<const data::ProcessedNode> nodes, std::span<const Query> queries,
                                     Strategy strategy, std::span<const data::RawRecord> observations) {
    for (std::size_t q = 1; q < queries.size(); ++q) {
        if (queries[q].t_raw < queries[q - 1].t_raw) {
            throw ContractError("predict_sequence: queries are not sorted by time");
        }
    }
    if (strategy == Strategy::true_feedback && observations.size() != queries.size()) {
        throw ContractError("predict_sequence: true feedback needs one observation per query (got " +
                            std::to_string(observations.size()) + " for " + std::to_string(queries.size()) + ")");
    }
    std::vector<double> out;
    out.reserve(queries.size());
    if (strategy == Strategy::ignore) {
        for (const auto& q : queries) {
            out.push_back(predict_one(ctx, graph, nodes, q));
        }
        return out;
    }
    graph::STGraph work = graph;
    std::vector<data::ProcessedNode> work_nodes(nodes.begin(), nodes.end());
    for (std::size_t k = 0; k < queries.size(); ++k) {
        const QueryResult r = predict_query(ctx, work, work_nodes, queries[k]);
        out.push_back(r.y_hat);
        if (strategy == Strategy::true_feedback) {
            commit(work, work_nodes, r, data::apply_preprocess(observations[k], ctx.stats, ctx.layout, queries[k].node_id));
        } else {
            commit(work, work_nodes, r, predicted_features(ctx, r));
        }
    }
    return out;
}

// ---------------------------------------------------------------- checkpoint

nlohmann::json schema_to_json(const data::FeatureSchema& s) {
    return {{"include_conf", s.include_conf}, {"include_type", s.include_type}, {"masked_env", s.masked_env}};
}

data::FeatureSchema schema_from_json(const nlohmann::json& j) {
    data::FeatureSchema s;
    s.include_conf = j.value("include_conf", s.include_conf);
    s.include_type = j.value("include_type", s.include_type);
    s.masked_env = j.value("masked_env", s.masked_env);
    return s;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string body;
    nlohmann::json sections = nlohmann::json::array();
    auto add_section = [&](const std::string& name, std::size_t rows, std::size_t cols, std::span<const double> v) {
        const std::size_t offset = body.size();
        body.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
        sections.push_back({{"name", name},
                            {"rows", rows},
                            {"cols", cols},
                            {"offset", offset},
                            {"bytes", v.size() * sizeof(double)},
                            {"crc32", crc_of(v.data(), v.size() * sizeof(double))}});
    };
    const auto& names = ckpt.params.names();
    for (std::size_t k = 0; k < names.size(); ++k) {
        const Matrix& m = ckpt.params.values()[k];
        add_section("param/" + names[k], m.rows(), m.cols(), m.values());
    }
    const bool has_adam = ckpt.adam.first_moment().size() == names.size() && !names.empty();
    if (has_adam) {
        for (std::size_t k = 0; k < names.size(); ++k) {
            const Matrix& m = ckpt.adam.first_moment()[k];
            add_section("adam_m/" + names[k], m.rows(), m.cols(), m.values());
        }
        for (std::size_t k = 0; k < names.size(); ++k) {
            const Matrix& v = ckpt.adam.second_moment()[k];
            add_section("adam_v/" + names[k], v.rows(), v.cols(), v.values());
        }
    }
    add_section("loss_trace", ckpt.loss_trace.size(), 1, ckpt.loss_trace);

    const nlohmann::json manifest = {
        {"format", "stgan-checkpoint"},
        {"model", ckpt.model.to_json()},
        {"graph", ckpt.graph.to_json()},
        {"stats", ckpt.stats.to_json()},
        {"schema", schema_to_json(ckpt.schema)},
        {"train", ckpt.train.to_json()},
        {"run_config", ckpt.run_config},
        {"param_names", names},
        {"adam",
         {{"present", has_adam},
          {"steps", ckpt.adam.steps()},
          {"lr", ckpt.adam.config().lr},
          {"beta1", ckpt.adam.config().beta1},
          {"beta2", ckpt.adam.config().beta2},
          {"eps", ckpt.adam.config().eps}}},
        {"final_train_mae", ckpt.final_train_mae},
        {"sections", sections}};
    const std::string text = manifest.dump();

    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, ckpt.version);
    put<std::uint64_t>(out, text.size());
    put<std::uint32_t>(out, crc_of(text.data(), text.size()));
    out += text;
    out += body;
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IntegrityError("not a checkpoint file (bad magic)");
    }
    std::size_t at = sizeof(kMagic);
    const auto version = get<std::uint32_t>(bytes, at, "header");
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    const auto manifest_len = get<std::uint64_t>(bytes, at, "header");
    const auto manifest_crc = get<std::uint32_t>(bytes, at, "header");
    if (bytes.size() - at < manifest_len) {
        throw IntegrityError("checkpoint truncated in manifest");
    }
    const std::string_view text = bytes.substr(at, manifest_len);
    if (crc_of(text.data(), text.size()) != manifest_crc) {
        throw IntegrityError("checkpoint section 'manifest' fails its checksum");
    }
    at += manifest_len;
    const std::string_view body = bytes.substr(at);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }

    Checkpoint ckpt;
    ckpt.version = version;
    std::map<std::string, Matrix> arrays;
    for (const auto& s : manifest.at("sections")) {
        const auto name = s.at("name").get<std::string>();
        const auto rows = s.at("rows").get<std::size_t>();
        const auto cols = s.at("cols").get<std::size_t>();
        const auto offset = s.at("offset").get<std::size_t>();
        const auto n_bytes = s.at("bytes").get<std::size_t>();
        if (n_bytes != rows * cols * sizeof(double) || offset > body.size() || body.size() - offset < n_bytes) {
            throw IntegrityError("checkpoint section '" + name + "' is truncated or mis-sized");
        }
        if (crc_of(body.data() + offset, n_bytes) != s.at("crc32").get<std::uint32_t>()) {
            throw IntegrityError("checkpoint section '" + name + "' fails its checksum");
        }
        Matrix m(rows, cols);
        std::memcpy(m.values().data(), body.data() + offset, n_bytes);
        arrays.emplace(name, std::move(m));
    }
    auto take = [&](const std::string& name) {
        auto it = arrays.find(name);
        if (it == arrays.end()) {
            throw IntegrityError("checkpoint section '" + name + "' is missing");
        }
        return it->second;
    };

    ckpt.model = model::ModelConfig::from_json(manifest.at("model"));
    ckpt.graph = graph::GraphConfig::from_json(manifest.at("graph"));
    ckpt.stats = data::PreprocessStats::from_json(manifest.at("stats"));
    ckpt.schema = schema_from_json(manifest.at("schema"));
    ckpt.train = TrainConfig::from_json(manifest.at("train"));
    ckpt.run_config = manifest.at("run_config");
    ckpt.final_train_mae = manifest.at("final_train_mae").get<double>();
    const auto names = manifest.at("param_names").get<std::vector<std::string>>();
    for (const auto& n : names) {
        ckpt.params.add(n, take("param/" + n));
    }
    const auto& adam = manifest.at("adam");
    const ndgrad::AdamConfig adam_cfg{adam.at("lr").get<double>(), adam.at("beta1").get<double>(),
                                      adam.at("beta2").get<double>(), adam.at("eps").get<double>()};
    if (adam.at("present").get<bool>()) {
        std::vector<Matrix> m, v;
        for (const auto& n : names) {
            m.push_back(take("adam_m/" + n));
            v.push_back(take("adam_v/" + n));
        }
        ckpt.adam = ndgrad::AdamState::restore(adam_cfg, adam.at("steps").get<long long>(), std::move(m), std::move(v));
    } else {
        ckpt.adam = ndgrad::AdamState::restore(adam_cfg, adam.at("steps").get<long long>(), {}, {});
    }
    const Matrix trace = take("loss_trace");
    ckpt.loss_trace.assign(trace.values().begin(), trace.values().end());
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open checkpoint '" + path.string() + "'");
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

std::string loss_csv(std::span<const double> trace) {
    std::string out = "epoch,mae\n";
    char buf[64];
    for (std::size_t e = 0; e < trace.size(); ++e) {
        const int n = std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e, trace[e]);
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

}  // namespace stgan::trainer
