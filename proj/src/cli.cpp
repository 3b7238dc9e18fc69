#include "stgan/cli.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "stgan/errors.hpp"

namespace stgan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json split_to_json(const data::SplitFractions& f) {
    return {{"init", f.init}, {"train", f.train}, {"test", f.test}};
}

data::SplitFractions split_from_json(const json& j) {
    data::SplitFractions f;
    f.init = j.value("init", f.init);
    f.train = j.value("train", f.train);
    f.test = j.value("test", f.test);
    return f;
}

void write_text(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json timings_json(const eval::Timings& t) {
    return {{"graph_s", t.graph_s}, {"train_s", t.train_s}, {"inference_s", t.inference_s}};
}

fs::path out_dir(const RunConfig& c) { return fs::path(c.out_dir); }

// Reloads the dataset with the checkpoint's schema and confirms the refit
// statistics match the stored ones, so features are standardized exactly as
// during training.
eval::Prepared prepare_for_checkpoint(const RunConfig& config, const trainer::Checkpoint& ckpt) {
    eval::Prepared p = eval::prepare(load_dataset(config), config.split, ckpt.schema);
    if (!(p.stats == ckpt.stats)) {
        throw SchemaError("dataset and split do not reproduce the checkpoint's preprocessing statistics");
    }
    return p;
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
    if (dataset_path.has_value() == synthetic.has_value()) {
        throw ConfigError("run config needs exactly one dataset source (dataset.path or dataset.synthetic)");
    }
    if (split.init < 0.0 || split.train < 0.0 || split.test < 0.0 ||
        std::abs(split.init + split.train + split.test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
    graph.validate();
    train.validate();
}

json RunConfig::to_json() const {
    json ds = json::object();
    if (dataset_path) {
        ds["path"] = *dataset_path;
        ds["time_format"] = time_format == data::TimeFormat::iso8601 ? "iso8601" : "days";
    }
    if (synthetic) ds["synthetic"] = synthetic->to_json();
    return {{"seed", seed},
            {"out_dir", out_dir},
            {"dataset", ds},
            {"split", split_to_json(split)},
            {"schema", trainer::schema_to_json(schema)},
            {"graph", graph.to_json()},
            {"model", model.to_json()},
            {"train", train.to_json()},
            {"strategy", std::string(trainer::strategy_name(strategy))}};
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    if (!j.contains("seed") || !j.at("seed").is_number_integer() || j.at("seed").get<std::int64_t>() < 0) {
        throw ConfigError("run config needs a non-negative integer \"seed\"");
    }
    try {
        RunConfig c;
        c.seed = j.at("seed").get<std::uint64_t>();
        c.out_dir = j.value("out_dir", c.out_dir);
        const json ds = j.value("dataset", json::object());
        if (ds.contains("path")) {
            c.dataset_path = ds.at("path").get<std::string>();
            const std::string fmt = ds.value("time_format", "days");
            if (fmt == "iso8601") {
                c.time_format = data::TimeFormat::iso8601;
            } else if (fmt != "days") {
                throw ConfigError("dataset.time_format must be \"days\" or \"iso8601\", got \"" + fmt + "\"");
            }
        }
        if (ds.contains("synthetic")) {
            json syn = ds.at("synthetic");
            if (!syn.contains("seed")) syn["seed"] = c.seed;
            c.synthetic = data::SyntheticConfig::from_json(syn);
        }
        c.split = split_from_json(j.value("split", json::object()));
        c.schema = trainer::schema_from_json(j.value("schema", json::object()));
        c.graph = graph::GraphConfig::from_json(j.value("graph", json::object()));
        c.model = model::ModelConfig::from_json(j.value("model", json::object()));
        json tr = j.value("train", json::object());
        if (!tr.contains("seed")) tr["seed"] = c.seed;
        c.train = trainer::TrainConfig::from_json(tr);
        c.strategy = trainer::parse_strategy(j.value("strategy", std::string("ignore")));
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
}

eval::ExperimentConfig RunConfig::experiment() const {
    eval::ExperimentConfig e;
    e.split = split;
    e.schema = schema;
    e.graph = graph;
    e.model = model;
    e.train = train;
    e.strategy = strategy;
    return e;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw UsageError("--set expects key=value, got \"" + assignment + "\"");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw UsageError("--set key has an empty path component: \"" + key + "\"");
        if (!node->is_object()) throw UsageError("--set path \"" + key + "\" crosses a non-object value");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (!path.empty()) {
        if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
        doc = json::parse(read_text(path), nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return RunConfig::from_json(doc);
}

std::vector<data::RawRecord> load_dataset(const RunConfig& config) {
    if (config.synthetic) return data::generate_synthetic(*config.synthetic).records;
    auto loaded = data::load_records(*config.dataset_path, config.time_format);
    if (loaded.records.empty()) throw SchemaError("dataset has no usable rows: " + *config.dataset_path);
    return std::move(loaded.records);
}

// ---------------------------------------------------------------- manifest

std::string sha256_file(const fs::path& path) {
    const std::string bytes = read_text(path);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed for " + path.string());
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex.push_back(kHex[digest[i] >> 4]);
        hex.push_back(kHex[digest[i] & 0xF]);
    }
    return hex;
}

void write_manifest(const fs::path& dir, const json& run_config) {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), dir).generic_string();
        if (rel == "manifest.json" || rel.rfind("timing/", 0) == 0) continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    json list = json::array();
    for (const auto& f : files) {
        list.push_back({{"path", f}, {"sha256", sha256_file(dir / f)}, {"bytes", fs::file_size(dir / f)}});
    }
    write_text(dir / "manifest.json", json{{"run_config", run_config}, {"files", list}}.dump(2) + "\n");
}

// ---------------------------------------------------------------- commands

fs::path cmd_gen_data(const RunConfig& config, std::ostream& log) {
    if (!config.synthetic) throw ConfigError("gen-data needs dataset.synthetic in the run config");
    const auto ds = data::generate_synthetic(*config.synthetic);
    const fs::path path = out_dir(config) / "data.csv";
    write_text(path, data::format_records(ds.records));
    write_manifest(out_dir(config), config.to_json());
    log << "gen-data: " << ds.records.size() << " rows -> " << path.string() << "\n";
    return path;
}

fs::path cmd_build_graph(const RunConfig& config, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    const eval::Prepared p = eval::prepare(load_dataset(config), config.split, config.schema);
    const auto g = eval::training_graph(p, eval::variant_graph_config(config.model.variant, config.graph));
    const double elapsed = seconds_since(t0);
    const fs::path path = out_dir(config) / "graph.json";
    write_text(path, g.to_json().dump() + "\n");
    write_text(out_dir(config) / "timing" / "build_graph.json", json{{"graph_s", elapsed}}.dump(2) + "\n");
    write_manifest(out_dir(config), config.to_json());
    log << "build-graph: " << g.size() << " nodes, " << g.edge_count() << " edges -> " << path.string() << "\n";
    return path;
}

fs::path cmd_train(const RunConfig& config, std::ostream& log) {
    const eval::Prepared p = eval::prepare(load_dataset(config), config.split, config.schema);
    const model::ModelConfig model_cfg = eval::fit_model_config(config.model, p);
    const graph::GraphConfig graph_cfg = eval::variant_graph_config(model_cfg.variant, config.graph);

    eval::Timings timings;
    auto t0 = std::chrono::steady_clock::now();
    const auto g = eval::training_graph(p, graph_cfg);
    timings.graph_s = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    auto logger = [&log](std::size_t epoch, double mae) { log << "epoch " << epoch << " train_mae " << mae << "\n"; };
    trainer::TrainResult trained = trainer::train(g, p.nodes, model_cfg, config.train, p.train_ids, logger);
    timings.train_s = seconds_since(t0);

    trainer::Checkpoint ckpt;
    ckpt.model = model_cfg;
    ckpt.graph = graph_cfg;
    ckpt.stats = p.stats;
    ckpt.schema = p.schema;
    ckpt.train = config.train;
    ckpt.run_config = config.to_json();
    ckpt.params = std::move(trained.params);
    ckpt.adam = std::move(trained.adam);
    ckpt.loss_trace = trained.loss_trace;
    ckpt.final_train_mae = trained.final_train_mae;

    const fs::path path = out_dir(config) / "checkpoint.bin";
    fs::create_directories(out_dir(config));
    trainer::save_checkpoint(path, ckpt);
    write_text(out_dir(config) / "loss.csv", trainer::loss_csv(trained.loss_trace));
    write_text(out_dir(config) / "timing" / "train.json", timings_json(timings).dump(2) + "\n");
    write_manifest(out_dir(config), config.to_json());
    log << "train: " << model::variant_name(model_cfg.variant) << " final train MAE " << trained.final_train_mae
        << " -> " << path.string() << "\n";
    return path;
}

fs::path cmd_evaluate(const RunConfig& config, const fs::path& checkpoint, trainer::Strategy strategy,
                      std::ostream& log) {
    const trainer::Checkpoint ckpt = trainer::load_checkpoint(checkpoint);
    const eval::Prepared p = prepare_for_checkpoint(config, ckpt);
    eval::Timings timings;
    auto t0 = std::chrono::steady_clock::now();
    const auto g = eval::training_graph(p, ckpt.graph);
    timings.graph_s = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const eval::EvalReport report = eval::evaluate(p, g, ckpt.params, ckpt.model, strategy);
    timings.inference_s = seconds_since(t0);

    std::vector<eval::Level> truth;
    std::vector<double> y_hat;
    for (const auto& np : report.predictions) {
        truth.push_back(eval::classify_level(np.y));
        y_hat.push_back(np.y_hat);
    }
    const fs::path path = out_dir(config) / "report.json";
    write_text(path, report.to_json().dump(2) + "\n");
    write_text(out_dir(config) / "roc.csv", eval::roc_csv(truth, y_hat));
    write_text(out_dir(config) / "timing" / "evaluate.json", timings_json(timings).dump(2) + "\n");
    write_manifest(out_dir(config), config.to_json());
    log << "evaluate: " << report.variant << " strategy " << report.strategy << " test MAE " << report.test.mae
        << " RMSE " << report.test.rmse << " -> " << path.string() << "\n";
    return path;
}

double cmd_predict(const RunConfig& config, const fs::path& checkpoint, const PredictRequest& request,
                   std::ostream& log) {
    const trainer::Checkpoint ckpt = trainer::load_checkpoint(checkpoint);
    const eval::Prepared p = prepare_for_checkpoint(config, ckpt);
    graph::STGraph g = eval::training_graph(p, ckpt.graph);
    std::vector<data::ProcessedNode> nodes;
    for (std::size_t pos = 0; pos < g.size(); ++pos) nodes.push_back(p.node(g.node(pos).id));

    trainer::InferenceContext ctx;
    ctx.params = &ckpt.params;
    ctx.model = ckpt.model;
    ctx.stats = p.stats;
    ctx.layout = p.layout;
    ctx.locations = p.locations;

    std::vector<std::int64_t> replay;
    for (auto id : p.test_ids) {
        if (p.node(id).t_raw <= request.time_days) replay.push_back(id);
    }
    std::stable_sort(replay.begin(), replay.end(), [&](auto a, auto b) { return p.node(a).t_raw < p.node(b).t_raw; });
    if (request.strategy != trainer::Strategy::ignore) {
        for (auto id : replay) {
            const auto& n = p.node(id);
            const auto r = trainer::predict_query(ctx, g, nodes, {id, n.location_id, n.t_raw});
            if (request.strategy == trainer::Strategy::true_feedback) {
                trainer::commit(g, nodes, r, n);
            } else {
                trainer::commit(g, nodes, r, trainer::predicted_features(ctx, r));
            }
        }
    }

    const auto next_id = static_cast<std::int64_t>(p.nodes.size()) + 1;
    const auto result = trainer::predict_query(ctx, g, nodes, {next_id, request.location_id, request.time_days});
    json parents = json::array();
    for (const auto& e : result.parents) {
        parents.push_back({{"from", g.node(e.parent).id},
                           {"origin", std::string(graph::origin_name(e.origin))},
                           {"dist_m", e.dist_m},
                           {"dt_days", request.time_days - g.node(e.parent).t_raw}});
    }
    const json out{{"location_id", request.location_id},
                   {"time_days", request.time_days},
                   {"strategy", std::string(trainer::strategy_name(request.strategy))},
                   {"replayed", request.strategy == trainer::Strategy::ignore ? 0 : replay.size()},
                   {"y_hat", result.y_hat},
                   {"level", std::string(eval::level_name(eval::classify_level(std::max(0.0, result.y_hat))))},
                   {"parents", parents}};
    write_text(out_dir(config) / "prediction.json", out.dump(2) + "\n");
    write_manifest(out_dir(config), config.to_json());
    log << "predict: location " << request.location_id << " t=" << request.time_days << " y_hat " << result.y_hat
        << "\n";
    return result.y_hat;
}

// ---------------------------------------------------------------- matrix

MatrixAxes parse_axes(const std::string& csv) {
    MatrixAxes out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (std::find(kMatrixAxes.begin(), kMatrixAxes.end(), item) == kMatrixAxes.end()) {
            throw UsageError("unknown matrix axis \"" + item +
                             "\" (known: variant, heads, layers, env_mask, generalization)");
        }
        if (std::find(out.axes.begin(), out.axes.end(), item) == out.axes.end()) out.axes.push_back(item);
    }
    if (out.axes.empty()) throw UsageError("matrix needs at least one axis");
    return out;
}

namespace {

MatrixRow row_from(const std::string& axis, const eval::ExperimentConfig& cfg, const eval::ExperimentResult& r) {
    MatrixRow row;
    row.axis = axis;
    row.variant = std::string(model::variant_name(cfg.model.variant));
    row.heads = cfg.model.heads;
    row.layers = cfg.model.layers;
    row.masked = cfg.schema.masked_env.empty() ? "" : cfg.schema.masked_env.back();
    row.split = "temporal";
    row.train_mae = r.trained.final_train_mae;
    row.test = r.report.test;
    row.timings = r.timings;
    return row;
}

}  // namespace

std::vector<MatrixRow> run_matrix(const RunConfig& config, const MatrixAxes& axes, std::ostream& log) {
    const std::vector<data::RawRecord> records = load_dataset(config);
    const eval::ExperimentConfig base = config.experiment();
    std::vector<MatrixRow> rows;
    auto note = [&log](const MatrixRow& r) {
        log << "matrix: " << r.axis << " " << r.variant << " H=" << r.heads << " L=" << r.layers
            << (r.masked.empty() ? "" : " masked=" + r.masked) << " split=" << r.split << " test MAE " << r.test.mae
            << "\n";
    };
    auto run = [&](const std::string& axis, const eval::ExperimentConfig& cfg) {
        const eval::Prepared p = eval::prepare(records, cfg.split, cfg.schema);
        rows.push_back(row_from(axis, cfg, eval::run_experiment(p, cfg)));
        note(rows.back());
    };

    for (const auto& axis : axes.axes) {
        if (axis == "variant") {
            for (auto v : {model::Variant::stgan, model::Variant::top_mlp, model::Variant::gcn, model::Variant::gcn_mlp,
                           model::Variant::gat, model::Variant::stgan_no_top, model::Variant::stgan_eam,
                           model::Variant::stgan_no_td}) {
                eval::ExperimentConfig cfg = base;
                cfg.model.variant = v;
                run(axis, cfg);
            }
        } else if (axis == "heads") {
            for (auto h : axes.heads) {
                eval::ExperimentConfig cfg = base;
                cfg.model.heads = h;
                run(axis, cfg);
            }
        } else if (axis == "layers") {
            for (auto l : axes.layers) {
                eval::ExperimentConfig cfg = base;
                cfg.model.layers = l;
                cfg.model.share_attention = true;
                run(axis, cfg);
            }
        } else if (axis == "env_mask") {
            run(axis, base);
            for (const char* f : data::kEnvFeatures) {
                eval::ExperimentConfig cfg = base;
                cfg.schema.masked_env.push_back(f);
                run(axis, cfg);
            }
        } else if (axis == "generalization") {
            const std::size_t n = records.size();
            const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * axes.test_fraction));
            for (auto a : {eval::Axis::time, eval::Axis::longitude, eval::Axis::latitude}) {
                for (auto s : axes.gaps) {
                    if (n_test + s >= n) throw ConfigError("generalization gap leaves no training nodes");
                    const std::size_t k = n - n_test - s;
                    const auto r = eval::run_generalization(records, base, a, k, s);
                    MatrixRow row = row_from(axis, base, r);
                    row.split = std::string(eval::axis_name(a)) + ":k=" + std::to_string(k) + ":s=" + std::to_string(s);
                    rows.push_back(row);
                    note(rows.back());
                }
            }
        }
    }
    return rows;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string row_key(const MatrixRow& r) {
    return r.axis + "," + r.variant + "," + std::to_string(r.heads) + "," + std::to_string(r.layers) + "," +
           r.masked + "," + r.split;
}

}  // namespace

std::string matrix_csv(const std::vector<MatrixRow>& rows) {
    std::string out = "axis,variant,heads,layers,masked,split,train_mae,test_mae,test_mse,test_rmse,n_test\n";
    for (const auto& r : rows) {
        out += row_key(r) + "," + fmt(r.train_mae) + "," + fmt(r.test.mae) + "," + fmt(r.test.mse) + "," +
               fmt(r.test.rmse) + "," + std::to_string(r.test.n) + "\n";
    }
    return out;
}

std::string matrix_timing_csv(const std::vector<MatrixRow>& rows) {
    std::string out = "axis,variant,heads,layers,masked,split,graph_s,train_s,inference_s\n";
    for (const auto& r : rows) {
        out += row_key(r) + "," + fmt(r.timings.graph_s) + "," + fmt(r.timings.train_s) + "," +
               fmt(r.timings.inference_s) + "\n";
    }
    return out;
}

fs::path cmd_matrix(const RunConfig& config, const MatrixAxes& axes, std::ostream& log) {
    const auto rows = run_matrix(config, axes, log);
    const fs::path path = out_dir(config) / "matrix.csv";
    write_text(path, matrix_csv(rows));
    write_text(out_dir(config) / "timing" / "matrix.csv", matrix_timing_csv(rows));
    write_manifest(out_dir(config), config.to_json());
    log << "matrix: " << rows.size() << " rows -> " << path.string() << "\n";
    return path;
}

// ---------------------------------------------------------------- entry point

namespace {

double parse_time_flag(const std::string& text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec == std::errc() && res.ptr == text.data() + text.size()) return v;
    try {
        return data::parse_iso8601_days(text);
    } catch (const DomainError&) {
        throw UsageError("--time must be days since 1970-01-01 or an ISO-8601 date, got \"" + text + "\"");
    }
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Spatiotemporal graph attention models for sparse pavement distress series"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
    app.add_option("-c,--config", config_path, "Run configuration JSON");
    app.add_option("--set", overrides, "Override a config value: dotted.key=value (repeatable)");
    app.add_option("-o,--out", out, "Output directory (overrides out_dir)");

    auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset as CSV");
    auto* build = app.add_subcommand("build-graph", "Build the training graph and write it as JSON");
    auto* train = app.add_subcommand("train", "Train the configured model and write a checkpoint");

    auto* evaluate = app.add_subcommand("evaluate", "Score the test block with a trained checkpoint");
    std::string checkpoint;
    std::string strategy;
    evaluate->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");
    evaluate->add_option("--strategy", strategy, "Continuation strategy: true, predicted or ignore");

    auto* predict = app.add_subcommand("predict", "Predict one (location, time) query");
    std::int64_t location = 0;
    std::string time_text;
    predict->add_option("--location", location, "Location id")->required();
    predict->add_option("--time", time_text, "Query time: days since 1970-01-01 or ISO-8601")->required();
    predict->add_option("--strategy", strategy, "Continuation strategy: true, predicted or ignore");
    predict->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");

    auto* matrix = app.add_subcommand("matrix", "Run experiment matrices and write a comparison table");
    std::string axes_text = "variant";
    matrix->add_option("--axes", axes_text, "Comma-separated: variant, heads, layers, env_mask, generalization");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (!out.empty()) overrides.push_back("out_dir=\"" + out + "\"");
        const RunConfig config = load_run_config(config_path, overrides);
        const fs::path ckpt_path = checkpoint.empty() ? out_dir(config) / "checkpoint.bin" : fs::path(checkpoint);
        const trainer::Strategy strat = strategy.empty() ? config.strategy : trainer::parse_strategy(strategy);

        if (gen->parsed()) {
            cmd_gen_data(config, std::cerr);
        } else if (build->parsed()) {
            cmd_build_graph(config, std::cerr);
        } else if (train->parsed()) {
            cmd_train(config, std::cerr);
        } else if (evaluate->parsed()) {
            cmd_evaluate(config, ckpt_path, strat, std::cerr);
        } else if (predict->parsed()) {
            const double y_hat = cmd_predict(config, ckpt_path, {location, parse_time_flag(time_text), strat}, std::cerr);
            std::cout << fmt(y_hat) << "\n";
        } else if (matrix->parsed()) {
            cmd_matrix(config, parse_axes(axes_text), std::cerr);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace stgan::cli
