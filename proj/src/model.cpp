#include "stgan/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

namespace stgan::model {

namespace nd = ndgrad;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view key) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a offset basis
    for (unsigned char c : key) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return splitmix64(seed ^ splitmix64(h));
}

void fill_uniform(std::span<double> out, double bound, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : out) {
        v = u(rng);
    }
}

Matrix glorot(std::size_t rows, std::size_t cols, std::uint64_t seed, std::string_view name) {
    Matrix m(rows, cols);
    fill_uniform(m.values(), std::sqrt(6.0 / static_cast<double>(rows + cols)), stream_seed(seed, name));
    return m;
}

/// Glorot bound from the full shape, one stream per input row.
Matrix glorot_by_row(std::size_t rows, std::size_t cols, std::uint64_t seed, std::string_view name,
                     const std::vector<std::string>& row_keys) {
    Matrix m(rows, cols);
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t r = 0; r < rows; ++r) {
        fill_uniform(m.row(r), bound, stream_seed(seed, std::string(name) + "/" + row_keys[r]));
    }
    return m;
}

/// Attention vectors: one column per head, each its own fan-in/fan-out of (rows, 1).
Matrix attention_init(std::size_t rows, std::size_t heads, std::uint64_t seed, std::string_view name) {
    Matrix m(rows, heads);
    Matrix col(rows, 1);
    for (std::size_t h = 0; h < heads; ++h) {
        fill_uniform(col.values(), std::sqrt(6.0 / static_cast<double>(rows + 1)),
                     stream_seed(seed, std::string(name) + "/head" + std::to_string(h)));
        for (std::size_t r = 0; r < rows; ++r) {
            m(r, h) = col[r];
        }
    }
    return m;
}

std::string layer_name(std::string_view prefix, std::string_view kind, std::size_t k) {
    return std::string(prefix) + "." + std::string(kind) + std::to_string(k);
}

void add_mlp(ParamSet& ps, std::string_view prefix, std::size_t in, const std::vector<std::size_t>& widths,
             std::uint64_t seed, const std::vector<std::string>* first_row_keys = nullptr) {
    std::size_t prev = in;
    for (std::size_t k = 0; k < widths.size(); ++k) {
        const std::string w = layer_name(prefix, "w", k + 1);
        if (k == 0 && first_row_keys != nullptr) {
            ps.add(w, glorot_by_row(prev, widths[k], seed, w, *first_row_keys));
        } else {
            ps.add(w, glorot(prev, widths[k], seed, w));
        }
        ps.add(layer_name(prefix, "b", k + 1), Matrix(1, widths[k]));
        prev = widths[k];
    }
}

std::vector<std::string> full_row_keys(const ModelConfig& c) {
    if (!c.input_names.empty()) {
        return c.input_names;
    }
    std::vector<std::string> keys;
    for (std::size_t k = 0; k < c.full_dim; ++k) {
        keys.push_back("slot" + std::to_string(k));
    }
    return keys;
}

bool gat_like(Variant v) { return v == Variant::gat || v == Variant::stgan_eam; }

ScoreInput score_input(Variant v) {
    return (v == Variant::stgan || v == Variant::stgan_no_top) ? ScoreInput::spatiotemporal : ScoreInput::no_time;
}

std::size_t attention_rows(const ModelConfig& c) {
    return 2 * c.hidden() + (score_input(c.variant) == ScoreInput::spatiotemporal ? 1 : 0);
}

/// Source indices into concat_rows(parent_rep, self_rep).
std::vector<std::size_t> stacked_sources(const GraphBatch& b) {
    std::vector<std::size_t> idx(b.edges());
    for (std::size_t e = 0; e < b.edges(); ++e) {
        idx[e] = b.edge_self[e] ? b.rows() + b.edge_dst[e] : b.edge_src[e];
    }
    return idx;
}

Var forward_attention(const Bound& p, const ModelConfig& c, const GraphBatch& b, const ForwardOptions& opts) {
    Tape& t = p.tape();
    const Var x_full = t.constant(b.x_full);
    const Var x_st = t.constant(b.x_st);
    const Features f = extract_features(p, c, x_full, x_st);
    const ScoreInput input = score_input(c.variant);
    const bool eam = c.variant == Variant::stgan_eam;

    Var coef1;
    if (gat_like(c.variant)) {
        // Target side sees only what a query node has: spatial/temporal slots.
        const Var z_query = mlp(p, "extract.full", t.constant(b.x_query), c.extractor_widths.size(), false);
        const Var stacked[] = {f.z, z_query};
        coef1 = attention_coefficients(p, c, b, 1, z_query, nd::concat_rows(t, stacked), stacked_sources(b), input,
                                       eam, opts);
    } else {
        coef1 = attention_coefficients(p, c, b, 1, f.z_st, f.z_st, b.edge_src, input, eam, opts);
    }
    Var rep = gconv_first(t, b, coef1, f.z, f.z_st, c.heads);
    for (std::size_t layer = 2; layer <= c.layers; ++layer) {
        const Var z = conv_project(p, layer - 1, rep);
        const Var coef =
            c.share_attention ? coef1 : attention_coefficients(p, c, b, layer, z, z, b.edge_src, input, eam, opts);
        rep = gconv_later(t, b, coef, z, c.heads);
    }
    return output_head(p, rep);
}

Var forward_gcn(const Bound& p, const ModelConfig& c, const GraphBatch& b) {
    Tape& t = p.tape();
    const Var coef = t.constant(Matrix::column(b.gcn_coef));
    const Var pf = nd::matmul(t, t.constant(b.x_full), p["gcn.w_full"]);
    const Var ps = nd::matmul(t, t.constant(b.x_st), p["gcn.w_st"]);
    const Var stacked[] = {pf, ps};
    const Var agg1 = nd::aggregate(t, coef, nd::concat_rows(t, stacked), stacked_sources(b), b.edge_dst, b.rows());
    const Var h1 = nd::elu(t, nd::add_bias(t, agg1, p["gcn.b1"]));
    const Var p2 = nd::matmul(t, h1, p["gcn.w2"]);
    const Var agg2 = nd::add_bias(t, nd::aggregate(t, coef, p2, b.edge_src, b.edge_dst, b.rows()), p["gcn.b2"]);
    if (c.variant == Variant::gcn) {
        return agg2;
    }
    return output_head(p, nd::elu(t, agg2));
}

}  // namespace

// ---------------------------------------------------------------- config

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::stgan: return "stgan";
        case Variant::stgan_no_top: return "stgan_no_top";
        case Variant::stgan_eam: return "stgan_eam";
        case Variant::stgan_no_td: return "stgan_no_td";
        case Variant::top_mlp: return "top_mlp";
        case Variant::gcn: return "gcn";
        case Variant::gcn_mlp: return "gcn_mlp";
        case Variant::gat: return "gat";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : kAllVariants) {
        if (variant_name(v) == name) {
            return v;
        }
    }
    throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

bool is_baseline(Variant v) {
    return v == Variant::top_mlp || v == Variant::gcn || v == Variant::gcn_mlp || v == Variant::gat;
}

bool is_ablation(Variant v) {
    return v == Variant::stgan_no_top || v == Variant::stgan_eam || v == Variant::stgan_no_td;
}

bool uses_attention(Variant v) {
    return v == Variant::stgan || is_ablation(v) || v == Variant::gat;
}

void ModelConfig::validate() const {
    if (extractor_widths.empty() ||
        std::any_of(extractor_widths.begin(), extractor_widths.end(), [](std::size_t w) { return w == 0; }) ||
        head_hidden == 0 || full_dim == 0 || st_dim == 0) {
        throw ConfigError("model config: widths must be positive");
    }
    if (heads < 1 || layers < 1) {
        throw ConfigError("model config: heads and layers must be at least 1");
    }
    if (st_dim != 3) {
        throw ConfigError("model config: the spatial/temporal vector has 3 slots");
    }
    if (!input_names.empty() && input_names.size() != full_dim) {
        throw ConfigError("model config: input_names has " + std::to_string(input_names.size()) +
                          " entries for full_dim " + std::to_string(full_dim));
    }
    if (eam_gamma < 0.0) {
        throw ConfigError("model config: eam_gamma must be non-negative");
    }
}

std::array<std::size_t, 3> ModelConfig::st_slots() const {
    if (input_names.empty()) {
        return {full_dim - 3, full_dim - 2, full_dim - 1};
    }
    auto find = [&](std::string_view n) {
        auto it = std::find(input_names.begin(), input_names.end(), n);
        if (it == input_names.end()) {
            throw ConfigError("model config: input_names lacks '" + std::string(n) + "'");
        }
        return static_cast<std::size_t>(it - input_names.begin());
    };
    return {find("longitude_gcj"), find("latitude_gcj"), find("collect_time")};
}

nlohmann::json ModelConfig::to_json() const {
    return {{"variant", variant_name(variant)},
            {"full_dim", full_dim},
            {"st_dim", st_dim},
            {"extractor_widths", extractor_widths},
            {"head_hidden", head_hidden},
            {"heads", heads},
            {"layers", layers},
            {"leaky_slope", leaky_slope},
            {"eam_gamma", eam_gamma},
            {"share_attention", share_attention},
            {"input_names", input_names}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.variant = parse_variant(j.value("variant", std::string("stgan")));
    c.full_dim = j.value("full_dim", c.full_dim);
    c.st_dim = j.value("st_dim", c.st_dim);
    c.extractor_widths = j.value("extractor_widths", c.extractor_widths);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.eam_gamma = j.value("eam_gamma", c.eam_gamma);
    c.share_attention = j.value("share_attention", c.share_attention);
    c.input_names = j.value("input_names", c.input_names);
    c.validate();
    return c;
}

// ---------------------------------------------------------------- params

void ParamSet::add(std::string name, Matrix value) {
    if (contains(name)) {
        throw ContractError("parameter '" + name + "' registered twice");
    }
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
}

bool ParamSet::contains(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const Matrix& ParamSet::at(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
        throw ContractError("no parameter named '" + std::string(name) + "'");
    }
    return values_[static_cast<std::size_t>(it - names_.begin())];
}

Matrix& ParamSet::at(std::string_view name) {
    return const_cast<Matrix&>(std::as_const(*this).at(name));
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& m : values_) {
        n += m.size();
    }
    return n;
}

ParamSet init_params(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    ParamSet ps;
    const std::size_t h = c.hidden();
    const auto keys = full_row_keys(c);
    if (uses_attention(c.variant)) {
        add_mlp(ps, "extract.full", c.full_dim, c.extractor_widths, seed, &keys);
        add_mlp(ps, "extract.st", c.st_dim, c.extractor_widths, seed);
        const std::size_t attn_layers = c.share_attention ? 1 : c.layers;
        for (std::size_t l = 1; l <= attn_layers; ++l) {
            const std::string name = "attn.l" + std::to_string(l);
            ps.add(name, attention_init(attention_rows(c), c.heads, seed, name));
        }
        for (std::size_t l = 1; l < c.layers; ++l) {
            const std::string w = "conv.w_o" + std::to_string(l);
            ps.add(w, glorot(c.heads * h, h, seed, w));
            ps.add("conv.b_o" + std::to_string(l), Matrix(1, h));
        }
        add_mlp(ps, "head", c.heads * h, {c.head_hidden, 1}, seed);
    } else if (c.variant == Variant::top_mlp) {
        auto widths = c.extractor_widths;
        widths.push_back(1);
        add_mlp(ps, "mlp", c.st_dim + c.full_dim + 1, widths, seed);
    } else {
        ps.add("gcn.w_full", glorot_by_row(c.full_dim, h, seed, "gcn.w_full", keys));
        ps.add("gcn.w_st", glorot(c.st_dim, h, seed, "gcn.w_st"));
        ps.add("gcn.b1", Matrix(1, h));
        const std::size_t out = c.variant == Variant::gcn ? 1 : h;
        ps.add("gcn.w2", glorot(h, out, seed, "gcn.w2"));
        ps.add("gcn.b2", Matrix(1, out));
        if (c.variant == Variant::gcn_mlp) {
            add_mlp(ps, "head", h, {c.head_hidden, 1}, seed);
        }
    }
    return ps;
}

Bound::Bound(Tape& tape, const ParamSet& params, bool trainable) : tape_(&tape), params_(&params) {
    for (const Matrix& m : params.values()) {
        leaves_.push_back(trainable ? tape.parameter(m) : tape.constant(m));
    }
}

Bound::Bound(Tape& tape, const ParamSet& params, std::vector<Var> leaves)
    : tape_(&tape), params_(&params), leaves_(std::move(leaves)) {
    if (leaves_.size() != params.size()) {
        throw ContractError("Bound: " + std::to_string(leaves_.size()) + " leaves for " +
                            std::to_string(params.size()) + " parameters");
    }
}

Var Bound::operator[](std::string_view name) const {
    const auto& names = params_->names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw ContractError("no parameter named '" + std::string(name) + "'");
    }
    return leaves_[static_cast<std::size_t>(it - names.begin())];
}

// ---------------------------------------------------------------- batches

std::optional<std::size_t> GraphBatch::row_of(std::int64_t id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - ids.begin());
}

std::size_t receptive_hops(const ModelConfig& c) {
    if (c.variant == Variant::top_mlp) {
        return 0;
    }
    if (c.variant == Variant::gcn || c.variant == Variant::gcn_mlp) {
        return 2;
    }
    return c.layers;
}

GraphBatch make_batch(const graph::STGraph& g, std::span<const data::ProcessedNode> nodes, const ModelConfig& c) {
    std::vector<std::size_t> all(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
        all[p] = p;
    }
    return make_batch(g, nodes, c, all, 0);
}

GraphBatch make_batch(const graph::STGraph& g, std::span<const data::ProcessedNode> nodes, const ModelConfig& c,
                      std::span<const std::size_t> targets, std::size_t hops) {
    std::unordered_map<std::int64_t, std::size_t> by_id;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        by_id.emplace(nodes[k].node_id, k);
    }
    auto node_at = [&](std::size_t pos) -> const data::ProcessedNode& {
        auto it = by_id.find(g.node(pos).id);
        if (it == by_id.end()) {
            throw ContractError("make_batch: graph node " + std::to_string(g.node(pos).id) + " has no features");
        }
        return nodes[it->second];
    };

    std::vector<char> selected(g.size(), 0);
    std::vector<std::size_t> frontier;
    for (std::size_t t : targets) {
        if (t >= g.size()) {
            throw ContractError("make_batch: target position out of range");
        }
        if (!selected[t]) {
            selected[t] = 1;
            frontier.push_back(t);
        }
    }
    for (std::size_t step = 0; step < hops && !frontier.empty(); ++step) {
        std::vector<std::size_t> next;
        for (std::size_t p : frontier) {
            for (const auto& e : g.parents(p)) {
                if (!selected[e.parent]) {
                    selected[e.parent] = 1;
                    next.push_back(e.parent);
                }
            }
        }
        frontier = std::move(next);
    }

    GraphBatch b;
    std::vector<long> row_of_pos(g.size(), -1);
    for (std::size_t p = 0; p < g.size(); ++p) {
        if (selected[p]) {
            row_of_pos[p] = static_cast<long>(b.positions.size());
            b.positions.push_back(p);
        }
    }
    const std::size_t n = b.positions.size();
    const std::size_t d = c.full_dim;
    const auto st = c.st_slots();
    b.x_full = Matrix(n, d);
    b.x_st = Matrix(n, 3);
    b.x_query = Matrix(n, d);
    b.top_features = Matrix(n, 3 + d + 1);
    b.y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t pos = b.positions[r];
        const auto& node = node_at(pos);
        if (node.x_full.size() != d) {
            throw DimensionError("make_batch: node " + std::to_string(node.node_id) + " has " +
                                 std::to_string(node.x_full.size()) + " features, model expects " +
                                 std::to_string(d));
        }
        b.ids.push_back(node.node_id);
        b.is_init.push_back(g.node(pos).is_init);
        std::copy(node.x_full.begin(), node.x_full.end(), b.x_full.row(r).begin());
        std::copy(node.x_st.begin(), node.x_st.end(), b.x_st.row(r).begin());
        for (std::size_t k = 0; k < 3; ++k) {
            b.x_query(r, st[k]) = node.x_full[st[k]];
            b.top_features(r, k) = node.x_st[k];
        }
        b.y[r] = node.y;

        std::size_t n_top = 0;
        for (const auto& e : g.parents(pos)) {
            if (e.origin != graph::EdgeOrigin::top) {
                continue;
            }
            const auto& parent = node_at(e.parent);
            for (std::size_t k = 0; k < d; ++k) {
                b.top_features(r, 3 + k) += parent.x_full[k];
            }
            b.top_features(r, 3 + d) += parent.y;
            ++n_top;
        }
        if (n_top > 0) {
            for (std::size_t k = 3; k < 3 + d + 1; ++k) {
                b.top_features(r, k) /= static_cast<double>(n_top);
            }
        }
    }

    const double l_res = g.config().l_res_m;
    auto degree = [&](std::size_t pos) { return static_cast<double>(g.parents(pos).size() + 1); };
    b.offsets.push_back(0);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t pos = b.positions[r];
        const double t_child = g.node(pos).t_norm;
        for (const auto& e : g.parents(pos)) {
            const long src = row_of_pos[e.parent];
            if (src < 0) {
                continue;  // outside the receptive field; this row is not a target
            }
            b.edge_src.push_back(static_cast<std::size_t>(src));
            b.edge_dst.push_back(r);
            b.edge_self.push_back(false);
            b.dt_norm.push_back(std::abs(t_child - g.node(e.parent).t_norm));
            b.dist_norm.push_back(e.dist_m / l_res);
            b.gcn_coef.push_back(1.0 / std::sqrt(degree(pos) * degree(e.parent)));
        }
        b.edge_src.push_back(r);
        b.edge_dst.push_back(r);
        b.edge_self.push_back(true);
        b.dt_norm.push_back(0.0);
        b.dist_norm.push_back(0.0);
        b.gcn_coef.push_back(1.0 / degree(pos));
        b.offsets.push_back(b.edge_src.size());
    }
    return b;
}

// ---------------------------------------------------------------- layers

Var mlp(const Bound& p, std::string_view prefix, Var x, std::size_t n_layers, bool linear_last) {
    Tape& t = p.tape();
    Var h = x;
    for (std::size_t k = 1; k <= n_layers; ++k) {
        h = nd::add_bias(t, nd::matmul(t, h, p[layer_name(prefix, "w", k)]), p[layer_name(prefix, "b", k)]);
        if (!(linear_last && k == n_layers)) {
            h = nd::elu(t, h);
        }
    }
    return h;
}

Features extract_features(const Bound& p, const ModelConfig& c, Var x_full, Var x_st) {
    Tape& t = p.tape();
    if (t.value(x_full).cols() != c.full_dim || t.value(x_st).cols() != c.st_dim) {
        throw DimensionError("extract_features: inputs " + t.value(x_full).shape_str() + " and " +
                             t.value(x_st).shape_str() + " do not match widths " + std::to_string(c.full_dim) +
                             " and " + std::to_string(c.st_dim));
    }
    const std::size_t depth = c.extractor_widths.size();
    return Features{mlp(p, "extract.full", x_full, depth, false), mlp(p, "extract.st", x_st, depth, false)};
}

Var attention_coefficients(const Bound& p, const ModelConfig& c, const GraphBatch& b, std::size_t layer,
                           Var target_rep, Var source_rep, const std::vector<std::size_t>& source_index,
                           ScoreInput input, bool eam, const ForwardOptions& opts) {
    Tape& t = p.tape();
    const std::size_t h = c.hidden();
    const Var w = p["attn.l" + std::to_string(layer)];
    const std::size_t expect_rows = 2 * h + (input == ScoreInput::spatiotemporal ? 1 : 0);
    if (t.value(w).rows() != expect_rows) {
        throw DimensionError("attention layer " + std::to_string(layer) + ": weight " + t.value(w).shape_str() +
                             " does not match score width " + std::to_string(expect_rows));
    }
    for (std::size_t s = 0; s + 1 < b.offsets.size(); ++s) {
        if (b.offsets[s + 1] <= b.offsets[s]) {
            throw ContractError("attention: row " + std::to_string(s) + " has no incoming edge (missing self loop)");
        }
    }
    const Var to_target = nd::gather_rows(t, nd::matmul(t, target_rep, nd::slice_rows(t, w, 0, h)), b.edge_dst);
    const Var to_source = nd::gather_rows(t, nd::matmul(t, source_rep, nd::slice_rows(t, w, h, 2 * h)), source_index);
    Var score = nd::add(t, to_target, to_source);
    if (input == ScoreInput::spatiotemporal) {
        const Var dt = t.constant(Matrix::column(b.dt_norm));
        score = nd::add(t, score, nd::matmul(t, dt, nd::slice_rows(t, w, 2 * h, 2 * h + 1)));
    }
    Var activated = nd::leaky_relu(t, score, c.leaky_slope);
    if (eam) {
        Matrix decay(b.edges(), c.heads);
        for (std::size_t e = 0; e < b.edges(); ++e) {
            const double k = std::exp(-c.eam_gamma * b.dist_norm[e]) * std::exp(-c.eam_gamma * b.dt_norm[e]);
            for (std::size_t hd = 0; hd < c.heads; ++hd) {
                decay(e, hd) = k;
            }
        }
        activated = nd::mul(t, activated, t.constant(std::move(decay)));
    }
    const Var coef = nd::segment_softmax(t, activated, b.offsets);
    if (opts.probe) {
        opts.probe(layer, t.value(coef), b.offsets);
    }
    return coef;
}

Var gconv_first(Tape& t, const GraphBatch& b, Var coef, Var z, Var z_st, std::size_t heads) {
    if (t.value(coef).cols() != heads || t.value(coef).rows() != b.edges()) {
        throw ContractError("gconv_first: expected " + std::to_string(b.edges()) + "x" + std::to_string(heads) +
                            " coefficients, got " + t.value(coef).shape_str());
    }
    const Var stacked[] = {z, z_st};
    const Var values = nd::concat_rows(t, stacked);
    const auto src = stacked_sources(b);
    std::vector<Var> parts;
    for (std::size_t hd = 0; hd < heads; ++hd) {
        parts.push_back(nd::aggregate(t, nd::slice_cols(t, coef, hd, hd + 1), values, src, b.edge_dst, b.rows()));
    }
    return nd::concat_cols(t, parts);
}

Var gconv_later(Tape& t, const GraphBatch& b, Var coef, Var rep, std::size_t heads) {
    if (t.value(coef).cols() != heads || t.value(coef).rows() != b.edges()) {
        throw ContractError("gconv_later: expected " + std::to_string(b.edges()) + "x" + std::to_string(heads) +
                            " coefficients, got " + t.value(coef).shape_str());
    }
    std::vector<Var> parts;
    for (std::size_t hd = 0; hd < heads; ++hd) {
        parts.push_back(nd::aggregate(t, nd::slice_cols(t, coef, hd, hd + 1), rep, b.edge_src, b.edge_dst, b.rows()));
    }
    return nd::concat_cols(t, parts);
}

Var conv_project(const Bound& p, std::size_t layer, Var concat) {
    Tape& t = p.tape();
    const Var w = p["conv.w_o" + std::to_string(layer)];
    const Var bias = p["conv.b_o" + std::to_string(layer)];
    return nd::elu(t, nd::add_bias(t, nd::matmul(t, concat, w), bias));
}

Var output_head(const Bound& p, Var rep) { return mlp(p, "head", rep, 2, true); }

Var forward(const Bound& p, const ModelConfig& c, const GraphBatch& b, const ForwardOptions& opts) {
    if (b.x_full.cols() != c.full_dim) {
        throw DimensionError("forward: batch has " + std::to_string(b.x_full.cols()) + " features, model expects " +
                             std::to_string(c.full_dim));
    }
    if (uses_attention(c.variant)) {
        return forward_attention(p, c, b, opts);
    }
    if (c.variant == Variant::top_mlp) {
        return mlp(p, "mlp", p.tape().constant(b.top_features), c.extractor_widths.size() + 1, true);
    }
    return forward_gcn(p, c, b);
}

Var forward_baseline(const Bound& p, const ModelConfig& c, const GraphBatch& b, const ForwardOptions& opts) {
    if (!is_baseline(c.variant)) {
        throw ConfigError("forward_baseline: '" + std::string(variant_name(c.variant)) + "' is not a baseline");
    }
    return forward(p, c, b, opts);
}

Var forward_ablation(const Bound& p, const ModelConfig& c, const GraphBatch& b, const ForwardOptions& opts) {
    if (!is_ablation(c.variant)) {
        throw ConfigError("forward_ablation: '" + std::string(variant_name(c.variant)) + "' is not an ablation");
    }
    return forward(p, c, b, opts);
}

std::vector<double> predict_values(const ParamSet& params, const ModelConfig& c, const GraphBatch& b,
                                   const ForwardOptions& opts) {
    Tape t;
    const Bound bound(t, params, false);
    const Var out = forward(bound, c, b, opts);
    const auto& v = t.value(out).storage();
    return v;
}

}  // namespace stgan::model
