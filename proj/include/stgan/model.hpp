#pragma once

// STGAN graph autoregression network, its baselines and ablations, expressed
// over ndgrad primitives.
//
// Self-channel rule shared by every variant: a node contributes only its
// spatial/temporal representation (from x_st) to its own aggregation, and
// parents are earlier nodes, so a prediction never reads the node's own
// environmental, distress, type or confidence values.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgan/dataset.hpp"
#include "stgan/ndgrad.hpp"
#include "stgan/stgraph.hpp"

namespace stgan::model {

using ndgrad::Matrix;
using ndgrad::Tape;
using ndgrad::Var;

enum class Variant { stgan, stgan_no_top, stgan_eam, stgan_no_td, top_mlp, gcn, gcn_mlp, gat };

inline constexpr std::array<Variant, 8> kAllVariants = {Variant::stgan,       Variant::top_mlp,     Variant::gcn,
                                                        Variant::gcn_mlp,     Variant::gat,         Variant::stgan_no_top,
                                                        Variant::stgan_eam,   Variant::stgan_no_td};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
bool is_baseline(Variant v);
bool is_ablation(Variant v);
/// Variants with attention-based graph convolution.
bool uses_attention(Variant v);

struct ModelConfig {
    Variant variant = Variant::stgan;
    std::size_t full_dim = 18;                          // d
    std::size_t st_dim = 3;                             // d'
    std::vector<std::size_t> extractor_widths = {128, 256};  // hidden widths; last is h
    std::size_t head_hidden = 256;
    std::size_t heads = 5;
    std::size_t layers = 1;
    double leaky_slope = 0.2;
    double eam_gamma = 1.0;
    /// Reuse the first layer's attention coefficients in every layer.
    bool share_attention = false;
    /// Names of the x_full slots; used to locate the spatial/temporal slots
    /// and to key per-feature weight initialization. Empty means the last
    /// three slots are (lon, lat, time).
    std::vector<std::string> input_names;

    std::size_t hidden() const { return extractor_widths.back(); }
    void validate() const;
    std::array<std::size_t, 3> st_slots() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named parameter arrays in registration order.
class ParamSet {
public:
    void add(std::string name, Matrix value);
    bool contains(std::string_view name) const;
    const Matrix& at(std::string_view name) const;
    Matrix& at(std::string_view name);
    const std::vector<std::string>& names() const { return names_; }
    std::vector<Matrix>& values() { return values_; }
    const std::vector<Matrix>& values() const { return values_; }
    std::size_t size() const { return names_.size(); }
    std::size_t scalar_count() const;
    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
};

/// Glorot-uniform weights, zero biases. Each array draws from its own
/// stream keyed by (seed, name); the first full-feature layer draws one
/// stream per input feature name so dropping a feature leaves the others'
/// initial weights untouched.
ParamSet init_params(const ModelConfig& config, std::uint64_t seed);

/// Parameters placed on a tape.
class Bound {
public:
    Bound(Tape& tape, const ParamSet& params, bool trainable);
    /// Reuses leaves already on the tape (one per parameter, registration order).
    Bound(Tape& tape, const ParamSet& params, std::vector<Var> leaves);
    Var operator[](std::string_view name) const;
    const std::vector<Var>& leaves() const { return leaves_; }
    Tape& tape() const { return *tape_; }

private:
    Tape* tape_;
    const ParamSet* params_;
    std::vector<Var> leaves_;
};

/// Dense inputs for one forward pass over a set of graph nodes. Rows follow
/// ascending graph position. Edges are grouped by destination row with the
/// self edge last in every group.
struct GraphBatch {
    std::vector<std::size_t> positions;
    std::vector<std::int64_t> ids;
    std::vector<bool> is_init;
    Matrix x_full;    // N x d
    Matrix x_st;      // N x d'
    Matrix x_query;   // x_full with only the spatial/temporal slots kept
    Matrix top_features;  // [x_st | mean over TOP parents of (x_full | y)]
    std::vector<double> y;

    std::vector<std::size_t> edge_src;  // source row (self edges: own row)
    std::vector<std::size_t> edge_dst;
    std::vector<bool> edge_self;
    std::vector<std::size_t> offsets;   // N + 1 entries
    std::vector<double> dt_norm;
    std::vector<double> dist_norm;      // dist_m / l_res
    std::vector<double> gcn_coef;       // 1 / sqrt(deg_dst * deg_src), deg = in-degree + 1

    std::size_t rows() const { return positions.size(); }
    std::size_t edges() const { return edge_src.size(); }
    std::optional<std::size_t> row_of(std::int64_t id) const;
};

/// Batch over the whole graph.
GraphBatch make_batch(const graph::STGraph& graph, std::span<const data::ProcessedNode> nodes,
                      const ModelConfig& config);

/// Batch restricted to the receptive field of `targets` (graph positions):
/// every node within `hops` parent steps of a target.
GraphBatch make_batch(const graph::STGraph& graph, std::span<const data::ProcessedNode> nodes,
                      const ModelConfig& config, std::span<const std::size_t> targets, std::size_t hops);

/// Parent steps a prediction depends on for this configuration.
std::size_t receptive_hops(const ModelConfig& config);

/// Called with (layer, coefficients E x H, segment offsets) for every
/// attention normalization.
using AttentionProbe = std::function<void(std::size_t, const Matrix&, const std::vector<std::size_t>&)>;

struct ForwardOptions {
    AttentionProbe probe;
};

struct Features {
    Var z;     // from x_full
    Var z_st;  // from x_st
};

/// Node-wise MLP with ELU after every layer except, when `linear_last`, the final one.
Var mlp(const Bound& p, std::string_view prefix, Var x, std::size_t n_layers, bool linear_last);

/// Z = ELU-MLP(x_full), Z' = ELU-MLP(x_st).
Features extract_features(const Bound& p, const ModelConfig& config, Var x_full, Var x_st);

/// Which representations feed an attention score.
enum class ScoreInput {
    spatiotemporal,  // STGAN: endpoints' Z' (or Z^l) plus the t_ij slot
    no_time,         // endpoints only
};

/// Softmax-normalized coefficients (E x H) for attention layer `layer`
/// (1-based). `target_rep` is indexed by destination row, `source_rep` by
/// `source_index`. With `eam`, the activated scores are multiplied by
/// exp(-gamma*dist_norm) * exp(-gamma*dt_norm) before normalization.
Var attention_coefficients(const Bound& p, const ModelConfig& config, const GraphBatch& batch, std::size_t layer,
                           Var target_rep, Var source_rep, const std::vector<std::size_t>& source_index,
                           ScoreInput input, bool eam, const ForwardOptions& options = {});

/// Per head: sum over parents of a * Z_parent plus a_self * Z'_self; heads
/// concatenated (N x H*h).
Var gconv_first(Tape& tape, const GraphBatch& batch, Var coef, Var z, Var z_st, std::size_t heads);

/// Per head: sum over parents and self of a * rep; heads concatenated.
Var gconv_later(Tape& tape, const GraphBatch& batch, Var coef, Var rep, std::size_t heads);

/// ELU(W_o^layer * x + b).
Var conv_project(const Bound& p, std::size_t layer, Var concat);

/// [H*h -> head_hidden -> 1] with ELU hidden activation.
Var output_head(const Bound& p, Var rep);

/// Predictions (N x 1) for every batch row, dispatching on config.variant.
Var forward(const Bound& p, const ModelConfig& config, const GraphBatch& batch, const ForwardOptions& options = {});

/// Baseline variants only (top_mlp, gcn, gcn_mlp, gat); ConfigError otherwise.
Var forward_baseline(const Bound& p, const ModelConfig& config, const GraphBatch& batch,
                     const ForwardOptions& options = {});

/// Ablation variants only (stgan_no_top, stgan_eam, stgan_no_td); ConfigError otherwise.
Var forward_ablation(const Bound& p, const ModelConfig& config, const GraphBatch& batch,
                     const ForwardOptions& options = {});

/// Convenience: evaluate predictions without gradients.
std::vector<double> predict_values(const ParamSet& params, const ModelConfig& config, const GraphBatch& batch,
                                   const ForwardOptions& options = {});

}  // namespace stgan::model
