#pragma once

// Tabular distress records: CSV ingestion, standardization into the two node
// feature vectors, temporal splitting, and a synthetic generator that
// reproduces irregular, asynchronous and sparse collection.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgan/errors.hpp"

namespace stgan::data {

/// Distress type codes, in one-hot slot order.
inline constexpr std::array<int, 5> kDistressTypes = {11, 13, 14, 15, 16};

/// Environmental columns in file order.
inline constexpr std::array<const char*, 8> kEnvFeatures = {
    "min_tem", "max_tem", "humidity", "wind", "pressure", "visibility", "precipitation", "cloud"};

struct RawRecord {
    std::int64_t location_id = 0;
    double longitude_gcj = 0.0;
    double latitude_gcj = 0.0;
    double collect_time = 0.0;  // days since 1970-01-01
    std::array<double, 8> env{};  // kEnvFeatures order
    double detect_info = 0.0;
    double detect_conf = 0.0;
    int distress_type = 11;

    double env_value(std::string_view name) const;
    friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

enum class TimeFormat { fractional_days, iso8601 };

struct RowError {
    std::size_t row = 0;  // 1-based data row (header excluded)
    std::string message;
};

struct LoadResult {
    std::vector<RawRecord> records;
    std::vector<RowError> errors;
    std::size_t skipped() const { return errors.size(); }
};

/// Reads a headered CSV. Missing required columns raise SchemaError; bad
/// cells skip the row and are reported in `errors`. Output is sorted by
/// (collect_time, location_id), file order breaking remaining ties.
LoadResult load_records(const std::filesystem::path& path, TimeFormat format = TimeFormat::fractional_days);
LoadResult parse_records(std::string_view csv_text, TimeFormat format = TimeFormat::fractional_days);

/// Writes records with the same header load_records expects. Values are
/// printed with round-trip precision.
void write_records(const std::filesystem::path& path, std::span<const RawRecord> records);
std::string format_records(std::span<const RawRecord> records);

/// Days since the Unix epoch for "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM[:SS[.fff]]"
/// (optional trailing Z). Throws DomainError on malformed input.
double parse_iso8601_days(std::string_view text);

/// Which optional inputs enter the full feature vector.
struct FeatureSchema {
    bool include_conf = true;
    bool include_type = true;
    std::vector<std::string> masked_env;  // environmental columns removed from X

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

/// Slot positions inside the full feature vector for a given schema.
struct FeatureLayout {
    std::vector<std::string> names;           // one per slot
    std::vector<std::size_t> env_slots;       // standardized environmental readings
    std::size_t distress_slot = 0;            // standardized detect_info
    std::optional<std::size_t> conf_slot;
    std::optional<std::size_t> type_slot;     // first of five one-hot slots
    std::size_t lon_slot = 0;
    std::size_t lat_slot = 0;
    std::size_t time_slot = 0;

    std::size_t full_dim() const { return names.size(); }
    static constexpr std::size_t st_dim() { return 3; }
    /// Positions of x_st inside x_full, in x_st order.
    std::array<std::size_t, 3> st_slots() const { return {lon_slot, lat_slot, time_slot}; }

    static FeatureLayout make(const FeatureSchema& schema);
};

struct FeatureStats {
    double mean = 0.0;
    double std = 0.0;
    bool degenerate() const { return std == 0.0; }
    friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

struct PreprocessStats {
    std::map<std::string, FeatureStats> features;  // numeric columns except collect_time
    double t_min = 0.0;
    double t_max = 0.0;

    const FeatureStats& at(const std::string& name) const;
    double standardize(const std::string& name, double value) const;
    double rescale_time(double t) const;

    nlohmann::json to_json() const;
    static PreprocessStats from_json(const nlohmann::json& j);
    friend bool operator==(const PreprocessStats&, const PreprocessStats&) = default;
};

/// Names of the standardized numeric columns.
std::vector<std::string> numeric_feature_names();

/// Population mean/std over `fit_rows`; time range over `segment_rows`
/// (pass the same span when the whole segment is the fit set).
PreprocessStats fit_standardizer(std::span<const RawRecord> fit_rows, std::span<const RawRecord> segment_rows);

struct ProcessedNode {
    std::int64_t node_id = 0;
    std::int64_t location_id = 0;
    std::vector<double> x_full;
    std::array<double, 3> x_st{};
    double y = 0.0;
    double t_norm = 0.0;
    double t_raw = 0.0;
    double lon = 0.0;
    double lat = 0.0;
    int distress_type = 11;

    friend bool operator==(const ProcessedNode&, const ProcessedNode&) = default;
};

std::array<double, 5> one_hot_type(int distress_type);

ProcessedNode apply_preprocess(const RawRecord& record, const PreprocessStats& stats, const FeatureLayout& layout,
                               std::int64_t node_id);

/// Node for a (location, time) query whose readings are unknown: only the
/// spatial/temporal slots are filled, everything else is zero.
ProcessedNode query_node(std::int64_t node_id, std::int64_t location_id, double lon, double lat, double t_raw,
                         int distress_type, const PreprocessStats& stats, const FeatureLayout& layout);

struct SplitFractions {
    double init = 0.1;
    double train = 0.7;
    double test = 0.2;
};

struct SplitSizes {
    std::size_t init = 0;
    std::size_t train = 0;
    std::size_t test = 0;
};

/// floor(n * init), floor(n * train), remainder to test.
SplitSizes split_sizes(std::size_t n, const SplitFractions& fractions);

template <typename T>
struct Split {
    std::vector<T> init;
    std::vector<T> train;
    std::vector<T> test;
};

/// Contiguous temporal partition of time-sorted items.
template <typename T>
Split<T> split_segment(std::span<const T> items, const SplitFractions& fractions) {
    const SplitSizes s = split_sizes(items.size(), fractions);
    Split<T> out;
    out.init.assign(items.begin(), items.begin() + static_cast<long>(s.init));
    out.train.assign(items.begin() + static_cast<long>(s.init), items.begin() + static_cast<long>(s.init + s.train));
    out.test.assign(items.begin() + static_cast<long>(s.init + s.train), items.end());
    return out;
}

struct SyntheticConfig {
    int n_locations = 300;
    /// Total rows; 0 means n_locations * mean_visits rounded.
    int total_records = 2000;
    double mean_visits = 6.67;
    double lon_origin = 121.40;
    double lat_origin = 31.15;
    double extent_deg = 0.05;
    double time_span_days = 60.0;
    double start_day = 18718.0;  // 2021-04-01
    double space_length_m = 1500.0;
    double time_length_days = 10.0;
    double noise = 0.15;
    /// Maintenance campaigns reset every distress within repair_radius_m of
    /// a uniformly placed center.
    double repair_campaigns_per_year = 40.0;
    double repair_radius_m = 500.0;
    std::uint64_t seed = 7;

    nlohmann::json to_json() const;
    static SyntheticConfig from_json(const nlohmann::json& j);
};

/// Ground truth kept alongside generated rows for oracle checks.
struct SyntheticTruth {
    std::vector<std::int64_t> location_ids;
    std::vector<std::vector<double>> repair_times;  // per location, ascending
    std::vector<double> initial_age_days;           // per location, at start_day
    std::string driver_feature = "precipitation";
    std::vector<std::string> noise_features;
};

struct SyntheticDataset {
    std::vector<RawRecord> records;  // sorted like load_records output
    SyntheticTruth truth;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

}  // namespace stgan::data
