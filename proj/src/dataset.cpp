#include "stgan/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stgan::data {

namespace {

constexpr const char* kLocationColumn = "location_id";

const std::vector<std::string>& required_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c = {kLocationColumn, "longitude_gcj", "latitude_gcj", "collect_time"};
        for (const char* e : kEnvFeatures) {
            c.emplace_back(e);
        }
        c.insert(c.end(), {"detect_info", "detect_conf", "distress_type"});
        return c;
    }();
    return cols;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

double parse_double(std::string_view cell, std::string_view column) {
    double v = 0.0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc{} || ptr != end || cell.empty()) {
        throw DomainError("column '" + std::string(column) + "': cannot parse '" + std::string(cell) + "'");
    }
    if (!std::isfinite(v)) {
        throw DomainError("column '" + std::string(column) + "': non-finite value");
    }
    return v;
}

std::int64_t parse_int(std::string_view cell, std::string_view column) {
    std::int64_t v = 0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc{} || ptr != end || cell.empty()) {
        throw DomainError("column '" + std::string(column) + "': cannot parse integer '" + std::string(cell) + "'");
    }
    return v;
}

int parse_fixed(std::string_view s, std::size_t pos, std::size_t len) {
    if (pos + len > s.size()) {
        throw DomainError("timestamp '" + std::string(s) + "' is truncated");
    }
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (ec != std::errc{} || ptr != s.data() + pos + len) {
        throw DomainError("timestamp '" + std::string(s) + "' has a malformed field");
    }
    return v;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

bool valid_type(int code) {
    return std::find(kDistressTypes.begin(), kDistressTypes.end(), code) != kDistressTypes.end();
}

}  // namespace

double RawRecord::env_value(std::string_view name) const {
    for (std::size_t k = 0; k < kEnvFeatures.size(); ++k) {
        if (name == kEnvFeatures[k]) {
            return env[k];
        }
    }
    throw SchemaError("unknown environmental feature '" + std::string(name) + "'");
}

double parse_iso8601_days(std::string_view text) {
    text = trim(text);
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') {
        throw DomainError("timestamp '" + std::string(text) + "' is not ISO-8601");
    }
    using namespace std::chrono;
    const year_month_day ymd{year{parse_fixed(text, 0, 4)}, month{static_cast<unsigned>(parse_fixed(text, 5, 2))},
                             day{static_cast<unsigned>(parse_fixed(text, 8, 2))}};
    if (!ymd.ok()) {
        throw DomainError("timestamp '" + std::string(text) + "' is not a calendar date");
    }
    double days = static_cast<double>(sys_days{ymd}.time_since_epoch().count());
    if (text.size() == 10) {
        return days;
    }
    if (text[10] != 'T' && text[10] != ' ') {
        throw DomainError("timestamp '" + std::string(text) + "' has a bad date/time separator");
    }
    std::string_view rest = text.substr(11);
    if (!rest.empty() && rest.back() == 'Z') {
        rest.remove_suffix(1);
    }
    const int hh = parse_fixed(rest, 0, 2);
    if (rest.size() < 5 || rest[2] != ':') {
        throw DomainError("timestamp '" + std::string(text) + "' has a malformed time");
    }
    const int mm = parse_fixed(rest, 3, 2);
    double ss = 0.0;
    if (rest.size() > 5) {
        if (rest[5] != ':') {
            throw DomainError("timestamp '" + std::string(text) + "' has a malformed time");
        }
        ss = parse_double(rest.substr(6), "collect_time");
    }
    if (hh > 23 || mm > 59 || ss < 0.0 || ss >= 61.0) {
        throw DomainError("timestamp '" + std::string(text) + "' has an out-of-range time");
    }
    return days + (hh * 3600.0 + mm * 60.0 + ss) / 86400.0;
}

LoadResult parse_records(std::string_view csv_text, TimeFormat format) {
    LoadResult result;
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start < csv_text.size()) {
            std::size_t nl = csv_text.find('\n', start);
            if (nl == std::string_view::npos) {
                nl = csv_text.size();
            }
            lines.push_back(csv_text.substr(start, nl - start));
            start = nl + 1;
        }
    }
    // Skip a UTF-8 BOM and leading blank lines before the header.
    std::size_t header_line = 0;
    while (header_line < lines.size() && trim(lines[header_line]).empty()) {
        ++header_line;
    }
    if (header_line == lines.size()) {
        throw SchemaError("no header row");
    }
    std::string_view header = lines[header_line];
    if (header.starts_with("\xEF\xBB\xBF")) {
        header.remove_prefix(3);
    }
    const auto names = split_line(header);
    std::map<std::string, std::size_t, std::less<>> index;
    for (std::size_t k = 0; k < names.size(); ++k) {
        index.emplace(std::string(names[k]), k);
    }
    std::vector<std::string> missing;
    for (const auto& col : required_columns()) {
        if (!index.contains(col)) {
            missing.push_back(col);
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing column(s):";
        for (const auto& m : missing) {
            msg += " " + m;
        }
        throw SchemaError(msg);
    }
    auto col = [&](const char* name) { return index.find(name)->second; };

    std::size_t row = 0;
    for (std::size_t li = header_line + 1; li < lines.size(); ++li) {
        if (trim(lines[li]).empty()) {
            continue;
        }
        ++row;
        const auto cells = split_line(lines[li]);
        try {
            if (cells.size() != names.size()) {
                throw DomainError("expected " + std::to_string(names.size()) + " cells, found " +
                                  std::to_string(cells.size()));
            }
            RawRecord r;
            r.location_id = parse_int(cells[col(kLocationColumn)], kLocationColumn);
            r.longitude_gcj = parse_double(cells[col("longitude_gcj")], "longitude_gcj");
            r.latitude_gcj = parse_double(cells[col("latitude_gcj")], "latitude_gcj");
            const auto tcell = cells[col("collect_time")];
            r.collect_time = format == TimeFormat::iso8601 ? parse_iso8601_days(tcell)
                                                           : parse_double(tcell, "collect_time");
            for (std::size_t k = 0; k < kEnvFeatures.size(); ++k) {
                r.env[k] = parse_double(cells[col(kEnvFeatures[k])], kEnvFeatures[k]);
            }
            r.detect_info = parse_double(cells[col("detect_info")], "detect_info");
            r.detect_conf = parse_double(cells[col("detect_conf")], "detect_conf");
            r.distress_type = static_cast<int>(parse_int(cells[col("distress_type")], "distress_type"));
            if (r.detect_info < 0.0) {
                throw DomainError("detect_info must be non-negative");
            }
            if (r.detect_conf < 0.0 || r.detect_conf > 1.0) {
                throw DomainError("detect_conf must lie in [0, 1]");
            }
            if (!valid_type(r.distress_type)) {
                throw DomainError("unknown distress_type " + std::to_string(r.distress_type));
            }
            result.records.push_back(r);
        } catch (const Error& e) {
            result.errors.push_back(RowError{row, e.what()});
        }
    }
    std::stable_sort(result.records.begin(), result.records.end(), [](const RawRecord& a, const RawRecord& b) {
        if (a.collect_time != b.collect_time) {
            return a.collect_time < b.collect_time;
        }
        return a.location_id < b.location_id;
    });
    return result;
}

LoadResult load_records(const std::filesystem::path& path, TimeFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SchemaError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_records(buf.str(), format);
}

std::string format_records(std::span<const RawRecord> records) {
    std::string out;
    const auto& cols = required_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out += cols[k];
        out += k + 1 < cols.size() ? ',' : '\n';
    }
    for (const RawRecord& r : records) {
        out += std::to_string(r.location_id);
        for (double v : {r.longitude_gcj, r.latitude_gcj, r.collect_time}) {
            out += ',';
            out += format_double(v);
        }
        for (double v : r.env) {
            out += ',';
            out += format_double(v);
        }
        out += ',';
        out += format_double(r.detect_info);
        out += ',';
        out += format_double(r.detect_conf);
        out += ',';
        out += std::to_string(r.distress_type);
        out += '\n';
    }
    return out;
}

void write_records(const std::filesystem::path& path, std::span<const RawRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw SchemaError("cannot write " + path.string());
    }
    out << format_records(records);
}

// ---------------------------------------------------------------- preprocessing

std::vector<std::string> numeric_feature_names() {
    std::vector<std::string> names;
    for (const char* e : kEnvFeatures) {
        names.emplace_back(e);
    }
    names.insert(names.end(), {"detect_info", "detect_conf", "longitude_gcj", "latitude_gcj"});
    return names;
}

namespace {

double numeric_value(const RawRecord& r, const std::string& name) {
    if (name == "detect_info") return r.detect_info;
    if (name == "detect_conf") return r.detect_conf;
    if (name == "longitude_gcj") return r.longitude_gcj;
    if (name == "latitude_gcj") return r.latitude_gcj;
    return r.env_value(name);
}

}  // namespace

FeatureLayout FeatureLayout::make(const FeatureSchema& schema) {
    FeatureLayout layout;
    for (const auto& m : schema.masked_env) {
        if (std::none_of(kEnvFeatures.begin(), kEnvFeatures.end(), [&](const char* e) { return m == e; })) {
            throw SchemaError("cannot mask unknown environmental feature '" + m + "'");
        }
    }
    for (const char* e : kEnvFeatures) {
        if (std::find(schema.masked_env.begin(), schema.masked_env.end(), e) != schema.masked_env.end()) {
            continue;
        }
        layout.env_slots.push_back(layout.names.size());
        layout.names.emplace_back(e);
    }
    layout.distress_slot = layout.names.size();
    layout.names.emplace_back("detect_info");
    if (schema.include_conf) {
        layout.conf_slot = layout.names.size();
        layout.names.emplace_back("detect_conf");
    }
    if (schema.include_type) {
        layout.type_slot = layout.names.size();
        for (int code : kDistressTypes) {
            layout.names.push_back("type_" + std::to_string(code));
        }
    }
    layout.lon_slot = layout.names.size();
    layout.names.emplace_back("longitude_gcj");
    layout.lat_slot = layout.names.size();
    layout.names.emplace_back("latitude_gcj");
    layout.time_slot = layout.names.size();
    layout.names.emplace_back("collect_time");
    return layout;
}

const FeatureStats& PreprocessStats::at(const std::string& name) const {
    auto it = features.find(name);
    if (it == features.end()) {
        throw SchemaError("no statistics for feature '" + name + "'");
    }
    return it->second;
}

double PreprocessStats::standardize(const std::string& name, double value) const {
    const FeatureStats& s = at(name);
    return s.degenerate() ? 0.0 : (value - s.mean) / s.std;
}

double PreprocessStats::rescale_time(double t) const {
    if (t_max == t_min) {
        return 0.0;
    }
    return std::clamp((t - t_min) / (t_max - t_min), 0.0, 1.0);
}

nlohmann::json PreprocessStats::to_json() const {
    nlohmann::json feats = nlohmann::json::object();
    for (const auto& [name, s] : features) {
        feats[name] = {{"mean", s.mean}, {"std", s.std}};
    }
    return {{"features", feats}, {"t_min", t_min}, {"t_max", t_max}};
}

PreprocessStats PreprocessStats::from_json(const nlohmann::json& j) {
    PreprocessStats s;
    for (const auto& [name, v] : j.at("features").items()) {
        s.features[name] = FeatureStats{v.at("mean").get<double>(), v.at("std").get<double>()};
    }
    s.t_min = j.at("t_min").get<double>();
    s.t_max = j.at("t_max").get<double>();
    return s;
}

PreprocessStats fit_standardizer(std::span<const RawRecord> fit_rows, std::span<const RawRecord> segment_rows) {
    if (fit_rows.empty()) {
        throw SchemaError("fit_standardizer: empty dataset");
    }
    PreprocessStats stats;
    const double n = static_cast<double>(fit_rows.size());
    for (const auto& name : numeric_feature_names()) {
        double total = 0.0;
        for (const auto& r : fit_rows) {
            total += numeric_value(r, name);
        }
        const double mean = total / n;
        double ss = 0.0;
        for (const auto& r : fit_rows) {
            const double d = numeric_value(r, name) - mean;
            ss += d * d;
        }
        stats.features[name] = FeatureStats{mean, std::sqrt(ss / n)};
    }
    auto span_rows = segment_rows.empty() ? fit_rows : segment_rows;
    auto [lo, hi] = std::minmax_element(span_rows.begin(), span_rows.end(), [](const RawRecord& a, const RawRecord& b) {
        return a.collect_time < b.collect_time;
    });
    stats.t_min = lo->collect_time;
    stats.t_max = hi->collect_time;
    return stats;
}

std::array<double, 5> one_hot_type(int distress_type) {
    std::array<double, 5> out{};
    for (std::size_t k = 0; k < kDistressTypes.size(); ++k) {
        if (kDistressTypes[k] == distress_type) {
            out[k] = 1.0;
            return out;
        }
    }
    throw DomainError("unknown distress_type " + std::to_string(distress_type));
}

ProcessedNode apply_preprocess(const RawRecord& record, const PreprocessStats& stats, const FeatureLayout& layout,
                               std::int64_t node_id) {
    ProcessedNode node;
    node.node_id = node_id;
    node.location_id = record.location_id;
    node.x_full.assign(layout.full_dim(), 0.0);
    for (std::size_t slot : layout.env_slots) {
        node.x_full[slot] = stats.standardize(layout.names[slot], record.env_value(layout.names[slot]));
    }
    node.x_full[layout.distress_slot] = stats.standardize("detect_info", record.detect_info);
    if (layout.conf_slot) {
        node.x_full[*layout.conf_slot] = stats.standardize("detect_conf", record.detect_conf);
    }
    const auto hot = one_hot_type(record.distress_type);
    if (layout.type_slot) {
        std::copy(hot.begin(), hot.end(), node.x_full.begin() + static_cast<long>(*layout.type_slot));
    }
    node.t_raw = record.collect_time;
    node.t_norm = stats.rescale_time(record.collect_time);
    node.lon = record.longitude_gcj;
    node.lat = record.latitude_gcj;
    node.x_full[layout.lon_slot] = stats.standardize("longitude_gcj", record.longitude_gcj);
    node.x_full[layout.lat_slot] = stats.standardize("latitude_gcj", record.latitude_gcj);
    node.x_full[layout.time_slot] = node.t_norm;
    node.x_st = {node.x_full[layout.lon_slot], node.x_full[layout.lat_slot], node.t_norm};
    node.y = record.detect_info;
    node.distress_type = record.distress_type;
    return node;
}

ProcessedNode query_node(std::int64_t node_id, std::int64_t location_id, double lon, double lat, double t_raw,
                         int distress_type, const PreprocessStats& stats, const FeatureLayout& layout) {
    ProcessedNode node;
    node.node_id = node_id;
    node.location_id = location_id;
    node.x_full.assign(layout.full_dim(), 0.0);
    node.t_raw = t_raw;
    node.t_norm = stats.rescale_time(t_raw);
    node.lon = lon;
    node.lat = lat;
    node.x_full[layout.lon_slot] = stats.standardize("longitude_gcj", lon);
    node.x_full[layout.lat_slot] = stats.standardize("latitude_gcj", lat);
    node.x_full[layout.time_slot] = node.t_norm;
    node.x_st = {node.x_full[layout.lon_slot], node.x_full[layout.lat_slot], node.t_norm};
    node.distress_type = distress_type;
    return node;
}

SplitSizes split_sizes(std::size_t n, const SplitFractions& f) {
    if (f.init < 0.0 || f.train < 0.0 || f.test < 0.0 || std::abs(f.init + f.train + f.test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
    if (n < 3) {
        throw ConfigError("split_segment: need at least 3 nodes, got " + std::to_string(n));
    }
    // The epsilon absorbs representation error such as 10 * 0.7 = 6.999...
    const auto part = [n](double frac) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9));
    };
    SplitSizes s;
    s.init = part(f.init);
    s.train = std::min(part(f.train), n - s.init);
    s.test = n - s.init - s.train;
    return s;
}

}  // namespace stgan::data
