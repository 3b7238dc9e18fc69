#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "stgan/dataset.hpp"
#include "stgan/errors.hpp"

using namespace stgan;
using namespace stgan::data;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(STGAN_TEST_DATA) / "fixture20.csv";

const char* kHeader =
    "location_id,longitude_gcj,latitude_gcj,collect_time,min_tem,max_tem,humidity,wind,pressure,visibility,"
    "precipitation,cloud,detect_info,detect_conf,distress_type\n";

}  // namespace

TEST_CASE("fixture loads every row sorted by time") {
    const auto r = load_records(kFixture);
    CHECK(r.records.size() == 20);
    CHECK(r.skipped() == 0);
    CHECK(std::is_sorted(r.records.begin(), r.records.end(),
                         [](const RawRecord& a, const RawRecord& b) { return a.collect_time < b.collect_time; }));
    const RawRecord& first = r.records.front();
    CHECK(first.location_id == 1);
    CHECK(first.longitude_gcj == 121.4012);
    CHECK(first.collect_time == 18721.670);
    CHECK(first.env_value("humidity") == 89.0);
    CHECK(first.detect_info == 12.21);
    CHECK(first.distress_type == 11);
}

TEST_CASE("missing columns are a schema error naming the column") {
    std::string header = kHeader;
    header.replace(header.find("wind,"), 5, "");
    try {
        parse_records(header + "1,121.4,31.1,18000,1,2,3,4,5,6,7,8,9,0.5\n");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("wind") != std::string::npos);
    }
}

TEST_CASE("bad cells skip their row and are reported with the row number") {
    const std::string csv = std::string(kHeader) +
                            "1,121.4,31.15,18000.5,10,20,50,3,1010,10,1.0,30,2.5,0.8,11\n"
                            "2,121.4,31.15,abc,10,20,50,3,1010,10,1.0,30,2.5,0.8,11\n"
                            "3,121.4,31.15,18001,10,20,50,3,1010,10,1.0,30,-1,0.8,11\n"
                            "4,121.4,31.15,18002,10,20,50,3,1010,10,1.0,30,2.5,0.8,12\n"
                            "5,121.4,31.15,18003,10,20,50,3,1010,10,1.0,30,2.5,1.5,11\n"
                            "6,121.4,31.15,18004,10,20,50\n";
    const auto r = parse_records(csv);
    CHECK(r.records.size() == 1);
    REQUIRE(r.errors.size() == 5);
    CHECK(r.errors[0].row == 2);
    CHECK(r.errors[1].row == 3);
    CHECK(r.errors[2].message.find("distress_type") != std::string::npos);
    CHECK(r.errors[4].row == 6);
}

TEST_CASE("iso8601 timestamps convert to fractional days") {
    CHECK(parse_iso8601_days("1970-01-02") == 1.0);
    CHECK(parse_iso8601_days("2021-04-01") == 18718.0);
    CHECK(parse_iso8601_days("2021-04-01T12:00") == 18718.5);
    CHECK(parse_iso8601_days("2021-04-01T06:00:00Z") == 18718.25);
    CHECK_THROWS_AS(parse_iso8601_days("2021-02-30"), DomainError);
    CHECK_THROWS_AS(parse_iso8601_days("April 1"), DomainError);
    CHECK_THROWS_AS(parse_iso8601_days("2021-04-01T25:00"), DomainError);

    const std::string csv = std::string(kHeader) + "1,121.4,31.15,2021-04-01T18:00,10,20,50,3,1010,10,1,30,2.5,0.8,11\n";
    const auto r = parse_records(csv, TimeFormat::iso8601);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].collect_time == 18718.75);
}

TEST_CASE("written records round-trip losslessly") {
    const auto original = load_records(kFixture).records;
    const auto back = parse_records(format_records(original));
    CHECK(back.errors.empty());
    CHECK(back.records == original);
}

TEST_CASE("standardization statistics are population moments of the fit rows") {
    const auto rows = load_records(kFixture).records;
    const auto stats = fit_standardizer(rows, rows);
    double mean = 0.0;
    for (const auto& r : rows) mean += r.detect_info;
    mean /= 20.0;
    double var = 0.0;
    for (const auto& r : rows) var += (r.detect_info - mean) * (r.detect_info - mean);
    var /= 20.0;
    CHECK(stats.at("detect_info").mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(stats.at("detect_info").std == doctest::Approx(std::sqrt(var)).epsilon(1e-14));
    CHECK(stats.t_min == rows.front().collect_time);
    CHECK(stats.t_max == rows.back().collect_time);
    CHECK_THROWS_AS(fit_standardizer({}, {}), SchemaError);
}

TEST_CASE("standardized training features have zero mean and unit variance") {
    const auto rows = load_records(kFixture).records;
    const auto stats = fit_standardizer(rows, rows);
    const auto layout = FeatureLayout::make({});
    std::vector<ProcessedNode> nodes;
    for (std::size_t i = 0; i < rows.size(); ++i) nodes.push_back(apply_preprocess(rows[i], stats, layout, i + 1));
    std::vector<std::size_t> slots = layout.env_slots;
    slots.insert(slots.end(), {layout.distress_slot, *layout.conf_slot, layout.lon_slot, layout.lat_slot});
    for (std::size_t s : slots) {
        double m = 0.0, v = 0.0;
        for (const auto& n : nodes) m += n.x_full[s];
        m /= 20.0;
        for (const auto& n : nodes) v += (n.x_full[s] - m) * (n.x_full[s] - m);
        v /= 20.0;
        CHECK(std::abs(m) < 1e-9);
        CHECK(std::abs(v - 1.0) < 1e-6);
    }
    CHECK(nodes.front().t_norm == 0.0);
    CHECK(nodes.back().t_norm == 1.0);
}

TEST_CASE("constant columns standardize to zero") {
    std::vector<RawRecord> rows(4);
    for (std::size_t i = 0; i < 4; ++i) {
        rows[i].collect_time = 18000.0 + i;
        rows[i].detect_info = static_cast<double>(i);
        rows[i].env.fill(3.0);
    }
    const auto stats = fit_standardizer(rows, rows);
    CHECK(stats.at("wind").degenerate());
    CHECK(stats.standardize("wind", 3.0) == 0.0);
    CHECK(stats.standardize("wind", 99.0) == 0.0);
}

TEST_CASE("layout places the spatial and temporal slots last and honours masking") {
    const auto full = FeatureLayout::make({});
    CHECK(full.full_dim() == 18);
    CHECK(full.names[full.lon_slot] == "longitude_gcj");
    CHECK(full.time_slot == 17);
    FeatureSchema schema;
    schema.masked_env = {"wind", "cloud"};
    schema.include_conf = false;
    const auto masked = FeatureLayout::make(schema);
    CHECK(masked.full_dim() == 15);
    CHECK(std::find(masked.names.begin(), masked.names.end(), "wind") == masked.names.end());
    CHECK_FALSE(masked.conf_slot.has_value());
    schema.masked_env = {"snow"};
    CHECK_THROWS_AS(FeatureLayout::make(schema), SchemaError);
}

TEST_CASE("type one-hot and query nodes") {
    CHECK(one_hot_type(14) == std::array<double, 5>{0, 0, 1, 0, 0});
    CHECK_THROWS_AS(one_hot_type(12), DomainError);
    const auto rows = load_records(kFixture).records;
    const auto stats = fit_standardizer(rows, rows);
    const auto layout = FeatureLayout::make({});
    const auto observed = apply_preprocess(rows[5], stats, layout, 6);
    const auto query = query_node(6, rows[5].location_id, rows[5].longitude_gcj, rows[5].latitude_gcj,
                                  rows[5].collect_time, rows[5].distress_type, stats, layout);
    CHECK(query.x_st == observed.x_st);
    for (std::size_t s = 0; s < layout.full_dim(); ++s) {
        const bool st = s == layout.lon_slot || s == layout.lat_slot || s == layout.time_slot;
        CHECK(query.x_full[s] == (st ? observed.x_full[s] : 0.0));
    }
}

TEST_CASE("split sizes follow floor of the fractions") {
    const auto s = split_sizes(2000, {});
    CHECK(s.init == 200);
    CHECK(s.train == 1400);
    CHECK(s.test == 400);
    const auto t = split_sizes(10, {});
    CHECK(t.init == 1);
    CHECK(t.train == 7);
    CHECK(t.test == 2);
    CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.5}), ConfigError);
    CHECK_THROWS_AS(split_sizes(2, {}), ConfigError);
    std::vector<int> items(20);
    std::iota(items.begin(), items.end(), 0);
    const auto parts = split_segment<int>(items, {});
    CHECK(parts.init == std::vector<int>{0, 1});
    CHECK(parts.test.front() == 16);
}

TEST_CASE("synthetic generator is deterministic and follows its configuration") {
    SyntheticConfig cfg;
    cfg.n_locations = 60;
    cfg.total_records = 400;
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    CHECK(a.records == b.records);
    CHECK(a.records.size() == 400);
    cfg.seed = 8;
    CHECK_FALSE(generate_synthetic(cfg).records == a.records);
    for (const auto& r : a.records) {
        CHECK(r.detect_info >= 0.0);
        CHECK(r.detect_conf >= 0.0);
        CHECK(r.detect_conf <= 1.0);
        CHECK(r.collect_time >= cfg.start_day);
        CHECK(r.collect_time <= cfg.start_day + cfg.time_span_days);
    }
    CHECK(parse_records(format_records(a.records)).records == a.records);
    cfg.n_locations = 0;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}

TEST_CASE("synthetic series are short, irregular and asynchronous") {
    const auto ds = generate_synthetic({});
    std::map<std::int64_t, std::vector<double>> series;
    for (const auto& r : ds.records) series[r.location_id].push_back(r.collect_time);
    std::vector<std::size_t> lengths;
    for (const auto& [id, ts] : series) lengths.push_back(ts.size());
    std::nth_element(lengths.begin(), lengths.begin() + lengths.size() / 2, lengths.end());
    CHECK(lengths[lengths.size() / 2] < 10);
    // Two locations are asynchronous when their visit-day sets differ.
    std::set<std::vector<long>> patterns;
    for (const auto& [id, ts] : series) {
        std::vector<long> days;
        for (double t : ts) days.push_back(static_cast<long>(std::floor(t)));
        patterns.insert(days);
    }
    CHECK(patterns.size() > 1);
}
