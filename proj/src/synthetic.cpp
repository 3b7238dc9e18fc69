// Synthetic distress records with planted spatiotemporal structure.
//
// Latent model per location p (distress instance):
//   severity(t) = level_p + rate_p * sum_{days since last reset} (0.25 + wet(p, day))
// where log base_p, log rate_p and the initial age are Gaussian-process draws
// over coordinates (squared-exponential kernel), wet is a smoothed, spatially
// shifted precipitation index, and maintenance campaigns (Poisson in time,
// uniform centers) reset every distress within a radius to 0.3 * base_p.
// Observations add Gaussian noise proportional to `noise`. Collection visits
// follow a heavy-tailed renewal process in an operational clock whose
// intensity varies through the year, so timestamps are irregular, sparse per
// location and asynchronous across locations.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "stgan/dataset.hpp"

namespace stgan::data {

namespace {

constexpr double kEarthRadiusM = 6371000.0;

double planar_distance_m(double lon_a, double lat_a, double lon_b, double lat_b) {
    const double to_rad = std::numbers::pi / 180.0;
    const double mean_lat = 0.5 * (lat_a + lat_b) * to_rad;
    const double dphi = (lat_b - lat_a) * to_rad;
    const double dlambda = (lon_b - lon_a) * to_rad * std::cos(mean_lat);
    return kEarthRadiusM * std::sqrt(dphi * dphi + dlambda * dlambda);
}

/// Zero-mean GP draw at the given points with a squared-exponential kernel.
std::vector<double> gp_sample(const std::vector<double>& lon, const std::vector<double>& lat, double length_m,
                              double sd, std::mt19937_64& rng) {
    const auto n = static_cast<Eigen::Index>(lon.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double d = planar_distance_m(lon[i], lat[i], lon[j], lat[j]) / length_m;
            const double v = sd * sd * std::exp(-0.5 * d * d);
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += 1e-6 * sd * sd;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i) = normal(rng);
    }
    const Eigen::VectorXd draw = llt.matrixL() * z;
    return std::vector<double>(draw.data(), draw.data() + n);
}

/// Daily AR(1) series with stationary unit variance and correlation time tau.
std::vector<double> ar1_series(int days, double tau_days, std::mt19937_64& rng) {
    const double phi = std::exp(-1.0 / std::max(tau_days, 1e-9));
    const double innovation = std::sqrt(1.0 - phi * phi);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(days));
    double x = normal(rng);
    for (auto& v : out) {
        v = x;
        x = phi * x + innovation * normal(rng);
    }
    return out;
}

/// Inverse CDF of the collection intensity 1 + a*sin(2*pi*k*s + phase) on [0, 1].
class IntensityClock {
public:
    IntensityClock(double amplitude, double cycles, double phase) {
        constexpr int kGrid = 4096;
        grid_.resize(kGrid + 1);
        cdf_.resize(kGrid + 1);
        double acc = 0.0;
        for (int i = 0; i <= kGrid; ++i) {
            const double s = static_cast<double>(i) / kGrid;
            grid_[static_cast<std::size_t>(i)] = s;
            if (i > 0) {
                const double mid = (static_cast<double>(i) - 0.5) / kGrid;
                acc += (1.0 + amplitude * std::sin(2.0 * std::numbers::pi * cycles * mid + phase)) / kGrid;
            }
            cdf_[static_cast<std::size_t>(i)] = acc;
        }
        for (double& c : cdf_) {
            c /= acc;
        }
    }

    double wall_time(double u) const {
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.begin()) return 0.0;
        if (it == cdf_.end()) return 1.0;
        const auto hi = static_cast<std::size_t>(it - cdf_.begin());
        const std::size_t lo = hi - 1;
        const double w = (u - cdf_[lo]) / (cdf_[hi] - cdf_[lo]);
        return grid_[lo] + w * (grid_[hi] - grid_[lo]);
    }

private:
    std::vector<double> grid_;
    std::vector<double> cdf_;
};

struct EnvSpec {
    double base;
    double seasonal_amp;
    double seasonal_phase;
    double weather_sd;
    double spatial_sd;
    double noise_sd;
    double lo;
    double hi;
};

// kEnvFeatures order: min_tem, max_tem, humidity, wind, pressure, visibility,
// precipitation, cloud. Precipitation is generated separately.
constexpr std::array<EnvSpec, 8> kEnvSpecs = {{
    {16.0, 10.0, -1.6, 2.0, 0.8, 0.5, -10.0, 40.0},
    {24.0, 9.0, -1.6, 2.5, 0.8, 0.5, -5.0, 45.0},
    {72.0, 8.0, -1.2, 8.0, 3.0, 2.0, 10.0, 100.0},
    {3.2, 0.6, 0.4, 1.0, 0.3, 0.3, 0.0, 20.0},
    {1013.0, 8.0, 1.6, 4.0, 0.5, 0.5, 950.0, 1060.0},
    {14.0, 3.0, 0.3, 4.0, 1.0, 0.8, 0.5, 40.0},
    {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {55.0, 10.0, -1.0, 18.0, 5.0, 3.0, 0.0, 100.0},
}};
constexpr std::size_t kPrecipIndex = 6;

double type_severity_scale(int code) {
    switch (code) {
        case 13: return 1.3;
        case 14: return 0.7;
        case 15: return 1.6;
        case 16: return 0.8;
        default: return 1.0;
    }
}

}  // namespace

nlohmann::json SyntheticConfig::to_json() const {
    return {{"n_locations", n_locations},
            {"total_records", total_records},
            {"mean_visits", mean_visits},
            {"lon_origin", lon_origin},
            {"lat_origin", lat_origin},
            {"extent_deg", extent_deg},
            {"time_span_days", time_span_days},
            {"start_day", start_day},
            {"space_length_m", space_length_m},
            {"time_length_days", time_length_days},
            {"noise", noise},
            {"repair_campaigns_per_year", repair_campaigns_per_year},
            {"repair_radius_m", repair_radius_m},
            {"seed", seed}};
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    c.n_locations = j.value("n_locations", c.n_locations);
    c.total_records = j.value("total_records", c.total_records);
    c.mean_visits = j.value("mean_visits", c.mean_visits);
    c.lon_origin = j.value("lon_origin", c.lon_origin);
    c.lat_origin = j.value("lat_origin", c.lat_origin);
    c.extent_deg = j.value("extent_deg", c.extent_deg);
    c.time_span_days = j.value("time_span_days", c.time_span_days);
    c.start_day = j.value("start_day", c.start_day);
    c.space_length_m = j.value("space_length_m", c.space_length_m);
    c.time_length_days = j.value("time_length_days", c.time_length_days);
    c.noise = j.value("noise", c.noise);
    c.repair_campaigns_per_year = j.value("repair_campaigns_per_year", c.repair_campaigns_per_year);
    c.repair_radius_m = j.value("repair_radius_m", c.repair_radius_m);
    c.seed = j.value("seed", c.seed);
    return c;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_locations <= 0) {
        throw ConfigError("synthetic: n_locations must be positive");
    }
    if (cfg.extent_deg <= 0.0 || cfg.time_span_days < 1.0 || cfg.space_length_m <= 0.0 ||
        cfg.time_length_days <= 0.0 || cfg.noise < 0.0 || cfg.mean_visits <= 0.0 || cfg.total_records < 0 ||
        cfg.repair_campaigns_per_year < 0.0 || cfg.repair_radius_m < 0.0) {
        throw ConfigError("synthetic: extents, length scales and visit counts must be positive");
    }
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const auto n_loc = static_cast<std::size_t>(cfg.n_locations);
    const int days = static_cast<int>(std::ceil(cfg.time_span_days)) + 1;

    // Locations and their static attributes.
    std::vector<double> lon(n_loc), lat(n_loc);
    for (std::size_t p = 0; p < n_loc; ++p) {
        lon[p] = cfg.lon_origin + cfg.extent_deg * unif(rng);
        lat[p] = cfg.lat_origin + cfg.extent_deg * unif(rng);
    }
    std::vector<int> type(n_loc);
    std::discrete_distribution<int> type_pick({0.40, 0.15, 0.20, 0.15, 0.10});
    for (auto& t : type) {
        t = kDistressTypes[static_cast<std::size_t>(type_pick(rng))];
    }
    const auto base_field = gp_sample(lon, lat, cfg.space_length_m, 0.5, rng);
    const auto rate_field = gp_sample(lon, lat, cfg.space_length_m, 0.7, rng);
    const auto wet_shift = gp_sample(lon, lat, cfg.space_length_m, 0.5, rng);
    const auto age_field = gp_sample(lon, lat, cfg.space_length_m, 1.0, rng);

    // Environmental fields: seasonal cycle + shared weather + spatial offset.
    std::array<std::vector<double>, 8> weather;
    std::array<std::vector<double>, 8> spatial;
    for (std::size_t k = 0; k < kEnvFeatures.size(); ++k) {
        weather[k] = ar1_series(days, cfg.time_length_days / 3.0, rng);
        spatial[k] = gp_sample(lon, lat, cfg.space_length_m, 1.0, rng);
    }
    const auto rain_regime = ar1_series(days, cfg.time_length_days, rng);

    // Daily wetness per location drives deterioration and is what the
    // precipitation column reports (plus gauge noise).
    auto wetness = [&](std::size_t p, int day) {
        const double regime = rain_regime[static_cast<std::size_t>(day)] + 0.8 * wet_shift[p];
        return std::max(0.0, 1.2 * regime + 0.4);
    };

    // Initial ages and maintenance campaigns.
    SyntheticTruth truth;
    truth.repair_times.resize(n_loc);
    for (std::size_t p = 0; p < n_loc; ++p) {
        truth.location_ids.push_back(static_cast<std::int64_t>(p + 1));
        truth.initial_age_days.push_back(std::clamp(150.0 + 90.0 * age_field[p], 5.0, 400.0));
    }
    if (cfg.repair_campaigns_per_year > 0.0) {
        std::exponential_distribution<double> campaign_gap(cfg.repair_campaigns_per_year / 365.0);
        for (double t = campaign_gap(rng); t < cfg.time_span_days; t += campaign_gap(rng)) {
            const double c_lon = cfg.lon_origin + cfg.extent_deg * unif(rng);
            const double c_lat = cfg.lat_origin + cfg.extent_deg * unif(rng);
            for (std::size_t p = 0; p < n_loc; ++p) {
                if (planar_distance_m(lon[p], lat[p], c_lon, c_lat) <= cfg.repair_radius_m) {
                    truth.repair_times[p].push_back(cfg.start_day + t);
                }
            }
        }
    }
    for (const char* e : kEnvFeatures) {
        if (std::string(e) != truth.driver_feature) {
            truth.noise_features.emplace_back(e);
        }
    }

    // Visit counts: at least one per location, remainder by heavy-tailed weights.
    const std::size_t total = cfg.total_records > 0
                                  ? static_cast<std::size_t>(cfg.total_records)
                                  : static_cast<std::size_t>(std::llround(cfg.mean_visits * cfg.n_locations));
    std::vector<std::size_t> visits(n_loc, total >= n_loc ? 1 : 0);
    {
        std::lognormal_distribution<double> weight_dist(0.0, 1.1);
        std::vector<double> w(n_loc);
        for (auto& x : w) {
            x = weight_dist(rng);
        }
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        const std::size_t assigned = total >= n_loc ? n_loc : 0;
        for (std::size_t k = assigned; k < total; ++k) {
            ++visits[pick(rng)];
        }
    }

    // Visit times: heavy-tailed renewal gaps in an operational clock.
    const IntensityClock clock(0.75, 3.0, 0.5 + 2.0 * unif(rng));
    std::lognormal_distribution<double> gap_dist(0.0, 1.2);
    std::normal_distribution<double> noise_dist(0.0, 1.0);

    std::vector<RawRecord> records;
    records.reserve(total);
    for (std::size_t p = 0; p < n_loc; ++p) {
        if (visits[p] == 0) {
            continue;
        }
        std::vector<double> gaps(visits[p] + 1);
        for (auto& g : gaps) {
            g = gap_dist(rng);
        }
        const double gap_total = std::accumulate(gaps.begin(), gaps.end(), 0.0);
        const double rate = 0.02 * type_severity_scale(type[p]) * std::exp(rate_field[p]);
        const double base = 0.35 * type_severity_scale(type[p]) * std::exp(base_field[p]);
        double cum = 0.0;
        for (std::size_t v = 0; v < visits[p]; ++v) {
            cum += gaps[v];
            const double s = clock.wall_time(cum / gap_total);
            const int day = std::clamp(static_cast<int>(std::floor(s * (days - 1))), 0, days - 1);
            const double t = cfg.start_day + day + (10.0 + 4.0 * unif(rng)) / 24.0;

            // Severity accumulated since the latest reset before t. Days
            // before the window count at the mean daily increment.
            double since = cfg.start_day - truth.initial_age_days[p];
            for (double r : truth.repair_times[p]) {
                if (r <= t) {
                    since = r;
                }
            }
            const bool repaired = since >= cfg.start_day;
            double growth = repaired ? 0.0 : 0.95 * (cfg.start_day - since);
            const int first_day = repaired ? static_cast<int>(std::floor(since - cfg.start_day)) : 0;
            for (int d = first_day; d < day; ++d) {
                growth += 0.25 + wetness(p, d);
            }
            const double latent = (repaired ? 0.3 * base : base) + rate * growth;

            RawRecord r;
            r.location_id = static_cast<std::int64_t>(p + 1);
            r.longitude_gcj = lon[p];
            r.latitude_gcj = lat[p];
            r.collect_time = t;
            const double season = 2.0 * std::numbers::pi * (day % 365) / 365.0;
            for (std::size_t k = 0; k < kEnvFeatures.size(); ++k) {
                const EnvSpec& spec = kEnvSpecs[k];
                double value = 0.0;
                if (k == kPrecipIndex) {
                    value = std::max(0.0, 4.0 * wetness(p, day) + 0.5 * noise_dist(rng));
                } else {
                    value = spec.base + spec.seasonal_amp * std::sin(season + spec.seasonal_phase) +
                            spec.weather_sd * weather[k][static_cast<std::size_t>(day)] +
                            spec.spatial_sd * spatial[k][p] + spec.noise_sd * noise_dist(rng);
                }
                r.env[k] = std::clamp(value, spec.lo, k == kPrecipIndex ? 500.0 : spec.hi);
            }
            // max_tem >= min_tem
            r.env[1] = std::max(r.env[1], r.env[0]);
            // Low-confidence detections are noisier.
            r.detect_conf = 0.55 + 0.4 * unif(rng);
            const double noise_sd = cfg.noise * (1.0 + 0.2 * latent) * (1.6 - r.detect_conf);
            r.detect_info = std::max(0.0, latent + noise_sd * noise_dist(rng));
            r.distress_type = type[p];
            records.push_back(r);
        }
    }
    std::stable_sort(records.begin(), records.end(), [](const RawRecord& a, const RawRecord& b) {
        if (a.collect_time != b.collect_time) {
            return a.collect_time < b.collect_time;
        }
        return a.location_id < b.location_id;
    });
    return SyntheticDataset{std::move(records), std::move(truth)};
}

}  // namespace stgan::data
