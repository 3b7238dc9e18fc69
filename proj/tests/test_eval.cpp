#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "stgan/errors.hpp"
#include "stgan/eval.hpp"
#include "support/oracles.hpp"

using namespace stgan;
using namespace stgan::eval;

TEST_CASE("regression metrics on hand-computed values") {
    const std::vector<double> y = {1.0, 2.0, 4.0, 0.0};
    const std::vector<double> yh = {1.5, 2.0, 1.0, 1.0};
    const auto m = regression_metrics(y, yh);
    CHECK(m.n == 4);
    CHECK(m.mae == doctest::Approx(4.5 / 4.0));
    CHECK(m.mse == doctest::Approx(10.25 / 4.0));
    CHECK(m.rmse == doctest::Approx(std::sqrt(10.25 / 4.0)));
    CHECK_THROWS_AS(regression_metrics(std::vector<double>{}, std::vector<double>{}), MetricError);
    CHECK_THROWS_AS(regression_metrics(y, std::vector<double>{1.0}), MetricError);
}

TEST_CASE("level boundaries are closed on the left") {
    CHECK(classify_level(0.0) == Level::healthy);
    CHECK(classify_level(0.999) == Level::healthy);
    CHECK(classify_level(1.0) == Level::good);
    CHECK(classify_level(4.999) == Level::good);
    CHECK(classify_level(5.0) == Level::severe);
    CHECK(classify_level(9.999) == Level::severe);
    CHECK(classify_level(10.0) == Level::very_severe);
    CHECK(classify_level(1e6) == Level::very_severe);
    CHECK_THROWS_AS(classify_level(-0.1), DomainError);
    CHECK_THROWS_AS(classify_level(NAN), DomainError);
    CHECK(level_name(Level::very_severe) == "very_severe");
}

TEST_CASE("class affinity is zero inside the interval and falls off with distance") {
    CHECK(class_affinity(3.0, Level::good) == 0.0);
    CHECK(class_affinity(7.0, Level::good) == -2.0);
    CHECK(class_affinity(0.5, Level::good) == -0.5);
    CHECK(class_affinity(-2.0, Level::healthy) == 0.0);  // below zero counts as healthy
    CHECK(class_affinity(50.0, Level::very_severe) == 0.0);
    CHECK(class_affinity(8.0, Level::very_severe) == -2.0);
}

TEST_CASE("AUC agrees with the pairwise Mann-Whitney count") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> coarse(0, 6);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(40);
        std::vector<bool> pos(40);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = coarse(rng) * 0.5;  // many ties
            pos[i] = coin(rng);
        }
        if (std::count(pos.begin(), pos.end(), true) == 0 || std::count(pos.begin(), pos.end(), false) == 0) continue;
        std::vector<char> mask(pos.begin(), pos.end());
        const std::span<const bool> labels(reinterpret_cast<const bool*>(mask.data()), mask.size());
        const auto auc = binary_auc(s, labels);
        REQUIRE(auc.has_value());
        CHECK(*auc == doctest::Approx(oracle::pairwise_auc(s, pos)).epsilon(1e-12));
        // Invariant under strictly increasing transforms.
        std::vector<double> t(s.size());
        std::transform(s.begin(), s.end(), t.begin(), [](double x) { return std::exp(3.0 * x) - 7.0; });
        CHECK(*binary_auc(t, labels) == doctest::Approx(*auc).epsilon(1e-12));
    }
    const bool all[] = {true, true};
    const double two[] = {0.1, 0.2};
    CHECK_FALSE(binary_auc(two, all).has_value());
}

TEST_CASE("ROC curve starts at the origin, ends at (1,1) and is monotone") {
    const double s[] = {0.9, 0.8, 0.8, 0.3, 0.1};
    const bool p[] = {true, false, true, false, true};
    const auto roc = roc_curve(s, p);
    REQUIRE(roc.size() == 5);
    CHECK(roc.front().fpr == 0.0);
    CHECK(roc.front().tpr == 0.0);
    CHECK(roc.back().fpr == 1.0);
    CHECK(roc.back().tpr == 1.0);
    for (std::size_t k = 1; k < roc.size(); ++k) {
        CHECK(roc[k].fpr >= roc[k - 1].fpr);
        CHECK(roc[k].tpr >= roc[k - 1].tpr);
    }
    // Trapezoid area equals the rank statistic.
    double area = 0.0;
    for (std::size_t k = 1; k < roc.size(); ++k) area += (roc[k].fpr - roc[k - 1].fpr) * (roc[k].tpr + roc[k - 1].tpr) / 2;
    CHECK(area == doctest::Approx(*binary_auc(s, p)));
}

TEST_CASE("one-vs-rest AUC marks absent classes undefined") {
    const std::vector<Level> truth = {Level::healthy, Level::good, Level::good, Level::severe};
    const std::vector<double> yh = {0.2, 3.0, 2.0, 6.0};
    const auto aucs = roc_auc_ovr(truth, yh);
    CHECK(*aucs[0].auc == 1.0);
    CHECK(*aucs[1].auc == 1.0);
    CHECK(aucs[2].positives == 1);
    CHECK_FALSE(aucs[3].auc.has_value());
    const auto csv = roc_csv(truth, yh);
    CHECK(csv.rfind("class,fpr,tpr,threshold\n", 0) == 0);
    CHECK(csv.find("very_severe") == std::string::npos);
}

TEST_CASE("confusion counts") {
    const std::vector<double> y = {0.5, 3.0, 7.0, 12.0, 3.0};
    const std::vector<double> yh = {-1.0, 6.0, 7.5, 11.0, 2.0};
    const auto c = confusion_counts(y, yh);
    CHECK(c[0][0] == 1);
    CHECK(c[1][2] == 1);
    CHECK(c[1][1] == 1);
    CHECK(c[2][2] == 1);
    CHECK(c[3][3] == 1);
    std::size_t total = 0;
    for (const auto& row : c) total += std::accumulate(row.begin(), row.end(), std::size_t{0});
    CHECK(total == 5);
}

TEST_CASE("generalization split matches a stable sort oracle") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<data::ProcessedNode> nodes(30);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        nodes[i].node_id = static_cast<std::int64_t>(i + 1);
        nodes[i].lon = std::round(u(rng) * 5);  // ties on purpose
        nodes[i].lat = u(rng);
        nodes[i].t_raw = u(rng);
    }
    auto ids_sorted_by = [&](auto key) {
        std::vector<std::int64_t> ids;
        for (const auto& n : nodes) ids.push_back(n.node_id);
        std::sort(ids.begin(), ids.end(), [&](auto a, auto b) {
            const double ka = key(nodes[a - 1]), kb = key(nodes[b - 1]);
            return ka != kb ? ka < kb : a < b;
        });
        return ids;
    };
    const auto order = ids_sorted_by([](const data::ProcessedNode& n) { return n.lon; });
    const auto s = generalization_split(nodes, Axis::longitude, 10, 5);
    CHECK(s.train == std::vector<std::int64_t>(order.begin(), order.begin() + 10));
    CHECK(s.removed == std::vector<std::int64_t>(order.begin() + 10, order.begin() + 15));
    CHECK(s.test == std::vector<std::int64_t>(order.begin() + 15, order.end()));
    const auto t = generalization_split(nodes, Axis::time, 20, 0);
    CHECK(t.test.size() == 10);
    CHECK_THROWS_AS(generalization_split(nodes, Axis::latitude, 25, 5), SplitError);
    CHECK(parse_axis("latitude") == Axis::latitude);
    CHECK_THROWS_AS(parse_axis("altitude"), UsageError);
}

TEST_CASE("experiment report is internally consistent") {
    data::SyntheticConfig syn;
    syn.n_locations = 30;
    syn.total_records = 150;
    const auto records = data::generate_synthetic(syn).records;
    const auto prepared = prepare(records, {}, {});
    CHECK(prepared.init_ids.size() == 15);
    CHECK(prepared.train_ids.size() == 105);
    CHECK(prepared.test_ids.size() == 30);
    ExperimentConfig cfg;
    cfg.model.extractor_widths = {6, 5};
    cfg.model.head_hidden = 6;
    cfg.model.heads = 2;
    cfg.train.epochs = 5;
    const auto r = run_experiment(prepared, cfg);
    CHECK(r.report.test.n == 30);
    CHECK(r.report.test.rmse == doctest::Approx(std::sqrt(r.report.test.mse)).epsilon(1e-14));
    CHECK(r.report.predictions.size() == 30);
    std::vector<double> y, yh;
    for (const auto& p : r.report.predictions) {
        y.push_back(p.y);
        yh.push_back(p.y_hat);
    }
    CHECK(regression_metrics(y, yh).mae == r.report.test.mae);
    CHECK(r.report.train.mae == doctest::Approx(r.trained.final_train_mae).epsilon(1e-12));
    const auto j = r.report.to_json();
    CHECK(j.at("test").at("n") == 30);
}

TEST_CASE("masking study retrains once per environmental feature") {
    data::SyntheticConfig syn;
    syn.n_locations = 20;
    syn.total_records = 80;
    ExperimentConfig cfg;
    cfg.model.extractor_widths = {4, 3};
    cfg.model.head_hidden = 4;
    cfg.model.heads = 1;
    cfg.train.epochs = 2;
    const auto study = env_masking_study(data::generate_synthetic(syn).records, cfg);
    REQUIRE(study.rows.size() == 8);
    CHECK(study.rows[0].feature == "min_tem");
    for (const auto& row : study.rows) CHECK(row.delta == doctest::Approx(row.test_mae - study.base_test_mae));
}

TEST_CASE("generalization runs train only on the split's train block") {
    data::SyntheticConfig syn;
    syn.n_locations = 30;
    syn.total_records = 120;
    ExperimentConfig cfg;
    cfg.model.extractor_widths = {4, 3};
    cfg.model.head_hidden = 4;
    cfg.model.heads = 1;
    cfg.train.epochs = 2;
    const auto records = data::generate_synthetic(syn).records;
    const auto r = run_generalization(records, cfg, Axis::longitude, 80, 16);
    REQUIRE(r.report.split.has_value());
    CHECK(r.report.test.n == 24);
    const std::set<std::int64_t> test(r.report.split->test.begin(), r.report.split->test.end());
    const std::set<std::int64_t> removed(r.report.split->removed.begin(), r.report.split->removed.end());
    for (auto id : r.trained.touched_ids) {
        CHECK(test.count(id) == 0);
        CHECK(removed.count(id) == 0);
    }
}
