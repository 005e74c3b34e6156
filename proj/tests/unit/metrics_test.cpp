#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "contdt/errors.hpp"
#include "contdt/metrics/metrics.hpp"
#include "../support/fixtures.hpp"

using namespace contdt;
using namespace contdt::testing;

TEST_CASE("metrics on hand matrices") {
    for (const auto& c : hand_metric_cases()) {
        INFO(c.what);
        CHECK(std::abs(c.got - c.expected) <= 1e-9);
    }
}

TEST_CASE("shifting every return") {
    auto m = matrix_of({{3, -1, 4}, {1, 5, -9}, {2, 6, 5}});
    m.b_bar = {0.5, -2.0, 1.0};
    m.teacher = {4.0, 4.0, 4.0};
    auto shifted = m;
    const double c = 17.25;
    for (auto& row : shifted.a)
        for (auto& v : row) *v += c;
    for (auto& b : shifted.b_bar) *b += c;
    CHECK(bwt(shifted) == doctest::Approx(bwt(m)).epsilon(1e-12));
    CHECK(fwt(shifted) == doctest::Approx(fwt(m)).epsilon(1e-12));
    CHECK(per(shifted) == doctest::Approx(per(m) + c).epsilon(1e-12));
}

TEST_CASE("students beating their teachers give a negative gap") {
    auto m = matrix_of({{9, 0}, {8, 12}});
    m.teacher = {7.0, 10.0};
    CHECK(dg(m) < 0);
}

TEST_CASE("undefined metrics are refused") {
    const auto single = matrix_of({{1}});
    CHECK_THROWS_AS(bwt(single), MetricError);
    CHECK_THROWS_AS(fwt(single), MetricError);
    CHECK_THROWS_AS(dg(single), MetricError);

    PerformanceMatrix partial(2);
    partial.set_row(0, {1, 2});
    CHECK_FALSE(partial.complete());
    CHECK_THROWS_AS(per(partial), MetricError);
    CHECK_THROWS_AS(partial.set_row(1, {1}), MetricError);
    CHECK_THROWS_AS(PerformanceMatrix(0), MetricError);

    const auto s = summarize(matrix_of({{1, 2}, {3, 4}}));
    REQUIRE(s.per);
    CHECK(*s.per == 3.5);
    CHECK(*s.bwt == -2.0);
    CHECK_FALSE(s.fwt);
    CHECK_FALSE(s.dg);
}

TEST_CASE("metric records") {
    MetricSummary s;
    s.per = 1.5;
    s.bwt = 0.25;
    const auto j = nlohmann::json::parse(metrics_json("mhdt", 7, s));
    CHECK(j["method"] == "mhdt");
    CHECK(j["seed"] == 7);
    CHECK(j["PER"] == 1.5);
    CHECK(j["BWT"] == 0.25);
    CHECK(j["FWT"].is_null());
    CHECK(j["DG"].is_null());

    auto m = matrix_of({{1, 2}, {3, 4}});
    m.b_bar = {0.0, 0.5};
    const auto csv = matrix_csv(m);
    CHECK(csv.rfind("row,task0,task1\n", 0) == 0);
    CHECK(csv.find("b_bar") != std::string::npos);
}
