#include <catch2/catch_amalgamated.hpp>

#include "iifrl/metrics.hpp"

using namespace iifrl;

namespace {

RunLog make_log(const std::vector<double>& returns, double wall_per_round = 10.0) {
    RunLog log;
    for (std::size_t i = 0; i < returns.size(); ++i) {
        RunLogRow row;
        row.round = static_cast<int>(i) + 1;
        row.test_return = returns[i];
        row.wall_ms_optimize = wall_per_round;
        log.rows.push_back(row);
    }
    return log;
}

}  // namespace

TEST_CASE("first_round_reaching") {
    RunLog log = make_log({0.1, 0.5, 0.9});
    REQUIRE(first_round_reaching(log, 0.5) == 2);
    REQUIRE(first_round_reaching(log, 0.95) == std::nullopt);
    REQUIRE(first_round_reaching(log, -std::numeric_limits<double>::infinity()) == 1);
}

TEST_CASE("first_round_reaching is monotone in the level") {
    RunLog log = make_log({0.3, 0.1, 0.6, 0.4, 0.9});
    auto as_int = [&](double v) {
        auto r = first_round_reaching(log, v);
        return r ? *r : std::numeric_limits<int>::max();
    };
    double prev = -1e9;
    int prev_round = 0;
    for (double v : {-1.0, 0.1, 0.3, 0.5, 0.6, 0.8, 0.9, 1.5}) {
        REQUIRE(v > prev);
        REQUIRE(as_int(v) >= prev_round);
        prev = v;
        prev_round = as_int(v);
    }
}

TEST_CASE("se_metrics pair A: identical logs give zero") {
    RunLog log = make_log({0.1, 0.4, 0.8});
    SeMetrics m = se_metrics(log, log);
    REQUIRE(m.se_ave == 0.0);
    REQUIRE(m.se_peak == 0.0);
    REQUIRE(rt_peak(log, log) == 0.0);
}

TEST_CASE("se_metrics pair B: milestone-by-milestone reduction") {
    RunLog std_log = make_log({0.1, 0.5, 0.9}, 10.0);
    RunLog iif_log = make_log({0.5, 0.9, 0.9}, 12.0);
    SeMetrics m = se_metrics(std_log, iif_log);
    // levels 0.1@1, 0.5@2, 0.9@3; iif reaches them at rounds 1, 1, 2
    const double expected_ave = (0.0 + 50.0 + (1.0 - 2.0 / 3.0) * 100.0) / 3.0;
    REQUIRE(m.se_ave == Catch::Approx(expected_ave).margin(1e-12));
    REQUIRE(m.se_peak == Catch::Approx((1.0 - 2.0 / 3.0) * 100.0).margin(1e-12));
    // cum std at round 3 = 30; cum iif at round 2 = 24
    REQUIRE(rt_peak(std_log, iif_log) == Catch::Approx(20.0).margin(1e-12));
}

TEST_CASE("se_metrics pair C: unreached levels are penalized, not dropped") {
    RunLog std_log = make_log({0.2, 0.4, 0.6, 0.8}, 20.0);
    RunLog flat = make_log({0.3, 0.3, 0.3, 0.3}, 10.0);
    SeMetrics m = se_metrics(std_log, flat);
    // m_flat = 1, 5, 5, 5 against m_std = 1, 2, 3, 4
    const double expected_ave =
        (0.0 + (1.0 - 5.0 / 2.0) * 100.0 + (1.0 - 5.0 / 3.0) * 100.0 +
         (1.0 - 5.0 / 4.0) * 100.0) /
        4.0;
    REQUIRE(m.se_ave == Catch::Approx(expected_ave).margin(1e-12));
    REQUIRE(m.se_peak == Catch::Approx(-25.0).margin(1e-12));
    // peak never reached: cumulative time over all 4 flat rounds (40) vs std (80)
    REQUIRE(rt_peak(std_log, flat) == Catch::Approx(50.0).margin(1e-12));
}

TEST_CASE("se_metrics pair D: plateaus yield one milestone each") {
    RunLog std_log = make_log({0.5, 0.5, 0.7});
    RunLog iif_log = make_log({0.7, 0.8, 0.9});
    SeMetrics m = se_metrics(std_log, iif_log);
    // levels 0.5@1 and 0.7@3; iif reaches both at round 1
    REQUIRE(m.se_ave == Catch::Approx((0.0 + (1.0 - 1.0 / 3.0) * 100.0) / 2.0).margin(1e-12));
    REQUIRE(m.se_peak == Catch::Approx((1.0 - 1.0 / 3.0) * 100.0).margin(1e-12));
}

TEST_CASE("se_metrics pair E: late-peaking comparison goes negative") {
    RunLog std_log = make_log({0.9, 0.8, 0.7});
    RunLog iif_log = make_log({0.1, 0.9, 0.9});
    SeMetrics m = se_metrics(std_log, iif_log);
    // single level 0.9@1, reached by iif at round 2
    REQUIRE(m.se_ave == Catch::Approx(-100.0).margin(1e-12));
    REQUIRE(m.se_peak == Catch::Approx(-100.0).margin(1e-12));
}

TEST_CASE("se metrics are invariant to affine return rescaling") {
    RunLog std_log = make_log({0.1, 0.3, 0.2, 0.7, 0.9});
    RunLog iif_log = make_log({0.2, 0.5, 0.9, 0.9, 0.9});
    SeMetrics base = se_metrics(std_log, iif_log);
    auto rescale = [](RunLog log) {
        for (auto& row : log.rows) row.test_return = 3.0 * row.test_return - 7.0;
        return log;
    };
    SeMetrics scaled = se_metrics(rescale(std_log), rescale(iif_log));
    REQUIRE(scaled.se_ave == Catch::Approx(base.se_ave).margin(1e-12));
    REQUIRE(scaled.se_peak == Catch::Approx(base.se_peak).margin(1e-12));
}

TEST_CASE("rt_peak: half the cumulative time gives 50%") {
    RunLog std_log = make_log({0.5, 1.0}, 10.0);
    RunLog iif_log = make_log({0.5, 1.0}, 5.0);
    REQUIRE(rt_peak(std_log, iif_log) == Catch::Approx(50.0).margin(1e-12));
}

TEST_CASE("rt_peak never exceeds 100%") {
    RunLog std_log = make_log({0.5, 1.0}, 10.0);
    RunLog fast = make_log({1.0, 1.0}, 1e-9);
    REQUIRE(rt_peak(std_log, fast) <= 100.0);
}

TEST_CASE("seed_stats: equal values collapse to zero spread") {
    SeedStats s = seed_stats({2.0, 2.0, 2.0});
    REQUIRE(s.mean == 2.0);
    REQUIRE(s.stddev == 0.0);
    REQUIRE(s.ci_half_width == 0.0);
}

TEST_CASE("seed_stats: n=5 uses the 2.776 multiplier") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
    SeedStats s = seed_stats(v);
    REQUIRE(s.mean == 3.0);
    const double std5 = std::sqrt(10.0 / 4.0);
    REQUIRE(s.stddev == Catch::Approx(std5).margin(1e-12));
    REQUIRE(s.ci_half_width ==
            Catch::Approx(2.7764451052 * std5 / std::sqrt(5.0)).margin(1e-9));
}

TEST_CASE("seed_stats: two values use the df=1 quantile") {
    SeedStats s = seed_stats({1.0, 3.0});
    const double std2 = std::sqrt(2.0);
    REQUIRE(s.stddev == Catch::Approx(std2).margin(1e-12));
    REQUIRE(s.ci_half_width ==
            Catch::Approx(12.7062047364 * std2 / std::sqrt(2.0)).margin(1e-6));
}

TEST_CASE("seed_stats rejects fewer than two values") {
    REQUIRE_THROWS_AS(seed_stats({1.0}), TooFewSeedsError);
}
