#pragma once

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "iifrl/common.hpp"

namespace iifrl {

struct RunLogRow {
    int round = 0;
    double test_return = 0.0;
    int n_filtered = 0;
    double wall_ms_collect = 0.0;
    double wall_ms_influence = 0.0;
    double wall_ms_optimize = 0.0;

    double wall_ms_total() const { return wall_ms_collect + wall_ms_influence + wall_ms_optimize; }
};

struct RunLog {
    std::vector<RunLogRow> rows;
    std::string label;
    int seed = 0;
};

// earliest round with test_return >= v
inline std::optional<int> first_round_reaching(const RunLog& log, double v) {
    for (const auto& row : log.rows)
        if (row.test_return >= v) return row.round;
    return std::nullopt;
}

struct SeMetrics {
    double se_ave = 0.0;   // percent
    double se_peak = 0.0;  // percent
};

// Levels are the strictly increasing running-max milestones of the standard
// log. Levels the other log never reaches are penalized with
// m = total_rounds + 1 rather than dropped.
inline SeMetrics se_metrics(const RunLog& std_log, const RunLog& other_log) {
    if (std_log.rows.empty() || other_log.rows.empty())
        throw Error("se_metrics: empty log");
    const int unreached = static_cast<int>(other_log.rows.size()) + 1;
    double sum = 0.0;
    int count = 0;
    double last_reduction = 0.0;
    double running_max = -std::numeric_limits<double>::infinity();
    for (const auto& row : std_log.rows) {
        if (row.test_return <= running_max) continue;
        running_max = row.test_return;
        const int m_std = row.round;
        auto m = first_round_reaching(other_log, running_max);
        const int m_other = m ? *m : unreached;
        last_reduction = (1.0 - static_cast<double>(m_other) / m_std) * 100.0;
        sum += last_reduction;
        ++count;
    }
    return {sum / count, last_reduction};
}

// (1 - cum_wall_other(m_other(peak)) / cum_wall_std(m_std(peak))) * 100,
// cumulative over the per-round stage timings
inline double rt_peak(const RunLog& std_log, const RunLog& other_log) {
    if (std_log.rows.empty() || other_log.rows.empty()) throw Error("rt_peak: empty log");
    double peak = -std::numeric_limits<double>::infinity();
    int m_std = 1;
    for (const auto& row : std_log.rows) {
        if (row.test_return > peak) {
            peak = row.test_return;
            m_std = row.round;
        }
    }
    auto m = first_round_reaching(other_log, peak);
    const int m_other = m ? *m : static_cast<int>(other_log.rows.size());
    auto cum = [](const RunLog& log, int upto) {
        double total = 0.0;
        for (const auto& row : log.rows)
            if (row.round <= upto) total += row.wall_ms_total();
        return total;
    };
    return (1.0 - cum(other_log, m_other) / cum(std_log, m_std)) * 100.0;
}

struct SeedStats {
    double mean = 0.0;
    double stddev = 0.0;
    double ci_half_width = 0.0;  // t_{0.975, n-1} * std / sqrt(n)
};

inline SeedStats seed_stats(const std::vector<double>& values) {
    const int n = static_cast<int>(values.size());
    if (n < 2) throw TooFewSeedsError("seed_stats: need at least 2 values");
    SeedStats s;
    for (double v : values) s.mean += v;
    s.mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1));
    boost::math::students_t dist(n - 1);
    s.ci_half_width = boost::math::quantile(dist, 0.975) * s.stddev / std::sqrt(n);
    return s;
}

}  // namespace iifrl
