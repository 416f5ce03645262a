#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "iifrl/attribution.hpp"
#include "iifrl/common.hpp"
#include "iifrl/ppo.hpp"

namespace iifrl {

enum class FilterStrategy { Iif, Random, AdvHeuristic1, AdvHeuristic2, TdRankReweight, RewardExtremes };

struct FilterConfig {
    FilterStrategy strategy = FilterStrategy::Iif;
    double p = 0.5;      // fraction (of negatives / mismatches / buffer) to drop
    double alpha = 0.6;  // TD rank-prioritization exponent
};

namespace detail {

inline RolloutBuffer keep_records(const RolloutBuffer& buffer, const std::vector<char>& keep) {
    RolloutBuffer out;
    out.round = buffer.round;
    out.collecting_params_ref = buffer.collecting_params_ref;
    out.bootstrap_value = buffer.bootstrap_value;
    for (int i = 0; i < buffer.size(); ++i)
        if (keep[i]) out.records.push_back(buffer.records[i]);
    return out;
}

}  // namespace detail

// DiscardBottomRecords: among the m negative-score records, remove the
// ceil(p*m) most negative (ties broken by smaller record_id); survivor order
// preserved.
inline RolloutBuffer discard_bottom_records(const RolloutBuffer& buffer,
                                            const InfluenceReport& report, double p) {
    if (report.scores.size() != buffer.size())
        throw ShapeMismatchError("discard_bottom_records: report not aligned to buffer");
    std::vector<int> negatives;
    for (int i = 0; i < buffer.size(); ++i)
        if (report.scores[i] < 0.0) negatives.push_back(i);
    const int m = static_cast<int>(negatives.size());
    int k = std::min<int>(m, static_cast<int>(std::ceil(p * m)));
    std::sort(negatives.begin(), negatives.end(), [&](int a, int b) {
        if (report.scores[a] != report.scores[b]) return report.scores[a] < report.scores[b];
        return buffer.records[a].record_id < buffer.records[b].record_id;
    });
    std::vector<char> keep(buffer.size(), 1);
    for (int i = 0; i < k; ++i) keep[negatives[i]] = 0;
    return detail::keep_records(buffer, keep);
}

// uniformly random subset of size n - count, order preserved
inline RolloutBuffer random_filter(const RolloutBuffer& buffer, int count, Rng& rng) {
    const int n = buffer.size();
    if (count < 0 || count > n) throw Error("random_filter: count out of range");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // partial Fisher-Yates: first `count` entries are the removal set
    for (int i = 0; i < count; ++i) {
        int j = i + rng.uniform_int(n - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<char> keep(n, 1);
    for (int i = 0; i < count; ++i) keep[idx[i]] = 0;
    return detail::keep_records(buffer, keep);
}

// Advantage heuristics (MC oracle Ā against the stored GAE estimate):
// variant 1 sorts the sign-mismatched records by |Ā - Â| descending, variant 2
// by Ā·Â ascending; both drop the leading ceil(p*m). Records with an undefined
// Ā (NaN) are retained.
inline RolloutBuffer advantage_heuristic_filter(const RolloutBuffer& buffer,
                                                const std::vector<double>& a_bar, int variant,
                                                double p) {
    if (static_cast<int>(a_bar.size()) != buffer.size())
        throw ShapeMismatchError("advantage_heuristic_filter: a_bar not aligned");
    if (variant != 1 && variant != 2) throw Error("advantage_heuristic_filter: variant must be 1 or 2");

    std::vector<int> mismatched;
    for (int i = 0; i < buffer.size(); ++i) {
        if (std::isnan(a_bar[i])) continue;
        double ab = a_bar[i], ah = buffer.records[i].advantage;
        if ((ab > 0.0 && ah < 0.0) || (ab < 0.0 && ah > 0.0)) mismatched.push_back(i);
    }
    const int m = static_cast<int>(mismatched.size());
    int k = std::min<int>(m, static_cast<int>(std::ceil(p * m)));
    std::sort(mismatched.begin(), mismatched.end(), [&](int a, int b) {
        double ka, kb;
        if (variant == 1) {
            ka = -std::abs(a_bar[a] - buffer.records[a].advantage);
            kb = -std::abs(a_bar[b] - buffer.records[b].advantage);
        } else {
            ka = a_bar[a] * buffer.records[a].advantage;
            kb = a_bar[b] * buffer.records[b].advantage;
        }
        if (ka != kb) return ka < kb;
        return buffer.records[a].record_id < buffer.records[b].record_id;
    });
    std::vector<char> keep(buffer.size(), 1);
    for (int i = 0; i < k; ++i) keep[mismatched[i]] = 0;
    return detail::keep_records(buffer, keep);
}

// delta_i = r_i + gamma*V(s'_i) - V(s_i), with V from the collection-time
// value estimates (0 at terminal steps, the stored bootstrap at the window
// tail). Rank-based priorities P_i = 1/rank(i) after sorting by |delta|
// descending; weights P^alpha normalized to sum 1.
inline std::vector<double> td_rank_weights(const RolloutBuffer& buffer, double gamma,
                                           double alpha) {
    const int n = buffer.size();
    std::vector<double> delta(n);
    for (int i = 0; i < n; ++i) {
        const RolloutRecord& rec = buffer.records[i];
        double next_v;
        if (rec.chain_end())
            next_v = 0.0;  // truncation treated as a chain end, matching GAE
        else if (i + 1 < n)
            next_v = buffer.records[i + 1].value_old;
        else
            next_v = buffer.bootstrap_value;
        delta[i] = rec.reward + gamma * next_v - rec.value_old;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double da = std::abs(delta[a]), db = std::abs(delta[b]);
        if (da != db) return da > db;
        return buffer.records[a].record_id < buffer.records[b].record_id;
    });
    std::vector<double> w(n);
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        double priority = std::pow(1.0 / (r + 1), alpha);
        w[order[r]] = priority;
        total += priority;
    }
    for (double& x : w) x /= total;
    return w;
}

// remove the ceil(p*n/2) highest-reward and ceil(p*n/2) lowest-reward records
inline RolloutBuffer reward_extremes_filter(const RolloutBuffer& buffer, double p) {
    const int n = buffer.size();
    int k = std::min<int>(n, static_cast<int>(std::ceil(p * n / 2.0)));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (buffer.records[a].reward != buffer.records[b].reward)
            return buffer.records[a].reward < buffer.records[b].reward;
        return buffer.records[a].record_id < buffer.records[b].record_id;
    });
    std::vector<char> keep(n, 1);
    for (int i = 0; i < k && i < n; ++i) keep[order[i]] = 0;                       // bottom rewards
    // top rewards: walk from the high end, tie-break by smaller record_id first
    std::vector<int> desc(n);
    std::iota(desc.begin(), desc.end(), 0);
    std::sort(desc.begin(), desc.end(), [&](int a, int b) {
        if (buffer.records[a].reward != buffer.records[b].reward)
            return buffer.records[a].reward > buffer.records[b].reward;
        return buffer.records[a].record_id < buffer.records[b].record_id;
    });
    for (int i = 0, removed = 0; i < n && removed < k; ++i) {
        if (keep[desc[i]]) {
            keep[desc[i]] = 0;
            ++removed;
        }
    }
    return detail::keep_records(buffer, keep);
}

struct IifRoundResult {
    PolicyValueParams params;
    RolloutBuffer buffer;          // as collected (unfiltered)
    InfluenceReport report;
    int n_filtered = 0;
    double ms_collect = 0.0;
    double ms_influence = 0.0;
    double ms_optimize = 0.0;
};

// One IIF round: collect, score with the single-checkpoint fast mode against
// the return target, drop the bottom fraction, train on the survivors.
inline IifRoundResult iif_round(Env& env, const PolicyValueParams& params, const PpoConfig& cfg,
                                double filter_p, Rng& collect_rng, Rng& update_rng,
                                int round = 0) {
    using clock = std::chrono::steady_clock;
    IifRoundResult out;

    auto t0 = clock::now();
    out.buffer = collect_rollout(env, params, cfg, collect_rng, round);
    auto t1 = clock::now();
    TargetFunction target = TargetFunction::return_target(out.buffer);
    out.report = influence_single_checkpoint(params, out.buffer, target, cfg);
    RolloutBuffer filtered = discard_bottom_records(out.buffer, out.report, filter_p);
    out.n_filtered = out.buffer.size() - filtered.size();
    auto t2 = clock::now();
    out.params = ppo_update(params, filtered, cfg, update_rng).params;
    auto t3 = clock::now();

    out.ms_collect = std::chrono::duration<double, std::milli>(t1 - t0).count();
    out.ms_influence = std::chrono::duration<double, std::milli>(t2 - t1).count();
    out.ms_optimize = std::chrono::duration<double, std::milli>(t3 - t2).count();
    return out;
}

}  // namespace iifrl
