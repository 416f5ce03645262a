#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "iifrl/attribution.hpp"
#include "iifrl/common.hpp"
#include "iifrl/env.hpp"
#include "iifrl/filtering.hpp"
#include "iifrl/ppo.hpp"

namespace iifrl {

// Empirical discounted-return averages from buffer trajectories. Entries with
// fewer than min_visits samples are undefined (NaN).
struct McAdvantageTable {
    int n_states = 0;
    int n_actions = 0;
    Mat q_bar;   // state x action, NaN where undefined
    Vec v_bar;   // state, NaN where undefined
    Mat a_bar;   // q_bar - v_bar where both defined
    Eigen::MatrixXi q_visits;
    Eigen::VectorXi v_visits;
    int skipped_records = 0;  // records from incomplete episodes

    bool q_defined(int s, int a) const { return !std::isnan(q_bar(s, a)); }
    bool v_defined(int s) const { return !std::isnan(v_bar[s]); }
    bool a_defined(int s, int a) const { return !std::isnan(a_bar(s, a)); }
};

// Only episodes that reach an environment-terminal step inside the buffer
// contribute: returns-to-go of truncated or window-cut episodes are
// incomplete and would bias the averages.
inline McAdvantageTable mc_advantage(const Env& env, const RolloutBuffer& buffer, double gamma,
                                     int min_visits = 3) {
    if (!env.spec().tabular)
        throw OracleUnavailableError("mc_advantage: " + env.spec().name + " is not tabular");

    McAdvantageTable t;
    t.n_states = static_cast<int>(env.enumerate_states().size());
    t.n_actions = env.spec().n_actions;
    Mat q_sum = Mat::Zero(t.n_states, t.n_actions);
    Vec v_sum = Vec::Zero(t.n_states);
    t.q_visits = Eigen::MatrixXi::Zero(t.n_states, t.n_actions);
    t.v_visits = Eigen::VectorXi::Zero(t.n_states);

    int i = 0;
    const int n = buffer.size();
    while (i < n) {
        int j = i;
        while (j < n && !buffer.records[j].chain_end()) ++j;
        const bool complete = j < n && buffer.records[j].terminal;
        if (complete) {
            double g = 0.0;
            for (int k = j; k >= i; --k) {
                g = buffer.records[k].reward + gamma * g;
                int s = env.state_index_of(buffer.records[k].obs);
                int a = buffer.records[k].action;
                q_sum(s, a) += g;
                t.q_visits(s, a) += 1;
                v_sum[s] += g;
                t.v_visits[s] += 1;
            }
        } else {
            t.skipped_records += (j < n ? j + 1 : n) - i;
        }
        i = (j < n) ? j + 1 : n;
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.q_bar = Mat::Constant(t.n_states, t.n_actions, nan);
    t.v_bar = Vec::Constant(t.n_states, nan);
    t.a_bar = Mat::Constant(t.n_states, t.n_actions, nan);
    for (int s = 0; s < t.n_states; ++s) {
        if (t.v_visits[s] >= min_visits) t.v_bar[s] = v_sum[s] / t.v_visits[s];
        for (int a = 0; a < t.n_actions; ++a)
            if (t.q_visits(s, a) >= min_visits) t.q_bar(s, a) = q_sum(s, a) / t.q_visits(s, a);
    }
    for (int s = 0; s < t.n_states; ++s)
        for (int a = 0; a < t.n_actions; ++a)
            if (t.q_defined(s, a) && t.v_defined(s)) t.a_bar(s, a) = t.q_bar(s, a) - t.v_bar[s];
    return t;
}

// Ā per record (NaN where the table is undefined), aligned to buffer order.
inline std::vector<double> a_bar_for_records(const Env& env, const RolloutBuffer& buffer,
                                             const McAdvantageTable& table) {
    std::vector<double> out(buffer.size());
    for (int i = 0; i < buffer.size(); ++i) {
        int s = env.state_index_of(buffer.records[i].obs);
        int a = buffer.records[i].action;
        out[i] = table.a_defined(s, a) ? table.a_bar(s, a)
                                       : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

struct MismatchRow {
    int record_id = 0;
    int rank = 0;  // 1 = most positive influence
    double influence = 0.0;
    double a_hat = 0.0;
    double a_bar = 0.0;
    bool oracle_defined = false;
    double abs_err = 0.0;
    bool sign_agree = false;
    double product = 0.0;
};

// Records sorted by decreasing influence with the oracle comparison columns
// of the harmful-record analysis. Undefined oracle entries are listed with
// oracle_defined=false, never fatal.
inline std::vector<MismatchRow> mismatch_analysis(const RolloutBuffer& buffer,
                                                  const InfluenceReport& report,
                                                  const std::vector<double>& a_bar) {
    if (report.scores.size() != buffer.size() ||
        static_cast<int>(a_bar.size()) != buffer.size())
        throw ShapeMismatchError("mismatch_analysis: misaligned inputs");
    std::vector<int> order(buffer.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (report.scores[a] != report.scores[b]) return report.scores[a] > report.scores[b];
        return buffer.records[a].record_id < buffer.records[b].record_id;
    });
    std::vector<MismatchRow> rows;
    rows.reserve(buffer.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        int i = order[r];
        MismatchRow row;
        row.record_id = buffer.records[i].record_id;
        row.rank = static_cast<int>(r) + 1;
        row.influence = report.scores[i];
        row.a_hat = buffer.records[i].advantage;
        row.oracle_defined = !std::isnan(a_bar[i]);
        if (row.oracle_defined) {
            row.a_bar = a_bar[i];
            row.abs_err = std::abs(row.a_bar - row.a_hat);
            row.product = row.a_bar * row.a_hat;
            row.sign_agree = (row.a_bar >= 0.0) == (row.a_hat >= 0.0);
        }
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = 0.5 * (i + j) + 1.0;
        for (int k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

// Pearson correlation of average ranks (standard tie handling).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty())
        throw ShapeMismatchError("spearman: length mismatch or empty");
    auto constant = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
    };
    if (constant(x) || constant(y)) throw DegenerateInputError("spearman: constant input");
    std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
    const int n = static_cast<int>(x.size());
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (int i = 0; i < n; ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    return cov / std::sqrt(vx * vy);
}

// Nodes are the positive-influence records; node values are the L-infinity
// normalized scores, embeddings the final policy net's last hidden activation
// on s_i. Gaussian edge weights with sigma from the median-distance heuristic;
// u-nearest-neighbor edges, symmetrized.
struct SimilarityGraph {
    struct Edge {
        int i, j;
        double w;
    };
    std::vector<int> node_record_ids;
    Vec node_values;
    Mat embeddings;  // node x dim
    std::vector<Edge> edges;
    double sigma = 1.0;
    int u = 0;
};

inline SimilarityGraph build_similarity_graph(const RolloutBuffer& buffer,
                                              const InfluenceReport& report,
                                              const PolicyValueParams& final_params, int u) {
    if (report.scores.size() != buffer.size())
        throw ShapeMismatchError("build_similarity_graph: report not aligned");
    double max_abs = report.scores.size() ? report.scores.cwiseAbs().maxCoeff() : 0.0;
    std::vector<int> nodes;
    for (int i = 0; i < buffer.size(); ++i)
        if (report.scores[i] > 0.0) nodes.push_back(i);
    const int n = static_cast<int>(nodes.size());
    if (n < 2) throw TooFewPositiveError("build_similarity_graph: fewer than 2 positive records");

    SimilarityGraph g;
    g.u = u;
    g.node_values = Vec(n);
    for (int i = 0; i < n; ++i) {
        g.node_record_ids.push_back(buffer.records[nodes[i]].record_id);
        g.node_values[i] = report.scores[nodes[i]] / max_abs;
    }
    PolicyEval pe0 = policy_forward(final_params, buffer.records[nodes[0]].obs);
    g.embeddings = Mat(n, pe0.hidden.size());
    g.embeddings.row(0) = pe0.hidden.transpose();
    for (int i = 1; i < n; ++i)
        g.embeddings.row(i) =
            policy_forward(final_params, buffer.records[nodes[i]].obs).hidden.transpose();

    Mat d2(n, n);
    std::vector<double> all_d;
    all_d.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        d2(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            double dd = (g.embeddings.row(i) - g.embeddings.row(j)).squaredNorm();
            d2(i, j) = d2(j, i) = dd;
            all_d.push_back(std::sqrt(dd));
        }
    }
    std::sort(all_d.begin(), all_d.end());
    double median = all_d.empty() ? 0.0
                    : (all_d.size() % 2 ? all_d[all_d.size() / 2]
                                        : 0.5 * (all_d[all_d.size() / 2 - 1] +
                                                 all_d[all_d.size() / 2]));
    g.sigma = median > 0.0 ? median : 1.0;  // degenerate buffers: all weights 1

    // u nearest neighbors per node, kept if either endpoint selects the edge
    std::set<std::pair<int, int>> edge_set;
    for (int i = 0; i < n; ++i) {
        std::vector<int> others;
        others.reserve(n - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        int keep = std::min<int>(u, static_cast<int>(others.size()));
        std::partial_sort(others.begin(), others.begin() + keep, others.end(),
                          [&](int a, int b) {
                              if (d2(i, a) != d2(i, b)) return d2(i, a) < d2(i, b);
                              return a < b;
                          });
        for (int k = 0; k < keep; ++k) {
            int j = others[k];
            edge_set.insert({std::min(i, j), std::max(i, j)});
        }
    }
    for (auto [i, j] : edge_set)
        g.edges.push_back({i, j, std::exp(-d2(i, j) / (g.sigma * g.sigma))});
    return g;
}

// normalized Dirichlet energy: sum_{edges} w_ij (I_i - I_j)^2 / sum w_ij,
// each undirected pair counted once
inline double roughness(const SimilarityGraph& g) {
    if (g.edges.empty()) throw NoEdgesError("roughness: graph has no edges");
    double num = 0.0, den = 0.0;
    for (const auto& e : g.edges) {
        double diff = g.node_values[e.i] - g.node_values[e.j];
        num += e.w * diff * diff;
        den += e.w;
    }
    return num / den;
}

enum class InterventionDrop { Influence, Random };

struct InterventionResult {
    double base_return = 0.0;      // branch A: trained on the full buffer
    double filtered_return = 0.0;  // branch B: trained on the filtered buffer
    double delta_return = 0.0;
    int n_removed = 0;
    PolicyValueParams base_params;  // branch A result, lets a caller continue training
};

// Single-round intervention: collect once, train branch A on the buffer and
// branch B on the copy with all negative-influence records removed (or a
// random same-size drop), both from the same parameters with identically
// seeded optimization streams. Influence is full TracIn over branch A's own
// step trace. Streams use the same per-round labels as training runs, so
// branch A reproduces exactly the round a standard run of the same master
// seed would have taken.
inline InterventionResult single_round_intervention(Env& env, const PolicyValueParams& params,
                                                    const PpoConfig& cfg,
                                                    std::uint64_t master_seed, int round,
                                                    int eval_episodes,
                                                    InterventionDrop drop = InterventionDrop::Influence) {
    Rng collect_rng(derive_seed(master_seed, "collect", round));
    RolloutBuffer buffer = collect_rollout(env, params, cfg, collect_rng, round);

    const std::uint64_t opt_seed = derive_seed(master_seed, "update", round);
    Rng opt_a(opt_seed);
    PpoUpdateResult branch_a = ppo_update(params, buffer, cfg, opt_a, TraceMode::Checkpoints);

    TargetFunction target = TargetFunction::return_target(buffer);
    InfluenceReport report = influence_full_tracin(branch_a.trace, buffer, target, cfg);

    RolloutBuffer filtered;
    if (drop == InterventionDrop::Influence) {
        filtered = discard_bottom_records(buffer, report, 1.0);
    } else {
        int count = 0;
        for (int i = 0; i < buffer.size(); ++i)
            if (report.scores[i] < 0.0) ++count;
        Rng drop_rng(derive_seed(master_seed, "intervene_drop", round));
        filtered = random_filter(buffer, count, drop_rng);
    }

    InterventionResult out;
    out.n_removed = buffer.size() - filtered.size();
    out.base_params = branch_a.params;
    const std::uint64_t eval_seed = derive_seed(master_seed, "eval", round);
    out.base_return = evaluate(branch_a.params, env, eval_episodes, eval_seed);
    if (out.n_removed == 0) {
        // branches identical by construction
        out.filtered_return = out.base_return;
    } else {
        Rng opt_b(opt_seed);
        PpoUpdateResult branch_b = ppo_update(params, filtered, cfg, opt_b);
        out.filtered_return = evaluate(branch_b.params, env, eval_episodes, eval_seed);
    }
    out.delta_return = out.filtered_return - out.base_return;
    return out;
}

}  // namespace iifrl
