#include <catch2/catch_amalgamated.hpp>

#include "iifrl/filtering.hpp"

using namespace iifrl;

namespace {

RolloutBuffer synthetic_buffer(const std::vector<double>& rewards,
                               const std::vector<double>& advantages) {
    RolloutBuffer buf;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        RolloutRecord rec;
        rec.obs = Vec::Zero(4);
        rec.obs[static_cast<int>(i) % 4] = 1.0;
        rec.record_id = static_cast<int>(i);
        rec.reward = rewards[i];
        rec.advantage = advantages[i];
        rec.value_old = 0.1 * static_cast<double>(i);
        rec.return_target = rec.value_old + rec.advantage;
        buf.records.push_back(rec);
    }
    return buf;
}

InfluenceReport report_with(const std::vector<double>& scores) {
    InfluenceReport rep;
    rep.scores = Eigen::Map<const Vec>(scores.data(), static_cast<Eigen::Index>(scores.size()));
    return rep;
}

std::vector<int> surviving_ids(const RolloutBuffer& buf) {
    std::vector<int> ids;
    for (const auto& r : buf.records) ids.push_back(r.record_id);
    return ids;
}

}  // namespace

TEST_CASE("discard_bottom_records drops ceil(p*m) most negative") {
    RolloutBuffer buf = synthetic_buffer({0, 0, 0, 0}, {1, 1, 1, 1});
    InfluenceReport rep = report_with({3.0, -1.0, -2.0, -3.0});
    RolloutBuffer out = discard_bottom_records(buf, rep, 0.5);
    // m=3, k=ceil(1.5)=2: the -3 and -2 records go
    REQUIRE(surviving_ids(out) == std::vector<int>{0, 1});
}

TEST_CASE("discard_bottom_records keeps everything when no score is negative") {
    RolloutBuffer buf = synthetic_buffer({0, 0, 0}, {1, 1, 1});
    InfluenceReport rep = report_with({0.0, 0.5, 2.0});
    RolloutBuffer out = discard_bottom_records(buf, rep, 1.0);
    REQUIRE(out.size() == 3);
}

TEST_CASE("discard_bottom_records with p=1 removes every negative record") {
    RolloutBuffer buf = synthetic_buffer({0, 0, 0, 0, 0}, {1, 1, 1, 1, 1});
    InfluenceReport rep = report_with({-0.1, 2.0, -5.0, 0.0, -1e-9});
    RolloutBuffer out = discard_bottom_records(buf, rep, 1.0);
    REQUIRE(surviving_ids(out) == std::vector<int>{1, 3});
}

TEST_CASE("discard_bottom_records breaks score ties by record id") {
    RolloutBuffer buf = synthetic_buffer({0, 0, 0}, {1, 1, 1});
    InfluenceReport rep = report_with({-1.0, -1.0, -1.0});
    RolloutBuffer out = discard_bottom_records(buf, rep, 0.5);  // k=ceil(1.5)=2
    REQUIRE(surviving_ids(out) == std::vector<int>{2});
}

TEST_CASE("filter monotonicity: smaller p removes a subset") {
    Rng rng(3);
    std::vector<double> scores(40);
    for (auto& s : scores) s = rng.normal();
    RolloutBuffer buf = synthetic_buffer(std::vector<double>(40, 0.0),
                                         std::vector<double>(40, 1.0));
    InfluenceReport rep = report_with(scores);
    for (double p1 : {0.1, 0.3, 0.6}) {
        for (double p2 : {0.61, 0.8, 1.0}) {
            auto k1 = surviving_ids(discard_bottom_records(buf, rep, p1));
            auto k2 = surviving_ids(discard_bottom_records(buf, rep, p2));
            // survivors under the larger p are a subset of those under the smaller
            for (int id : k2) REQUIRE(std::count(k1.begin(), k1.end(), id) == 1);
        }
    }
}

TEST_CASE("survivor integrity: fields untouched by filtering") {
    RolloutBuffer buf = synthetic_buffer({1, 2, 3, 4}, {0.5, -0.5, 1.5, -1.5});
    InfluenceReport rep = report_with({1.0, -1.0, 1.0, -1.0});
    RolloutBuffer out = discard_bottom_records(buf, rep, 0.5);
    for (const auto& rec : out.records) {
        const auto& orig = buf.records[rec.record_id];
        REQUIRE(rec.reward == orig.reward);
        REQUIRE(rec.advantage == orig.advantage);
        REQUIRE(rec.return_target == orig.return_target);
    }
}

TEST_CASE("random_filter edge counts and determinism") {
    RolloutBuffer buf = synthetic_buffer(std::vector<double>(10, 0.0),
                                         std::vector<double>(10, 1.0));
    Rng r1(5), r2(5), r3(6);
    REQUIRE(random_filter(buf, 0, r1).size() == 10);
    REQUIRE(random_filter(buf, 10, r1).size() == 0);
    auto a = surviving_ids(random_filter(buf, 4, r2));
    Rng r2b(5);
    random_filter(buf, 0, r2b);  // consume nothing: count=0 draws nothing
    Rng r2c(5);
    auto b = surviving_ids(random_filter(buf, 4, r2c));
    REQUIRE(a.size() == 6);
    // same seed, same draw sequence -> same subset; different seed likely differs
    Rng r4(5);
    REQUIRE(surviving_ids(random_filter(buf, 4, r4)) == a);
}

TEST_CASE("advantage heuristics on the worked example") {
    // records with (a_bar, a_hat) = (1,-2), (-1,0.5), (2,1)
    RolloutBuffer buf = synthetic_buffer({0, 0, 0}, {-2.0, 0.5, 1.0});
    std::vector<double> a_bar{1.0, -1.0, 2.0};

    RolloutBuffer v1 = advantage_heuristic_filter(buf, a_bar, 1, 0.5);
    // mismatch set {0,1}; |diff| = 3, 1.5; k=1: drop record 0
    REQUIRE(surviving_ids(v1) == std::vector<int>{1, 2});

    RolloutBuffer v2 = advantage_heuristic_filter(buf, a_bar, 2, 0.5);
    // products -2, -0.5; ascending: record 0 first; k=1: drop record 0
    REQUIRE(surviving_ids(v2) == std::vector<int>{1, 2});
}

TEST_CASE("advantage heuristics keep sign-consistent records") {
    RolloutBuffer buf = synthetic_buffer({0, 0}, {1.0, -1.0});
    std::vector<double> a_bar{2.0, -0.5};  // both agree in sign
    REQUIRE(advantage_heuristic_filter(buf, a_bar, 1, 1.0).size() == 2);
    REQUIRE(advantage_heuristic_filter(buf, a_bar, 2, 1.0).size() == 2);
}

TEST_CASE("advantage heuristics retain records with undefined oracle entries") {
    RolloutBuffer buf = synthetic_buffer({0, 0}, {1.0, -1.0});
    std::vector<double> a_bar{std::nan(""), 1.0};
    RolloutBuffer out = advantage_heuristic_filter(buf, a_bar, 1, 1.0);
    REQUIRE(surviving_ids(out) == std::vector<int>{0});
}

TEST_CASE("td_rank_weights: single record gets weight 1") {
    RolloutBuffer buf = synthetic_buffer({1.0}, {0.0});
    buf.records[0].terminal = true;
    auto w = td_rank_weights(buf, 0.99, 0.6);
    REQUIRE(w.size() == 1);
    REQUIRE(w[0] == 1.0);
}

TEST_CASE("td error formula: r=1, gamma=.99, V(s')=0, V(s)=0.5") {
    RolloutBuffer buf = synthetic_buffer({1.0, 0.0}, {0.0, 0.0});
    buf.records[0].value_old = 0.5;
    buf.records[0].terminal = true;  // V(s') = 0
    buf.records[1].value_old = 0.25;
    buf.records[1].terminal = true;
    // |delta_0| = |1 - 0.5| = 0.5; |delta_1| = |0 - 0.25| = 0.25 -> ranks 1, 2
    auto w = td_rank_weights(buf, 0.99, 0.6);
    const double w1 = 1.0 / (1.0 + std::pow(2.0, -0.6));
    REQUIRE(w[0] == Catch::Approx(w1).margin(1e-12));
    REQUIRE(w[1] == Catch::Approx(1.0 - w1).margin(1e-12));
    REQUIRE(w[0] + w[1] == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(w[0] == Catch::Approx(0.6024989407343608).margin(1e-12));
}

TEST_CASE("td_rank_weights sum to one on a real buffer") {
    FrozenLake env;
    Rng init(1);
    PolicyValueParams p = make_policy_value(16, 4, 8, init);
    PpoConfig cfg;
    cfg.n_steps = 128;
    Rng rng(2);
    RolloutBuffer buf = collect_rollout(env, p, cfg, rng);
    auto w = td_rank_weights(buf, cfg.gamma, 0.6);
    double total = 0.0;
    for (double x : w) {
        REQUIRE(x > 0.0);
        total += x;
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("reward_extremes_filter removes ceil(p*n/2) per side") {
    RolloutBuffer buf = synthetic_buffer({5, 1, 4, 2, 3, 0}, std::vector<double>(6, 0.0));
    RolloutBuffer out = reward_extremes_filter(buf, 0.5);
    // k = ceil(0.5*6/2) = 2: drop rewards {0,1} and {5,4}
    REQUIRE(surviving_ids(out) == std::vector<int>{3, 4});

    // p -> 0+ still removes one per side
    RolloutBuffer tiny = reward_extremes_filter(buf, 1e-9);
    REQUIRE(tiny.size() == 4);

    // p=1 removes everything
    REQUIRE(reward_extremes_filter(buf, 1.0).size() == 0);
}

TEST_CASE("reward_extremes_filter ties break by record id") {
    RolloutBuffer buf = synthetic_buffer({1, 1, 1, 1}, std::vector<double>(4, 0.0));
    RolloutBuffer out = reward_extremes_filter(buf, 0.5);
    // k=1 per side: lowest tie -> id 0; highest tie -> smallest remaining id 1
    REQUIRE(surviving_ids(out) == std::vector<int>{2, 3});
}

TEST_CASE("iif_round with no negative scores reduces to a standard round") {
    // force every advantage positive so the return-target influence of each
    // record against itself stays positive often enough; instead of relying
    // on that, check the k=0 path explicitly via p tiny and nonnegative scores
    FrozenLake env1, env2;
    Rng init(42);
    PolicyValueParams p = make_policy_value(16, 4, 8, init);
    PpoConfig cfg;
    cfg.n_steps = 64;
    cfg.batch_size = 16;
    cfg.n_epochs = 2;

    // run iif_round and capture its filter count
    Rng c1(7), u1(9);
    IifRoundResult r = iif_round(env1, p, cfg, 0.5, c1, u1);
    // replicate manually: same streams, same decisions
    Rng c2(7), u2(9);
    RolloutBuffer buf = collect_rollout(env2, p, cfg, c2);
    InfluenceReport rep =
        influence_single_checkpoint(p, buf, TargetFunction::return_target(buf), cfg);
    RolloutBuffer filtered = discard_bottom_records(buf, rep, 0.5);
    PolicyValueParams expect = ppo_update(p, filtered, cfg, u2).params;
    REQUIRE(r.params.policy.theta == expect.policy.theta);
    REQUIRE(r.params.value.theta == expect.value.theta);
    REQUIRE(r.n_filtered == buf.size() - filtered.size());
}
