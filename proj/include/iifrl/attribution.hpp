#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "iifrl/common.hpp"
#include "iifrl/nn.hpp"
#include "iifrl/ppo.hpp"

namespace iifrl {

// f_action(theta) = log pi(a|s); f_return(theta) = mean over the validation
// buffer of A_i * log pi(a_i|s_i). The validation buffer for f_return is the
// round's own rollout buffer, collected under the reference policy.
struct TargetFunction {
    enum class Kind { Action, Return };
    Kind kind = Kind::Return;
    Vec state;
    int action = 0;
    const RolloutBuffer* validation = nullptr;

    static TargetFunction action_target(Vec s, int a) {
        TargetFunction t;
        t.kind = Kind::Action;
        t.state = std::move(s);
        t.action = a;
        return t;
    }
    static TargetFunction return_target(const RolloutBuffer& buffer) {
        TargetFunction t;
        t.kind = Kind::Return;
        t.validation = &buffer;
        return t;
    }

    const char* name() const { return kind == Kind::Action ? "action" : "return"; }
};

enum class InfluenceMode { FullTracIn, SingleCheckpoint };

struct InfluenceReport {
    int round = 0;
    InfluenceMode mode = InfluenceMode::SingleCheckpoint;
    std::string target;
    Vec scores;  // indexed by record_id
    double target_grad_norm = 0.0;
};

// Value-segment entries are exactly zero for both targets: the value network
// never enters f.
inline GradVector target_grad(const PolicyValueParams& params, const TargetFunction& target) {
    GradVector g = GradVector::zeros(params);
    if (target.kind == TargetFunction::Kind::Action) {
        std::vector<Vec> acts;
        Vec logits = mlp_forward_vec(params.policy, target.state, &acts);
        Vec lp = log_softmax(logits);
        Vec d = -lp.array().exp();
        d[target.action] += 1.0;
        g.v.head(g.policy_size) = mlp_backward_vec(params.policy, acts, d);
    } else {
        if (!target.validation || target.validation->records.empty())
            throw EmptyValidationError("target_grad: empty validation buffer");
        const auto& records = target.validation->records;
        const int n = static_cast<int>(records.size());
        const int obs_dim = static_cast<int>(records[0].obs.size());
        Mat x(n, obs_dim);
        for (int i = 0; i < n; ++i) x.row(i) = records[i].obs.transpose();
        MlpCache cache;
        Mat logits = mlp_forward(params.policy, x, &cache);
        Mat d(n, logits.cols());
        for (int i = 0; i < n; ++i) {
            Vec lp = log_softmax(logits.row(i).transpose());
            Vec di = (-records[i].advantage / n) * lp.array().exp().matrix();
            di[records[i].action] += records[i].advantage / n;
            d.row(i) = di.transpose();
        }
        g.v.head(g.policy_size) = mlp_backward(params.policy, cache, d);
    }
    if (!g.v.allFinite()) throw NonFiniteError("target_grad: non-finite");
    return g;
}

// Per-record ascent gradients of the PPO objective dotted against the target
// gradient, all at the round's initial parameters. The ghost path never
// materializes per-record gradients; the value network is skipped because the
// target's value segment is identically zero.
inline InfluenceReport influence_single_checkpoint(const PolicyValueParams& params,
                                                   const RolloutBuffer& buffer,
                                                   const TargetFunction& target,
                                                   const PpoConfig& cfg,
                                                   bool ghost = true) {
    GradVector tg = target_grad(params, target);
    InfluenceReport rep;
    rep.round = buffer.round;
    rep.mode = InfluenceMode::SingleCheckpoint;
    rep.target = target.name();
    rep.target_grad_norm = tg.v.norm();

    const int n = buffer.size();
    rep.scores = Vec::Zero(n);
    if (n == 0) return rep;

    if (ghost) {
        const int obs_dim = static_cast<int>(buffer.records[0].obs.size());
        Mat x(n, obs_dim);
        for (int i = 0; i < n; ++i) x.row(i) = buffer.records[i].obs.transpose();
        MlpCache cache;
        Mat logits = mlp_forward(params.policy, x, &cache);
        Mat values = mlp_forward(params.value, x);
        Mat d(n, logits.cols());
        for (int i = 0; i < n; ++i) {
            const RolloutRecord& rec = buffer.records[i];
            Vec lp = log_softmax(logits.row(i).transpose());
            Vec dl;
            double dv = 0.0;
            ppo_output_grad(lp, values(i, 0), rec, cfg.clip_range, cfg.vf_coef, cfg.ent_coef,
                            rec.advantage, dl, dv);
            d.row(i) = dl.transpose();
        }
        rep.scores = mlp_ghost_scores(params.policy, cache, d, Vec(tg.v.head(tg.policy_size)));
    } else {
        for (int i = 0; i < n; ++i) {
            PpoRecordObjective obj(buffer.records[i], cfg);
            GradVector gi = per_sample_grad(params, buffer.records[i].obs, obj);
            rep.scores[i] = dot(tg, gi);
        }
    }
    if (!rep.scores.allFinite())
        throw NonFiniteError("influence_single_checkpoint: non-finite scores");
    return rep;
}

// score_i = sum over steps j with z_i in B_j of <grad f(theta_j), g_i(theta_j)>
inline InfluenceReport influence_full_tracin(const StepTrace& trace,
                                             const RolloutBuffer& buffer,
                                             const TargetFunction& target,
                                             const PpoConfig& cfg) {
    InfluenceReport rep;
    rep.round = buffer.round;
    rep.mode = InfluenceMode::FullTracIn;
    rep.target = target.name();
    rep.scores = Vec::Zero(buffer.size());

    std::unordered_map<int, int> pos_of_id;
    pos_of_id.reserve(buffer.records.size());
    for (int i = 0; i < buffer.size(); ++i) pos_of_id[buffer.records[i].record_id] = i;

    for (std::size_t j = 0; j < trace.steps.size(); ++j) {
        const auto& st = trace.steps[j];
        if (!st.params_before)
            throw MissingCheckpointsError("influence_full_tracin: step " + std::to_string(j) +
                                          " has no checkpoint");
        const PolicyValueParams& pj = *st.params_before;
        GradVector tg = target_grad(pj, target);
        if (j == 0) rep.target_grad_norm = tg.v.norm();

        const int m = static_cast<int>(st.record_ids.size());
        const int obs_dim = static_cast<int>(buffer.records[0].obs.size());
        std::vector<int> pos(m);
        Mat x(m, obs_dim);
        for (int i = 0; i < m; ++i) {
            auto it = pos_of_id.find(st.record_ids[i]);
            if (it == pos_of_id.end())
                throw ShapeMismatchError("influence_full_tracin: trace record id not in buffer");
            pos[i] = it->second;
            x.row(i) = buffer.records[pos[i]].obs.transpose();
        }
        MlpCache cache;
        Mat logits = mlp_forward(pj.policy, x, &cache);
        Mat values = mlp_forward(pj.value, x);
        Mat d(m, logits.cols());
        for (int i = 0; i < m; ++i) {
            const RolloutRecord& rec = buffer.records[pos[i]];
            Vec lp = log_softmax(logits.row(i).transpose());
            Vec dl;
            double dv = 0.0;
            ppo_output_grad(lp, values(i, 0), rec, cfg.clip_range, cfg.vf_coef, cfg.ent_coef,
                            rec.advantage, dl, dv);
            d.row(i) = dl.transpose();
        }
        Vec partial = mlp_ghost_scores(pj.policy, cache, d, Vec(tg.v.head(tg.policy_size)));
        for (int i = 0; i < m; ++i) rep.scores[pos[i]] += partial[i];
    }
    if (!rep.scores.allFinite()) throw NonFiniteError("influence_full_tracin: non-finite scores");
    return rep;
}

}  // namespace iifrl
