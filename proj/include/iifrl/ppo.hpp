#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "iifrl/common.hpp"
#include "iifrl/env.hpp"
#include "iifrl/nn.hpp"
#include "iifrl/rng.hpp"

namespace iifrl {

// One transition plus its collection-time quantities; the atomic attribution
// unit. terminal/truncated describe how the step ended its episode (if it
// did); chain_end = terminal || truncated marks the GAE chain boundary.
struct RolloutRecord {
    Vec obs;
    int action = 0;
    double reward = 0.0;
    double log_prob_old = 0.0;
    double value_old = 0.0;
    double advantage = 0.0;
    double return_target = 0.0;
    int episode_id = 0;
    int step_in_episode = 0;
    int record_id = 0;
    bool terminal = false;
    bool truncated = false;

    bool chain_end() const { return terminal || truncated; }
};

struct RolloutBuffer {
    std::vector<RolloutRecord> records;
    int round = 0;
    std::string collecting_params_ref;
    // value of the observation following the last record, 0 if it ended an
    // episode; used for GAE bootstrap and TD errors at the window tail
    double bootstrap_value = 0.0;

    int size() const { return static_cast<int>(records.size()); }
};

struct PpoConfig {
    int n_steps = 2048;
    int batch_size = 64;
    int n_epochs = 10;
    double lr = 5e-3;
    double clip_range = 0.2;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double vf_coef = 0.5;
    double ent_coef = 0.0;
    double max_grad_norm = 0.5;
    int total_rounds = 50;
    std::uint64_t seed = 1;
    int hidden_size = 64;
    // per-minibatch advantage normalization applies to training gradients
    // only; stored record advantages and influence computations always use
    // the raw collection-time estimates
    bool normalize_advantage = false;
};

// delta_t = r_t + gamma*v_{t+1}*(1-done_t) - v_t
// A_t     = delta_t + gamma*lambda*(1-done_t)*A_{t+1}
inline std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<std::uint8_t>& dones, double bootstrap_value, double gamma,
    double lam) {
    if (rewards.size() != values.size() || rewards.size() != dones.size())
        throw ShapeMismatchError("compute_gae: misaligned inputs");
    const int n = static_cast<int>(rewards.size());
    std::vector<double> adv(n), ret(n);
    double next_adv = 0.0;
    for (int t = n - 1; t >= 0; --t) {
        double next_value = (t == n - 1) ? bootstrap_value : values[t + 1];
        double nonterminal = dones[t] ? 0.0 : 1.0;
        double delta = rewards[t] + gamma * next_value * nonterminal - values[t];
        next_adv = delta + gamma * lam * nonterminal * next_adv;
        adv[t] = next_adv;
        ret[t] = adv[t] + values[t];
    }
    return {adv, ret};
}

// Exactly n records under the current policy; episodes auto-reset, the window
// tail bootstraps with V(next_obs) when it cuts an episode short.
inline RolloutBuffer collect_rollout(Env& env, const PolicyValueParams& params,
                                     const PpoConfig& cfg, Rng& rng, int round = 0) {
    RolloutBuffer buf;
    buf.round = round;
    buf.collecting_params_ref = "round_" + std::to_string(params.round);
    buf.records.reserve(cfg.n_steps);

    Vec obs = env.reset(0);
    int episode_id = 0, step_in_episode = 0;
    std::vector<double> rewards(cfg.n_steps), values(cfg.n_steps);
    std::vector<std::uint8_t> dones(cfg.n_steps);

    for (int t = 0; t < cfg.n_steps; ++t) {
        PolicyEval pe = policy_forward(params, obs);
        Vec probs = pe.log_probs.array().exp();
        int action = rng.categorical(probs);
        StepResult sr = env.step(action);

        RolloutRecord rec;
        rec.obs = obs;
        rec.action = action;
        rec.reward = sr.reward;
        rec.log_prob_old = pe.log_probs[action];
        rec.value_old = value_forward(params, obs);
        rec.episode_id = episode_id;
        rec.step_in_episode = step_in_episode;
        rec.record_id = t;
        rec.terminal = sr.done;
        rec.truncated = sr.truncated;
        rewards[t] = sr.reward;
        values[t] = rec.value_old;
        dones[t] = rec.chain_end() ? 1 : 0;
        buf.records.push_back(std::move(rec));

        if (sr.done || sr.truncated) {
            obs = env.reset(0);
            ++episode_id;
            step_in_episode = 0;
        } else {
            obs = sr.next_obs;
            ++step_in_episode;
        }
    }

    buf.bootstrap_value = dones[cfg.n_steps - 1] ? 0.0 : value_forward(params, obs);
    auto [adv, ret] = compute_gae(rewards, values, dones, buf.bootstrap_value, cfg.gamma,
                                  cfg.gae_lambda);
    for (int t = 0; t < cfg.n_steps; ++t) {
        buf.records[t].advantage = adv[t];
        buf.records[t].return_target = buf.records[t].value_old + buf.records[t].advantage;
    }
    return buf;
}

// d(surrogate)/d(log pi(a|s)): the clipped min kills the gradient only when
// the clamped branch is strictly smaller.
inline double clipped_surrogate_dlogp(double ratio, double advantage, double clip) {
    double unclipped = ratio * advantage;
    double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage;
    return unclipped <= clipped ? unclipped : 0.0;
}

// surrogate - vf_coef*(V - return_target)^2 + ent_coef*H, to be ascended
inline double ppo_record_objective(const PolicyValueParams& params, const RolloutRecord& rec,
                                   double clip, double vf_coef, double ent_coef) {
    PolicyEval pe = policy_forward(params, rec.obs);
    double ratio = std::exp(pe.log_probs[rec.action] - rec.log_prob_old);
    double unclipped = ratio * rec.advantage;
    double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * rec.advantage;
    double surrogate = std::min(unclipped, clipped);
    double v = value_forward(params, rec.obs);
    double verr = v - rec.return_target;
    double obj = surrogate - vf_coef * verr * verr;
    if (ent_coef != 0.0) {
        Vec p = pe.log_probs.array().exp();
        obj += ent_coef * -(p.array() * pe.log_probs.array()).sum();
    }
    if (!std::isfinite(obj)) throw NonFiniteError("ppo_record_objective: non-finite");
    return obj;
}

// Output-space gradient of the per-record objective (ascent direction).
// advantage_override lets the update loop apply minibatch advantage
// normalization without touching the stored record.
inline void ppo_output_grad(const Vec& log_probs, double value, const RolloutRecord& rec,
                            double clip, double vf_coef, double ent_coef,
                            double advantage_override, Vec& d_logits, double& d_value) {
    double ratio = std::exp(log_probs[rec.action] - rec.log_prob_old);
    double dlogp = clipped_surrogate_dlogp(ratio, advantage_override, clip);
    Vec p = log_probs.array().exp();
    d_logits = -dlogp * p;
    d_logits[rec.action] += dlogp;
    if (ent_coef != 0.0) {
        double h = -(p.array() * log_probs.array()).sum();
        d_logits += ent_coef * (-p.array() * (log_probs.array() + h)).matrix();
    }
    d_value = -2.0 * vf_coef * (value - rec.return_target);
}

// per_sample_grad adapter for one record's PPO objective
struct PpoRecordObjective final : OutputObjective {
    const RolloutRecord* rec;
    double clip, vf_coef, ent_coef;

    PpoRecordObjective(const RolloutRecord& r, const PpoConfig& cfg)
        : rec(&r), clip(cfg.clip_range), vf_coef(cfg.vf_coef), ent_coef(cfg.ent_coef) {}

    double value(const Vec& logits, double v) const override {
        Vec lp = log_softmax(logits);
        double ratio = std::exp(lp[rec->action] - rec->log_prob_old);
        double unclipped = ratio * rec->advantage;
        double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * rec->advantage;
        double verr = v - rec->return_target;
        double obj = std::min(unclipped, clipped) - vf_coef * verr * verr;
        if (ent_coef != 0.0) {
            Vec p = lp.array().exp();
            obj += ent_coef * -(p.array() * lp.array()).sum();
        }
        return obj;
    }

    void output_grad(const Vec& logits, double v, Vec& d_logits, double& d_value) const override {
        ppo_output_grad(log_softmax(logits), v, *rec, clip, vf_coef, ent_coef, rec->advantage,
                        d_logits, d_value);
    }
};

enum class TraceMode { None, Memberships, Checkpoints };

// Per optimization step: minibatch membership and (in Checkpoints mode) the
// parameter snapshot the step's gradients were evaluated at.
struct StepTrace {
    struct Step {
        std::vector<int> record_ids;
        std::optional<PolicyValueParams> params_before;
    };
    std::vector<Step> steps;
};

struct PpoUpdateResult {
    PolicyValueParams params;
    StepTrace trace;
};

// n_epochs passes of shuffled minibatches; each step ascends the mean
// per-record objective via sgd_step on its negation. With sample_weights set
// (TD reweighting), epochs draw n weighted samples with replacement instead
// of shuffling.
inline PpoUpdateResult ppo_update(const PolicyValueParams& start, const RolloutBuffer& buffer,
                                  const PpoConfig& cfg, Rng& rng,
                                  TraceMode trace_mode = TraceMode::None,
                                  const std::vector<double>* sample_weights = nullptr) {
    const int n = buffer.size();
    if (n == 0) throw NoRecordsError("ppo_update: empty buffer");
    if (sample_weights && static_cast<int>(sample_weights->size()) != n)
        throw ShapeMismatchError("ppo_update: weights misaligned");

    const int obs_dim = static_cast<int>(buffer.records[0].obs.size());
    Mat all_obs(n, obs_dim);
    for (int i = 0; i < n; ++i) all_obs.row(i) = buffer.records[i].obs.transpose();

    Vec weight_vec;
    if (sample_weights)
        weight_vec = Eigen::Map<const Vec>(sample_weights->data(), n);

    PpoUpdateResult out;
    out.params = start;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
        if (sample_weights) {
            for (int i = 0; i < n; ++i) order[i] = rng.categorical(weight_vec);
        } else {
            rng.shuffle(order);
        }
        for (int begin = 0; begin < n; begin += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n - begin);
            Mat xb(bs, obs_dim);
            for (int i = 0; i < bs; ++i) xb.row(i) = all_obs.row(order[begin + i]);

            MlpCache pcache, vcache;
            Mat logits = mlp_forward(out.params.policy, xb, &pcache);
            Mat values = mlp_forward(out.params.value, xb, &vcache);

            double adv_mean = 0.0, adv_std = 1.0;
            // a singleton minibatch would normalize its advantage to zero
            const bool normalize = cfg.normalize_advantage && bs > 1;
            if (normalize) {
                double s = 0.0, s2 = 0.0;
                for (int i = 0; i < bs; ++i) {
                    double a = buffer.records[order[begin + i]].advantage;
                    s += a;
                    s2 += a * a;
                }
                adv_mean = s / bs;
                adv_std = std::sqrt(std::max(0.0, s2 / bs - adv_mean * adv_mean)) + 1e-8;
            }

            // loss gradients = -(1/bs) * objective gradients
            Mat d_logits(bs, logits.cols());
            Mat d_values(bs, 1);
            for (int i = 0; i < bs; ++i) {
                const RolloutRecord& rec = buffer.records[order[begin + i]];
                Vec lp = log_softmax(logits.row(i).transpose());
                double adv = normalize ? (rec.advantage - adv_mean) / adv_std : rec.advantage;
                Vec dl;
                double dv = 0.0;
                ppo_output_grad(lp, values(i, 0), rec, cfg.clip_range, cfg.vf_coef,
                                cfg.ent_coef, adv, dl, dv);
                d_logits.row(i) = (-1.0 / bs) * dl.transpose();
                d_values(i, 0) = (-1.0 / bs) * dv;
            }

            Vec gp = mlp_backward(out.params.policy, pcache, d_logits);
            Vec gv = mlp_backward(out.params.value, vcache, d_values);
            GradVector g = GradVector::assemble(out.params, gp, gv);
            if (!g.v.allFinite())
                throw NonFiniteError("ppo_update: non-finite gradient at round " +
                                     std::to_string(buffer.round) + ", step " +
                                     std::to_string(out.trace.steps.size()) + ", epoch " +
                                     std::to_string(epoch));

            if (trace_mode != TraceMode::None) {
                StepTrace::Step st;
                st.record_ids.reserve(bs);
                for (int i = 0; i < bs; ++i)
                    st.record_ids.push_back(buffer.records[order[begin + i]].record_id);
                if (trace_mode == TraceMode::Checkpoints) st.params_before = out.params;
                out.trace.steps.push_back(std::move(st));
            }

            out.params = sgd_step(out.params, g, cfg.lr, cfg.max_grad_norm);
            out.params.step += 1;
        }
    }
    out.params.round = start.round + 1;
    out.params.step = 0;
    return out;
}

// Mean stochastic return over episodes; per-episode RNG streams are derived
// from the given seed and summed in episode order, so the result is
// deterministic and independent of any execution interleaving.
inline double evaluate(const PolicyValueParams& params, const Env& env_proto, int episodes,
                       std::uint64_t eval_seed) {
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
        Rng ep_rng(derive_seed(eval_seed, "episode", static_cast<std::uint64_t>(e)));
        auto env = env_proto.clone();
        Vec obs = env->reset(static_cast<std::uint64_t>(e));
        double ep_return = 0.0;
        while (true) {
            PolicyEval pe = policy_forward(params, obs);
            Vec probs = pe.log_probs.array().exp();
            int action = ep_rng.categorical(probs);
            StepResult sr = env->step(action);
            ep_return += sr.reward;
            if (sr.done || sr.truncated) break;
            obs = sr.next_obs;
        }
        total += ep_return;
    }
    return total / episodes;
}

}  // namespace iifrl
