#pragma once

// Test-side oracles, deliberately independent of the library implementation
// paths they check: brute-force finite differences, a linear-solve policy
// evaluation, a dense Dirichlet-energy formula, and a transcription of the
// GAE recursion.

#include <cmath>
#include <functional>
#include <vector>

#include "iifrl/env.hpp"
#include "iifrl/nn.hpp"

namespace oracles {

using iifrl::Env;
using iifrl::Mat;
using iifrl::PolicyValueParams;
using iifrl::Vec;

// central finite differences of f over the concatenated (policy, value)
// parameter vector
inline Vec fd_gradient(const PolicyValueParams& params,
                       const std::function<double(const PolicyValueParams&)>& f,
                       double h = 1e-6) {
    PolicyValueParams p = params;
    const auto np = p.policy.theta.size();
    const auto nv = p.value.theta.size();
    Vec grad(np + nv);
    for (Eigen::Index i = 0; i < np + nv; ++i) {
        double& slot = i < np ? p.policy.theta[i] : p.value.theta[i - np];
        const double orig = slot;
        slot = orig + h;
        double fp = f(p);
        slot = orig - h;
        double fm = f(p);
        slot = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

// Per-entry relative error with a floor tied to the gradient's scale: central
// differences at h=1e-6 carry ~1e-10 absolute noise, so entries far below the
// vector's magnitude would otherwise report spurious relative error.
inline double max_relative_error(const Vec& got, const Vec& want) {
    double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < got.size(); ++i) {
        double denom = std::max(std::abs(want[i]), 1e-4 * scale);
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    return worst;
}

// Exact policy evaluation on a deterministic tabular MDP under a stochastic
// policy: solves V = R_pi + gamma P_pi V directly, then Q and A from one
// backup. pi(s) gives action probabilities at state s.
struct DpTables {
    Vec v;
    Mat q;
    Mat a;
};

inline DpTables dp_policy_evaluation(const Env& env,
                                     const std::function<Vec(int)>& pi, double gamma) {
    const auto states = env.enumerate_states();
    const int ns = static_cast<int>(states.size());
    const int na = env.spec().n_actions;

    Mat m = Mat::Zero(ns, ns);
    Vec b = Vec::Zero(ns);
    for (int s = 0; s < ns; ++s) {
        m(s, s) = 1.0;
        if (env.is_terminal_state(s)) continue;
        Vec probs = pi(s);
        for (int a = 0; a < na; ++a) {
            auto t = env.probe(s, a);
            b[s] += probs[a] * t.reward;
            if (!t.done) m(s, t.next_state) -= probs[a] * gamma;
        }
    }
    DpTables out;
    out.v = m.partialPivLu().solve(b);
    out.q = Mat::Zero(ns, na);
    out.a = Mat::Zero(ns, na);
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a) {
            if (env.is_terminal_state(s)) continue;
            auto t = env.probe(s, a);
            out.q(s, a) = t.reward + (t.done ? 0.0 : gamma * out.v[t.next_state]);
            out.a(s, a) = out.q(s, a) - out.v[s];
        }
    }
    return out;
}

// Dense roughness over every node pair (i<j) with Gaussian weights; used to
// cross-check the kNN-graph implementation on complete graphs.
inline double dense_roughness(const Mat& embeddings, const Vec& values, double sigma) {
    double num = 0.0, den = 0.0;
    const int n = static_cast<int>(values.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double d2 = (embeddings.row(i) - embeddings.row(j)).squaredNorm();
            double w = std::exp(-d2 / (sigma * sigma));
            num += w * (values[i] - values[j]) * (values[i] - values[j]);
            den += w;
        }
    }
    return num / den;
}

// plain transcription of the GAE recursion, kept independent of compute_gae
inline std::vector<double> gae_reference(const std::vector<double>& rewards,
                                         const std::vector<double>& values,
                                         const std::vector<bool>& dones, double bootstrap,
                                         double gamma, double lam) {
    const int n = static_cast<int>(rewards.size());
    std::vector<double> adv(n, 0.0);
    double next_adv = 0.0;
    for (int t = n - 1; t >= 0; --t) {
        double next_v = t == n - 1 ? bootstrap : values[t + 1];
        double nonterm = dones[t] ? 0.0 : 1.0;
        double delta = rewards[t] + gamma * next_v * nonterm - values[t];
        adv[t] = delta + gamma * lam * nonterm * next_adv;
        next_adv = adv[t];
    }
    return adv;
}

}  // namespace oracles
