#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "iifrl/common.hpp"
#include "iifrl/rng.hpp"

namespace iifrl {

// Dense MLP with tanh hidden activations and an identity output layer.
// Parameters live in one flat vector ([W0, b0, W1, b1, ...], column-major
// weight blocks) so that SGD steps, gradient clipping, checkpointing and
// finite-difference probing are all plain vector operations.
struct Mlp {
    std::vector<int> widths;
    Vec theta;
    std::vector<Eigen::Index> w_off, b_off;

    Mlp() = default;

    explicit Mlp(std::vector<int> ws) : widths(std::move(ws)) {
        Eigen::Index total = 0;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            w_off.push_back(total);
            total += static_cast<Eigen::Index>(widths[l + 1]) * widths[l];
            b_off.push_back(total);
            total += widths[l + 1];
        }
        theta = Vec::Zero(total);
    }

    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }

    Eigen::Map<Mat> weight(int l) {
        return {theta.data() + w_off[l], widths[l + 1], widths[l]};
    }
    Eigen::Map<const Mat> weight(int l) const {
        return {theta.data() + w_off[l], widths[l + 1], widths[l]};
    }
    Eigen::Map<Vec> bias(int l) { return {theta.data() + b_off[l], widths[l + 1]}; }
    Eigen::Map<const Vec> bias(int l) const {
        return {theta.data() + b_off[l], widths[l + 1]};
    }
};

// PyTorch-style orthogonal fill: QR of a standard-normal matrix, sign-fixed
// by the diagonal of R.
inline void orthogonal_fill(Eigen::Map<Mat> w, Rng& rng, double gain) {
    const Eigen::Index rows = w.rows(), cols = w.cols();
    const bool transpose = rows < cols;
    Mat a(transpose ? cols : rows, transpose ? rows : cols);
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ() * Mat::Identity(a.rows(), a.cols());
    Mat r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    w = gain * (transpose ? q.transpose() : q);
}

// hidden layers: gain sqrt(2); output layer: out_gain (0.01 for the policy
// head, 1.0 for the value head); biases zero
inline void init_mlp(Mlp& mlp, Rng& rng, double out_gain) {
    for (int l = 0; l < mlp.layer_count(); ++l) {
        double gain = (l == mlp.layer_count() - 1) ? out_gain : std::sqrt(2.0);
        orthogonal_fill(mlp.weight(l), rng, gain);
        mlp.bias(l).setZero();
    }
}

// Activations cached during a forward pass; acts[0] is the input batch,
// acts[l+1] the output of layer l (post-tanh on hidden layers, raw on the
// last). Rows index samples.
struct MlpCache {
    std::vector<Mat> acts;
};

inline Mat mlp_forward(const Mlp& mlp, const Mat& x, MlpCache* cache = nullptr) {
    require_same_size(x.cols(), mlp.input_dim(), "mlp_forward");
    if (cache) {
        cache->acts.clear();
        cache->acts.push_back(x);
    }
    Mat h = x;
    for (int l = 0; l < mlp.layer_count(); ++l) {
        Mat z = (h * mlp.weight(l).transpose()).rowwise() + mlp.bias(l).transpose();
        h = (l == mlp.layer_count() - 1) ? z : Mat(z.array().tanh());
        if (cache) cache->acts.push_back(h);
    }
    return h;
}

inline Vec mlp_forward_vec(const Mlp& mlp, const Vec& x, std::vector<Vec>* acts = nullptr) {
    require_same_size(x.size(), mlp.input_dim(), "mlp_forward_vec");
    if (acts) {
        acts->clear();
        acts->push_back(x);
    }
    Vec h = x;
    for (int l = 0; l < mlp.layer_count(); ++l) {
        Vec z = mlp.weight(l) * h + mlp.bias(l);
        h = (l == mlp.layer_count() - 1) ? z : Vec(z.array().tanh());
        if (acts) acts->push_back(h);
    }
    return h;
}

// Reverse pass from d(scalar)/d(output) rows; returns the gradient w.r.t.
// theta summed over the batch rows.
inline Vec mlp_backward(const Mlp& mlp, const MlpCache& cache, const Mat& d_out) {
    Vec grad = Vec::Zero(mlp.theta.size());
    Mat g = d_out;
    for (int l = mlp.layer_count() - 1; l >= 0; --l) {
        const Mat& h_in = cache.acts[l];
        Eigen::Map<Mat> dw(grad.data() + mlp.w_off[l], mlp.widths[l + 1], mlp.widths[l]);
        Eigen::Map<Vec> db(grad.data() + mlp.b_off[l], mlp.widths[l + 1]);
        dw = g.transpose() * h_in;
        db = g.colwise().sum();
        if (l > 0) {
            // tanh'(z) = 1 - tanh(z)^2, via the cached activation
            g = (g * mlp.weight(l)).array() * (1.0 - cache.acts[l].array().square());
        }
    }
    return grad;
}

inline Vec mlp_backward_vec(const Mlp& mlp, const std::vector<Vec>& acts, const Vec& d_out) {
    Vec grad = Vec::Zero(mlp.theta.size());
    Vec g = d_out;
    for (int l = mlp.layer_count() - 1; l >= 0; --l) {
        Eigen::Map<Mat> dw(grad.data() + mlp.w_off[l], mlp.widths[l + 1], mlp.widths[l]);
        Eigen::Map<Vec> db(grad.data() + mlp.b_off[l], mlp.widths[l + 1]);
        dw = g * acts[l].transpose();
        db = g;
        if (l > 0) g = (mlp.weight(l).transpose() * g).array() * (1.0 - acts[l].array().square());
    }
    return grad;
}

// Ghost dot products: for each batch row i, the inner product of that row's
// parameter gradient with a fixed target gradient, computed layer by layer as
// delta_l(i)' * (G_l h_{l-1}(i)) without ever materializing the per-row
// outer-product gradients.
inline Vec mlp_ghost_scores(const Mlp& mlp, const MlpCache& cache, const Mat& d_out,
                            const Vec& target_theta) {
    require_same_size(target_theta.size(), mlp.theta.size(), "mlp_ghost_scores");
    Vec scores = Vec::Zero(d_out.rows());
    Mat g = d_out;
    for (int l = mlp.layer_count() - 1; l >= 0; --l) {
        Eigen::Map<const Mat> tw(target_theta.data() + mlp.w_off[l], mlp.widths[l + 1],
                                 mlp.widths[l]);
        Eigen::Map<const Vec> tb(target_theta.data() + mlp.b_off[l], mlp.widths[l + 1]);
        Mat m = cache.acts[l] * tw.transpose();       // B x out_l
        scores += (g.array() * m.array()).rowwise().sum().matrix();
        scores += g * tb;
        if (l > 0) g = (g * mlp.weight(l)).array() * (1.0 - cache.acts[l].array().square());
    }
    return scores;
}

// Separate policy and value networks; value-loss gradients are therefore
// exactly orthogonal to policy-only target gradients. Snapshots are immutable
// values; updates return new snapshots.
struct PolicyValueParams {
    Mlp policy;
    Mlp value;
    int round = 0;
    int step = 0;

    Eigen::Index policy_size() const { return policy.theta.size(); }
    Eigen::Index total_size() const { return policy.theta.size() + value.theta.size(); }
};

inline PolicyValueParams make_policy_value(int obs_dim, int n_actions, int hidden, Rng& rng) {
    PolicyValueParams p;
    p.policy = Mlp({obs_dim, hidden, hidden, n_actions});
    p.value = Mlp({obs_dim, hidden, hidden, 1});
    init_mlp(p.policy, rng, 0.01);
    init_mlp(p.value, rng, 1.0);
    return p;
}

// Flat gradient over both networks; the segment map is the [0, policy_size)
// / [policy_size, end) partition.
struct GradVector {
    Vec v;
    Eigen::Index policy_size = 0;

    auto policy_segment() const { return v.head(policy_size); }
    auto value_segment() const { return v.tail(v.size() - policy_size); }

    static GradVector zeros(const PolicyValueParams& p) {
        return {Vec::Zero(p.total_size()), p.policy_size()};
    }
    static GradVector assemble(const PolicyValueParams& p, const Vec& gp, const Vec& gv) {
        GradVector g{Vec(p.total_size()), p.policy_size()};
        g.v.head(gp.size()) = gp;
        g.v.tail(gv.size()) = gv;
        return g;
    }
};

inline double dot(const GradVector& a, const GradVector& b) {
    require_same_size(a.v.size(), b.v.size(), "dot");
    if (a.policy_size != b.policy_size)
        throw ShapeMismatchError("dot: segment maps disagree");
    return a.v.dot(b.v);
}

inline Vec log_softmax(const Vec& logits) {
    double m = logits.maxCoeff();
    Vec t = logits.array() - m;
    double lse = std::log(t.array().exp().sum());
    return t.array() - lse;
}

struct PolicyEval {
    Vec logits;
    Vec log_probs;
    Vec hidden;  // last hidden activation, used as the record embedding
};

inline PolicyEval policy_forward(const PolicyValueParams& params, const Vec& obs) {
    std::vector<Vec> acts;
    Vec logits = mlp_forward_vec(params.policy, obs, &acts);
    PolicyEval pe;
    pe.logits = std::move(logits);
    pe.log_probs = log_softmax(pe.logits);
    pe.hidden = acts[acts.size() - 2];
    return pe;
}

inline double value_forward(const PolicyValueParams& params, const Vec& obs) {
    return mlp_forward_vec(params.value, obs)[0];
}

// A differentiable scalar function of the two network outputs at one input.
// per_sample_grad composes its output gradient with exact backprop through
// both networks.
struct OutputObjective {
    virtual ~OutputObjective() = default;
    virtual double value(const Vec& logits, double v) const = 0;
    virtual void output_grad(const Vec& logits, double v, Vec& d_logits,
                             double& d_value) const = 0;
};

inline GradVector per_sample_grad(const PolicyValueParams& params, const Vec& obs,
                                  const OutputObjective& objective) {
    std::vector<Vec> pacts, vacts;
    Vec logits = mlp_forward_vec(params.policy, obs, &pacts);
    double v = mlp_forward_vec(params.value, obs, &vacts)[0];
    Vec d_logits;
    double d_value = 0.0;
    objective.output_grad(logits, v, d_logits, d_value);
    Vec gp = mlp_backward_vec(params.policy, pacts, d_logits);
    Vec gv = mlp_backward_vec(params.value, vacts, Vec::Constant(1, d_value));
    GradVector g = GradVector::assemble(params, gp, gv);
    if (!g.v.allFinite()) throw NonFiniteError("per_sample_grad: non-finite gradient");
    return g;
}

// Global-norm clip to max_grad_norm, then theta' = theta - lr * g (descent on
// the loss whose gradient is given).
inline PolicyValueParams sgd_step(const PolicyValueParams& params, const GradVector& loss_grad,
                                  double lr, double max_grad_norm) {
    require_same_size(loss_grad.v.size(), params.total_size(), "sgd_step");
    double norm = loss_grad.v.norm();
    double scale = (max_grad_norm > 0.0 && norm > max_grad_norm) ? max_grad_norm / norm : 1.0;
    PolicyValueParams out = params;
    out.policy.theta -= (lr * scale) * loss_grad.v.head(params.policy_size());
    out.value.theta -= (lr * scale) * loss_grad.v.tail(params.value.theta.size());
    return out;
}

}  // namespace iifrl
