#pragma once

#include <algorithm>
#include <array>
#include <memory>
#include <string>
#include <vector>

#include "iifrl/common.hpp"

namespace iifrl {

enum class EnvId { FrozenLake4x4, EmptyGrid8x8, ChainMdp };

struct EnvSpec {
    EnvId id;
    std::string name;
    int max_steps;
    double gamma_default;
    int obs_dim;
    int n_actions;
    bool tabular;
};

struct StepResult {
    Vec next_obs;
    double reward = 0.0;
    bool done = false;
    bool truncated = false;
};

// Transition probe for tabular environments (used by DP/MC oracles).
struct Transition {
    int next_state = 0;
    double reward = 0.0;
    bool done = false;
};

// Deterministic, seedable MDPs behind a uniform interface. Instances are
// single-owner mutable state; clone() gives independent copies for parallel
// evaluation.
class Env {
public:
    virtual ~Env() = default;

    virtual const EnvSpec& spec() const = 0;
    virtual Vec reset(std::uint64_t seed) = 0;
    virtual StepResult step(int action) = 0;
    virtual std::unique_ptr<Env> clone() const = 0;

    // Tabular introspection; non-tabular environments throw NotTabular.
    virtual std::vector<int> enumerate_states() const {
        throw NotTabularError(spec().name + ": not tabular");
    }
    virtual Vec obs_for_state(int) const {
        throw NotTabularError(spec().name + ": not tabular");
    }
    virtual bool is_terminal_state(int) const {
        throw NotTabularError(spec().name + ": not tabular");
    }
    // deterministic dynamics lookup, independent of the live episode state
    virtual Transition probe(int, int) const {
        throw NotTabularError(spec().name + ": not tabular");
    }
    virtual int state_index_of(const Vec& obs) const {
        (void)obs;
        throw NotTabularError(spec().name + ": not tabular");
    }

protected:
    static int argmax_onehot(const Vec& obs) {
        Eigen::Index i = 0;
        obs.maxCoeff(&i);
        return static_cast<int>(i);
    }
};

// Standard 4x4 layout: S at 0, holes at 5/7/11/12, goal at 15, slippery off.
// Actions follow the Gymnasium order {Left, Down, Right, Up}.
class FrozenLake final : public Env {
public:
    FrozenLake() {
        spec_ = {EnvId::FrozenLake4x4, "frozenlake", 100, 0.99, 16, 4, true};
    }

    const EnvSpec& spec() const override { return spec_; }

    Vec reset(std::uint64_t) override {
        state_ = 0;
        steps_ = 0;
        finished_ = false;
        return obs_for_state(state_);
    }

    StepResult step(int action) override {
        if (finished_) throw StepAfterDoneError("frozenlake: step after terminal");
        Transition t = probe(state_, action);
        state_ = t.next_state;
        ++steps_;
        StepResult r;
        r.next_obs = obs_for_state(state_);
        r.reward = t.reward;
        r.done = t.done;
        r.truncated = !t.done && steps_ >= spec_.max_steps;
        finished_ = r.done || r.truncated;
        return r;
    }

    std::unique_ptr<Env> clone() const override { return std::make_unique<FrozenLake>(*this); }

    std::vector<int> enumerate_states() const override {
        std::vector<int> s(16);
        for (int i = 0; i < 16; ++i) s[i] = i;
        return s;
    }

    Vec obs_for_state(int state) const override {
        Vec v = Vec::Zero(16);
        v[state] = 1.0;
        return v;
    }

    bool is_terminal_state(int state) const override {
        return state == 15 || is_hole(state);
    }

    Transition probe(int state, int action) const override {
        int x = state % 4, y = state / 4;
        switch (action) {
            case 0: x = std::max(0, x - 1); break;   // left
            case 1: y = std::min(3, y + 1); break;   // down
            case 2: x = std::min(3, x + 1); break;   // right
            case 3: y = std::max(0, y - 1); break;   // up
            default: throw Error("frozenlake: bad action " + std::to_string(action));
        }
        int ns = y * 4 + x;
        Transition t;
        t.next_state = ns;
        t.reward = ns == 15 ? 1.0 : 0.0;
        t.done = ns == 15 || is_hole(ns);
        return t;
    }

    int state_index_of(const Vec& obs) const override { return argmax_onehot(obs); }

private:
    static bool is_hole(int s) { return s == 5 || s == 7 || s == 11 || s == 12; }

    EnvSpec spec_;
    int state_ = 0;
    int steps_ = 0;
    bool finished_ = false;
};

// States 0..len-1 on a line, actions {left, right}, reward 1 on reaching the
// right end, deterministic. Analytically solvable; used as a test oracle.
class ChainMdp final : public Env {
public:
    explicit ChainMdp(int len = 5) : len_(len) {
        spec_ = {EnvId::ChainMdp, "chain", 4 * len, 1.0, len, 2, true};
    }

    const EnvSpec& spec() const override { return spec_; }

    Vec reset(std::uint64_t) override {
        state_ = 0;
        steps_ = 0;
        finished_ = false;
        return obs_for_state(state_);
    }

    StepResult step(int action) override {
        if (finished_) throw StepAfterDoneError("chain: step after terminal");
        Transition t = probe(state_, action);
        state_ = t.next_state;
        ++steps_;
        StepResult r;
        r.next_obs = obs_for_state(state_);
        r.reward = t.reward;
        r.done = t.done;
        r.truncated = !t.done && steps_ >= spec_.max_steps;
        finished_ = r.done || r.truncated;
        return r;
    }

    std::unique_ptr<Env> clone() const override { return std::make_unique<ChainMdp>(*this); }

    std::vector<int> enumerate_states() const override {
        std::vector<int> s(len_);
        for (int i = 0; i < len_; ++i) s[i] = i;
        return s;
    }

    Vec obs_for_state(int state) const override {
        Vec v = Vec::Zero(len_);
        v[state] = 1.0;
        return v;
    }

    bool is_terminal_state(int state) const override { return state == len_ - 1; }

    Transition probe(int state, int action) const override {
        int ns = state;
        if (action == 1)
            ns = std::min(len_ - 1, state + 1);
        else if (action == 0)
            ns = std::max(0, state - 1);
        else
            throw Error("chain: bad action " + std::to_string(action));
        Transition t;
        t.next_state = ns;
        t.done = ns == len_ - 1;
        t.reward = t.done ? 1.0 : 0.0;
        return t;
    }

    int state_index_of(const Vec& obs) const override { return argmax_onehot(obs); }

private:
    EnvSpec spec_;
    int len_;
    int state_ = 0;
    int steps_ = 0;
    bool finished_ = false;
};

// MiniGrid-style empty 8x8 room: border walls, goal in the far corner, agent
// starting at (1,1) facing east. Observation is a flattened 3x7x7 egocentric
// view (channels object/color/state, MiniGrid integer encoding, no occlusion
// mask); the MLP consumes it directly. Reward 1 - 0.9*(step_count/max_steps)
// on reaching the goal, 0 otherwise. Actions: {turn left, turn right, forward,
// pickup, drop, toggle, done}; the last four are no-ops here but consume a step.
class EmptyGrid final : public Env {
public:
    static constexpr int kSize = 8;
    static constexpr int kView = 7;

    EmptyGrid() {
        spec_ = {EnvId::EmptyGrid8x8, "emptygrid", 256, 0.99, 3 * kView * kView, 7, false};
    }

    const EnvSpec& spec() const override { return spec_; }

    Vec reset(std::uint64_t) override {
        x_ = 1;
        y_ = 1;
        dir_ = 0;  // 0=east, 1=south, 2=west, 3=north
        steps_ = 0;
        finished_ = false;
        return encode_view();
    }

    StepResult step(int action) override {
        if (finished_) throw StepAfterDoneError("emptygrid: step after terminal");
        if (action < 0 || action >= spec_.n_actions)
            throw Error("emptygrid: bad action " + std::to_string(action));
        ++steps_;
        StepResult r;
        if (action == 0) {
            dir_ = (dir_ + 3) % 4;
        } else if (action == 1) {
            dir_ = (dir_ + 1) % 4;
        } else if (action == 2) {
            auto [fx, fy] = forward_vec();
            int nx = x_ + fx, ny = y_ + fy;
            if (!is_wall(nx, ny)) {
                x_ = nx;
                y_ = ny;
            }
            if (x_ == kSize - 2 && y_ == kSize - 2) {
                r.done = true;
                r.reward = 1.0 - 0.9 * (static_cast<double>(steps_) / spec_.max_steps);
            }
        }
        r.truncated = !r.done && steps_ >= spec_.max_steps;
        finished_ = r.done || r.truncated;
        r.next_obs = encode_view();
        return r;
    }

    std::unique_ptr<Env> clone() const override { return std::make_unique<EmptyGrid>(*this); }

private:
    static bool is_wall(int x, int y) {
        return x <= 0 || y <= 0 || x >= kSize - 1 || y >= kSize - 1;
    }

    std::pair<int, int> forward_vec() const {
        static constexpr std::array<std::pair<int, int>, 4> d{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
        return d[dir_];
    }

    Vec encode_view() const {
        auto [fx, fy] = forward_vec();
        int rx = -fy, ry = fx;  // right-hand vector
        Vec v = Vec::Zero(spec_.obs_dim);
        for (int vy = 0; vy < kView; ++vy) {
            for (int vx = 0; vx < kView; ++vx) {
                int ahead = (kView - 1) - vy;
                int lateral = vx - kView / 2;
                int wx = x_ + fx * ahead + rx * lateral;
                int wy = y_ + fy * ahead + ry * lateral;
                double obj = 0.0, col = 0.0, sta = 0.0;
                if (wx >= 0 && wy >= 0 && wx < kSize && wy < kSize) {
                    if (is_wall(wx, wy)) {
                        obj = 2.0;
                        col = 5.0;  // grey
                    } else if (wx == kSize - 2 && wy == kSize - 2) {
                        obj = 8.0;
                        col = 1.0;  // green
                    } else {
                        obj = 1.0;
                    }
                }
                int cell = vy * kView + vx;
                v[0 * kView * kView + cell] = obj;
                v[1 * kView * kView + cell] = col;
                v[2 * kView * kView + cell] = sta;
            }
        }
        return v;
    }

    EnvSpec spec_;
    int x_ = 1, y_ = 1, dir_ = 0;
    int steps_ = 0;
    bool finished_ = false;
};

inline std::unique_ptr<Env> make_env(const std::string& id, int chain_len = 5) {
    if (id == "frozenlake") return std::make_unique<FrozenLake>();
    if (id == "emptygrid") return std::make_unique<EmptyGrid>();
    if (id == "chain") return std::make_unique<ChainMdp>(chain_len);
    throw ParseError("unknown env id: " + id);
}

}  // namespace iifrl
