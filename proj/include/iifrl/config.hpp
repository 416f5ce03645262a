#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "iifrl/common.hpp"
#include "iifrl/ppo.hpp"

namespace iifrl {

enum class RunStrategy { Standard, Iif, Random, Adv1, Adv2, Td, Reward };

inline const char* strategy_name(RunStrategy s) {
    switch (s) {
        case RunStrategy::Standard: return "standard";
        case RunStrategy::Iif: return "iif";
        case RunStrategy::Random: return "random";
        case RunStrategy::Adv1: return "adv1";
        case RunStrategy::Adv2: return "adv2";
        case RunStrategy::Td: return "td";
        case RunStrategy::Reward: return "reward";
    }
    return "?";
}

inline RunStrategy strategy_from_name(const std::string& s) {
    for (RunStrategy r : {RunStrategy::Standard, RunStrategy::Iif, RunStrategy::Random,
                          RunStrategy::Adv1, RunStrategy::Adv2, RunStrategy::Td,
                          RunStrategy::Reward})
        if (s == strategy_name(r)) return r;
    throw ParseError("unknown strategy: " + s);
}

struct ExperimentConfig {
    std::string env = "frozenlake";
    int chain_len = 5;
    PpoConfig ppo;
    std::vector<RunStrategy> strategies = {RunStrategy::Standard};
    double p = std::nan("");  // resolved per environment when unset
    double td_alpha = 0.6;
    int random_drop_count = -1;  // <0: paired with IIF, or round(p*0.5*n) fallback
    std::vector<int> seeds = {1};
    int eval_episodes = 1000;
    std::string output_dir;
    bool save_checkpoints = true;
    int workers = 1;
    int min_visits = 3;
    int graph_u = 20;
    bool save_influence = false;
    int stop_after_round = 0;  // dev hook for resume tests; 0 = off

    double resolved_p() const {
        if (!std::isnan(p)) return p;
        return env == "emptygrid" ? 0.125 : 0.5;
    }
};

// key -> (value, provenance), provenance in {default, file, flag}
using ConfigValues = std::map<std::string, std::pair<std::string, std::string>>;

namespace detail {

inline const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "env",          "chain_len",     "n_steps",        "batch_size",
        "n_epochs",     "learning_rate", "clip_range",     "gamma",
        "gae_lambda",   "vf_coef",       "ent_coef",       "max_grad_norm",
        "total_rounds", "seed",          "seeds",          "hidden_size",
        "normalize_advantage",           "strategies",     "p",
        "td_alpha",     "random_drop_count",               "eval_episodes",
        "output_dir",   "save_checkpoints",                "workers",
        "min_visits",   "graph_u",       "stop_after_round",
        "save_influence"};
    return keys;
}

inline bool is_known_key(const std::string& k) {
    for (const auto& key : known_keys())
        if (key == k) return true;
    return false;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError(key + ": not a number: '" + v + "'");
    }
}

inline long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ParseError(key + ": not an integer: '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError(key + ": not a boolean: '" + v + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

// `key = value` lines, '#' comments; later sources override earlier ones.
inline void parse_config_text(const std::string& text, const std::string& provenance,
                              ConfigValues& values) {
    int lineno = 0;
    for (const auto& raw : detail::split(text, '\n')) {
        ++lineno;
        std::string line = raw;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(provenance + " line " + std::to_string(lineno) +
                             ": expected key=value, got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (!detail::is_known_key(key))
            throw UnknownKeyError(provenance + " line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
        values[key] = {value, provenance};
    }
}

inline void set_flag(ConfigValues& values, const std::string& key, const std::string& value) {
    if (!detail::is_known_key(key)) throw UnknownKeyError("flag: unknown key '" + key + "'");
    values[key] = {value, "flag"};
}

// Resolve the merged key/value map onto the typed config with App-defaults
// for everything unset, validating domains as it goes.
inline ExperimentConfig resolve_config(const ConfigValues& values) {
    ExperimentConfig cfg;
    for (const auto& [key, vp] : values) {
        const std::string& v = vp.first;
        if (key == "env") {
            if (v != "frozenlake" && v != "emptygrid" && v != "chain")
                throw ParseError("env: must be frozenlake|emptygrid|chain, got '" + v + "'");
            cfg.env = v;
        } else if (key == "chain_len") {
            cfg.chain_len = static_cast<int>(detail::to_int(key, v));
            if (cfg.chain_len < 2) throw ParseError("chain_len: must be >= 2");
        } else if (key == "n_steps") {
            cfg.ppo.n_steps = static_cast<int>(detail::to_int(key, v));
            if (cfg.ppo.n_steps < 1) throw ParseError("n_steps: must be >= 1");
        } else if (key == "batch_size") {
            cfg.ppo.batch_size = static_cast<int>(detail::to_int(key, v));
            if (cfg.ppo.batch_size < 1) throw ParseError("batch_size: must be >= 1");
        } else if (key == "n_epochs") {
            cfg.ppo.n_epochs = static_cast<int>(detail::to_int(key, v));
            if (cfg.ppo.n_epochs < 1) throw ParseError("n_epochs: must be >= 1");
        } else if (key == "learning_rate") {
            cfg.ppo.lr = detail::to_double(key, v);
            if (cfg.ppo.lr < 0.0) throw ParseError("learning_rate: must be >= 0");
        } else if (key == "clip_range") {
            cfg.ppo.clip_range = detail::to_double(key, v);
            if (cfg.ppo.clip_range <= 0.0 || cfg.ppo.clip_range >= 1.0)
                throw ParseError("clip_range: must be in (0,1)");
        } else if (key == "gamma") {
            cfg.ppo.gamma = detail::to_double(key, v);
            if (cfg.ppo.gamma < 0.0 || cfg.ppo.gamma > 1.0)
                throw ParseError("gamma: must be in [0,1]");
        } else if (key == "gae_lambda") {
            cfg.ppo.gae_lambda = detail::to_double(key, v);
            if (cfg.ppo.gae_lambda < 0.0 || cfg.ppo.gae_lambda > 1.0)
                throw ParseError("gae_lambda: must be in [0,1]");
        } else if (key == "vf_coef") {
            cfg.ppo.vf_coef = detail::to_double(key, v);
        } else if (key == "ent_coef") {
            cfg.ppo.ent_coef = detail::to_double(key, v);
        } else if (key == "max_grad_norm") {
            cfg.ppo.max_grad_norm = detail::to_double(key, v);
        } else if (key == "total_rounds") {
            cfg.ppo.total_rounds = static_cast<int>(detail::to_int(key, v));
            if (cfg.ppo.total_rounds < 1) throw ParseError("total_rounds: must be >= 1");
        } else if (key == "seed") {
            cfg.ppo.seed = static_cast<std::uint64_t>(detail::to_int(key, v));
        } else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& part : detail::split(v, ','))
                cfg.seeds.push_back(static_cast<int>(detail::to_int(key, detail::trim(part))));
            if (cfg.seeds.empty()) throw ParseError("seeds: must be nonempty");
        } else if (key == "hidden_size") {
            cfg.ppo.hidden_size = static_cast<int>(detail::to_int(key, v));
            if (cfg.ppo.hidden_size < 1) throw ParseError("hidden_size: must be >= 1");
        } else if (key == "normalize_advantage") {
            cfg.ppo.normalize_advantage = detail::to_bool(key, v);
        } else if (key == "strategies") {
            cfg.strategies.clear();
            for (const auto& part : detail::split(v, ','))
                cfg.strategies.push_back(strategy_from_name(detail::trim(part)));
        } else if (key == "p") {
            cfg.p = detail::to_double(key, v);
            if (!(cfg.p > 0.0 && cfg.p <= 1.0)) throw ParseError("p: must be in (0,1]");
        } else if (key == "td_alpha") {
            cfg.td_alpha = detail::to_double(key, v);
            if (cfg.td_alpha <= 0.0) throw ParseError("td_alpha: must be > 0");
        } else if (key == "random_drop_count") {
            cfg.random_drop_count = static_cast<int>(detail::to_int(key, v));
        } else if (key == "eval_episodes") {
            cfg.eval_episodes = static_cast<int>(detail::to_int(key, v));
            if (cfg.eval_episodes < 1) throw ParseError("eval_episodes: must be >= 1");
        } else if (key == "output_dir") {
            cfg.output_dir = v;
        } else if (key == "save_checkpoints") {
            cfg.save_checkpoints = detail::to_bool(key, v);
        } else if (key == "workers") {
            cfg.workers = static_cast<int>(detail::to_int(key, v));
            if (cfg.workers < 1) throw ParseError("workers: must be >= 1");
        } else if (key == "min_visits") {
            cfg.min_visits = static_cast<int>(detail::to_int(key, v));
            if (cfg.min_visits < 1) throw ParseError("min_visits: must be >= 1");
        } else if (key == "graph_u") {
            cfg.graph_u = static_cast<int>(detail::to_int(key, v));
            if (cfg.graph_u < 1) throw ParseError("graph_u: must be >= 1");
        } else if (key == "save_influence") {
            cfg.save_influence = detail::to_bool(key, v);
        } else if (key == "stop_after_round") {
            cfg.stop_after_round = static_cast<int>(detail::to_int(key, v));
        }
    }
    if (cfg.output_dir.empty()) {
        const char* root = std::getenv("IIF_OUTPUT_DIR");
        cfg.output_dir = root ? root : "runs";
    }
    return cfg;
}

// canonical text form: every key with its resolved value and provenance
inline std::string config_echo(const ConfigValues& values, const ExperimentConfig& cfg) {
    auto get = [&](const std::string& k, const std::string& fallback) -> std::string {
        auto it = values.find(k);
        if (it != values.end()) return it->second.first + "  # " + it->second.second;
        return fallback + "  # default";
    };
    auto num = [](double d) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%g", d);
        return std::string(buf);
    };
    std::string strategies;
    for (std::size_t i = 0; i < cfg.strategies.size(); ++i)
        strategies += std::string(i ? "," : "") + strategy_name(cfg.strategies[i]);
    std::string seeds;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
        seeds += std::string(i ? "," : "") + std::to_string(cfg.seeds[i]);
    std::string out;
    out += "env = " + get("env", cfg.env) + "\n";
    out += "n_steps = " + get("n_steps", std::to_string(cfg.ppo.n_steps)) + "\n";
    out += "batch_size = " + get("batch_size", std::to_string(cfg.ppo.batch_size)) + "\n";
    out += "n_epochs = " + get("n_epochs", std::to_string(cfg.ppo.n_epochs)) + "\n";
    out += "learning_rate = " + get("learning_rate", num(cfg.ppo.lr)) + "\n";
    out += "clip_range = " + get("clip_range", num(cfg.ppo.clip_range)) + "\n";
    out += "gamma = " + get("gamma", num(cfg.ppo.gamma)) + "\n";
    out += "gae_lambda = " + get("gae_lambda", num(cfg.ppo.gae_lambda)) + "\n";
    out += "vf_coef = " + get("vf_coef", num(cfg.ppo.vf_coef)) + "\n";
    out += "ent_coef = " + get("ent_coef", num(cfg.ppo.ent_coef)) + "\n";
    out += "max_grad_norm = " + get("max_grad_norm", num(cfg.ppo.max_grad_norm)) + "\n";
    out += "total_rounds = " + get("total_rounds", std::to_string(cfg.ppo.total_rounds)) + "\n";
    out += "normalize_advantage = " +
           get("normalize_advantage", cfg.ppo.normalize_advantage ? "true" : "false") + "\n";
    out += "hidden_size = " + get("hidden_size", std::to_string(cfg.ppo.hidden_size)) + "\n";
    out += "strategies = " + get("strategies", strategies) + "\n";
    out += "p = " + get("p", num(cfg.resolved_p())) + "\n";
    out += "td_alpha = " + get("td_alpha", num(cfg.td_alpha)) + "\n";
    out += "seeds = " + get("seeds", seeds) + "\n";
    out += "eval_episodes = " + get("eval_episodes", std::to_string(cfg.eval_episodes)) + "\n";
    out += "output_dir = " + get("output_dir", cfg.output_dir) + "\n";
    return out;
}

}  // namespace iifrl
