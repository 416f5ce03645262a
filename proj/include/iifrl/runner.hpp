#pragma once

#include <chrono>
#include <future>
#include <map>
#include <string>
#include <vector>

#include "iifrl/config.hpp"
#include "iifrl/diagnostics.hpp"
#include "iifrl/filtering.hpp"
#include "iifrl/io.hpp"
#include "iifrl/metrics.hpp"

namespace iifrl {

inline std::string checkpoint_name(int round) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "round_%04d.bin", round);
    return buf;
}

struct CellResult {
    RunLog log;
    bool ok = false;
    std::string error;
    std::vector<std::string> files;  // relative to the cell dir
};

// One (strategy, seed) training run. All randomness derives from the master
// seed through per-round labeled streams, so a run interrupted after round R
// resumes from its checkpoint bit-exactly.
inline CellResult run_cell(const ExperimentConfig& cfg, RunStrategy strat, int seed,
                           const fs::path& cell_dir,
                           const std::vector<int>* paired_counts = nullptr) {
    using clock = std::chrono::steady_clock;
    CellResult result;
    result.log.label = strategy_name(strat);
    result.log.seed = seed;
    try {
        fs::create_directories(cell_dir);
        const std::uint64_t master = static_cast<std::uint64_t>(seed);
        auto env = make_env(cfg.env, cfg.chain_len);
        const PpoConfig& pc = cfg.ppo;
        const double p = cfg.resolved_p();

        Rng init_rng(derive_seed(master, "init"));
        PolicyValueParams params =
            make_policy_value(env->spec().obs_dim, env->spec().n_actions, pc.hidden_size, init_rng);

        const fs::path log_path = cell_dir / "runlog.csv";
        const fs::path ckpt_dir = cell_dir / "checkpoints";
        if (cfg.save_checkpoints) fs::create_directories(ckpt_dir);

        int start_round = 1;
        if (fs::exists(log_path)) {
            RunLog existing = read_runlog_csv(log_path);
            int last = existing.rows.empty() ? 0 : existing.rows.back().round;
            fs::path last_ckpt = ckpt_dir / checkpoint_name(last);
            if (last > 0 && last < pc.total_rounds && fs::exists(last_ckpt)) {
                params = load_params(last_ckpt);
                result.log.rows = existing.rows;
                start_round = last + 1;
            } else if (last >= pc.total_rounds) {
                result.log.rows = existing.rows;
                start_round = pc.total_rounds + 1;
            } else {
                fs::remove(log_path);  // unusable partial state, start over
            }
        }
        if (start_round == 1) {
            write_text_file(log_path, runlog_csv_header() + "\n");
            if (cfg.save_checkpoints) save_params(ckpt_dir / checkpoint_name(0), params);
        }

        for (int k = start_round; k <= pc.total_rounds; ++k) {
            Rng collect_rng(derive_seed(master, "collect", k));
            Rng update_rng(derive_seed(master, "update", k));
            RunLogRow row;
            row.round = k;

            auto t0 = clock::now();
            if (strat == RunStrategy::Iif) {
                IifRoundResult r = iif_round(*env, params, pc, p, collect_rng, update_rng, k);
                params = r.params;
                row.n_filtered = r.n_filtered;
                row.wall_ms_collect = r.ms_collect;
                row.wall_ms_influence = r.ms_influence;
                row.wall_ms_optimize = r.ms_optimize;
                if (cfg.save_influence) {
                    std::string name = "influence_round_" + std::to_string(k) + ".json";
                    write_influence_report(cell_dir / name, r.report);
                    result.files.push_back(name);
                }
            } else {
                RolloutBuffer buffer = collect_rollout(*env, params, pc, collect_rng, k);
                auto t1 = clock::now();
                RolloutBuffer filtered;
                const std::vector<double>* weights = nullptr;
                std::vector<double> td_weights;
                switch (strat) {
                    case RunStrategy::Standard:
                        filtered = std::move(buffer);
                        break;
                    case RunStrategy::Random: {
                        int count;
                        if (paired_counts && k - 1 < static_cast<int>(paired_counts->size()))
                            count = (*paired_counts)[k - 1];
                        else if (cfg.random_drop_count >= 0)
                            count = std::min(cfg.random_drop_count, buffer.size());
                        else
                            count = static_cast<int>(std::lround(p * 0.5 * buffer.size()));
                        Rng drop_rng(derive_seed(master, "random_filter", k));
                        filtered = random_filter(buffer, count, drop_rng);
                        break;
                    }
                    case RunStrategy::Adv1:
                    case RunStrategy::Adv2: {
                        McAdvantageTable table = mc_advantage(*env, buffer, pc.gamma, 1);
                        std::vector<double> a_bar = a_bar_for_records(*env, buffer, table);
                        filtered = advantage_heuristic_filter(
                            buffer, a_bar, strat == RunStrategy::Adv1 ? 1 : 2, p);
                        break;
                    }
                    case RunStrategy::Td:
                        td_weights = td_rank_weights(buffer, pc.gamma, cfg.td_alpha);
                        weights = &td_weights;
                        filtered = std::move(buffer);
                        break;
                    case RunStrategy::Reward:
                        filtered = reward_extremes_filter(buffer, p);
                        break;
                    default:
                        throw Error("run_cell: unhandled strategy");
                }
                auto t2 = clock::now();
                params = ppo_update(params, filtered, pc, update_rng, TraceMode::None, weights)
                             .params;
                auto t3 = clock::now();
                row.n_filtered = pc.n_steps - filtered.size();
                row.wall_ms_collect = std::chrono::duration<double, std::milli>(t1 - t0).count();
                row.wall_ms_influence =
                    std::chrono::duration<double, std::milli>(t2 - t1).count();
                row.wall_ms_optimize = std::chrono::duration<double, std::milli>(t3 - t2).count();
            }

            row.test_return =
                evaluate(params, *env, cfg.eval_episodes, derive_seed(master, "eval", k));
            result.log.rows.push_back(row);

            std::ofstream os(log_path, std::ios::app);
            os << runlog_row_csv(row) << "\n";
            os.close();
            if (cfg.save_checkpoints) save_params(ckpt_dir / checkpoint_name(k), params);

            if (cfg.stop_after_round > 0 && k >= cfg.stop_after_round) break;
        }

        result.files.insert(result.files.begin(), "runlog.csv");
        if (cfg.save_checkpoints) {
            int upto = result.log.rows.empty() ? 0 : result.log.rows.back().round;
            for (int k = 0; k <= upto; ++k)
                result.files.push_back("checkpoints/" + checkpoint_name(k));
        }
        result.ok = true;
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
    }
    return result;
}

struct MatrixResult {
    bool all_ok = true;
    std::map<std::pair<std::string, int>, CellResult> cells;
    fs::path manifest_path;
};

inline fs::path cell_dir_for(const fs::path& out_root, RunStrategy s, int seed) {
    return out_root / (std::string(strategy_name(s)) + "_seed" + std::to_string(seed));
}

// Full strategy x seed matrix. Within a seed the IIF cell runs before the
// random cell so the random baseline can drop the same per-round counts;
// seeds fan out across workers.
inline MatrixResult run_matrix(const ExperimentConfig& cfg, const ConfigValues& values) {
    MatrixResult result;
    fs::create_directories(cfg.output_dir);
    const fs::path out_root = cfg.output_dir;
    write_text_file(out_root / "config.txt", config_echo(values, cfg));

    std::vector<RunStrategy> order = cfg.strategies;
    std::stable_sort(order.begin(), order.end(), [](RunStrategy a, RunStrategy b) {
        return (a == RunStrategy::Iif) > (b == RunStrategy::Iif);
    });

    auto run_seed_group = [&](int seed) {
        std::map<std::pair<std::string, int>, CellResult> group;
        std::vector<int> iif_counts;
        for (RunStrategy s : order) {
            const std::vector<int>* paired =
                (s == RunStrategy::Random && !iif_counts.empty()) ? &iif_counts : nullptr;
            CellResult r = run_cell(cfg, s, seed, cell_dir_for(out_root, s, seed), paired);
            if (s == RunStrategy::Iif && r.ok)
                for (const auto& row : r.log.rows) iif_counts.push_back(row.n_filtered);
            group[{strategy_name(s), seed}] = std::move(r);
        }
        return group;
    };

    if (cfg.workers <= 1 || cfg.seeds.size() == 1) {
        for (int seed : cfg.seeds)
            for (auto& [key, cell] : run_seed_group(seed)) result.cells[key] = std::move(cell);
    } else {
        std::vector<std::future<std::map<std::pair<std::string, int>, CellResult>>> futures;
        std::size_t next = 0;
        while (next < cfg.seeds.size()) {
            while (static_cast<int>(futures.size()) < cfg.workers && next < cfg.seeds.size())
                futures.push_back(std::async(std::launch::async, run_seed_group,
                                             cfg.seeds[next++]));
            for (auto& f : futures)
                for (auto& [key, cell] : f.get()) result.cells[key] = std::move(cell);
            futures.clear();
        }
    }

    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["config_hash"] = fnv1a64_hex(config_echo(values, cfg));
    manifest["cells"] = nlohmann::json::array();
    for (auto& [key, cell] : result.cells) {
        nlohmann::json c;
        c["strategy"] = key.first;
        c["seed"] = key.second;
        c["status"] = cell.ok ? "ok" : "error";
        if (!cell.ok) {
            c["error"] = cell.error;
            result.all_ok = false;
        }
        c["files"] = nlohmann::json::array();
        fs::path dir = cell_dir_for(out_root, strategy_from_name(key.first), key.second);
        for (const auto& rel : cell.files) {
            nlohmann::json f;
            f["path"] = (fs::path(key.first + "_seed" + std::to_string(key.second)) / rel)
                            .generic_string();
            f["hash"] = file_hash(dir / rel);
            c["files"].push_back(f);
        }
        manifest["cells"].push_back(c);
    }
    result.manifest_path = out_root / "manifest.json";
    write_text_file(result.manifest_path, manifest.dump(2) + "\n");
    return result;
}

struct InterventionRow {
    int round = 0;
    int seed = 0;
    double delta_return = 0.0;
    int n_removed = 0;
    double base_return = 0.0;
    double filtered_return = 0.0;
};

// Per-round independent interventions along a standard training trajectory;
// the trajectory itself advances with branch A (the unfiltered update), so it
// matches a plain training run of the same seed.
inline std::vector<InterventionRow> run_interventions(const ExperimentConfig& cfg, int round_lo,
                                                      int round_hi, InterventionDrop drop) {
    std::vector<InterventionRow> rows;
    for (int seed : cfg.seeds) {
        const std::uint64_t master = static_cast<std::uint64_t>(seed);
        auto env = make_env(cfg.env, cfg.chain_len);
        Rng init_rng(derive_seed(master, "init"));
        PolicyValueParams params = make_policy_value(env->spec().obs_dim, env->spec().n_actions,
                                                     cfg.ppo.hidden_size, init_rng);
        for (int k = 1; k <= round_hi; ++k) {
            if (k >= round_lo) {
                InterventionResult r = single_round_intervention(*env, params, cfg.ppo, master,
                                                                 k, cfg.eval_episodes, drop);
                rows.push_back({k, seed, r.delta_return, r.n_removed, r.base_return,
                                r.filtered_return});
                params = r.base_params;
            } else {
                Rng collect_rng(derive_seed(master, "collect", k));
                Rng update_rng(derive_seed(master, "update", k));
                RolloutBuffer buffer = collect_rollout(*env, params, cfg.ppo, collect_rng, k);
                params = ppo_update(params, buffer, cfg.ppo, update_rng).params;
            }
        }
    }
    return rows;
}

inline void write_interventions_csv(const fs::path& path,
                                    const std::vector<InterventionRow>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os << "round,seed,delta_return,n_removed,base_return,filtered_return\n";
    for (const auto& r : rows)
        os << r.round << "," << r.seed << "," << format_double(r.delta_return) << ","
           << r.n_removed << "," << format_double(r.base_return) << ","
           << format_double(r.filtered_return) << "\n";
}

// ---- diagnose: rebuild a round's buffer from a finished cell ----

struct CellHandle {
    fs::path dir;
    ExperimentConfig cfg;
    int seed = 0;
    int last_round = 0;
};

inline CellHandle open_cell(const fs::path& cell_dir, const fs::path& config_path, int seed) {
    CellHandle h;
    h.dir = cell_dir;
    h.seed = seed;
    ConfigValues values;
    parse_config_text(read_text_file(config_path), "file", values);
    h.cfg = resolve_config(values);
    RunLog log = read_runlog_csv(cell_dir / "runlog.csv");
    h.last_round = log.rows.empty() ? 0 : log.rows.back().round;
    return h;
}

inline PolicyValueParams cell_checkpoint(const CellHandle& h, int round) {
    return load_params(h.dir / "checkpoints" / checkpoint_name(round));
}

// buffer that round k's update trained on (before any filtering)
inline RolloutBuffer rebuild_buffer(const CellHandle& h, int round,
                                    const PolicyValueParams& params_before) {
    auto env = make_env(h.cfg.env, h.cfg.chain_len);
    Rng collect_rng(derive_seed(static_cast<std::uint64_t>(h.seed), "collect", round));
    return collect_rollout(*env, params_before, h.cfg.ppo, collect_rng, round);
}

inline void write_mismatch_csv(const fs::path& path, const std::vector<MismatchRow>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os << "rank,record_id,influence,a_hat,a_bar,oracle_defined,abs_err,sign_agree,product\n";
    for (const auto& r : rows) {
        os << r.rank << "," << r.record_id << "," << format_double(r.influence) << ","
           << format_double(r.a_hat) << ",";
        if (r.oracle_defined)
            os << format_double(r.a_bar) << ",1," << format_double(r.abs_err) << ","
               << (r.sign_agree ? 1 : 0) << "," << format_double(r.product) << "\n";
        else
            os << "nan,0,nan,0,nan\n";
    }
}

struct RoughnessRow {
    int round = 0;
    double value = 0.0;
    int n_nodes = 0;
    int n_edges = 0;
    bool computed = false;
};

inline void write_roughness_csv(const fs::path& path, const std::vector<RoughnessRow>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os << "round,roughness,n_nodes,n_edges\n";
    for (const auto& r : rows) {
        if (r.computed)
            os << r.round << "," << format_double(r.value) << "," << r.n_nodes << ","
               << r.n_edges << "\n";
        else
            os << r.round << ",nan,0,0\n";
    }
}

// ---- report: Fig-5(b)-style summary over a bench directory ----

struct ReportRow {
    std::string strategy;
    int n_seeds = 0;
    SeedStats se_ave, se_peak, rt_peak_stats, final_return;
};

inline std::vector<ReportRow> summarize_bench(const fs::path& bench_dir,
                                              const std::vector<std::string>& strategies,
                                              const std::vector<int>& seeds) {
    std::map<int, RunLog> std_logs;
    for (int seed : seeds) {
        fs::path p = bench_dir / ("standard_seed" + std::to_string(seed)) / "runlog.csv";
        std_logs[seed] = read_runlog_csv(p);
    }
    std::vector<ReportRow> rows;
    for (const auto& strat : strategies) {
        if (strat == "standard") continue;
        std::vector<double> ave, peak, rt, fin;
        for (int seed : seeds) {
            fs::path p = bench_dir / (strat + "_seed" + std::to_string(seed)) / "runlog.csv";
            if (!fs::exists(p)) continue;
            RunLog log = read_runlog_csv(p);
            SeMetrics se = se_metrics(std_logs[seed], log);
            ave.push_back(se.se_ave);
            peak.push_back(se.se_peak);
            rt.push_back(rt_peak(std_logs[seed], log));
            fin.push_back(log.rows.back().test_return);
        }
        if (ave.empty()) continue;
        ReportRow row;
        row.strategy = strat;
        row.n_seeds = static_cast<int>(ave.size());
        auto stats_or_single = [](const std::vector<double>& v) {
            if (v.size() >= 2) return seed_stats(v);
            SeedStats s;
            s.mean = v[0];
            return s;
        };
        row.se_ave = stats_or_single(ave);
        row.se_peak = stats_or_single(peak);
        row.rt_peak_stats = stats_or_single(rt);
        row.final_return = stats_or_single(fin);
        rows.push_back(row);
    }
    return rows;
}

inline void write_report_csv(const fs::path& path, const std::string& env,
                             const std::vector<ReportRow>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os << "env,strategy,n_seeds,metric,mean,ci_half_width\n";
    for (const auto& r : rows) {
        auto line = [&](const char* metric, const SeedStats& s) {
            os << env << "," << r.strategy << "," << r.n_seeds << "," << metric << ","
               << format_double(s.mean) << "," << format_double(s.ci_half_width) << "\n";
        };
        line("se_ave_pct", r.se_ave);
        line("se_peak_pct", r.se_peak);
        line("rt_peak_pct", r.rt_peak_stats);
        line("final_return", r.final_return);
    }
}

inline std::string report_pretty(const std::string& env, const std::vector<ReportRow>& rows) {
    char buf[256];
    std::string out = "environment: " + env + "\n";
    std::snprintf(buf, sizeof(buf), "%-14s", "metric");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), " %20s", r.strategy.c_str());
        out += buf;
    }
    out += "\n";
    auto line = [&](const char* name, auto get) {
        std::snprintf(buf, sizeof(buf), "%-14s", name);
        out += buf;
        for (const auto& r : rows) {
            SeedStats s = get(r);
            std::snprintf(buf, sizeof(buf), " %12.2f +- %5.2f", s.mean, s.ci_half_width);
            out += buf;
        }
        out += "\n";
    };
    line("SE_ave %", [](const ReportRow& r) { return r.se_ave; });
    line("SE_peak %", [](const ReportRow& r) { return r.se_peak; });
    line("RT_peak %", [](const ReportRow& r) { return r.rt_peak_stats; });
    line("final return", [](const ReportRow& r) { return r.final_return; });
    return out;
}

}  // namespace iifrl
