// Command-line front end: train / iif / attribute / intervene / diagnose /
// bench / report over the library. Flags override config-file values; every
// stream of randomness derives from the per-cell master seed.

#include <CLI11.hpp>
#include <iostream>

#include "iifrl/runner.hpp"

using namespace iifrl;

namespace {

struct CommonFlags {
    std::string config_file;
    std::vector<std::string> sets;
    std::string env;
    int rounds = -1;
    int seed = std::numeric_limits<int>::min();
    int seeds_count = -1;
    std::string seed_list;
    double p = -1.0;
    std::string out;
    int eval_episodes = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_file, "config file (key = value lines)");
    cmd->add_option("--set", f.sets, "extra key=value overrides")->take_all();
    cmd->add_option("--env", f.env, "frozenlake|emptygrid|chain");
    cmd->add_option("--rounds", f.rounds, "training rounds");
    cmd->add_option("--seed", f.seed, "base seed");
    cmd->add_option("--seeds", f.seeds_count, "number of seeds (base, base+1, ...)");
    cmd->add_option("--seed-list", f.seed_list, "explicit comma-separated seeds");
    cmd->add_option("--p", f.p, "filter fraction in (0,1]");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--eval-episodes", f.eval_episodes, "evaluation episodes per round");
}

ConfigValues gather_values(const CommonFlags& f) {
    ConfigValues values;
    if (!f.config_file.empty())
        parse_config_text(read_text_file(f.config_file), "file", values);
    for (const auto& kv : f.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("--set expects key=value, got: " + kv);
        set_flag(values, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!f.env.empty()) set_flag(values, "env", f.env);
    if (f.rounds >= 0) set_flag(values, "total_rounds", std::to_string(f.rounds));
    if (f.p >= 0.0) set_flag(values, "p", std::to_string(f.p));
    if (!f.out.empty()) set_flag(values, "output_dir", f.out);
    if (f.eval_episodes >= 0)
        set_flag(values, "eval_episodes", std::to_string(f.eval_episodes));
    if (!f.seed_list.empty()) {
        set_flag(values, "seeds", f.seed_list);
    } else if (f.seeds_count > 0) {
        int base = f.seed == std::numeric_limits<int>::min() ? 1 : f.seed;
        std::string list;
        for (int i = 0; i < f.seeds_count; ++i)
            list += (i ? "," : "") + std::to_string(base + i);
        set_flag(values, "seeds", list);
    } else if (f.seed != std::numeric_limits<int>::min()) {
        set_flag(values, "seeds", std::to_string(f.seed));
    }
    return values;
}

int run_matrix_command(const CommonFlags& flags, const std::string& strategies) {
    ConfigValues values = gather_values(flags);
    if (!strategies.empty()) set_flag(values, "strategies", strategies);
    ExperimentConfig cfg = resolve_config(values);
    std::cout << config_echo(values, cfg);
    MatrixResult res = run_matrix(cfg, values);
    for (const auto& [key, cell] : res.cells) {
        if (cell.ok) {
            double final_ret = cell.log.rows.empty() ? 0.0 : cell.log.rows.back().test_return;
            std::cout << key.first << " seed " << key.second
                      << ": final return " << final_ret << "\n";
        } else {
            std::cerr << key.first << " seed " << key.second << ": FAILED: " << cell.error
                      << "\n";
        }
    }
    std::cout << "manifest: " << res.manifest_path.string() << "\n";
    return res.all_ok ? 0 : 1;
}

// cell directory layout: <out>/<strategy>_seed<k>/; the shared config lives
// one level up
CellHandle open_cell_from_flags(const std::string& run_dir, int seed) {
    fs::path cell = run_dir;
    fs::path config_path = cell / "config.txt";
    if (!fs::exists(config_path)) config_path = cell.parent_path() / "config.txt";
    if (!fs::exists(config_path))
        throw IoError("no config.txt found in or above " + cell.string());
    return open_cell(cell, config_path, seed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PPO training with per-record influence attribution and experience filtering"};
    app.require_subcommand(1);

    CommonFlags train_flags, iif_flags, bench_flags, intervene_flags;
    std::string bench_strategies = "standard,iif,random";

    CLI::App* train = app.add_subcommand("train", "standard PPO training runs");
    add_common(train, train_flags);

    CLI::App* iif = app.add_subcommand("iif", "iterative influence-based filtering runs");
    add_common(iif, iif_flags);

    CLI::App* bench = app.add_subcommand("bench", "strategy x seed comparison matrix");
    add_common(bench, bench_flags);
    bench->add_option("--strategies", bench_strategies,
                      "comma list of standard,iif,random,adv1,adv2,td,reward");

    // attribute
    std::string attr_run, attr_target = "return", attr_mode = "fast", attr_out;
    int attr_round = 1, attr_seed = 1, attr_state = 0, attr_action = 0;
    bool attr_have_state = false;
    CLI::App* attribute =
        app.add_subcommand("attribute", "influence scores for one training round");
    attribute->add_option("--run", attr_run, "cell directory of a finished run")->required();
    attribute->add_option("--round", attr_round, "round K (uses the round's opening params)")
        ->required();
    attribute->add_option("--seed", attr_seed, "seed of the cell")->required();
    attribute->add_option("--target", attr_target, "return|action");
    attribute->add_option("--mode", attr_mode, "fast|full");
    attribute->add_option("--state", attr_state, "state index for the action target")
        ->each([&](const std::string&) { attr_have_state = true; });
    attribute->add_option("--action", attr_action, "action index for the action target");
    attribute->add_option("--out", attr_out, "output JSON path");

    CLI::App* intervene = app.add_subcommand(
        "intervene", "independent single-round interventions along a standard run");
    add_common(intervene, intervene_flags);
    int int_from = 1, int_to = -1;
    std::string int_drop = "influence";
    intervene->add_option("--from", int_from, "first round to intervene on");
    intervene->add_option("--to", int_to, "last round to intervene on");
    intervene->add_option("--drop", int_drop, "influence|random");

    // diagnose
    std::string diag_run, diag_out;
    int diag_round = 5, diag_seed = 1, diag_u = -1;
    bool diag_skip_delta = false;
    CLI::App* diagnose = app.add_subcommand(
        "diagnose", "mismatch, roughness, and delta-return analyses of a finished run");
    diagnose->add_option("--run", diag_run, "cell directory of a finished run")->required();
    diagnose->add_option("--round", diag_round, "round for the mismatch analysis")->required();
    diagnose->add_option("--seed", diag_seed, "seed of the cell")->required();
    diagnose->add_option("--u", diag_u, "graph neighbor count");
    diagnose->add_option("--out", diag_out, "output directory (defaults to the cell)");
    diagnose->add_flag("--skip-delta", diag_skip_delta, "skip the delta-return replay");

    // report
    std::string report_dir, report_out;
    CLI::App* report = app.add_subcommand("report", "summary metrics over a bench directory");
    report->add_option("--dir", report_dir, "bench output directory")->required();
    report->add_option("--out", report_out, "report CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return run_matrix_command(train_flags, "standard");
        if (iif->parsed()) return run_matrix_command(iif_flags, "iif");
        if (bench->parsed()) return run_matrix_command(bench_flags, bench_strategies);

        if (attribute->parsed()) {
            CellHandle h = open_cell_from_flags(attr_run, attr_seed);
            if (attr_round < 1 || attr_round > h.last_round)
                throw Error("round out of range; cell has rounds 1.." +
                            std::to_string(h.last_round));
            PolicyValueParams params = cell_checkpoint(h, attr_round - 1);
            RolloutBuffer buffer = rebuild_buffer(h, attr_round, params);
            auto env = make_env(h.cfg.env, h.cfg.chain_len);

            TargetFunction target = TargetFunction::return_target(buffer);
            if (attr_target == "action") {
                if (!attr_have_state)
                    throw Error("action target needs --state (and --action)");
                target = TargetFunction::action_target(env->obs_for_state(attr_state),
                                                       attr_action);
            } else if (attr_target != "return") {
                throw Error("--target must be return or action");
            }

            InfluenceReport rep;
            if (attr_mode == "fast") {
                rep = influence_single_checkpoint(params, buffer, target, h.cfg.ppo);
            } else if (attr_mode == "full") {
                Rng update_rng(derive_seed(static_cast<std::uint64_t>(attr_seed), "update",
                                           attr_round));
                PpoUpdateResult res =
                    ppo_update(params, buffer, h.cfg.ppo, update_rng, TraceMode::Checkpoints);
                rep = influence_full_tracin(res.trace, buffer, target, h.cfg.ppo);
            } else {
                throw Error("--mode must be fast or full");
            }
            fs::path out = attr_out.empty()
                               ? h.dir / ("influence_round_" + std::to_string(attr_round) +
                                          "_" + attr_target + "_" + attr_mode + ".json")
                               : fs::path(attr_out);
            write_influence_report(out, rep);
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }

        if (intervene->parsed()) {
            ConfigValues values = gather_values(intervene_flags);
            ExperimentConfig cfg = resolve_config(values);
            if (int_to < 0) int_to = cfg.ppo.total_rounds;
            InterventionDrop drop =
                int_drop == "random" ? InterventionDrop::Random : InterventionDrop::Influence;
            auto rows = run_interventions(cfg, int_from, int_to, drop);
            fs::create_directories(cfg.output_dir);
            fs::path out = fs::path(cfg.output_dir) / "delta_return.csv";
            write_interventions_csv(out, rows);
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }

        if (diagnose->parsed()) {
            CellHandle h = open_cell_from_flags(diag_run, diag_seed);
            if (diag_u > 0) h.cfg.graph_u = diag_u;
            fs::path out_dir = diag_out.empty() ? h.dir : fs::path(diag_out);
            fs::create_directories(out_dir);
            auto env = make_env(h.cfg.env, h.cfg.chain_len);

            // mismatch at the requested round
            {
                PolicyValueParams params = cell_checkpoint(h, diag_round - 1);
                RolloutBuffer buffer = rebuild_buffer(h, diag_round, params);
                InfluenceReport rep = influence_single_checkpoint(
                    params, buffer, TargetFunction::return_target(buffer), h.cfg.ppo);
                McAdvantageTable table =
                    mc_advantage(*env, buffer, h.cfg.ppo.gamma, h.cfg.min_visits);
                auto rows = mismatch_analysis(buffer, rep,
                                              a_bar_for_records(*env, buffer, table));
                write_mismatch_csv(out_dir / "mismatch.csv", rows);
                if (table.skipped_records > 0)
                    std::cout << "mc oracle skipped " << table.skipped_records
                              << " records from incomplete episodes\n";
            }

            // roughness across every round, embeddings from the final params
            {
                PolicyValueParams final_params = cell_checkpoint(h, h.last_round);
                std::vector<RoughnessRow> rows;
                for (int k = 1; k <= h.last_round; ++k) {
                    PolicyValueParams params = cell_checkpoint(h, k - 1);
                    RolloutBuffer buffer = rebuild_buffer(h, k, params);
                    InfluenceReport rep = influence_single_checkpoint(
                        params, buffer, TargetFunction::return_target(buffer), h.cfg.ppo);
                    RoughnessRow row;
                    row.round = k;
                    try {
                        SimilarityGraph g =
                            build_similarity_graph(buffer, rep, final_params, h.cfg.graph_u);
                        row.value = roughness(g);
                        row.n_nodes = static_cast<int>(g.node_record_ids.size());
                        row.n_edges = static_cast<int>(g.edges.size());
                        row.computed = true;
                    } catch (const TooFewPositiveError&) {
                        row.computed = false;
                    } catch (const NoEdgesError&) {
                        row.computed = false;
                    }
                    rows.push_back(row);
                }
                write_roughness_csv(out_dir / "roughness.csv", rows);
            }

            // per-round delta returns, replaying each round's own update
            if (!diag_skip_delta) {
                std::vector<InterventionRow> rows;
                for (int k = 1; k <= h.last_round; ++k) {
                    PolicyValueParams params = cell_checkpoint(h, k - 1);
                    auto env_copy = make_env(h.cfg.env, h.cfg.chain_len);
                    InterventionResult r = single_round_intervention(
                        *env_copy, params, h.cfg.ppo, static_cast<std::uint64_t>(h.seed), k,
                        h.cfg.eval_episodes);
                    rows.push_back({k, h.seed, r.delta_return, r.n_removed, r.base_return,
                                    r.filtered_return});
                }
                write_interventions_csv(out_dir / "delta_return.csv", rows);
            }
            std::cout << "wrote diagnostics to " << out_dir.string() << "\n";
            return 0;
        }

        if (report->parsed()) {
            auto manifest = nlohmann::json::parse(read_text_file(fs::path(report_dir) /
                                                                 "manifest.json"));
            std::vector<std::string> strategies;
            std::vector<int> seeds;
            for (const auto& cell : manifest["cells"]) {
                std::string s = cell["strategy"];
                int seed = cell["seed"];
                if (std::find(strategies.begin(), strategies.end(), s) == strategies.end())
                    strategies.push_back(s);
                if (std::find(seeds.begin(), seeds.end(), seed) == seeds.end())
                    seeds.push_back(seed);
            }
            ConfigValues values;
            parse_config_text(read_text_file(fs::path(report_dir) / "config.txt"), "file",
                              values);
            ExperimentConfig cfg = resolve_config(values);
            auto rows = summarize_bench(report_dir, strategies, seeds);
            fs::path out = report_out.empty() ? fs::path(report_dir) / "report.csv"
                                              : fs::path(report_out);
            write_report_csv(out, cfg.env, rows);
            std::cout << report_pretty(cfg.env, rows);
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
