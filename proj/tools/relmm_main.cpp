#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>

#include "relmm/errors.hpp"
#include "relmm/eval.hpp"
#include "relmm/log.hpp"
#include "relmm/orchestrator.hpp"
#include "relmm/persist.hpp"

using namespace relmm;

namespace {

ExperimentConfig base_config(const std::string& config_path) {
    if (config_path.empty()) {
        ExperimentConfig cfg;
        cfg.finalize();
        return cfg;
    }
    return load_config(config_path);
}

// Resume truncates metrics rows past the checkpoint so the resumed file is
// identical to an uninterrupted run.
void truncate_metrics(const std::string& csv_path, long keep_below_step) {
    if (!std::filesystem::exists(csv_path)) return;
    const CsvData data = read_csv(csv_path);
    const int step_col = data.column("step");
    std::string out = kMetricsHeader;
    out.push_back('\n');
    for (const auto& row : data.rows) {
        if (step_col >= 0 && std::stol(row[step_col]) >= keep_below_step) continue;
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out.push_back(',');
            out += row[i];
        }
        out.push_back('\n');
    }
    write_text_file(csv_path, out);
}

int cmd_train(const std::string& config_path, uint64_t seed, bool seed_set, const std::string& out_dir,
              const std::string& curriculum, long steps, const std::string& resume_path,
              const std::string& run_id, const std::string& variant) {
    ExperimentConfig cfg = base_config(config_path);
    if (seed_set) cfg.master_seed = seed;
    if (steps >= 0) cfg.total_steps = steps;
    if (!curriculum.empty()) {
        if (curriculum == "stationary") cfg.curriculum = Curriculum::stationary;
        else if (curriculum == "autonomous") cfg.curriculum = Curriculum::autonomous;
        else throw ConfigError("--curriculum must be 'stationary' or 'autonomous'");
    }
    cfg.finalize();

    DirLock lock(out_dir);
    TrainerOptions opt;
    opt.run_id = run_id.empty() ? std::filesystem::path(out_dir).filename().string() : run_id;
    opt.variant = variant;
    opt.seed_label = static_cast<long>(cfg.master_seed);
    opt.out_dir = out_dir;

    if (cfg.algo == "single_policy") {
        if (!resume_path.empty()) throw ConfigError("--resume is not supported for run.algo single_policy");
        SinglePolicyTrainer trainer(cfg, opt);
        trainer.run();
        std::cout << "trained " << trainer.env_step() << " steps (single policy)\n";
        return 0;
    }

    std::unique_ptr<Trainer> trainer;
    if (!resume_path.empty()) {
        const Checkpoint peek = Checkpoint::load(resume_path);
        const long row = peek.meta().at("counters").at("global_row");
        truncate_metrics(out_dir + "/metrics.csv", row);
        opt.append_csv = true;
        trainer = Trainer::resume(resume_path, opt);
    } else {
        trainer = std::make_unique<Trainer>(cfg, opt);
    }
    trainer->run();
    trainer->save_checkpoint(out_dir + "/final.rlmm");
    std::cout << "trained " << trainer->env_step() << " steps; D_g=" << trainer->grasp_buffer().size()
              << " D_n=" << trainer->nav_buffer().size() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& baseline, const std::string& grasp_ckpt,
             const std::string& config_path, int seeds, int horizon, const std::string& out_csv) {
    ExperimentConfig cfg = base_config(config_path);
    if (horizon > 0) cfg.eval.horizon = horizon;
    cfg.finalize();

    std::unique_ptr<EvalAgent> agent;
    LoadedPolicies policies;
    std::unique_ptr<GraspEnsemble> frozen;
    if (!checkpoint.empty()) {
        policies = load_policies(checkpoint);
        cfg = policies.cfg;
        if (horizon > 0) cfg.eval.horizon = horizon;
        agent = std::make_unique<LearnedAgent>(*policies.nav, *policies.ensemble, cfg.world.obs,
                                               cfg.eval.gate_threshold);
    } else if (baseline == "rand_all") {
        agent = std::make_unique<RandAllAgent>();
    } else if (baseline == "scripted") {
        agent = std::make_unique<ScriptedAgent>(cfg.world.obs);
    } else if (baseline == "rand_nav") {
        if (grasp_ckpt.empty())
            throw ConfigError("--baseline rand_nav requires --grasp-checkpoint from a stationary run");
        frozen = load_grasp_ensemble(grasp_ckpt, nullptr);
        agent = std::make_unique<RandNavAgent>(*frozen, cfg.world.obs, cfg.eval.gate_threshold);
    } else {
        throw ConfigError("specify --checkpoint or --baseline {rand_all, rand_nav, scripted}");
    }

    MetricsCsv csv(out_csv, 1);
    for (int s = 0; s < seeds; ++s) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.master_seed = cfg.master_seed + static_cast<uint64_t>(s);
        const EvalReport rep = evaluate(*agent, run_cfg, s);
        MetricsRow row;
        row.run_id = "eval";
        row.variant = agent->name();
        row.seed = s;
        row.step = 0;
        row.event = "eval";
        row.percent_failed = rep.percent_failed;
        row.mean_gap = rep.mean_gap();
        row.wall_time = 0.0;
        csv.add(row);
        std::cout << agent->name() << " seed " << s << ": collected " << rep.objects_collected << "/"
                  << rep.objects_total << " (" << format_double(rep.percent_failed) << "% failed)\n";
    }
    csv.flush();
    return 0;
}

int cmd_ablate(const std::string& variant_str, const std::string& config_path, long budget, int seeds,
               const std::string& out_dir) {
    const auto variant = variant_from_name(variant_str);
    if (!variant) {
        std::cerr << "unknown variant '" << variant_str << "'; valid:";
        for (const auto& n : all_variant_names()) std::cerr << " " << n;
        std::cerr << "\n";
        return 2;
    }
    ExperimentConfig cfg = base_config(config_path);
    cfg.finalize();
    std::filesystem::create_directories(out_dir);
    MetricsCsv csv(out_dir + "/ablation_" + variant_str + ".csv", cfg.persist.flush_every);
    for (int s = 1; s <= seeds; ++s) {
        const AblationRunResult r =
            run_ablation_seed(*variant, cfg, budget, s, &csv, variant_str + "-s" + std::to_string(s));
        if (r.attempts_to_60pct >= 0)
            std::cout << variant_str << " seed " << s << ": attempts to 60% = " << r.attempts_to_60pct
                      << "\n";
        else if (variant == AblationVariant::discrete_grasp || variant == AblationVariant::continuous_grasp)
            std::cout << variant_str << " seed " << s << ": target rate not reached in budget\n";
        else
            std::cout << variant_str << " seed " << s << ": mean collected " << format_double(r.mean_collected)
                      << " (" << format_double(r.mean_percent_failed) << "% failed)\n";
    }
    csv.flush();
    return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& out_dir, int window) {
    const CsvData data = read_csv(csv_path);
    std::filesystem::create_directories(out_dir);
    const int c_variant = data.column("variant");
    const int c_step = data.column("step");
    const int c_event = data.column("event");
    if (c_variant < 0 || c_step < 0 || c_event < 0) throw ConfigError("csv lacks the metrics schema columns");

    auto aggregate = [&](const std::string& column, const std::string& event,
                         bool windowed) -> std::vector<PlotSeries> {
        const int c_val = data.column(column);
        const int c_seed = data.column("seed");
        // variant -> seed -> (step, value)
        std::map<std::string, std::map<std::string, std::vector<std::pair<double, double>>>> grouped;
        for (const auto& row : data.rows) {
            if (row[c_event] != event || row[c_val].empty()) continue;
            grouped[row[c_variant]][row[c_seed]].push_back({std::stod(row[c_step]), std::stod(row[c_val])});
        }
        std::vector<PlotSeries> out;
        for (auto& [variant, seeds] : grouped) {
            // per-seed windowed smoothing, then mean/min/max across seeds per step
            std::map<double, std::vector<double>> by_step;
            for (auto& [seed, points] : seeds) {
                std::sort(points.begin(), points.end());
                double acc = 0.0;
                std::vector<double> vals;
                for (size_t i = 0; i < points.size(); ++i) {
                    acc += points[i].second;
                    vals.push_back(points[i].second);
                    if (windowed && static_cast<int>(vals.size()) > window) {
                        acc -= vals[vals.size() - window - 1];
                    }
                    const double mean = acc / std::min<double>(static_cast<double>(vals.size()), window);
                    by_step[points[i].first].push_back(windowed ? mean : points[i].second);
                }
            }
            PlotSeries s;
            s.label = variant;
            for (const auto& [step, vals] : by_step) {
                double lo = vals[0], hi = vals[0], sum = 0.0;
                for (double v : vals) {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                    sum += v;
                }
                s.x.push_back(step);
                s.mean.push_back(sum / vals.size());
                s.lo.push_back(lo);
                s.hi.push_back(hi);
            }
            out.push_back(std::move(s));
        }
        return out;
    };

    const auto failed = aggregate("percent_failed", "eval", false);
    if (!failed.empty())
        write_text_file(out_dir + "/percent_failed.svg",
                        render_svg_plot("Objects failed at evaluation", "training step", "percent failed",
                                        failed));
    const auto gaps = aggregate("mean_gap", "eval", false);
    if (!gaps.empty())
        write_text_file(out_dir + "/mean_gap.svg",
                        render_svg_plot("Steps between grasp successes", "training step", "mean gap", gaps));
    const auto rg = aggregate("r_g", "train", true);
    if (!rg.empty())
        write_text_file(out_dir + "/grasp_rate.svg",
                        render_svg_plot("Grasp success (windowed)", "step", "success rate", rg));
    std::cout << "plots written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relmm: reset-free mobile-manipulation learning workbench"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "runs/out", resume_path, run_id, variant = "full", curriculum;
    uint64_t seed = 1;
    long steps = -1;
    auto* train = app.add_subcommand("train", "run the training loop");
    train->add_option("--config", config_path, "TOML config file");
    auto* seed_opt = train->add_option("--seed", seed, "master seed");
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--curriculum", curriculum, "stationary|autonomous");
    train->add_option("--steps", steps, "total environment steps");
    train->add_option("--resume", resume_path, "checkpoint to resume from");
    train->add_option("--run-id", run_id, "run identifier for CSV rows");
    train->add_option("--variant", variant, "variant label for CSV rows");

    std::string checkpoint, baseline, grasp_ckpt, eval_out = "eval_report.csv";
    int eval_seeds = 1, horizon = -1;
    auto* eval_cmd = app.add_subcommand("eval", "reset-free greedy evaluation");
    eval_cmd->add_option("--config", config_path, "TOML config file");
    eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint");
    eval_cmd->add_option("--baseline", baseline, "rand_all|rand_nav|scripted");
    eval_cmd->add_option("--grasp-checkpoint", grasp_ckpt, "stationary-phase checkpoint for rand_nav");
    eval_cmd->add_option("--seeds", eval_seeds, "number of evaluation seeds");
    eval_cmd->add_option("--horizon", horizon, "evaluation horizon (timesteps)");
    eval_cmd->add_option("--out", eval_out, "output CSV path");

    std::string abl_variant;
    long budget = 30000;
    int abl_seeds = 1;
    auto* ablate = app.add_subcommand("ablate", "train and evaluate an ablation variant");
    ablate->add_option("--config", config_path, "TOML config file");
    ablate->add_option("--variant", abl_variant, "ablation variant")->required();
    ablate->add_option("--budget", budget, "training budget (steps, or attempts for grasp variants)");
    ablate->add_option("--seeds", abl_seeds, "number of training seeds");
    ablate->add_option("--out", out_dir, "output directory");

    std::string plot_csv, plot_out = "plots";
    int plot_window = 250;
    auto* plot = app.add_subcommand("plot", "render SVG curves from a metrics CSV");
    plot->add_option("--csv", plot_csv, "metrics CSV")->required();
    plot->add_option("--out", plot_out, "output directory");
    plot->add_option("--window", plot_window, "trailing smoothing window for train metrics");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed())
            return cmd_train(config_path, seed, seed_opt->count() > 0, out_dir, curriculum, steps,
                             resume_path, run_id, variant);
        if (eval_cmd->parsed())
            return cmd_eval(checkpoint, baseline, grasp_ckpt, config_path, eval_seeds, horizon, eval_out);
        if (ablate->parsed()) return cmd_ablate(abl_variant, config_path, budget, abl_seeds, out_dir);
        if (plot->parsed()) return cmd_plot(plot_csv, plot_out, plot_window);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
