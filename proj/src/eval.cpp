#include "relmm/eval.hpp"

#include <algorithm>
#include <cmath>

#include "relmm/errors.hpp"
#include "relmm/log.hpp"
#include "relmm/orchestrator.hpp"

namespace relmm {

LearnedAgent::LearnedAgent(const SacAgent& nav, const GraspEnsemble& ens, const ObsSpec& spec,
                           double gate_threshold)
    : nav_(nav), ens_(ens), spec_(spec), threshold_(gate_threshold) {}

std::array<double, 2> LearnedAgent::nav(const Tensor& obs, RngStream&) {
    const auto a = nav_.act_greedy(obs);
    return {a[0], a[1]};
}

bool LearnedAgent::wants_grasp(const Tensor& post_obs, RngStream&) {
    return ens_.grasp_prob(crop_grasp_window(post_obs, spec_)) >= threshold_;
}

std::optional<GraspChoice> LearnedAgent::grasp(const Tensor& post_obs, RngStream&) {
    return GraspChoice{true, ens_.greedy_action(crop_grasp_window(post_obs, spec_)), {}};
}

std::array<double, 2> SinglePolicyAgent::nav(const Tensor& obs, RngStream&) {
    last_ = agent_.act_greedy(obs);
    return {last_[0], last_[1]};
}

std::optional<GraspChoice> SinglePolicyAgent::grasp(const Tensor&, RngStream&) {
    return GraspChoice{false, 0, SinglePolicyTrainer::grasp_point_from_action(last_[3], last_[4])};
}

EvalReport evaluate(EvalAgent& agent, const ExperimentConfig& cfg, long eval_seed) {
    const std::string tag = "eval-" + std::to_string(eval_seed);
    RngStream es(cfg.master_seed, tag);
    WorldState world = scatter_objects(cfg.world.room, RngStream(cfg.master_seed, tag + "-world"),
                                       cfg.world.scatter_max_attempts);
    EvalReport rep;
    rep.objects_total = static_cast<int>(world.objects.size());
    rep.horizon = cfg.eval.horizon;
    rep.seed = eval_seed;
    rep.variant = agent.name();

    Tensor obs = render_nav_obs(world, cfg.world.obs, cfg.world.room);
    int last_success = -1;
    for (int t = 0; t < cfg.eval.horizon; ++t) {
        const auto a = agent.nav(obs, es);
        step_base(world, cfg.world.room, a);
        obstacle_guard(world, cfg.world);
        Tensor post = render_nav_obs(world, cfg.world.obs, cfg.world.room);
        if (agent.wants_grasp(post, es)) {
            const auto choice = agent.grasp(post, es);
            if (choice) {
                const int r = choice->is_cell
                                  ? attempt_grasp(world, choice->cell, cfg.world.tolerance())
                                  : attempt_grasp_point(world, choice->point, cfg.world.tolerance());
                if (r == 1) {
                    deposit_held(world);  // basket; no pseudo-reset during evaluation
                    rep.steps_between_successes.push_back(t - last_success);
                    last_success = t;
                    post = render_nav_obs(world, cfg.world.obs, cfg.world.room);
                }
            }
        }
        obs = std::move(post);
    }
    rep.objects_collected = world.collected_count();
    rep.percent_failed = 100.0 * (rep.objects_total - rep.objects_collected) / rep.objects_total;
    return rep;
}

// ---------------------------------------------------------------------------

const char* variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::full: return "full";
        case AblationVariant::single_policy: return "single_policy";
        case AblationVariant::pretrain_only: return "pretrain_only";
        case AblationVariant::no_uncertainty: return "no_uncertainty";
        case AblationVariant::relabel_on: return "relabel_on";
        case AblationVariant::relabel_off: return "relabel_off";
        case AblationVariant::autocurr: return "autocurr";
        case AblationVariant::statcurr: return "statcurr";
        case AblationVariant::discrete_grasp: return "discrete_grasp";
        case AblationVariant::continuous_grasp: return "continuous_grasp";
    }
    return "unknown";
}

std::vector<std::string> all_variant_names() {
    return {"full",       "single_policy", "pretrain_only", "no_uncertainty", "relabel_on",
            "relabel_off", "autocurr",      "statcurr",      "discrete_grasp", "continuous_grasp"};
}

std::optional<AblationVariant> variant_from_name(const std::string& name) {
    const auto names = all_variant_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<AblationVariant>(i);
    return std::nullopt;
}

ExperimentConfig apply_variant(ExperimentConfig base, AblationVariant v) {
    switch (v) {
        case AblationVariant::full:
            break;
        case AblationVariant::single_policy:
            base.algo = "single_policy";
            break;
        case AblationVariant::pretrain_only:
            base.curriculum = Curriculum::stationary;
            base.freeze_grasp_after_pretrain = true;
            break;
        case AblationVariant::no_uncertainty:
            base.grasp.beta = 0.0;
            break;
        case AblationVariant::relabel_on:
            base.nav.relabel = true;
            break;
        case AblationVariant::relabel_off:
            base.nav.relabel = false;
            break;
        case AblationVariant::autocurr:
            base.curriculum = Curriculum::autonomous;
            break;
        case AblationVariant::statcurr:
            base.curriculum = Curriculum::stationary;
            break;
        case AblationVariant::discrete_grasp:
            base.grasp.head = "discrete";
            break;
        case AblationVariant::continuous_grasp:
            base.grasp.head = "continuous";
            break;
    }
    return base;
}

namespace {

void emit_eval_rows(MetricsCsv* csv, TrainLog* log, const std::string& run_id, const std::string& variant,
                    long seed, long step, const std::vector<EvalReport>& reports, double wall) {
    if (!csv && !log) return;
    for (const EvalReport& r : reports) {
        MetricsRow row;
        row.run_id = run_id;
        row.variant = variant;
        row.seed = seed;
        row.step = step;
        row.event = "eval";
        row.percent_failed = r.percent_failed;
        row.mean_gap = r.mean_gap();
        row.wall_time = wall;
        if (log) log->rows.push_back(row);
        if (csv) csv->add(row);
    }
}

}  // namespace

double measure_greedy_grasp_success(const GraspEnsemble& ens, const WorldParams& wp, int trials,
                                    RngStream& rng) {
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        WorldState w = make_practice_world(wp.room, RngStream(rng.raw(), "probe"));
        const Tensor obs = render_grasp_obs(w, wp.obs, wp.room);
        hits += attempt_grasp(w, ens.greedy_action(obs), wp.tolerance());
    }
    return static_cast<double>(hits) / trials;
}

namespace {

void track_rate(std::vector<int>& window, std::vector<double>& rates, int r, int window_size) {
    window.push_back(r);
    if (static_cast<int>(window.size()) > window_size) window.erase(window.begin());
    double rate = 0.0;
    for (int v : window) rate += v;
    rates.push_back(rate / window.size());
}

constexpr int kProbeEvery = 25;
constexpr int kProbeTrials = 50;

void emit_rate_row(MetricsCsv* csv, const std::string& run_id, const char* variant, long seed, long attempt,
                   int r, double trailing, double probe, long dg) {
    if (!csv) return;
    MetricsRow row;
    row.run_id = run_id;
    row.variant = variant;
    row.seed = seed;
    row.step = attempt;
    row.event = "train";
    row.r_g = r;
    row.p_grasp = probe;          // greedy probe success
    row.loss_grasp = trailing;    // windowed training success
    row.dg_size = dg;
    csv->add(row);
}

// Minimal one-step bandit actor-critic over a squashed-Gaussian grasp point.
// gamma = 0: the critic regresses the immediate reward, the actor climbs it
// with auto-tuned entropy.
class PointBandit {
public:
    PointBandit(const GraspConfig& g, std::vector<int> obs_shape, RngStream& init)
        : batch_(g.batch),
          critic_(critic_layers(g.net), obs_shape, 2, init, "bandit.q"),
          actor_(actor_layers(g.net), obs_shape, 0, init, "bandit.pi"),
          opt_q_(g.lr), opt_pi_(g.lr) {}

    Vec2 act(const Tensor& obs, RngStream& rng, bool greedy) const {
        fn::MatX<float> x(1, obs.numel());
        for (long i = 0; i < obs.numel(); ++i) x(0, i) = obs.data[static_cast<size_t>(i)];
        fn::MatX<float> eps(1, 2);
        if (greedy)
            eps.setZero();
        else
            for (int d = 0; d < 2; ++d) eps(0, d) = static_cast<float>(rng.normal());
        SquashedHead<float> h;
        squashed_head_from(actor_.infer(x), eps, kLogStdMin, kLogStdMax, h);
        return SinglePolicyTrainer::grasp_point_from_action(h.action(0, 0), h.action(0, 1));
    }

    void update(const NavBuffer& buf, RngStream& rng) {
        const int B = batch_;
        if (buf.size() < static_cast<size_t>(B)) return;
        std::vector<size_t> idx(B);
        for (int b = 0; b < B; ++b) idx[b] = static_cast<size_t>(rng.uniform_index(buf.size()));
        fn::MatX<float> x(B, buf.obs_dim()), a(B, 2);
        for (int b = 0; b < B; ++b) {
            buf.decode_obs(idx[b], x.data() + static_cast<size_t>(b) * x.cols());
            a(b, 0) = buf.action(idx[b])[0];
            a(b, 1) = buf.action(idx[b])[1];
        }
        // critic regression to the binary-derived reward
        const fn::MatX<float>& q = critic_.forward(x, &a);
        fn::MatX<float> dq(B, 1);
        for (int b = 0; b < B; ++b) dq(b, 0) = (q(b, 0) - buf.reward(idx[b])) / B;
        critic_.backward(dq);
        opt_q_.step(critic_.params());

        // actor ascent through the refreshed critic
        const fn::MatX<float>& actor_out = actor_.forward(x);
        fn::MatX<float> eps(B, 2);
        for (int b = 0; b < B; ++b)
            for (int d = 0; d < 2; ++d) eps(b, d) = static_cast<float>(rng.normal());
        SquashedHead<float> h;
        squashed_head_from(actor_out, eps, kLogStdMin, kLogStdMax, h);
        const fn::MatX<float>& qa = critic_.forward(x, &h.action);
        (void)qa;
        fn::MatX<float> dmin = fn::MatX<float>::Constant(B, 1, -1.0f / B);
        fn::MatX<float> da;
        critic_.backward(dmin, nullptr, &da);
        fn::MatX<float> dout;
        const double temp = std::exp(log_alpha_);
        actor_head_backward(h, da, temp, B, kLogStdMin, kLogStdMax, dout);
        actor_.backward(dout);
        opt_pi_.step(actor_.params());

        // temperature toward target entropy -2
        double mean_lp = 0.0;
        for (int b = 0; b < B; ++b) mean_lp += h.log_prob(b, 0);
        mean_lp /= B;
        const double g = -std::exp(log_alpha_) * (mean_lp + (-2.0));
        ++alpha_t_;
        alpha_m_ = 0.9 * alpha_m_ + 0.1 * g;
        alpha_v_ = 0.999 * alpha_v_ + 0.001 * g * g;
        const double mhat = alpha_m_ / (1.0 - std::pow(0.9, static_cast<double>(alpha_t_)));
        const double vhat = alpha_v_ / (1.0 - std::pow(0.999, static_cast<double>(alpha_t_)));
        log_alpha_ -= opt_pi_.lr() * mhat / (std::sqrt(vhat) + 1e-8);
    }

private:
    static std::vector<fn::LayerSpec> critic_layers(const NetSpec& net) {
        std::vector<fn::LayerSpec> layers = net.conv_stack();
        layers.push_back(fn::LayerSpec::append_aux());
        const auto dense = net.dense_stack();
        layers.insert(layers.end(), dense.begin(), dense.end());
        layers.push_back(fn::LayerSpec::dense(1));
        return layers;
    }
    static std::vector<fn::LayerSpec> actor_layers(const NetSpec& net) {
        std::vector<fn::LayerSpec> layers = net.conv_stack();
        const auto dense = net.dense_stack();
        layers.insert(layers.end(), dense.begin(), dense.end());
        layers.push_back(fn::LayerSpec::dense(4));
        return layers;
    }
    static constexpr double kLogStdMin = -5.0, kLogStdMax = 2.0;
    int batch_;
    fn::Network<float> critic_, actor_;
    fn::Adam<float> opt_q_, opt_pi_;
    double log_alpha_ = std::log(0.1);
    double alpha_m_ = 0.0, alpha_v_ = 0.0;
    long alpha_t_ = 0;
};

double probe_greedy_point(const PointBandit& bandit, const WorldParams& wp, int trials, RngStream& rng) {
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        WorldState w = make_practice_world(wp.room, RngStream(rng.raw(), "probe"));
        const Tensor obs = render_grasp_obs(w, wp.obs, wp.room);
        RngStream dummy(0, "unused");
        hits += attempt_grasp_point(w, bandit.act(obs, dummy, true), wp.tolerance());
    }
    return static_cast<double>(hits) / trials;
}

}  // namespace

GraspRateResult discrete_grasp_rate(const ExperimentConfig& cfg, long budget_attempts, double target_rate,
                                    MetricsCsv* csv, const std::string& run_id, long seed) {
    ExperimentConfig c = cfg;
    c.master_seed = static_cast<uint64_t>(seed);
    c.finalize();
    RngSet rngs = RngSet::from_master(c.master_seed);
    RngStream probe_rng(c.master_seed, "grasp-probe");
    GraspEnsemble ens(c.grasp, c.grasp_obs_shape(), rngs.ensemble_init);
    GraspBuffer dg(static_cast<size_t>(c.grasp.buffer_capacity), c.grasp_obs_shape());
    WorldState world = make_practice_world(c.world.room, rngs.world_pretrain);

    GraspRateResult out;
    std::vector<int> window;
    for (long i = 0; i < budget_attempts; ++i) {
        GraspTrainStats st;
        train_grasp(ens, dg, world, c.world, 1, 1, rngs.grasp_sample, rngs.ensemble_batch, &st);
        track_rate(window, out.trailing_rate, st.successes, 100);
        if (i % kProbeEvery == kProbeEvery - 1 || i == budget_attempts - 1) {
            const double p = measure_greedy_grasp_success(ens, c.world, kProbeTrials, probe_rng);
            out.greedy_probes.push_back({i + 1, p});
            if (out.attempts_to_target < 0 && p >= target_rate) out.attempts_to_target = i + 1;
            emit_rate_row(csv, run_id, "discrete_grasp", seed, i, st.successes, out.trailing_rate.back(), p,
                          static_cast<long>(dg.size()));
        }
    }
    return out;
}

GraspRateResult continuous_grasp_rate(const ExperimentConfig& cfg, long budget_attempts, double target_rate,
                                      MetricsCsv* csv, const std::string& run_id, long seed) {
    ExperimentConfig c = cfg;
    c.master_seed = static_cast<uint64_t>(seed);
    c.finalize();
    RngSet rngs = RngSet::from_master(c.master_seed);
    RngStream probe_rng(c.master_seed, "grasp-probe");
    PointBandit bandit(c.grasp, c.grasp_obs_shape(), rngs.ensemble_init);
    NavBuffer buf(static_cast<size_t>(c.grasp.buffer_capacity), c.grasp_obs_shape(), 2);
    WorldState world = make_practice_world(c.world.room, rngs.world_pretrain);

    GraspRateResult out;
    std::vector<int> window;
    for (long i = 0; i < budget_attempts; ++i) {
        if (!free_object_in_grasp_region(world)) recenter_practice_object(world);
        const Tensor obs = render_grasp_obs(world, c.world.obs, c.world.room);
        fn::MatX<float> x(1, obs.numel());
        const Vec2 point = bandit.act(obs, rngs.grasp_sample, false);
        const int r = attempt_grasp_point(world, point, c.world.tolerance());
        const float squashed[2] = {
            static_cast<float>((point.x - grasp_region::kX0) / (grasp_region::kX1 - grasp_region::kX0) * 2.0 -
                               1.0),
            static_cast<float>((point.y - grasp_region::kY0) / (grasp_region::kY1 - grasp_region::kY0) * 2.0 -
                               1.0)};
        buf.append(obs, squashed, compute_nav_reward(r), obs, true, r);
        for (int u = 0; u < c.grasp.updates_per_attempt; ++u) bandit.update(buf, rngs.ensemble_batch);
        if (r == 1) drop_held_in_grasp_region(world, c.world.room);
        track_rate(window, out.trailing_rate, r, 100);
        if (i % kProbeEvery == kProbeEvery - 1 || i == budget_attempts - 1) {
            const double p = probe_greedy_point(bandit, c.world, kProbeTrials, probe_rng);
            out.greedy_probes.push_back({i + 1, p});
            if (out.attempts_to_target < 0 && p >= target_rate) out.attempts_to_target = i + 1;
            emit_rate_row(csv, run_id, "continuous_grasp", seed, i, r, out.trailing_rate.back(), p,
                          static_cast<long>(buf.size()));
        }
    }
    return out;
}

AblationRunResult run_ablation_seed(AblationVariant v, const ExperimentConfig& base, long budget, long seed,
                                    MetricsCsv* csv, const std::string& run_id) {
    AblationRunResult result;
    result.variant = v;
    result.seed = seed;

    if (v == AblationVariant::discrete_grasp || v == AblationVariant::continuous_grasp) {
        ExperimentConfig cfg = apply_variant(base, v);
        const GraspRateResult r = v == AblationVariant::discrete_grasp
                                      ? discrete_grasp_rate(cfg, budget, 0.6, csv, run_id, seed)
                                      : continuous_grasp_rate(cfg, budget, 0.6, csv, run_id, seed);
        result.attempts_to_60pct = r.attempts_to_target;
        return result;
    }

    ExperimentConfig cfg = apply_variant(base, v);
    cfg.master_seed = static_cast<uint64_t>(seed);
    cfg.total_steps = budget;
    cfg.finalize();

    TrainerOptions opt;
    opt.run_id = run_id;
    opt.variant = variant_name(v);
    opt.seed_label = seed;
    opt.csv = csv;

    auto eval_point = [&](EvalAgent& agent, long step, double wall) {
        double sum_collected = 0.0;
        std::vector<EvalReport> reports;
        for (int k = 0; k < cfg.eval.eval_seeds; ++k) {
            reports.push_back(evaluate(agent, cfg, k));
            sum_collected += reports.back().objects_collected;
        }
        emit_eval_rows(csv, nullptr, run_id, opt.variant, seed, step, reports, wall);
        result.collected_curve.push_back({step, sum_collected / cfg.eval.eval_seeds});
        return reports;
    };
    auto summarize = [&](EvalAgent& agent, double wall) {
        const auto reports = eval_point(agent, budget, wall);
        result.final_report = reports.front();
        result.mean_collected = result.collected_curve.back().second;
        result.mean_percent_failed = 100.0 *
                                     (result.final_report.objects_total - result.mean_collected) /
                                     result.final_report.objects_total;
    };

    if (cfg.algo == "single_policy") {
        SinglePolicyTrainer trainer(cfg, opt);
        trainer.set_eval_hook([&](long step) {
            if (step >= budget) return;  // the final point is handled by summarize
            SinglePolicyAgent agent(trainer.agent());
            eval_point(agent, step, trainer.wall_seconds());
        });
        trainer.run();
        SinglePolicyAgent agent(trainer.agent());
        summarize(agent, trainer.wall_seconds());
        return result;
    }

    Trainer trainer(cfg, opt);
    trainer.set_eval_hook([&](long step) {
        if (step >= budget) return;
        LearnedAgent agent(trainer.nav_agent(), trainer.ensemble(), cfg.world.obs, cfg.eval.gate_threshold);
        eval_point(agent, step, trainer.wall_seconds());
    });
    trainer.run();
    LearnedAgent agent(trainer.nav_agent(), trainer.ensemble(), cfg.world.obs, cfg.eval.gate_threshold);
    summarize(agent, trainer.wall_seconds());
    return result;
}

}  // namespace relmm
