#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "relmm/baselines.hpp"
#include "relmm/config.hpp"
#include "relmm/grasp.hpp"
#include "relmm/nav.hpp"
#include "relmm/persist.hpp"
#include "relmm/world.hpp"

namespace relmm {

struct EvalReport {
    int objects_total = 0;
    int objects_collected = 0;
    double percent_failed = 100.0;
    std::vector<int> steps_between_successes;
    int horizon = 0;
    long seed = 0;
    std::string variant;

    std::optional<double> mean_gap() const {
        if (steps_between_successes.empty()) return std::nullopt;
        double s = 0.0;
        for (int g : steps_between_successes) s += g;
        return s / static_cast<double>(steps_between_successes.size());
    }
};

// Grasp decision during evaluation: a grid cell or a continuous point.
struct GraspChoice {
    bool is_cell = true;
    int cell = 0;
    Vec2 point{0.0, 0.0};
};

// Per-step decisions of an evaluation policy set. Implementations consume
// observations only; the world state never crosses this interface.
class EvalAgent {
public:
    virtual ~EvalAgent() = default;
    virtual std::array<double, 2> nav(const Tensor& obs, RngStream& rng) = 0;
    virtual bool wants_grasp(const Tensor& post_obs, RngStream& rng) = 0;
    virtual std::optional<GraspChoice> grasp(const Tensor& post_obs, RngStream& rng) = 0;
    virtual std::string name() const = 0;
};

// Trained ReLMM policies under the greedy evaluation protocol: squashed-mean
// navigation, gate fires when the clamped grasp probability reaches the
// threshold, greedy grasp cell.
class LearnedAgent : public EvalAgent {
public:
    LearnedAgent(const SacAgent& nav, const GraspEnsemble& ens, const ObsSpec& spec, double gate_threshold);
    std::array<double, 2> nav(const Tensor& obs, RngStream& rng) override;
    bool wants_grasp(const Tensor& post_obs, RngStream& rng) override;
    std::optional<GraspChoice> grasp(const Tensor& post_obs, RngStream& rng) override;
    std::string name() const override { return "relmm"; }

private:
    const SacAgent& nav_;
    const GraspEnsemble& ens_;
    ObsSpec spec_;
    double threshold_;
};

class ScriptedAgent : public EvalAgent {
public:
    ScriptedAgent(const ObsSpec& spec, ScriptedPolicy::Projection mode = ScriptedPolicy::Projection::calibrated)
        : policy_(spec, mode) {}
    std::array<double, 2> nav(const Tensor& obs, RngStream& rng) override { return policy_.nav(obs, rng); }
    bool wants_grasp(const Tensor& post_obs, RngStream&) override {
        return policy_.grasp(post_obs).has_value();
    }
    std::optional<GraspChoice> grasp(const Tensor& post_obs, RngStream&) override {
        const auto cell = policy_.grasp(post_obs);
        if (!cell) return std::nullopt;
        return GraspChoice{true, *cell, {}};
    }
    std::string name() const override { return "scripted"; }

private:
    ScriptedPolicy policy_;
};

// Uniform navigation and uniform grasp cells, gated by a fair coin so grasp
// attempts keep the same one-per-step cadence as the learned agents.
class RandAllAgent : public EvalAgent {
public:
    std::array<double, 2> nav(const Tensor&, RngStream& rng) override { return rand_nav_action(rng); }
    bool wants_grasp(const Tensor&, RngStream& rng) override { return rng.coin(0.5); }
    std::optional<GraspChoice> grasp(const Tensor&, RngStream& rng) override {
        return GraspChoice{true, rand_grasp_cell(rng), {}};
    }
    std::string name() const override { return "rand_all"; }
};

// Uniform navigation with a frozen pretrained ensemble's gate and greedy cell.
class RandNavAgent : public EvalAgent {
public:
    RandNavAgent(const GraspEnsemble& ens, const ObsSpec& spec, double gate_threshold)
        : ens_(ens), spec_(spec), threshold_(gate_threshold) {}
    std::array<double, 2> nav(const Tensor&, RngStream& rng) override { return rand_nav_action(rng); }
    bool wants_grasp(const Tensor& post_obs, RngStream&) override {
        return ens_.grasp_prob(crop_grasp_window(post_obs, spec_)) >= threshold_;
    }
    std::optional<GraspChoice> grasp(const Tensor& post_obs, RngStream&) override {
        return GraspChoice{true, ens_.greedy_action(crop_grasp_window(post_obs, spec_)), {}};
    }
    std::string name() const override { return "rand_nav"; }

private:
    const GraspEnsemble& ens_;
    ObsSpec spec_;
    double threshold_;
};

// Joint-action policy: one greedy 5-D sample decides motion, trigger and
// grasp point together.
class SinglePolicyAgent : public EvalAgent {
public:
    explicit SinglePolicyAgent(const SacAgent& agent) : agent_(agent) {}
    std::array<double, 2> nav(const Tensor& obs, RngStream&) override;
    bool wants_grasp(const Tensor&, RngStream&) override { return last_[2] > 0.0f; }
    std::optional<GraspChoice> grasp(const Tensor&, RngStream&) override;
    std::string name() const override { return "single_policy"; }

private:
    const SacAgent& agent_;
    std::vector<float> last_ = std::vector<float>(5, 0.0f);
};

// Reset-free evaluation protocol: fresh scattered world, greedy policy, no
// pseudo-resets, successes deposited to the basket; runs `horizon` steps.
// Never writes to any buffer and never updates parameters.
EvalReport evaluate(EvalAgent& agent, const ExperimentConfig& cfg, long eval_seed);

// ---------------------------------------------------------------------------

enum class AblationVariant {
    full,
    single_policy,
    pretrain_only,
    no_uncertainty,
    relabel_on,
    relabel_off,
    autocurr,
    statcurr,
    discrete_grasp,
    continuous_grasp,
};

const char* variant_name(AblationVariant v);
std::optional<AblationVariant> variant_from_name(const std::string& name);
std::vector<std::string> all_variant_names();

// Fully specified config delta for a variant.
ExperimentConfig apply_variant(ExperimentConfig base, AblationVariant v);

struct AblationRunResult {
    AblationVariant variant = AblationVariant::full;
    long seed = 0;
    EvalReport final_report;                 // first final rollout
    double mean_collected = 0.0;             // over eval.eval_seeds final rollouts
    double mean_percent_failed = 100.0;
    // (env step, mean objects collected) at each evaluation checkpoint
    std::vector<std::pair<long, double>> collected_curve;
    // grasp-rate experiment outputs (discrete/continuous variants)
    long attempts_to_60pct = -1;
};

// Trains one seed of the variant for `budget` environment steps (or grasp
// attempts for the grasp-head variants), evaluating at eval_every checkpoints
// into the CSV, and returns the final report.
AblationRunResult run_ablation_seed(AblationVariant v, const ExperimentConfig& base, long budget, long seed,
                                    MetricsCsv* csv, const std::string& run_id);

// Greedy grasp success probe: fresh single-object practice scenes, one greedy
// attempt each, no learning.
double measure_greedy_grasp_success(const GraspEnsemble& ens, const WorldParams& wp, int trials,
                                    RngStream& rng);

// Stationary-phase grasp-head comparison. The discrete head is the standard
// ensemble; the continuous head is a squashed-Gaussian point policy trained
// as a one-step bandit actor-critic (single critic; at gamma = 0 target
// networks have no role) on the same binary success signal. Progress is
// measured by periodic greedy probes on fresh practice scenes; the crossing
// is the first attempt whose probe reaches the target rate.
struct GraspRateResult {
    long attempts_to_target = -1;       // via greedy probes
    std::vector<double> trailing_rate;  // training-attempt success, windowed
    std::vector<std::pair<long, double>> greedy_probes;  // (attempt, success)
};
GraspRateResult continuous_grasp_rate(const ExperimentConfig& cfg, long budget_attempts, double target_rate,
                                      MetricsCsv* csv, const std::string& run_id, long seed);
GraspRateResult discrete_grasp_rate(const ExperimentConfig& cfg, long budget_attempts, double target_rate,
                                    MetricsCsv* csv, const std::string& run_id, long seed);

}  // namespace relmm
