#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>

#include "relmm/config.hpp"
#include "relmm/grasp.hpp"
#include "relmm/nav.hpp"
#include "relmm/persist.hpp"
#include "relmm/world.hpp"

namespace relmm {

// Named random streams fanned out from the master seed. Toggling one
// component never perturbs another component's stream, which keeps ablations
// comparable at a fixed seed.
struct RngSet {
    RngStream world, world_pretrain, ensemble_init, ensemble_batch, grasp_sample, nav, gate, eval;

    static RngSet from_master(uint64_t seed);
    nlohmann::json serialize() const;
    static RngSet deserialize(const nlohmann::json& j);
};

// Append-only per-step record log; one record per environment step plus one
// per pretraining attempt. wall_time is telemetry and excluded from the
// replay digest.
struct TrainLog {
    std::vector<MetricsRow> rows;

    void add(const MetricsRow& row, MetricsCsv* sink) {
        rows.push_back(row);
        if (sink) sink->add(row);
    }
    // deterministic content digest (drops the trailing wall_time column)
    std::string digest() const;
};

// Stochastic grasp gate of the main loop: fires with probability
// clamp(max_a G~(crop(o)), 0, 1).
bool gate_decision(const GraspEnsemble& ens, const Tensor& nav_obs, const ObsSpec& spec, RngStream& rng);

struct TrainerOptions {
    std::string run_id = "run";
    std::string variant = "full";
    long seed_label = 0;
    std::string out_dir;         // empty: no checkpoints
    MetricsCsv* csv = nullptr;   // optional external sink
    bool append_csv = false;     // resume: keep the truncated metrics file
    std::function<void(long env_step)> eval_hook;  // invoked every eval.eval_every steps
};

// The ReLMM training loop (Alg. 2 with the stationary curriculum, Alg. 4 with
// the autonomous one), wiring world, grasp learner and nav learner together
// with pseudo-resets.
class Trainer {
public:
    Trainer(ExperimentConfig cfg, TrainerOptions opt);

    void pretrain();   // stationary curriculum phase (no-op for autonomous)
    void main_step();  // one environment step of the main loop
    void run();        // pretrain + main loop to total_steps, with checkpoints

    void set_eval_hook(std::function<void(long)> hook) { opt_.eval_hook = std::move(hook); }

    long env_step() const { return step_; }
    long global_row() const { return global_row_; }
    bool pretrain_done() const { return pretrain_done_; }

    const ExperimentConfig& config() const { return cfg_; }
    WorldState& world() { return world_; }
    GraspEnsemble& ensemble() { return *ens_; }
    SacAgent& nav_agent() { return *sac_; }
    GraspBuffer& grasp_buffer() { return *dg_; }
    NavBuffer& nav_buffer() { return *dn_; }
    RngSet& rngs() { return rngs_; }
    const TrainLog& log() const { return log_; }
    const CurriculumCounters& last_counters() const { return last_counters_; }
    double wall_seconds() const;

    void save_checkpoint(const std::string& path) const;
    static std::unique_ptr<Trainer> resume(const std::string& ckpt_path, TrainerOptions opt);

private:

    void emit_pretrain_row(const GraspTrainStats& st, double p_grasp);
    SacAgent::Relabeler make_relabeler();

    ExperimentConfig cfg_;
    TrainerOptions opt_;
    RngSet rngs_;
    WorldState world_;
    std::unique_ptr<GraspEnsemble> ens_;
    std::unique_ptr<GraspBuffer> dg_;
    std::unique_ptr<SacAgent> sac_;
    std::unique_ptr<NavBuffer> dn_;
    std::unique_ptr<MetricsCsv> own_csv_;
    MetricsCsv* csv_ = nullptr;
    TrainLog log_;
    CurriculumCounters last_counters_;
    std::shared_ptr<Tensor> cached_obs_;  // o_t carried over when the state did not change
    long step_ = 0;
    long global_row_ = 0;
    bool pretrain_done_ = false;
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// Policies-only view of a checkpoint (evaluation does not need buffers or
// optimizer state, so checkpoints written with checkpoint_buffers = false
// still load here).
struct LoadedPolicies {
    ExperimentConfig cfg;
    std::unique_ptr<GraspEnsemble> ensemble;
    std::unique_ptr<SacAgent> nav;
};
LoadedPolicies load_policies(const std::string& ckpt_path);
// Just the grasp ensemble (the Rand-nav baseline's frozen gate).
std::unique_ptr<GraspEnsemble> load_grasp_ensemble(const std::string& ckpt_path, ExperimentConfig* cfg_out);

// The joint-action ablation: one entropy-regularized actor-critic over
// (forward, turn, grasp-trigger, grasp-x, grasp-y), rewarded by r_g - 1.
class SinglePolicyTrainer {
public:
    SinglePolicyTrainer(ExperimentConfig cfg, TrainerOptions opt);

    void main_step();
    void run();

    void set_eval_hook(std::function<void(long)> hook) { opt_.eval_hook = std::move(hook); }

    long env_step() const { return step_; }
    const ExperimentConfig& config() const { return cfg_; }
    WorldState& world() { return world_; }
    SacAgent& agent() { return *sac_; }
    NavBuffer& buffer() { return *dn_; }
    RngSet& rngs() { return rngs_; }
    const TrainLog& log() const { return log_; }
    double wall_seconds() const;

    static Vec2 grasp_point_from_action(float ax, float ay);

private:
    ExperimentConfig cfg_;
    TrainerOptions opt_;
    RngSet rngs_;
    WorldState world_;
    std::unique_ptr<SacAgent> sac_;
    std::unique_ptr<NavBuffer> dn_;
    std::unique_ptr<MetricsCsv> own_csv_;
    MetricsCsv* csv_ = nullptr;
    TrainLog log_;
    std::shared_ptr<Tensor> cached_obs_;
    long step_ = 0;
    long global_row_ = 0;
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace relmm
