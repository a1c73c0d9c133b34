#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "relmm/fnapprox.hpp"
#include "relmm/world.hpp"

namespace relmm {

// Shared conv-trunk + dense-stack topology family. The paper-scale sizes
// (64-channel convs, 512-wide dense) are reachable through these knobs; the
// defaults are desk-scale so training fits a CPU budget.
struct NetSpec {
    int conv_channels = 16;
    int conv_kernel = 3;
    int conv_stride = 1;
    int conv_pad = 1;
    int conv_layers = 3;
    int pool = 2;  // avgpool kernel applied after each conv block (0 = none)
    int dense_width = 128;
    int dense_layers = 2;

    std::vector<fn::LayerSpec> conv_stack() const {
        std::vector<fn::LayerSpec> out;
        for (int i = 0; i < conv_layers; ++i) {
            out.push_back(fn::LayerSpec::conv(conv_channels, conv_kernel, conv_stride, conv_pad));
            out.push_back(fn::LayerSpec::relu());
            if (pool > 1) out.push_back(fn::LayerSpec::avgpool(pool));
        }
        return out;
    }
    std::vector<fn::LayerSpec> dense_stack() const {
        std::vector<fn::LayerSpec> out;
        for (int i = 0; i < dense_layers; ++i) {
            out.push_back(fn::LayerSpec::dense(dense_width));
            out.push_back(fn::LayerSpec::relu());
        }
        return out;
    }
};

struct GraspConfig {
    int members = 6;
    double alpha = 10.0;
    double beta = 10.0;
    int batch = 64;
    int buffer_capacity = 20000;
    double lr = 3e-4;
    int n_grasp = 2;     // attempts per gate-triggered call in the main loop
    int updates_per_attempt = 1;
    long n_pt = 2000;    // stationary pretraining attempts
    double init_success_prior = 0.01;  // head bias starts at logit(prior)
    bool bootstrap_mask = false;
    double bootstrap_keep = 0.8;
    std::string head = "discrete";  // "discrete" | "continuous" (ablation)
    NetSpec net{16, 3, 2, 1, 3, 0, 128, 2};
};

struct CurriculumConfig {
    int n_start = 10;
    int n_stop = 50;
    long n_max = 2000;
    long n_bt = 300;
};

struct SacConfig {
    double gamma = 0.99;
    double tau = 0.005;
    int batch = 128;
    double lr = 3e-4;
    double target_entropy = -2.0;  // -(action dim)
    double alpha_init = 0.1;
    double fixed_alpha = -1.0;  // >= 0 pins the temperature (no auto-tuning)
    int update_every = 1;
    int buffer_capacity = 100000;
    bool relabel = false;
    double log_std_min = -5.0;
    double log_std_max = 2.0;
    NetSpec net{16, 3, 1, 1, 3, 2, 128, 2};
};

struct EvalConfig {
    int horizon = 250;
    double gate_threshold = 0.5;
    long eval_every = 5000;  // mid-training evaluation cadence (0 = off)
    int eval_seeds = 1;      // eval rollouts per evaluation point
    int smooth_window = 250;
};

struct PersistConfig {
    long checkpoint_every = 2000;  // environment steps (0 = only final)
    bool checkpoint_buffers = true;
    int flush_every = 100;
};

enum class Curriculum { stationary, autonomous };

struct ExperimentConfig {
    uint64_t master_seed = 1;
    long total_steps = 30000;
    Curriculum curriculum = Curriculum::stationary;
    std::string algo = "relmm";  // "relmm" | "single_policy"
    bool freeze_grasp_after_pretrain = false;

    WorldParams world;
    GraspConfig grasp;
    CurriculumConfig curr;
    SacConfig nav;
    EvalConfig eval;
    PersistConfig persist;

    // Resolves derived state (observation grid) and checks every invariant.
    void finalize();
    void validate() const;

    std::vector<int> nav_obs_shape() const { return {ObsSpec::kChannels, world.obs.size, world.obs.size}; }
    std::vector<int> grasp_obs_shape() const { return {ObsSpec::kChannels, world.obs.crop, world.obs.crop}; }
};

}  // namespace relmm
