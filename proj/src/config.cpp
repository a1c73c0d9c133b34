#include "relmm/config.hpp"

#include "relmm/errors.hpp"

namespace relmm {

void ExperimentConfig::finalize() {
    world.obs.finalize();
    validate();
}

void ExperimentConfig::validate() const {
    world.validate();
    if (total_steps < 0) throw ConfigError("run.total_steps must be >= 0");
    if (algo != "relmm" && algo != "single_policy")
        throw ConfigError("run.algo must be 'relmm' or 'single_policy'");
    if (grasp.head != "discrete" && grasp.head != "continuous")
        throw ConfigError("grasp.head must be 'discrete' or 'continuous'");
    if (grasp.members < 1) throw ConfigError("grasp.members must be >= 1");
    if (grasp.batch < 1 || nav.batch < 1) throw ConfigError("batch sizes must be >= 1");
    if (grasp.buffer_capacity < 1 || nav.buffer_capacity < 1)
        throw ConfigError("buffer capacities must be >= 1");
    if (grasp.alpha < 0.0 || grasp.beta < 0.0) throw ConfigError("grasp.alpha/beta must be >= 0");
    if (grasp.n_grasp < 1) throw ConfigError("grasp.n_grasp must be >= 1");
    if (grasp.updates_per_attempt < 0) throw ConfigError("grasp.updates_per_attempt must be >= 0");
    if (grasp.n_pt < 0) throw ConfigError("grasp.n_pt must be >= 0");
    if (grasp.init_success_prior <= 0.0 || grasp.init_success_prior >= 1.0)
        throw ConfigError("grasp.init_success_prior must be in (0, 1)");
    if (curr.n_start < 1 || curr.n_stop < 1 || curr.n_max < 1 || curr.n_bt < 0)
        throw ConfigError("curriculum thresholds must be positive");
    if (nav.gamma < 0.0 || nav.gamma >= 1.0) throw ConfigError("nav.gamma must be in [0, 1)");
    if (nav.tau <= 0.0 || nav.tau > 1.0) throw ConfigError("nav.tau must be in (0, 1]");
    if (nav.update_every < 1) throw ConfigError("nav.update_every must be >= 1");
    if (nav.log_std_min >= nav.log_std_max) throw ConfigError("nav.log_std bounds are inverted");
    if (eval.horizon < 1) throw ConfigError("eval.horizon must be >= 1");
    if (eval.gate_threshold < 0.0 || eval.gate_threshold > 1.0)
        throw ConfigError("eval.gate_threshold must be in [0, 1]");
    if (eval.eval_seeds < 1) throw ConfigError("eval.eval_seeds must be >= 1");
    if (persist.checkpoint_every < 0) throw ConfigError("persist.checkpoint_every must be >= 0");
    if (persist.flush_every < 1) throw ConfigError("persist.flush_every must be >= 1");
}

}  // namespace relmm
