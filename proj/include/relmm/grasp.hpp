#pragma once

#include <optional>
#include <vector>

#include "relmm/config.hpp"
#include "relmm/fnapprox.hpp"
#include "relmm/rng.hpp"
#include "relmm/tensor.hpp"
#include "relmm/world.hpp"

namespace relmm {

// Replay buffer D_g of (grasp observation, cell index, binary reward).
// Observations are kept 8-bit quantized; FIFO beyond capacity.
class GraspBuffer {
public:
    GraspBuffer(size_t capacity, std::vector<int> obs_shape);

    void append(const Tensor& obs, int action, int reward);
    size_t size() const { return std::min<size_t>(static_cast<size_t>(inserted_), capacity_); }
    long inserted() const { return inserted_; }
    long obs_dim() const { return obs_dim_; }
    const std::vector<int>& obs_shape() const { return obs_shape_; }

    void decode_obs(size_t i, float* dst) const;
    int action(size_t i) const { return actions_[i]; }
    int reward(size_t i) const { return rewards_[i]; }

    // checkpoint access
    const std::vector<uint8_t>& raw_obs() const { return obs_; }
    const std::vector<int32_t>& raw_actions() const { return actions_; }
    const std::vector<int8_t>& raw_rewards() const { return rewards_; }
    void restore(std::vector<uint8_t> obs, std::vector<int32_t> actions, std::vector<int8_t> rewards,
                 long inserted);

private:
    size_t capacity_;
    std::vector<int> obs_shape_;
    long obs_dim_;
    long inserted_ = 0;
    std::vector<uint8_t> obs_;
    std::vector<int32_t> actions_;
    std::vector<int8_t> rewards_;
};

inline uint8_t quantize_obs(float v) {
    const int q = static_cast<int>(std::lround(v * 255.0f));
    return static_cast<uint8_t>(std::clamp(q, 0, 255));
}
inline float dequantize_obs(uint8_t q) { return static_cast<float>(q) / 255.0f; }

// Ensemble of M independent grasp-success predictors over the 15x15 grid.
// Exploration follows a Boltzmann distribution over the optimistic value
// alpha * mean + beta * std of the per-cell sigmoid outputs.
class GraspEnsemble {
public:
    GraspEnsemble(const GraspConfig& cfg, std::vector<int> obs_shape, RngStream& init_rng);

    int members() const { return static_cast<int>(members_.size()); }
    const GraspConfig& config() const { return cfg_; }
    void set_beta(double beta) { cfg_.beta = beta; }

    // Per-cell mean and population standard deviation of member outputs.
    void stats(const Tensor& obs, std::vector<double>& mean, std::vector<double>& stdev) const;
    std::vector<double> g_tilde(const Tensor& obs) const;
    static std::vector<double> g_tilde_from_stats(const std::vector<double>& mean,
                                                  const std::vector<double>& stdev, double alpha, double beta);

    int sample_action(const Tensor& obs, RngStream& rng) const;  // Boltzmann draw
    int greedy_action(const Tensor& obs) const;                  // argmax, lowest index wins ties
    double grasp_prob(const Tensor& obs) const;                  // clamp(max g_tilde, 0, 1)
    double grasp_value_raw(const Tensor& obs) const;             // unclamped max (for logs/relabel audit)

    // One cross-entropy step per member on an independent minibatch.
    // Empty buffer: no-op, returns an empty loss vector.
    std::vector<double> update(const GraspBuffer& buf, RngStream& batch_rng);

    fn::Network<float>& member(int i) { return members_[i]; }
    const fn::Network<float>& member(int i) const { return members_[i]; }
    fn::Adam<float>& optimizer(int i) { return opts_[i]; }

    // Stable hash of all member parameters (freeze audits).
    uint64_t param_hash() const;

private:
    GraspConfig cfg_;
    std::vector<int> obs_shape_;
    std::vector<fn::Network<float>> members_;
    std::vector<fn::Adam<float>> opts_;
};

// Live counters of the autonomous grasp curriculum (Alg. 3 state).
struct CurriculumCounters {
    int n_start = 10;
    int n_stop = 50;
    long n_max = 2000;
    long n_bt = 300;
    int n_since = 0;
    int r_max = 0;

    static CurriculumCounters from(const CurriculumConfig& c) {
        return {c.n_start, c.n_stop, c.n_max, c.n_bt, 0, 0};
    }
};

struct GraspTrainStats {
    int attempts = 0;
    int successes = 0;
    int updates = 0;
    bool world_mutated = false;
    double last_mean_loss = 0.0;
};

// TrainGrasp. pt = 1 keeps practicing after success (stationary curriculum,
// with automatic recovery of the practice object); pt = 0 returns on the
// first success with the object held.
int train_grasp(GraspEnsemble& ens, GraspBuffer& buf, WorldState& world, const WorldParams& wp, int n_steps,
                int pt, RngStream& sample_rng, RngStream& batch_rng, GraspTrainStats* stats = nullptr,
                bool frozen = false);

// TrainGraspAutoCurr. Delegates to train_grasp(pt = 0) once the buffer holds
// n_max records; otherwise front-loads attempts under the counter logic and
// returns r_max.
int train_grasp_autocurr(GraspEnsemble& ens, GraspBuffer& buf, WorldState& world, const WorldParams& wp,
                         CurriculumCounters& counters, int n_delegate, RngStream& sample_rng,
                         RngStream& batch_rng, GraspTrainStats* stats = nullptr, bool frozen = false);

// Practice arena for the stationary curriculum: robot parked mid-room with a
// single object placed in the grasp region.
WorldState make_practice_world(const RoomSpec& room, RngStream rng);
bool free_object_in_grasp_region(const WorldState& s);
// The simulator's stand-in for a human nudging a stuck practice object back.
void recenter_practice_object(WorldState& s);

}  // namespace relmm
