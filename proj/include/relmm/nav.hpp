#pragma once

#include <functional>
#include <vector>

#include "relmm/config.hpp"
#include "relmm/fnapprox.hpp"
#include "relmm/grasp.hpp"
#include "relmm/rng.hpp"
#include "relmm/tensor.hpp"

namespace relmm {

// Replay buffer D_n of (o, a, r, o', grasp_attempted, r_g). Stored rewards
// stay in {-1, 0}; relabeling happens at sampling time and never mutates
// records. Observations are 8-bit quantized.
class NavBuffer {
public:
    NavBuffer(size_t capacity, std::vector<int> obs_shape, int action_dim);

    void append(const Tensor& o, const float* action, float r, const Tensor& o2, bool grasp_attempted,
                int r_g);
    size_t size() const { return std::min<size_t>(static_cast<size_t>(inserted_), capacity_); }
    long inserted() const { return inserted_; }
    long obs_dim() const { return obs_dim_; }
    int action_dim() const { return action_dim_; }
    const std::vector<int>& obs_shape() const { return obs_shape_; }

    void decode_obs(size_t i, float* dst) const;
    void decode_obs2(size_t i, float* dst) const;
    const float* action(size_t i) const { return actions_.data() + i * action_dim_; }
    float reward(size_t i) const { return rewards_[i]; }
    bool grasp_attempted(size_t i) const { return grasp_attempted_[i] != 0; }
    int r_g(size_t i) const { return r_g_[i]; }

    // checkpoint access
    const std::vector<uint8_t>& raw_obs() const { return obs_; }
    const std::vector<uint8_t>& raw_obs2() const { return obs2_; }
    const std::vector<float>& raw_actions() const { return actions_; }
    const std::vector<float>& raw_rewards() const { return rewards_; }
    const std::vector<int8_t>& raw_grasp_attempted() const { return grasp_attempted_; }
    const std::vector<int8_t>& raw_r_g() const { return r_g_; }
    void restore(std::vector<uint8_t> obs, std::vector<uint8_t> obs2, std::vector<float> actions,
                 std::vector<float> rewards, std::vector<int8_t> grasp_attempted, std::vector<int8_t> r_g,
                 long inserted);

private:
    size_t capacity_;
    std::vector<int> obs_shape_;
    long obs_dim_;
    int action_dim_;
    long inserted_ = 0;
    std::vector<uint8_t> obs_, obs2_;
    std::vector<float> actions_;
    std::vector<float> rewards_;
    std::vector<int8_t> grasp_attempted_, r_g_;
};

// Navigation reward of the training loop.
inline float compute_nav_reward(int r_g) { return static_cast<float>(r_g) - 1.0f; }

// Relabeled reward r_{n-std}: transitions without a real success are credited
// with the grasp ensemble's clamped optimistic estimate of the reached state,
// minus one. Successful transitions keep reward 0.
float relabel_reward(const GraspEnsemble& ens, const ObsSpec& obs, const float* o2_flat, int r_g);

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)
inline constexpr double kTanhEps = 1e-6;

// Squashed-Gaussian policy head: a = tanh(mean + sigma * eps), with the
// change-of-variables log-density. Templated so the gradient chain can be
// finite-difference checked in double precision.
template <typename T>
struct SquashedHead {
    fn::MatX<T> mean, log_std_raw, log_std, sigma, eps, action, log_prob;
};

template <typename T>
void squashed_head_from(const fn::MatX<T>& actor_out, const fn::MatX<T>& eps, double log_std_min,
                        double log_std_max, SquashedHead<T>& h) {
    const int B = static_cast<int>(actor_out.rows());
    const int A = static_cast<int>(actor_out.cols()) / 2;
    h.mean = actor_out.leftCols(A);
    h.log_std_raw = actor_out.rightCols(A);
    h.log_std = h.log_std_raw.cwiseMax(static_cast<T>(log_std_min)).cwiseMin(static_cast<T>(log_std_max));
    h.sigma = h.log_std.array().exp().matrix();
    h.eps = eps;
    fn::MatX<T> u = h.mean + h.sigma.cwiseProduct(h.eps);
    h.action = u.array().tanh().matrix();
    h.log_prob.resize(B, 1);
    for (int b = 0; b < B; ++b) {
        double lp = 0.0;
        for (int d = 0; d < A; ++d) {
            const double e = h.eps(b, d);
            const double a = h.action(b, d);
            lp += -0.5 * e * e - static_cast<double>(h.log_std(b, d)) - kHalfLog2Pi -
                  std::log(1.0 - a * a + kTanhEps);
        }
        h.log_prob(b, 0) = static_cast<T>(lp);
    }
}

// Gradient of mean(temp * log pi - Q(x, a)) w.r.t. the raw actor outputs,
// given dq_daction = d(-mean Q term)/d(action) from the critic backward pass.
template <typename T>
void actor_head_backward(const SquashedHead<T>& h, const fn::MatX<T>& dq_daction, double temp, int batch,
                         double log_std_min, double log_std_max, fn::MatX<T>& dout) {
    const int B = static_cast<int>(h.action.rows());
    const int A = static_cast<int>(h.action.cols());
    dout.resize(B, 2 * A);
    for (int b = 0; b < B; ++b)
        for (int d = 0; d < A; ++d) {
            const double act = h.action(b, d);
            const double one_m_a2 = 1.0 - act * act;
            const double dlogp_du = 2.0 * act * one_m_a2 / (one_m_a2 + kTanhEps);
            const double sig_eps = static_cast<double>(h.sigma(b, d)) * h.eps(b, d);
            const double dl_du = (temp / batch) * dlogp_du + dq_daction(b, d) * one_m_a2;
            dout(b, d) = static_cast<T>(dl_du);
            const bool clamp_active = h.log_std_raw(b, d) <= static_cast<T>(log_std_min) ||
                                      h.log_std_raw(b, d) >= static_cast<T>(log_std_max);
            const double dl_dlogstd = dl_du * sig_eps - (temp / batch);
            dout(b, A + d) = clamp_active ? T(0) : static_cast<T>(dl_dlogstd);
        }
}

// Entropy-regularized off-policy actor-critic over squashed-Gaussian actions.
// action_dim is 2 for navigation, 5 for the single-policy ablation and 2 for
// the continuous-grasp bandit head.
class SacAgent {
public:
    SacAgent(const SacConfig& cfg, std::vector<int> obs_shape, int action_dim, RngStream& init_rng,
             const std::string& name = "nav");

    int action_dim() const { return action_dim_; }
    const SacConfig& config() const { return cfg_; }

    std::vector<float> act_stochastic(const Tensor& obs, RngStream& rng) const;
    std::vector<float> act_greedy(const Tensor& obs) const;

    struct Losses {
        bool updated = false;
        double q1 = 0.0, q2 = 0.0, actor = 0.0, alpha_loss = 0.0, alpha = 0.0;
    };

    // Effective reward at sampling time; nullptr keeps stored rewards.
    using Relabeler = std::function<float(size_t record_index)>;

    Losses update(const NavBuffer& buf, RngStream& rng, const Relabeler* relabel = nullptr);

    // TD targets for an explicit index set (exposed for the unit oracles).
    std::vector<float> td_targets(const NavBuffer& buf, const std::vector<size_t>& idx, RngStream& rng,
                                  const Relabeler* relabel = nullptr) const;

    double alpha() const;
    double log_alpha() const { return log_alpha_; }
    void set_log_alpha(double v) { log_alpha_ = v; }

    fn::Network<float>& actor() { return actor_; }
    fn::Network<float>& critic1() { return q1_; }
    fn::Network<float>& critic2() { return q2_; }
    fn::Network<float>& target1() { return q1t_; }
    fn::Network<float>& target2() { return q2t_; }
    fn::Adam<float>& actor_opt() { return opt_actor_; }
    fn::Adam<float>& critic1_opt() { return opt_q1_; }
    fn::Adam<float>& critic2_opt() { return opt_q2_; }
    const fn::Network<float>& actor() const { return actor_; }
    const fn::Network<float>& critic1() const { return q1_; }
    const fn::Network<float>& critic2() const { return q2_; }

    // scalar-temperature optimizer state (checkpointing)
    double alpha_m() const { return alpha_m_; }
    double alpha_v() const { return alpha_v_; }
    long alpha_t() const { return alpha_t_; }
    void set_alpha_state(double m, double v, long t) {
        alpha_m_ = m;
        alpha_v_ = v;
        alpha_t_ = t;
    }

    uint64_t param_hash() const;

private:
    using ActorHead = SquashedHead<float>;
    void sample_head(const fn::MatX<float>& actor_out, RngStream* rng, ActorHead& h) const;

    SacConfig cfg_;
    int action_dim_;
    fn::Network<float> actor_, q1_, q2_, q1t_, q2t_;
    fn::Adam<float> opt_actor_, opt_q1_, opt_q2_;
    double log_alpha_;
    double alpha_m_ = 0.0, alpha_v_ = 0.0;
    long alpha_t_ = 0;
};

}  // namespace relmm
