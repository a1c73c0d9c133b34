#include "relmm/grasp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "relmm/errors.hpp"

namespace relmm {

GraspBuffer::GraspBuffer(size_t capacity, std::vector<int> obs_shape)
    : capacity_(capacity), obs_shape_(std::move(obs_shape)), obs_dim_(Tensor::numel_of(obs_shape_)) {
    if (capacity_ == 0) throw ConfigError("grasp buffer capacity must be positive");
}

void GraspBuffer::append(const Tensor& obs, int action, int reward) {
    if (obs.numel() != obs_dim_) throw std::invalid_argument("GraspBuffer: observation shape mismatch");
    const size_t slot = static_cast<size_t>(inserted_ % static_cast<long>(capacity_));
    if (obs_.size() < (slot + 1) * static_cast<size_t>(obs_dim_)) {
        obs_.resize((slot + 1) * static_cast<size_t>(obs_dim_));
        actions_.resize(slot + 1);
        rewards_.resize(slot + 1);
    }
    uint8_t* dst = obs_.data() + slot * static_cast<size_t>(obs_dim_);
    for (long i = 0; i < obs_dim_; ++i) dst[i] = quantize_obs(obs.data[static_cast<size_t>(i)]);
    actions_[slot] = action;
    rewards_[slot] = static_cast<int8_t>(reward);
    ++inserted_;
}

void GraspBuffer::decode_obs(size_t i, float* dst) const {
    const uint8_t* src = obs_.data() + i * static_cast<size_t>(obs_dim_);
    for (long k = 0; k < obs_dim_; ++k) dst[k] = dequantize_obs(src[k]);
}

void GraspBuffer::restore(std::vector<uint8_t> obs, std::vector<int32_t> actions, std::vector<int8_t> rewards,
                          long inserted) {
    if (actions.size() != rewards.size() || obs.size() != actions.size() * static_cast<size_t>(obs_dim_))
        throw std::invalid_argument("GraspBuffer::restore: inconsistent arrays");
    obs_ = std::move(obs);
    actions_ = std::move(actions);
    rewards_ = std::move(rewards);
    inserted_ = inserted;
}

namespace {

std::vector<fn::LayerSpec> member_layers(const GraspConfig& cfg) {
    std::vector<fn::LayerSpec> layers = cfg.net.conv_stack();
    const auto dense = cfg.net.dense_stack();
    layers.insert(layers.end(), dense.begin(), dense.end());
    layers.push_back(fn::LayerSpec::dense(grasp_region::kCells));
    return layers;
}

}  // namespace

GraspEnsemble::GraspEnsemble(const GraspConfig& cfg, std::vector<int> obs_shape, RngStream& init_rng)
    : cfg_(cfg), obs_shape_(std::move(obs_shape)) {
    if (cfg_.members < 1) throw ConfigError("grasp ensemble needs at least one member");
    const double prior = std::clamp(cfg_.init_success_prior, 1e-6, 1.0 - 1e-6);
    const float bias0 = static_cast<float>(std::log(prior / (1.0 - prior)));
    members_.reserve(cfg_.members);
    for (int m = 0; m < cfg_.members; ++m) {
        members_.emplace_back(member_layers(cfg_), obs_shape_, 0, init_rng, "grasp.m" + std::to_string(m));
        auto params = members_.back().params();
        params.back()->value.setConstant(bias0);  // pessimistic success prior
        opts_.emplace_back(cfg_.lr);
    }
}

void GraspEnsemble::stats(const Tensor& obs, std::vector<double>& mean, std::vector<double>& stdev) const {
    const int n = grasp_region::kCells;
    const int M = members();
    fn::MatX<float> x(1, obs.numel());
    for (long i = 0; i < obs.numel(); ++i) x(0, i) = obs.data[static_cast<size_t>(i)];
    std::vector<std::vector<double>> outs(M);
    for (int m = 0; m < M; ++m) {
        const fn::MatX<float> y = members_[m].infer(x);
        outs[m].resize(n);
        for (int i = 0; i < n; ++i) outs[m][i] = fn::sigmoid(y(0, i));
    }
    mean.assign(n, 0.0);
    stdev.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double mu = 0.0;
        for (int m = 0; m < M; ++m) mu += outs[m][i];
        mu /= M;
        double var = 0.0;
        for (int m = 0; m < M; ++m) var += (outs[m][i] - mu) * (outs[m][i] - mu);
        mean[i] = mu;
        stdev[i] = std::sqrt(var / M);  // population standard deviation
    }
}

std::vector<double> GraspEnsemble::g_tilde_from_stats(const std::vector<double>& mean,
                                                      const std::vector<double>& stdev, double alpha,
                                                      double beta) {
    std::vector<double> g(mean.size());
    for (size_t i = 0; i < g.size(); ++i) g[i] = alpha * mean[i] + beta * stdev[i];
    return g;
}

std::vector<double> GraspEnsemble::g_tilde(const Tensor& obs) const {
    std::vector<double> mean, stdev;
    stats(obs, mean, stdev);
    return g_tilde_from_stats(mean, stdev, cfg_.alpha, cfg_.beta);
}

int GraspEnsemble::sample_action(const Tensor& obs, RngStream& rng) const {
    const std::vector<double> p = fn::softmax(g_tilde(obs));
    const double u = rng.uniform();
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

int GraspEnsemble::greedy_action(const Tensor& obs) const {
    const std::vector<double> g = g_tilde(obs);
    int best = 0;
    for (size_t i = 1; i < g.size(); ++i)
        if (g[i] > g[best]) best = static_cast<int>(i);
    return best;
}

double GraspEnsemble::grasp_value_raw(const Tensor& obs) const {
    const std::vector<double> g = g_tilde(obs);
    return *std::max_element(g.begin(), g.end());
}

double GraspEnsemble::grasp_prob(const Tensor& obs) const {
    return std::clamp(grasp_value_raw(obs), 0.0, 1.0);
}

std::vector<double> GraspEnsemble::update(const GraspBuffer& buf, RngStream& batch_rng) {
    const size_t n = buf.size();
    if (n == 0) return {};
    const int B = cfg_.batch;
    const int M = members();
    // Draw every member's minibatch (and bootstrap mask) up front so member
    // updates stay independent of execution order.
    std::vector<std::vector<size_t>> idx(M, std::vector<size_t>(B));
    std::vector<std::vector<float>> mask(M, std::vector<float>(B, 1.0f));
    for (int m = 0; m < M; ++m)
        for (int b = 0; b < B; ++b) {
            idx[m][b] = static_cast<size_t>(batch_rng.uniform_index(n));
            if (cfg_.bootstrap_mask) mask[m][b] = batch_rng.uniform() < cfg_.bootstrap_keep ? 1.0f : 0.0f;
        }

    std::vector<double> losses(M, 0.0);
    fn::MatX<float> x(B, buf.obs_dim());
    fn::MatX<float> dy(B, grasp_region::kCells);
    for (int m = 0; m < M; ++m) {
        for (int b = 0; b < B; ++b) buf.decode_obs(idx[m][b], x.data() + static_cast<size_t>(b) * x.cols());
        const fn::MatX<float>& z = members_[m].forward(x);
        dy.setZero();
        double loss = 0.0;
        for (int b = 0; b < B; ++b) {
            const int a = buf.action(idx[m][b]);
            const float r = static_cast<float>(buf.reward(idx[m][b]));
            const float zb = z(b, a);
            // cross-entropy with logits, numerically stable
            loss += (std::max(zb, 0.0f) - zb * r + std::log1p(std::exp(-std::abs(zb)))) * mask[m][b];
            const float p = static_cast<float>(fn::sigmoid(zb));
            dy(b, a) = (p - r) * mask[m][b] / static_cast<float>(B);
        }
        losses[m] = loss / B;
        if (!std::isfinite(losses[m])) throw TrainingError("grasp member loss is not finite");
        members_[m].backward(dy);
        opts_[m].step(members_[m].params());
    }
    return losses;
}

uint64_t GraspEnsemble::param_hash() const {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& m : members_)
        for (const auto* p : m.params())
            for (long i = 0; i < p->value.size(); ++i) {
                float f = p->value.data()[i];
                uint32_t bits;
                static_assert(sizeof(bits) == sizeof(f));
                std::memcpy(&bits, &f, sizeof(bits));
                mix(bits);
            }
    return h;
}

WorldState make_practice_world(const RoomSpec& room, RngStream rng) {
    WorldState s;
    s.rng = std::move(rng);
    s.pose = {room.width / 2.0, room.height / 2.0, 0.0};
    const Vec2 q{s.rng.uniform(grasp_region::kX0, grasp_region::kX1),
                 s.rng.uniform(grasp_region::kY0, grasp_region::kY1)};
    s.objects.push_back({robot_to_world(s.pose, q), ObjectStatus::free_});
    return s;
}

bool free_object_in_grasp_region(const WorldState& s) {
    for (const auto& o : s.objects) {
        if (o.status != ObjectStatus::free_) continue;
        if (grasp_region::contains(world_to_robot(s.pose, o.position))) return true;
    }
    return false;
}

void recenter_practice_object(WorldState& s) {
    for (auto& o : s.objects) {
        if (o.status != ObjectStatus::free_) continue;
        const Vec2 q{s.rng.uniform(grasp_region::kX0, grasp_region::kX1),
                     s.rng.uniform(grasp_region::kY0, grasp_region::kY1)};
        o.position = robot_to_world(s.pose, q);
        return;
    }
}

int train_grasp(GraspEnsemble& ens, GraspBuffer& buf, WorldState& world, const WorldParams& wp, int n_steps,
                int pt, RngStream& sample_rng, RngStream& batch_rng, GraspTrainStats* stats, bool frozen) {
    GraspTrainStats local;
    GraspTrainStats& st = stats ? *stats : local;
    for (int t = 0; t < n_steps; ++t) {
        if (pt == 1 && !free_object_in_grasp_region(world)) {
            recenter_practice_object(world);
            st.world_mutated = true;
        }
        const Tensor obs = render_grasp_obs(world, wp.obs, wp.room);
        const int a = ens.sample_action(obs, sample_rng);
        const int r = attempt_grasp(world, a, wp.tolerance());
        buf.append(obs, a, r);
        st.attempts += 1;
        st.successes += r;
        if (!frozen) {
            for (int u = 0; u < ens.config().updates_per_attempt; ++u) {
                const auto losses = ens.update(buf, batch_rng);
                if (!losses.empty()) {
                    st.updates += 1;
                    double sum = 0.0;
                    for (double l : losses) sum += l;
                    st.last_mean_loss = sum / static_cast<double>(losses.size());
                }
            }
        }
        if (r == 1 && pt == 1) {
            drop_held_in_grasp_region(world, wp.room);
            st.world_mutated = true;
        } else if (r == 1 && pt == 0) {
            st.world_mutated = true;
            return 1;
        }
    }
    return 0;
}

int train_grasp_autocurr(GraspEnsemble& ens, GraspBuffer& buf, WorldState& world, const WorldParams& wp,
                         CurriculumCounters& c, int n_delegate, RngStream& sample_rng, RngStream& batch_rng,
                         GraspTrainStats* stats, bool frozen) {
    if (static_cast<long>(buf.size()) >= c.n_max)
        return train_grasp(ens, buf, world, wp, n_delegate, 0, sample_rng, batch_rng, stats, frozen);

    GraspTrainStats local;
    GraspTrainStats& st = stats ? *stats : local;
    c.n_since = 0;
    c.r_max = 0;
    while (true) {
        const Tensor obs = render_grasp_obs(world, wp.obs, wp.room);
        const int a = ens.sample_action(obs, sample_rng);
        const int r = attempt_grasp(world, a, wp.tolerance());
        buf.append(obs, a, r);
        st.attempts += 1;
        st.successes += r;
        if (r == 1) st.world_mutated = true;
        if (static_cast<long>(buf.size()) >= c.n_bt && !frozen) {
            for (int u = 0; u < ens.config().updates_per_attempt; ++u) {
                const auto losses = ens.update(buf, batch_rng);
                if (!losses.empty()) {
                    st.updates += 1;
                    double sum = 0.0;
                    for (double l : losses) sum += l;
                    st.last_mean_loss = sum / static_cast<double>(losses.size());
                }
            }
        }
        if (r == 1) {
            c.n_since = 0;
            c.r_max = 1;
        } else {
            c.n_since += 1;
        }
        if (static_cast<long>(buf.size()) >= c.n_max) break;
        if (c.r_max == 1 && c.n_since >= c.n_stop) break;
        if (c.r_max == 0 && c.n_since >= c.n_start) break;
        if (r == 1) {
            drop_held_in_grasp_region(world, wp.room);
            st.world_mutated = true;
        }
    }
    return c.r_max;
}

}  // namespace relmm
