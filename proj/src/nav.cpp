#include "relmm/nav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "relmm/errors.hpp"

namespace relmm {

NavBuffer::NavBuffer(size_t capacity, std::vector<int> obs_shape, int action_dim)
    : capacity_(capacity), obs_shape_(std::move(obs_shape)), obs_dim_(Tensor::numel_of(obs_shape_)),
      action_dim_(action_dim) {
    if (capacity_ == 0) throw ConfigError("nav buffer capacity must be positive");
    if (action_dim_ < 1) throw ConfigError("nav action dimension must be positive");
}

void NavBuffer::append(const Tensor& o, const float* action, float r, const Tensor& o2, bool grasp_attempted,
                       int r_g) {
    if (o.numel() != obs_dim_ || o2.numel() != obs_dim_)
        throw std::invalid_argument("NavBuffer: observation shape mismatch");
    const size_t slot = static_cast<size_t>(inserted_ % static_cast<long>(capacity_));
    if (actions_.size() < (slot + 1) * static_cast<size_t>(action_dim_)) {
        obs_.resize((slot + 1) * static_cast<size_t>(obs_dim_));
        obs2_.resize((slot + 1) * static_cast<size_t>(obs_dim_));
        actions_.resize((slot + 1) * static_cast<size_t>(action_dim_));
        rewards_.resize(slot + 1);
        grasp_attempted_.resize(slot + 1);
        r_g_.resize(slot + 1);
    }
    uint8_t* d1 = obs_.data() + slot * static_cast<size_t>(obs_dim_);
    uint8_t* d2 = obs2_.data() + slot * static_cast<size_t>(obs_dim_);
    for (long i = 0; i < obs_dim_; ++i) {
        d1[i] = quantize_obs(o.data[static_cast<size_t>(i)]);
        d2[i] = quantize_obs(o2.data[static_cast<size_t>(i)]);
    }
    std::copy(action, action + action_dim_, actions_.begin() + slot * static_cast<size_t>(action_dim_));
    rewards_[slot] = r;
    grasp_attempted_[slot] = grasp_attempted ? 1 : 0;
    r_g_[slot] = static_cast<int8_t>(r_g);
    ++inserted_;
}

void NavBuffer::decode_obs(size_t i, float* dst) const {
    const uint8_t* src = obs_.data() + i * static_cast<size_t>(obs_dim_);
    for (long k = 0; k < obs_dim_; ++k) dst[k] = dequantize_obs(src[k]);
}

void NavBuffer::decode_obs2(size_t i, float* dst) const {
    const uint8_t* src = obs2_.data() + i * static_cast<size_t>(obs_dim_);
    for (long k = 0; k < obs_dim_; ++k) dst[k] = dequantize_obs(src[k]);
}

void NavBuffer::restore(std::vector<uint8_t> obs, std::vector<uint8_t> obs2, std::vector<float> actions,
                        std::vector<float> rewards, std::vector<int8_t> grasp_attempted,
                        std::vector<int8_t> r_g, long inserted) {
    const size_t n = rewards.size();
    if (obs.size() != n * static_cast<size_t>(obs_dim_) || obs2.size() != obs.size() ||
        actions.size() != n * static_cast<size_t>(action_dim_) || grasp_attempted.size() != n ||
        r_g.size() != n)
        throw std::invalid_argument("NavBuffer::restore: inconsistent arrays");
    obs_ = std::move(obs);
    obs2_ = std::move(obs2);
    actions_ = std::move(actions);
    rewards_ = std::move(rewards);
    grasp_attempted_ = std::move(grasp_attempted);
    r_g_ = std::move(r_g);
    inserted_ = inserted;
}

float relabel_reward(const GraspEnsemble& ens, const ObsSpec& obs, const float* o2_flat, int r_g) {
    if (r_g == 1) return 0.0f;
    const int n = obs.size, c = obs.crop;
    Tensor crop = Tensor::zeros({ObsSpec::kChannels, c, c});
    for (int ch = 0; ch < ObsSpec::kChannels; ++ch)
        for (int r = 0; r < c; ++r)
            for (int k = 0; k < c; ++k)
                crop.data[(static_cast<size_t>(ch) * c + r) * c + k] =
                    o2_flat[(static_cast<size_t>(ch) * n + (obs.crop_row0 + r)) * n + (obs.crop_col0 + k)];
    return static_cast<float>(ens.grasp_prob(crop)) - 1.0f;
}

namespace {

std::vector<fn::LayerSpec> actor_layers(const NetSpec& net, int action_dim) {
    std::vector<fn::LayerSpec> layers = net.conv_stack();
    const auto dense = net.dense_stack();
    layers.insert(layers.end(), dense.begin(), dense.end());
    layers.push_back(fn::LayerSpec::dense(2 * action_dim));
    return layers;
}

std::vector<fn::LayerSpec> critic_layers(const NetSpec& net) {
    std::vector<fn::LayerSpec> layers = net.conv_stack();
    layers.push_back(fn::LayerSpec::append_aux());
    const auto dense = net.dense_stack();
    layers.insert(layers.end(), dense.begin(), dense.end());
    layers.push_back(fn::LayerSpec::dense(1));
    return layers;
}

}  // namespace

SacAgent::SacAgent(const SacConfig& cfg, std::vector<int> obs_shape, int action_dim, RngStream& init_rng,
                   const std::string& name)
    : cfg_(cfg), action_dim_(action_dim),
      actor_(actor_layers(cfg.net, action_dim), obs_shape, 0, init_rng, name + ".actor"),
      q1_(critic_layers(cfg.net), obs_shape, action_dim, init_rng, name + ".q1"),
      q2_(critic_layers(cfg.net), obs_shape, action_dim, init_rng, name + ".q2"),
      q1t_(critic_layers(cfg.net), obs_shape, action_dim, init_rng, name + ".q1t"),
      q2t_(critic_layers(cfg.net), obs_shape, action_dim, init_rng, name + ".q2t"),
      opt_actor_(cfg.lr), opt_q1_(cfg.lr), opt_q2_(cfg.lr),
      log_alpha_(std::log(std::max(cfg.alpha_init, 1e-8))) {
    q1t_.copy_params_from(q1_);
    q2t_.copy_params_from(q2_);
}

double SacAgent::alpha() const {
    if (cfg_.fixed_alpha >= 0.0) return cfg_.fixed_alpha;
    return std::exp(log_alpha_);
}

void SacAgent::sample_head(const fn::MatX<float>& actor_out, RngStream* rng, ActorHead& h) const {
    const int B = static_cast<int>(actor_out.rows());
    const int A = action_dim_;
    fn::MatX<float> eps(B, A);
    if (rng) {
        for (int b = 0; b < B; ++b)
            for (int d = 0; d < A; ++d) eps(b, d) = static_cast<float>(rng->normal());
    } else {
        eps.setZero();  // greedy: squashed mean
    }
    squashed_head_from(actor_out, eps, cfg_.log_std_min, cfg_.log_std_max, h);
}

std::vector<float> SacAgent::act_stochastic(const Tensor& obs, RngStream& rng) const {
    fn::MatX<float> x(1, obs.numel());
    for (long i = 0; i < obs.numel(); ++i) x(0, i) = obs.data[static_cast<size_t>(i)];
    ActorHead h;
    sample_head(actor_.infer(x), &rng, h);
    return {h.action.data(), h.action.data() + action_dim_};
}

std::vector<float> SacAgent::act_greedy(const Tensor& obs) const {
    fn::MatX<float> x(1, obs.numel());
    for (long i = 0; i < obs.numel(); ++i) x(0, i) = obs.data[static_cast<size_t>(i)];
    ActorHead h;
    sample_head(actor_.infer(x), nullptr, h);
    return {h.action.data(), h.action.data() + action_dim_};
}

std::vector<float> SacAgent::td_targets(const NavBuffer& buf, const std::vector<size_t>& idx, RngStream& rng,
                                        const Relabeler* relabel) const {
    const int B = static_cast<int>(idx.size());
    fn::MatX<float> x2(B, buf.obs_dim());
    for (int b = 0; b < B; ++b) buf.decode_obs2(idx[b], x2.data() + static_cast<size_t>(b) * x2.cols());
    ActorHead h;
    sample_head(actor_.infer(x2), &rng, h);
    const fn::MatX<float> q1t = q1t_.infer(x2, &h.action);
    const fn::MatX<float> q2t = q2t_.infer(x2, &h.action);
    const double a = alpha();
    std::vector<float> y(B);
    for (int b = 0; b < B; ++b) {
        const float r = relabel ? (*relabel)(idx[b]) : buf.reward(idx[b]);
        const double soft_v = std::min(q1t(b, 0), q2t(b, 0)) - a * h.log_prob(b, 0);
        y[b] = static_cast<float>(r + cfg_.gamma * soft_v);
    }
    return y;
}

SacAgent::Losses SacAgent::update(const NavBuffer& buf, RngStream& rng, const Relabeler* relabel) {
    Losses out;
    const int B = cfg_.batch;
    if (buf.size() < static_cast<size_t>(B)) return out;
    out.updated = true;

    std::vector<size_t> idx(B);
    for (int b = 0; b < B; ++b) idx[b] = static_cast<size_t>(rng.uniform_index(buf.size()));

    fn::MatX<float> x(B, buf.obs_dim());
    fn::MatX<float> a(B, action_dim_);
    for (int b = 0; b < B; ++b) {
        buf.decode_obs(idx[b], x.data() + static_cast<size_t>(b) * x.cols());
        const float* ab = buf.action(idx[b]);
        for (int d = 0; d < action_dim_; ++d) a(b, d) = ab[d];
    }
    const std::vector<float> y = td_targets(buf, idx, rng, relabel);

    // critic steps
    auto critic_step = [&](fn::Network<float>& q, fn::Adam<float>& opt) {
        const fn::MatX<float>& pred = q.forward(x, &a);
        fn::MatX<float> dq(B, 1);
        double loss = 0.0;
        for (int b = 0; b < B; ++b) {
            const float diff = pred(b, 0) - y[b];
            loss += 0.5 * diff * diff;
            dq(b, 0) = diff / B;
        }
        q.backward(dq);
        opt.step(q.params());
        return loss / B;
    };
    out.q1 = critic_step(q1_, opt_q1_);
    out.q2 = critic_step(q2_, opt_q2_);
    if (!std::isfinite(out.q1) || !std::isfinite(out.q2)) throw TrainingError("critic loss is not finite");

    // actor step (reparameterized, through the min of the refreshed critics)
    const fn::MatX<float>& actor_out = actor_.forward(x);
    ActorHead h;
    sample_head(actor_out, &rng, h);
    const fn::MatX<float>& qa1 = q1_.forward(x, &h.action);
    const fn::MatX<float>& qa2 = q2_.forward(x, &h.action);

    fn::MatX<float> d1 = fn::MatX<float>::Zero(B, 1);
    fn::MatX<float> d2 = fn::MatX<float>::Zero(B, 1);
    double actor_loss = 0.0;
    const double temp = alpha();
    for (int b = 0; b < B; ++b) {
        const float qmin = std::min(qa1(b, 0), qa2(b, 0));
        actor_loss += temp * h.log_prob(b, 0) - qmin;
        if (qa1(b, 0) <= qa2(b, 0))
            d1(b, 0) = -1.0f / B;
        else
            d2(b, 0) = -1.0f / B;
    }
    actor_loss /= B;
    out.actor = actor_loss;
    if (!std::isfinite(actor_loss)) throw TrainingError("actor loss is not finite");

    fn::MatX<float> da1, da2;
    q1_.backward(d1, nullptr, &da1);
    q2_.backward(d2, nullptr, &da2);
    const fn::MatX<float> da = da1 + da2;  // dL/d(action)

    fn::MatX<float> dout;
    actor_head_backward(h, da, temp, B, cfg_.log_std_min, cfg_.log_std_max, dout);
    actor_.backward(dout);
    opt_actor_.step(actor_.params());

    // temperature
    double mean_lp = 0.0;
    for (int b = 0; b < B; ++b) mean_lp += h.log_prob(b, 0);
    mean_lp /= B;
    if (cfg_.fixed_alpha < 0.0) {
        const double g = -std::exp(log_alpha_) * (mean_lp + cfg_.target_entropy);
        ++alpha_t_;
        alpha_m_ = 0.9 * alpha_m_ + 0.1 * g;
        alpha_v_ = 0.999 * alpha_v_ + 0.001 * g * g;
        const double mhat = alpha_m_ / (1.0 - std::pow(0.9, static_cast<double>(alpha_t_)));
        const double vhat = alpha_v_ / (1.0 - std::pow(0.999, static_cast<double>(alpha_t_)));
        log_alpha_ -= cfg_.lr * mhat / (std::sqrt(vhat) + 1e-8);
        out.alpha_loss = -std::exp(log_alpha_) * (mean_lp + cfg_.target_entropy);
    }
    out.alpha = alpha();

    // target smoothing
    const float tau = static_cast<float>(cfg_.tau);
    auto ema = [tau](fn::Network<float>& target, fn::Network<float>& live) {
        auto tp = target.params();
        auto lp = live.params();
        for (size_t i = 0; i < tp.size(); ++i)
            tp[i]->value = (1.0f - tau) * tp[i]->value + tau * lp[i]->value;
    };
    ema(q1t_, q1_);
    ema(q2t_, q2_);
    return out;
}

uint64_t SacAgent::param_hash() const {
    uint64_t h = 1469598103934665603ULL;
    auto mix_net = [&h](const fn::Network<float>& n) {
        for (const auto* p : n.params())
            for (long i = 0; i < p->value.size(); ++i) {
                uint32_t bits;
                const float f = p->value.data()[i];
                std::memcpy(&bits, &f, sizeof(bits));
                for (int k = 0; k < 4; ++k) {
                    h ^= (bits >> (8 * k)) & 0xff;
                    h *= 1099511628211ULL;
                }
            }
    };
    mix_net(actor_);
    mix_net(q1_);
    mix_net(q2_);
    mix_net(q1t_);
    mix_net(q2t_);
    return h;
}

}  // namespace relmm
