#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "relmm/nav.hpp"

using namespace relmm;

namespace {

SacConfig flat_cfg() {
    SacConfig cfg;
    cfg.net = NetSpec{0, 3, 1, 1, 0, 0, 32, 2};  // dense-only nets on flat observations
    cfg.batch = 64;
    cfg.lr = 3e-3;
    return cfg;
}

Tensor flat_obs(float v = 0.0f) {
    Tensor t = Tensor::zeros({1});
    t.data[0] = v;
    return t;
}

NavBuffer constant_reward_buffer(int n, float r, RngStream& rng) {
    NavBuffer buf(static_cast<size_t>(n), {1}, 2);
    const Tensor o = flat_obs();
    for (int i = 0; i < n; ++i) {
        const float a[2] = {static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1))};
        buf.append(o, a, r, o, false, 0);
    }
    return buf;
}

}  // namespace

TEST_CASE("nav action sampling") {
    RngStream init(1, "init");
    SacAgent agent(flat_cfg(), {1}, 2, init);

    SUBCASE("all emitted actions stay inside [-1,1]^2") {
        RngStream rng(2, "act");
        const Tensor o = flat_obs(0.3f);
        for (int i = 0; i < 100000; ++i) {
            const auto a = agent.act_stochastic(o, rng);
            REQUIRE(a.size() == 2);
            REQUIRE(a[0] >= -1.0f);
            REQUIRE(a[0] <= 1.0f);
            REQUIRE(a[1] >= -1.0f);
            REQUIRE(a[1] <= 1.0f);
        }
    }
    SUBCASE("zero-weight actor is greedy at the origin") {
        for (auto* p : agent.actor().params()) p->value.setZero();
        const auto a = agent.act_greedy(flat_obs(0.7f));
        CHECK(a[0] == 0.0f);
        CHECK(a[1] == 0.0f);
    }
    SUBCASE("a fixed stream reproduces the stochastic sample") {
        RngStream r1(5, "act"), r2(5, "act");
        const auto a = agent.act_stochastic(flat_obs(0.1f), r1);
        const auto b = agent.act_stochastic(flat_obs(0.1f), r2);
        CHECK(a == b);
    }
}

TEST_CASE("navigation reward") {
    CHECK(compute_nav_reward(1) == 0.0f);
    CHECK(compute_nav_reward(0) == -1.0f);
    // linearity over an episode
    int successes = 0;
    float total = 0.0f;
    for (int t = 0; t < 40; ++t) {
        const int r_g = (t % 7 == 0) ? 1 : 0;
        successes += r_g;
        total += compute_nav_reward(r_g);
    }
    CHECK(total == doctest::Approx(successes - 40.0));
}

TEST_CASE("reward relabeling") {
    GraspConfig gcfg;
    gcfg.members = 2;
    gcfg.net = NetSpec{4, 3, 2, 1, 2, 0, 32, 1};
    ObsSpec ospec;
    ospec.finalize();
    RngStream init(7, "init");
    GraspEnsemble ens(gcfg, {3, ospec.crop, ospec.crop}, init);
    const Tensor o2 = Tensor::zeros({3, ospec.size, ospec.size});

    SUBCASE("real successes keep reward zero") {
        CHECK(relabel_reward(ens, ospec, o2.data.data(), 1) == 0.0f);
    }
    SUBCASE("pessimistic ensemble reproduces the unrelabeled value") {
        // fresh init has outputs near the prior -> reward close to -1
        const float r = relabel_reward(ens, ospec, o2.data.data(), 0);
        CHECK(r < -0.5f);
        CHECK(r >= -1.0f);
    }
    SUBCASE("clamped optimistic value 0.4 gives reward -0.6") {
        GraspConfig flat = gcfg;
        flat.beta = 0.0;
        RngStream init2(8, "init");
        GraspEnsemble e2(flat, {3, ospec.crop, ospec.crop}, init2);
        for (int m = 0; m < 2; ++m) {
            auto params = e2.member(m).params();
            for (auto* p : params) p->value.setZero();
            const double z = std::log(0.04 / 0.96);
            params.back()->value.setConstant(static_cast<float>(z));
        }
        const float r = relabel_reward(e2, ospec, o2.data.data(), 0);
        CHECK(r == doctest::Approx(-0.6).epsilon(1e-5));
    }
}

TEST_CASE("sac update mechanics") {
    SUBCASE("gamma = 0 with zero temperature: targets equal rewards exactly") {
        SacConfig cfg = flat_cfg();
        cfg.gamma = 0.0;
        cfg.fixed_alpha = 0.0;
        RngStream init(9, "init");
        SacAgent agent(cfg, {1}, 2, init);
        RngStream rng(10, "fill");
        NavBuffer buf = constant_reward_buffer(100, -1.0f, rng);
        std::vector<size_t> idx{0, 5, 17};
        RngStream urng(11, "u");
        const auto y = agent.td_targets(buf, idx, urng);
        for (float v : y) CHECK(v == -1.0f);
    }
    SUBCASE("tau = 1 makes targets equal live critics after one update") {
        SacConfig cfg = flat_cfg();
        cfg.tau = 1.0;
        RngStream init(12, "init");
        SacAgent agent(cfg, {1}, 2, init);
        RngStream rng(13, "fill");
        NavBuffer buf = constant_reward_buffer(200, -1.0f, rng);
        RngStream urng(14, "u");
        REQUIRE(agent.update(buf, urng).updated);
        auto live = agent.critic1().params();
        auto tgt = agent.target1().params();
        for (size_t i = 0; i < live.size(); ++i)
            CHECK((live[i]->value - tgt[i]->value).cwiseAbs().maxCoeff() == 0.0f);
    }
    SUBCASE("target smoothing follows the EMA contract") {
        SacConfig cfg = flat_cfg();
        RngStream init(15, "init");
        SacAgent agent(cfg, {1}, 2, init);
        RngStream rng(16, "fill");
        NavBuffer buf = constant_reward_buffer(200, -1.0f, rng);
        std::vector<fn::MatX<float>> old_t, old_l;
        for (auto* p : agent.target1().params()) old_t.push_back(p->value);
        RngStream urng(17, "u");
        REQUIRE(agent.update(buf, urng).updated);
        auto live = agent.critic1().params();
        auto tgt = agent.target1().params();
        const float tau = static_cast<float>(cfg.tau);
        for (size_t i = 0; i < tgt.size(); ++i) {
            const fn::MatX<float> want = (1.0f - tau) * old_t[i] + tau * live[i]->value;
            CHECK((tgt[i]->value - want).cwiseAbs().maxCoeff() <= 1e-7f);
        }
    }
    SUBCASE("identically seeded twin critics stay identical") {
        SacConfig cfg = flat_cfg();
        RngStream init(18, "init");
        SacAgent agent(cfg, {1}, 2, init);
        agent.critic2().copy_params_from(agent.critic1());
        agent.target2().copy_params_from(agent.target1());
        RngStream rng(19, "fill");
        NavBuffer buf = constant_reward_buffer(300, -1.0f, rng);
        RngStream urng(20, "u");
        for (int i = 0; i < 25; ++i) agent.update(buf, urng);
        auto p1 = agent.critic1().params();
        auto p2 = agent.critic2().params();
        for (size_t i = 0; i < p1.size(); ++i)
            CHECK((p1[i]->value - p2[i]->value).cwiseAbs().maxCoeff() == 0.0f);
    }
    SUBCASE("update waits for a full batch") {
        SacConfig cfg = flat_cfg();
        RngStream init(21, "init");
        SacAgent agent(cfg, {1}, 2, init);
        RngStream rng(22, "fill");
        NavBuffer buf = constant_reward_buffer(cfg.batch - 1, -1.0f, rng);
        RngStream urng(23, "u");
        CHECK_FALSE(agent.update(buf, urng).updated);
    }
    SUBCASE("stored rewards stay in {-1, 0}") {
        RngStream rng(24, "fill");
        NavBuffer buf = constant_reward_buffer(50, -1.0f, rng);
        const Tensor o = flat_obs();
        const float a[2] = {0.1f, 0.2f};
        buf.append(o, a, compute_nav_reward(1), o, true, 1);
        for (size_t i = 0; i < buf.size(); ++i) {
            const float r = buf.reward(i);
            CHECK((r == -1.0f || r == 0.0f));
        }
    }
}

TEST_CASE("toy continuing MDP: Q converges to r/(1-gamma)") {
    SacConfig cfg = flat_cfg();
    cfg.gamma = 0.9;
    cfg.fixed_alpha = 0.0;
    cfg.tau = 0.05;
    cfg.batch = 64;
    cfg.lr = 3e-3;
    RngStream init(25, "init");
    SacAgent agent(cfg, {1}, 2, init);
    RngStream rng(26, "fill");
    NavBuffer buf = constant_reward_buffer(256, -1.0f, rng);
    RngStream urng(27, "u");
    for (int i = 0; i < 3000; ++i) agent.update(buf, urng);

    // Evaluate Q at the policy's own action; the fixpoint is -1/(1-0.9) = -10.
    fn::MatX<float> x(1, 1);
    x(0, 0) = 0.0f;
    const auto a = agent.act_greedy(flat_obs());
    fn::MatX<float> am(1, 2);
    am(0, 0) = a[0];
    am(0, 1) = a[1];
    const float q = agent.critic1().infer(x, &am)(0, 0);
    CHECK(q == doctest::Approx(-10.0).epsilon(0.05));
}

TEST_CASE("actor gradient chain matches finite differences (double replica)") {
    // Same layer stacks and the same templated head/backward helpers the
    // float agent uses, instantiated in double for a clean FD oracle.
    using fn::LayerSpec;
    using fn::MatX;
    const int A = 2;
    RngStream init(28, "init");
    std::vector<LayerSpec> actor_layers{LayerSpec::dense(16), LayerSpec::relu(), LayerSpec::dense(2 * A)};
    std::vector<LayerSpec> critic_layers{LayerSpec::append_aux(), LayerSpec::dense(16), LayerSpec::relu(),
                                         LayerSpec::dense(1)};
    fn::Network<double> actor(actor_layers, {3}, 0, init, "actor");
    fn::Network<double> q1(critic_layers, {3}, A, init, "q1");
    fn::Network<double> q2(critic_layers, {3}, A, init, "q2");

    const int B = 4;
    RngStream data(29, "data");
    MatX<double> x(B, 3), eps(B, A);
    for (int b = 0; b < B; ++b) {
        for (int d = 0; d < 3; ++d) x(b, d) = data.uniform(-1, 1);
        for (int d = 0; d < A; ++d) eps(b, d) = data.normal();
    }
    const double temp = 0.37;
    const double lo = -5.0, hi = 2.0;

    auto loss = [&]() {
        SquashedHead<double> h;
        squashed_head_from(actor.infer(x), eps, lo, hi, h);
        const MatX<double> qa1 = q1.infer(x, &h.action);
        const MatX<double> qa2 = q2.infer(x, &h.action);
        double L = 0.0;
        for (int b = 0; b < B; ++b) L += temp * h.log_prob(b, 0) - std::min(qa1(b, 0), qa2(b, 0));
        return L / B;
    };

    // analytic gradient via the production helpers
    SquashedHead<double> h;
    squashed_head_from(actor.forward(x), eps, lo, hi, h);
    const MatX<double>& qa1 = q1.forward(x, &h.action);
    const MatX<double>& qa2 = q2.forward(x, &h.action);
    MatX<double> d1 = MatX<double>::Zero(B, 1), d2 = MatX<double>::Zero(B, 1);
    for (int b = 0; b < B; ++b) {
        if (qa1(b, 0) <= qa2(b, 0))
            d1(b, 0) = -1.0 / B;
        else
            d2(b, 0) = -1.0 / B;
    }
    MatX<double> da1, da2;
    q1.backward(d1, nullptr, &da1);
    q2.backward(d2, nullptr, &da2);
    const MatX<double> da = da1 + da2;
    MatX<double> dout;
    actor_head_backward(h, da, temp, B, lo, hi, dout);
    actor.forward(x);
    actor.backward(dout);

    RngStream pick(30, "pick");
    auto params = actor.params();
    for (int k = 0; k < 12; ++k) {
        auto* p = params[pick.uniform_index(params.size())];
        const long idx = static_cast<long>(pick.uniform_index(static_cast<uint64_t>(p->value.size())));
        const double analytic = p->grad.data()[idx];
        const double numeric = central_difference(
            [&](double v) {
                const double saved = p->value.data()[idx];
                p->value.data()[idx] = v;
                const double L = loss();
                p->value.data()[idx] = saved;
                return L;
            },
            p->value.data()[idx], 1e-5);
        CHECK(rel_error(analytic, numeric) <= 1e-4);
    }
}
