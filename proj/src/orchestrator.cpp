#include "relmm/orchestrator.hpp"

#include <filesystem>

#include "relmm/errors.hpp"
#include "relmm/log.hpp"

namespace relmm {

RngSet RngSet::from_master(uint64_t seed) {
    return RngSet{RngStream(seed, "world"),          RngStream(seed, "world-pretrain"),
                  RngStream(seed, "ensemble-init"),  RngStream(seed, "ensemble-batch"),
                  RngStream(seed, "grasp-sample"),   RngStream(seed, "nav"),
                  RngStream(seed, "gate"),           RngStream(seed, "eval")};
}

nlohmann::json RngSet::serialize() const {
    return {{"world", world.serialize()},
            {"world_pretrain", world_pretrain.serialize()},
            {"ensemble_init", ensemble_init.serialize()},
            {"ensemble_batch", ensemble_batch.serialize()},
            {"grasp_sample", grasp_sample.serialize()},
            {"nav", nav.serialize()},
            {"gate", gate.serialize()},
            {"eval", eval.serialize()}};
}

RngSet RngSet::deserialize(const nlohmann::json& j) {
    RngSet r;
    r.world = RngStream::deserialize(j.at("world"));
    r.world_pretrain = RngStream::deserialize(j.at("world_pretrain"));
    r.ensemble_init = RngStream::deserialize(j.at("ensemble_init"));
    r.ensemble_batch = RngStream::deserialize(j.at("ensemble_batch"));
    r.grasp_sample = RngStream::deserialize(j.at("grasp_sample"));
    r.nav = RngStream::deserialize(j.at("nav"));
    r.gate = RngStream::deserialize(j.at("gate"));
    r.eval = RngStream::deserialize(j.at("eval"));
    return r;
}

std::string TrainLog::digest() const {
    std::string out;
    for (const MetricsRow& r : rows) {
        std::string line = r.to_line();
        const size_t cut = line.rfind(',');
        out.append(line, 0, cut);  // drop wall_time
        out.push_back('\n');
    }
    return out;
}

bool gate_decision(const GraspEnsemble& ens, const Tensor& nav_obs, const ObsSpec& spec, RngStream& rng) {
    const Tensor crop = crop_grasp_window(nav_obs, spec);
    const double p = ens.grasp_prob(crop);
    const double u = rng.uniform();
    return p > 0.0 && u <= p;
}

// ---------------------------------------------------------------------------

namespace {

// Checkpoint helpers: every network parameter plus its optimizer moments.
void put_network(CheckpointWriter& w, const fn::Network<float>& net) {
    for (const auto* p : net.params())
        w.put(p->name, {static_cast<int>(p->value.rows()), static_cast<int>(p->value.cols())},
              p->value.data(), static_cast<size_t>(p->value.size()));
}

void put_adam(CheckpointWriter& w, fn::Adam<float>& opt, fn::Network<float>& net) {
    opt.ensure_state(net.params());
    auto params = net.params();
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& m = opt.moments1()[i];
        const auto& v = opt.moments2()[i];
        w.put("adam." + params[i]->name + ".m", {static_cast<int>(m.rows()), static_cast<int>(m.cols())},
              m.data(), static_cast<size_t>(m.size()));
        w.put("adam." + params[i]->name + ".v", {static_cast<int>(v.rows()), static_cast<int>(v.cols())},
              v.data(), static_cast<size_t>(v.size()));
    }
}

void load_network(const Checkpoint& c, fn::Network<float>& net) {
    for (auto* p : net.params()) {
        const auto& data = c.array(p->name);
        if (static_cast<long>(data.size()) != p->value.size())
            throw std::runtime_error("checkpoint array '" + p->name + "' has the wrong size");
        std::copy(data.begin(), data.end(), p->value.data());
    }
}

void load_adam(const Checkpoint& c, fn::Adam<float>& opt, fn::Network<float>& net, long step_count) {
    opt.ensure_state(net.params());
    auto params = net.params();
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& m = c.array("adam." + params[i]->name + ".m");
        const auto& v = c.array("adam." + params[i]->name + ".v");
        std::copy(m.begin(), m.end(), opt.moments1()[i].data());
        std::copy(v.begin(), v.end(), opt.moments2()[i].data());
    }
    opt.set_step_count(step_count);
}

std::vector<float> u8_to_float(const std::vector<uint8_t>& v) {
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = dequantize_obs(v[i]);
    return out;
}

std::vector<uint8_t> float_to_u8(const std::vector<float>& v) {
    std::vector<uint8_t> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = quantize_obs(v[i]);
    return out;
}

nlohmann::json world_to_json(const WorldState& s) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : s.objects)
        objs.push_back({{"x", o.position.x}, {"y", o.position.y}, {"status", static_cast<int>(o.status)}});
    return {{"pose", {{"x", s.pose.x}, {"y", s.pose.y}, {"heading", s.pose.heading}}},
            {"step_count", s.step_count},
            {"rng", s.rng.serialize()},
            {"objects", objs}};
}

WorldState world_from_json(const nlohmann::json& j) {
    WorldState s;
    s.pose.x = j.at("pose").at("x");
    s.pose.y = j.at("pose").at("y");
    s.pose.heading = j.at("pose").at("heading");
    s.step_count = j.at("step_count");
    s.rng = RngStream::deserialize(j.at("rng"));
    for (const auto& o : j.at("objects"))
        s.objects.push_back(
            ObjectState{{o.at("x"), o.at("y")}, static_cast<ObjectStatus>(o.at("status").get<int>())});
    return s;
}

}  // namespace

Trainer::Trainer(ExperimentConfig cfg, TrainerOptions opt) : cfg_(std::move(cfg)), opt_(std::move(opt)) {
    if (!cfg_.world.obs.finalized()) cfg_.finalize();
    rngs_ = RngSet::from_master(cfg_.master_seed);
    ens_ = std::make_unique<GraspEnsemble>(cfg_.grasp, cfg_.grasp_obs_shape(), rngs_.ensemble_init);
    dg_ = std::make_unique<GraspBuffer>(static_cast<size_t>(cfg_.grasp.buffer_capacity),
                                        cfg_.grasp_obs_shape());
    sac_ = std::make_unique<SacAgent>(cfg_.nav, cfg_.nav_obs_shape(), 2, rngs_.nav);
    dn_ = std::make_unique<NavBuffer>(static_cast<size_t>(cfg_.nav.buffer_capacity), cfg_.nav_obs_shape(), 2);
    world_ = scatter_objects(cfg_.world.room, rngs_.world, cfg_.world.scatter_max_attempts);
    if (opt_.csv) {
        csv_ = opt_.csv;
    } else if (!opt_.out_dir.empty()) {
        std::filesystem::create_directories(opt_.out_dir);
        own_csv_ = std::make_unique<MetricsCsv>(opt_.out_dir + "/metrics.csv", cfg_.persist.flush_every,
                                                opt_.append_csv);
        csv_ = own_csv_.get();
    }
    last_counters_ = CurriculumCounters::from(cfg_.curr);
}

double Trainer::wall_seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
}

void Trainer::emit_pretrain_row(const GraspTrainStats& st, double p_grasp) {
    MetricsRow row;
    row.run_id = opt_.run_id;
    row.variant = opt_.variant;
    row.seed = opt_.seed_label;
    row.step = global_row_;
    row.event = "train";
    row.r_g = st.successes;
    row.p_grasp = p_grasp;
    row.dg_size = static_cast<long>(dg_->size());
    row.dn_size = static_cast<long>(dn_->size());
    if (st.updates > 0) row.loss_grasp = st.last_mean_loss;
    row.wall_time = wall_seconds();
    log_.add(row, csv_);
    ++global_row_;
}

void Trainer::pretrain() {
    if (pretrain_done_) return;
    pretrain_done_ = true;
    if (cfg_.curriculum != Curriculum::stationary) return;  // Alg. 4 deletes the pretraining line
    WorldState practice = make_practice_world(cfg_.world.room, rngs_.world_pretrain);
    for (long i = 0; i < cfg_.grasp.n_pt; ++i) {
        GraspTrainStats st;
        train_grasp(*ens_, *dg_, practice, cfg_.world, 1, 1, rngs_.grasp_sample, rngs_.ensemble_batch, &st);
        emit_pretrain_row(st, -1.0);
    }
    logging::info("pretraining finished: " + std::to_string(dg_->size()) + " grasp records");
}

SacAgent::Relabeler Trainer::make_relabeler() {
    return [this](size_t idx) -> float {
        if (dn_->r_g(idx) == 1) return 0.0f;
        std::vector<float> o2(static_cast<size_t>(dn_->obs_dim()));
        dn_->decode_obs2(idx, o2.data());
        return relabel_reward(*ens_, cfg_.world.obs, o2.data(), 0);
    };
}

void Trainer::main_step() {
    if (!pretrain_done_) throw std::logic_error("main_step before pretrain()");
    std::shared_ptr<Tensor> o_pre = cached_obs_;
    if (!o_pre) o_pre = std::make_shared<Tensor>(render_nav_obs(world_, cfg_.world.obs, cfg_.world.room));

    const std::vector<float> a = sac_->act_stochastic(*o_pre, rngs_.nav);
    step_base(world_, cfg_.world.room, {a[0], a[1]});
    obstacle_guard(world_, cfg_.world);

    std::shared_ptr<Tensor> o_post =
        std::make_shared<Tensor>(render_nav_obs(world_, cfg_.world.obs, cfg_.world.room));
    const Tensor crop = crop_grasp_window(*o_post, cfg_.world.obs);
    const double p = ens_->grasp_prob(crop);
    const double u = rngs_.gate.uniform();
    const bool fired = p > 0.0 && u <= p;

    int r_g = 0;
    GraspTrainStats gst;
    const bool frozen = cfg_.freeze_grasp_after_pretrain;
    if (fired) {
        if (cfg_.curriculum == Curriculum::stationary) {
            r_g = train_grasp(*ens_, *dg_, world_, cfg_.world, cfg_.grasp.n_grasp, 0, rngs_.grasp_sample,
                              rngs_.ensemble_batch, &gst, frozen);
        } else {
            last_counters_ = CurriculumCounters::from(cfg_.curr);
            r_g = train_grasp_autocurr(*ens_, *dg_, world_, cfg_.world, last_counters_, cfg_.grasp.n_grasp,
                                       rngs_.grasp_sample, rngs_.ensemble_batch, &gst, frozen);
        }
    }
    const float r_n = compute_nav_reward(r_g);

    std::shared_ptr<Tensor> o_next = gst.world_mutated
                                         ? std::make_shared<Tensor>(render_nav_obs(world_, cfg_.world.obs,
                                                                                   cfg_.world.room))
                                         : o_post;
    dn_->append(*o_pre, a.data(), r_n, *o_next, fired, r_g);

    SacAgent::Losses losses;
    if (step_ % cfg_.nav.update_every == 0) {
        if (cfg_.nav.relabel) {
            SacAgent::Relabeler relabeler = make_relabeler();
            losses = sac_->update(*dn_, rngs_.nav, &relabeler);
        } else {
            losses = sac_->update(*dn_, rngs_.nav);
        }
    }

    if (world_.holding()) {
        pseudo_reset(world_, cfg_.world);
        cached_obs_ = nullptr;
    } else {
        cached_obs_ = o_next;
    }

    MetricsRow row;
    row.run_id = opt_.run_id;
    row.variant = opt_.variant;
    row.seed = opt_.seed_label;
    row.step = global_row_;
    row.event = "train";
    row.r_g = r_g;
    row.r_n = r_n;
    row.p_grasp = p;
    row.dg_size = static_cast<long>(dg_->size());
    row.dn_size = static_cast<long>(dn_->size());
    if (losses.updated) {
        row.loss_q1 = losses.q1;
        row.loss_q2 = losses.q2;
        row.loss_actor = losses.actor;
        row.loss_alpha = losses.alpha;
    }
    if (gst.updates > 0) row.loss_grasp = gst.last_mean_loss;
    row.wall_time = wall_seconds();
    log_.add(row, csv_);
    ++global_row_;
    ++step_;
}

void Trainer::run() {
    try {
        pretrain();
        while (step_ < cfg_.total_steps) {
            main_step();
            if (opt_.eval_hook && cfg_.eval.eval_every > 0 && step_ % cfg_.eval.eval_every == 0)
                opt_.eval_hook(step_);
            if (!opt_.out_dir.empty() && cfg_.persist.checkpoint_every > 0 &&
                step_ % cfg_.persist.checkpoint_every == 0)
                save_checkpoint(opt_.out_dir + "/ckpt_" + std::to_string(step_) + ".rlmm");
        }
        if (csv_) csv_->flush();
    } catch (const TrainingError& e) {
        logging::error(std::string("training aborted: ") + e.what());
        if (csv_) csv_->flush();
        if (!opt_.out_dir.empty()) save_checkpoint(opt_.out_dir + "/abort.rlmm");
        throw;
    }
}

void Trainer::save_checkpoint(const std::string& path) const {
    CheckpointWriter w;
    w.meta()["config"] = config_to_toml(cfg_);
    w.meta()["rng"] = rngs_.serialize();
    w.meta()["world"] = world_to_json(world_);
    w.meta()["counters"] = {{"step", step_},
                            {"global_row", global_row_},
                            {"pretrain_done", pretrain_done_},
                            {"dg_inserted", dg_->inserted()},
                            {"dn_inserted", dn_->inserted()},
                            {"log_alpha", sac_->log_alpha()},
                            {"alpha_m", sac_->alpha_m()},
                            {"alpha_v", sac_->alpha_v()},
                            {"alpha_t", sac_->alpha_t()},
                            {"adam_grasp_steps", const_cast<GraspEnsemble&>(*ens_).optimizer(0).step_count()},
                            {"algo", "relmm"}};
    auto& self = const_cast<Trainer&>(*this);
    for (int m = 0; m < ens_->members(); ++m) {
        put_network(w, ens_->member(m));
        w.meta()["counters"]["adam_grasp_steps_m" + std::to_string(m)] =
            self.ens_->optimizer(m).step_count();
        put_adam(w, self.ens_->optimizer(m), self.ens_->member(m));
    }
    put_network(w, self.sac_->actor());
    put_network(w, self.sac_->critic1());
    put_network(w, self.sac_->critic2());
    put_network(w, self.sac_->target1());
    put_network(w, self.sac_->target2());
    put_adam(w, self.sac_->actor_opt(), self.sac_->actor());
    put_adam(w, self.sac_->critic1_opt(), self.sac_->critic1());
    put_adam(w, self.sac_->critic2_opt(), self.sac_->critic2());
    w.meta()["counters"]["adam_actor_steps"] = self.sac_->actor_opt().step_count();
    w.meta()["counters"]["adam_q1_steps"] = self.sac_->critic1_opt().step_count();
    w.meta()["counters"]["adam_q2_steps"] = self.sac_->critic2_opt().step_count();

    if (cfg_.persist.checkpoint_buffers) {
        const long n_g = static_cast<long>(dg_->size());
        std::vector<int> gshape = dg_->obs_shape();
        gshape.insert(gshape.begin(), static_cast<int>(n_g));
        w.put("dg.obs", gshape, u8_to_float(dg_->raw_obs()));
        std::vector<float> ga(dg_->raw_actions().begin(), dg_->raw_actions().end());
        std::vector<float> gr(dg_->raw_rewards().begin(), dg_->raw_rewards().end());
        w.put("dg.action", {static_cast<int>(n_g)}, ga);
        w.put("dg.reward", {static_cast<int>(n_g)}, gr);

        const long n_n = static_cast<long>(dn_->size());
        std::vector<int> nshape = dn_->obs_shape();
        nshape.insert(nshape.begin(), static_cast<int>(n_n));
        w.put("dn.obs", nshape, u8_to_float(dn_->raw_obs()));
        w.put("dn.obs2", nshape, u8_to_float(dn_->raw_obs2()));
        w.put("dn.action", {static_cast<int>(n_n), dn_->action_dim()}, dn_->raw_actions());
        w.put("dn.reward", {static_cast<int>(n_n)}, dn_->raw_rewards());
        std::vector<float> att(dn_->raw_grasp_attempted().begin(), dn_->raw_grasp_attempted().end());
        std::vector<float> rg(dn_->raw_r_g().begin(), dn_->raw_r_g().end());
        w.put("dn.grasp_attempted", {static_cast<int>(n_n)}, att);
        w.put("dn.r_g", {static_cast<int>(n_n)}, rg);
        w.meta()["counters"]["buffers_included"] = true;
    } else {
        w.meta()["counters"]["buffers_included"] = false;
    }
    w.save(path);
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& ckpt_path, TrainerOptions opt) {
    const Checkpoint c = Checkpoint::load(ckpt_path);
    ExperimentConfig cfg = config_from_toml(TomlTable::parse_string(c.meta().at("config")));
    const auto& counters = c.meta().at("counters");
    if (!counters.at("buffers_included").get<bool>())
        throw std::runtime_error("checkpoint lacks replay buffers and cannot resume training: " + ckpt_path);

    auto t = std::make_unique<Trainer>(cfg, std::move(opt));
    t->rngs_ = RngSet::deserialize(c.meta().at("rng"));
    t->world_ = world_from_json(c.meta().at("world"));
    t->step_ = counters.at("step");
    t->global_row_ = counters.at("global_row");
    t->pretrain_done_ = counters.at("pretrain_done");
    t->sac_->set_log_alpha(counters.at("log_alpha"));
    t->sac_->set_alpha_state(counters.at("alpha_m"), counters.at("alpha_v"), counters.at("alpha_t"));

    for (int m = 0; m < t->ens_->members(); ++m) {
        load_network(c, t->ens_->member(m));
        load_adam(c, t->ens_->optimizer(m), t->ens_->member(m),
                  counters.at("adam_grasp_steps_m" + std::to_string(m)));
    }
    load_network(c, t->sac_->actor());
    load_network(c, t->sac_->critic1());
    load_network(c, t->sac_->critic2());
    load_network(c, t->sac_->target1());
    load_network(c, t->sac_->target2());
    load_adam(c, t->sac_->actor_opt(), t->sac_->actor(), counters.at("adam_actor_steps"));
    load_adam(c, t->sac_->critic1_opt(), t->sac_->critic1(), counters.at("adam_q1_steps"));
    load_adam(c, t->sac_->critic2_opt(), t->sac_->critic2(), counters.at("adam_q2_steps"));

    {
        const auto& obs = c.array("dg.obs");
        std::vector<float> af = c.array("dg.action");
        std::vector<float> rf = c.array("dg.reward");
        std::vector<int32_t> ai(af.size());
        std::vector<int8_t> ri(rf.size());
        for (size_t i = 0; i < af.size(); ++i) ai[i] = static_cast<int32_t>(af[i]);
        for (size_t i = 0; i < rf.size(); ++i) ri[i] = static_cast<int8_t>(rf[i]);
        t->dg_->restore(float_to_u8(obs), std::move(ai), std::move(ri), counters.at("dg_inserted"));
    }
    {
        const auto& obs = c.array("dn.obs");
        const auto& obs2 = c.array("dn.obs2");
        std::vector<float> att = c.array("dn.grasp_attempted");
        std::vector<float> rg = c.array("dn.r_g");
        std::vector<int8_t> atti(att.size()), rgi(rg.size());
        for (size_t i = 0; i < att.size(); ++i) atti[i] = static_cast<int8_t>(att[i]);
        for (size_t i = 0; i < rg.size(); ++i) rgi[i] = static_cast<int8_t>(rg[i]);
        t->dn_->restore(float_to_u8(obs), float_to_u8(obs2), c.array("dn.action"), c.array("dn.reward"),
                        std::move(atti), std::move(rgi), counters.at("dn_inserted"));
    }
    t->cached_obs_ = nullptr;  // re-rendered from the restored world (rendering is pure)
    return t;
}

// ---------------------------------------------------------------------------

LoadedPolicies load_policies(const std::string& ckpt_path) {
    const Checkpoint c = Checkpoint::load(ckpt_path);
    LoadedPolicies out;
    out.cfg = config_from_toml(TomlTable::parse_string(c.meta().at("config")));
    RngSet rngs = RngSet::from_master(out.cfg.master_seed);
    out.ensemble = std::make_unique<GraspEnsemble>(out.cfg.grasp, out.cfg.grasp_obs_shape(),
                                                   rngs.ensemble_init);
    out.nav = std::make_unique<SacAgent>(out.cfg.nav, out.cfg.nav_obs_shape(), 2, rngs.nav);
    for (int m = 0; m < out.ensemble->members(); ++m) load_network(c, out.ensemble->member(m));
    load_network(c, out.nav->actor());
    load_network(c, out.nav->critic1());
    load_network(c, out.nav->critic2());
    load_network(c, out.nav->target1());
    load_network(c, out.nav->target2());
    return out;
}

std::unique_ptr<GraspEnsemble> load_grasp_ensemble(const std::string& ckpt_path, ExperimentConfig* cfg_out) {
    const Checkpoint c = Checkpoint::load(ckpt_path);
    ExperimentConfig cfg = config_from_toml(TomlTable::parse_string(c.meta().at("config")));
    RngSet rngs = RngSet::from_master(cfg.master_seed);
    auto ens = std::make_unique<GraspEnsemble>(cfg.grasp, cfg.grasp_obs_shape(), rngs.ensemble_init);
    for (int m = 0; m < ens->members(); ++m) load_network(c, ens->member(m));
    if (cfg_out) *cfg_out = cfg;
    return ens;
}

SinglePolicyTrainer::SinglePolicyTrainer(ExperimentConfig cfg, TrainerOptions opt)
    : cfg_(std::move(cfg)), opt_(std::move(opt)) {
    if (!cfg_.world.obs.finalized()) cfg_.finalize();
    rngs_ = RngSet::from_master(cfg_.master_seed);
    SacConfig sp = cfg_.nav;
    sp.target_entropy = -5.0;  // -(action dim)
    sac_ = std::make_unique<SacAgent>(sp, cfg_.nav_obs_shape(), 5, rngs_.nav, "single");
    dn_ = std::make_unique<NavBuffer>(static_cast<size_t>(cfg_.nav.buffer_capacity), cfg_.nav_obs_shape(), 5);
    world_ = scatter_objects(cfg_.world.room, rngs_.world, cfg_.world.scatter_max_attempts);
    if (opt_.csv) {
        csv_ = opt_.csv;
    } else if (!opt_.out_dir.empty()) {
        std::filesystem::create_directories(opt_.out_dir);
        own_csv_ = std::make_unique<MetricsCsv>(opt_.out_dir + "/metrics.csv", cfg_.persist.flush_every,
                                                opt_.append_csv);
        csv_ = own_csv_.get();
    }
}

double SinglePolicyTrainer::wall_seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
}

Vec2 SinglePolicyTrainer::grasp_point_from_action(float ax, float ay) {
    const double x = grasp_region::kX0 + (ax + 1.0) / 2.0 * (grasp_region::kX1 - grasp_region::kX0);
    const double y = grasp_region::kY0 + (ay + 1.0) / 2.0 * (grasp_region::kY1 - grasp_region::kY0);
    return {x, y};
}

void SinglePolicyTrainer::main_step() {
    std::shared_ptr<Tensor> o_pre = cached_obs_;
    if (!o_pre) o_pre = std::make_shared<Tensor>(render_nav_obs(world_, cfg_.world.obs, cfg_.world.room));

    const std::vector<float> a = sac_->act_stochastic(*o_pre, rngs_.nav);
    step_base(world_, cfg_.world.room, {a[0], a[1]});
    obstacle_guard(world_, cfg_.world);

    int r_g = 0;
    const bool wants_grasp = a[2] > 0.0f;
    if (wants_grasp && !world_.holding())
        r_g = attempt_grasp_point(world_, grasp_point_from_action(a[3], a[4]), cfg_.world.tolerance());

    std::shared_ptr<Tensor> o_next =
        std::make_shared<Tensor>(render_nav_obs(world_, cfg_.world.obs, cfg_.world.room));
    const float r_n = compute_nav_reward(r_g);
    dn_->append(*o_pre, a.data(), r_n, *o_next, wants_grasp, r_g);

    SacAgent::Losses losses;
    if (step_ % cfg_.nav.update_every == 0) losses = sac_->update(*dn_, rngs_.nav);

    if (world_.holding()) {
        pseudo_reset(world_, cfg_.world);
        cached_obs_ = nullptr;
    } else {
        cached_obs_ = o_next;
    }

    MetricsRow row;
    row.run_id = opt_.run_id;
    row.variant = opt_.variant;
    row.seed = opt_.seed_label;
    row.step = global_row_;
    row.event = "train";
    row.r_g = r_g;
    row.r_n = r_n;
    row.dg_size = 0;
    row.dn_size = static_cast<long>(dn_->size());
    if (losses.updated) {
        row.loss_q1 = losses.q1;
        row.loss_q2 = losses.q2;
        row.loss_actor = losses.actor;
        row.loss_alpha = losses.alpha;
    }
    row.wall_time = wall_seconds();
    log_.add(row, csv_);
    ++global_row_;
    ++step_;
}

void SinglePolicyTrainer::run() {
    try {
        while (step_ < cfg_.total_steps) {
            main_step();
            if (opt_.eval_hook && cfg_.eval.eval_every > 0 && step_ % cfg_.eval.eval_every == 0)
                opt_.eval_hook(step_);
        }
        if (csv_) csv_->flush();
    } catch (const TrainingError& e) {
        logging::error(std::string("single-policy training aborted: ") + e.what());
        if (csv_) csv_->flush();
        throw;
    }
}

}  // namespace relmm
