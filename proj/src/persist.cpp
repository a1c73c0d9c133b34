#include "relmm/persist.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "relmm/errors.hpp"
#include "relmm/log.hpp"

namespace relmm {

// ---------------------------------------------------------------------------
// TOML subset

double TomlValue::as_real() const {
    if (type == Type::real) return d;
    if (type == Type::integer) return static_cast<double>(i);
    throw ConfigError("expected a number (line " + std::to_string(line) + ")");
}

int64_t TomlValue::as_int() const {
    if (type == Type::integer) return i;
    throw ConfigError("expected an integer (line " + std::to_string(line) + ")");
}

bool TomlValue::as_bool() const {
    if (type == Type::boolean) return b;
    throw ConfigError("expected a boolean (line " + std::to_string(line) + ")");
}

const std::string& TomlValue::as_string() const {
    if (type == Type::string) return s;
    throw ConfigError("expected a string (line " + std::to_string(line) + ")");
}

namespace {

struct TomlParser {
    const std::string& text;
    const std::string& origin;
    size_t pos = 0;
    int line = 1;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
    }

    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char get() {
        const char c = text[pos++];
        if (c == '\n') ++line;
        return c;
    }

    void skip_ws_inline() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) get();
    }

    void skip_ws_and_comments(bool cross_lines) {
        while (!eof()) {
            skip_ws_inline();
            if (eof()) return;
            if (peek() == '#') {
                while (!eof() && peek() != '\n') get();
                continue;
            }
            if (peek() == '\n' && cross_lines) {
                get();
                continue;
            }
            return;
        }
    }

    std::string parse_bare_key() {
        std::string key;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '.' ||
                          peek() == '-'))
            key.push_back(get());
        if (key.empty()) fail("expected a key");
        return key;
    }

    TomlValue parse_value() {
        skip_ws_inline();
        if (eof()) fail("expected a value");
        TomlValue v;
        v.line = line;
        const char c = peek();
        if (c == '"') {
            get();
            v.type = TomlValue::Type::string;
            while (!eof() && peek() != '"') {
                char ch = get();
                if (ch == '\\' && !eof()) {
                    const char esc = get();
                    if (esc == 'n') ch = '\n';
                    else if (esc == 't') ch = '\t';
                    else ch = esc;
                }
                v.s.push_back(ch);
            }
            if (eof()) fail("unterminated string");
            get();
            return v;
        }
        if (c == '[') {
            get();
            v.type = TomlValue::Type::array;
            skip_ws_and_comments(true);
            while (!eof() && peek() != ']') {
                v.arr.push_back(parse_value());
                skip_ws_and_comments(true);
                if (!eof() && peek() == ',') {
                    get();
                    skip_ws_and_comments(true);
                }
            }
            if (eof()) fail("unterminated array");
            get();
            return v;
        }
        // bare token: bool or number
        std::string tok;
        while (!eof() && peek() != ',' && peek() != ']' && peek() != '\n' && peek() != '#' && peek() != ' ' &&
               peek() != '\t' && peek() != '\r')
            tok.push_back(get());
        if (tok == "true" || tok == "false") {
            v.type = TomlValue::Type::boolean;
            v.b = tok == "true";
            return v;
        }
        const bool looks_real = tok.find_first_of(".eE") != std::string::npos &&
                                tok.find_first_not_of("+-0123456789.eE") == std::string::npos;
        errno = 0;
        char* end = nullptr;
        if (!looks_real) {
            const long long iv = std::strtoll(tok.c_str(), &end, 10);
            if (errno == 0 && end && *end == '\0' && !tok.empty()) {
                v.type = TomlValue::Type::integer;
                v.i = iv;
                return v;
            }
        }
        errno = 0;
        const double dv = std::strtod(tok.c_str(), &end);
        if (errno != 0 || !end || *end != '\0' || tok.empty()) fail("cannot parse value '" + tok + "'");
        v.type = TomlValue::Type::real;
        v.d = dv;
        return v;
    }
};

}  // namespace

TomlTable TomlTable::parse_string(const std::string& text, const std::string& origin) {
    TomlTable table;
    TomlParser p{text, origin};
    std::string section;
    while (!p.eof()) {
        p.skip_ws_and_comments(true);
        if (p.eof()) break;
        if (p.peek() == '[') {
            p.get();
            section = p.parse_bare_key();
            p.skip_ws_inline();
            if (p.eof() || p.peek() != ']') p.fail("expected ']' after section name");
            p.get();
            continue;
        }
        const int key_line = p.line;
        const std::string key = p.parse_bare_key();
        p.skip_ws_inline();
        if (p.eof() || p.peek() != '=') p.fail("expected '=' after key '" + key + "'");
        p.get();
        TomlValue v = p.parse_value();
        v.line = key_line;
        p.skip_ws_and_comments(false);
        if (!p.eof() && p.peek() != '\n') p.fail("trailing characters after value for '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (table.values.count(full)) p.fail("duplicate key '" + full + "'");
        table.values[full] = std::move(v);
    }
    return table;
}

TomlTable TomlTable::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Config binding

namespace {

struct Binder {
    const TomlTable& table;
    std::set<std::string> consumed;

    const TomlValue* find(const std::string& key) {
        auto it = table.values.find(key);
        if (it == table.values.end()) return nullptr;
        consumed.insert(key);
        return &it->second;
    }

    void bind(const std::string& key, double& out) {
        if (const auto* v = find(key)) out = v->as_real();
    }
    void bind(const std::string& key, float& out) {
        if (const auto* v = find(key)) out = static_cast<float>(v->as_real());
    }
    void bind(const std::string& key, int& out) {
        if (const auto* v = find(key)) out = static_cast<int>(v->as_int());
    }
    void bind(const std::string& key, long& out) {
        if (const auto* v = find(key)) out = static_cast<long>(v->as_int());
    }
    void bind(const std::string& key, uint64_t& out) {
        if (const auto* v = find(key)) out = static_cast<uint64_t>(v->as_int());
    }
    void bind(const std::string& key, bool& out) {
        if (const auto* v = find(key)) out = v->as_bool();
    }
    void bind(const std::string& key, std::string& out) {
        if (const auto* v = find(key)) out = v->as_string();
    }

    void finish() const {
        for (const auto& [key, value] : table.values)
            if (!consumed.count(key))
                throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(value.line) + ")");
    }
};

void bind_net(Binder& b, const std::string& prefix, NetSpec& net) {
    b.bind(prefix + ".conv_channels", net.conv_channels);
    b.bind(prefix + ".conv_kernel", net.conv_kernel);
    b.bind(prefix + ".conv_stride", net.conv_stride);
    b.bind(prefix + ".conv_pad", net.conv_pad);
    b.bind(prefix + ".conv_layers", net.conv_layers);
    b.bind(prefix + ".pool", net.pool);
    b.bind(prefix + ".dense_width", net.dense_width);
    b.bind(prefix + ".dense_layers", net.dense_layers);
}

}  // namespace

ExperimentConfig config_from_toml(const TomlTable& table) {
    ExperimentConfig cfg;
    Binder b{table, {}};

    b.bind("run.master_seed", cfg.master_seed);
    b.bind("run.total_steps", cfg.total_steps);
    std::string curriculum = cfg.curriculum == Curriculum::stationary ? "stationary" : "autonomous";
    b.bind("run.curriculum", curriculum);
    if (curriculum == "stationary") cfg.curriculum = Curriculum::stationary;
    else if (curriculum == "autonomous") cfg.curriculum = Curriculum::autonomous;
    else throw ConfigError("run.curriculum must be 'stationary' or 'autonomous'");
    b.bind("run.algo", cfg.algo);
    b.bind("run.freeze_grasp_after_pretrain", cfg.freeze_grasp_after_pretrain);

    b.bind("room.width", cfg.world.room.width);
    b.bind("room.height", cfg.world.room.height);
    b.bind("room.object_count", cfg.world.room.object_count);
    b.bind("room.object_radius", cfg.world.room.object_radius);
    if (const auto* v = b.find("room.obstacles")) {
        for (const TomlValue& rect : v->arr) {
            if (rect.type != TomlValue::Type::array || rect.arr.size() != 4)
                throw ConfigError("room.obstacles entries must be [x0, y0, x1, y1] (line " +
                                  std::to_string(rect.line) + ")");
            cfg.world.room.obstacles.push_back(Rect{rect.arr[0].as_real(), rect.arr[1].as_real(),
                                                    rect.arr[2].as_real(), rect.arr[3].as_real()});
        }
    }

    b.bind("obs.size", cfg.world.obs.size);
    b.bind("obs.crop", cfg.world.obs.crop);
    b.bind("obs.fov_deg", cfg.world.obs.fov_deg);
    b.bind("obs.range", cfg.world.obs.range);
    b.bind("obs.supersample", cfg.world.obs.supersample);
    b.bind("obs.min_apparent_diag", cfg.world.obs.min_apparent_diag);

    b.bind("world.grasp_tolerance", cfg.world.grasp_tolerance);
    b.bind("world.walk_before_drop", cfg.world.walk_before_drop);
    b.bind("world.walk_after_drop", cfg.world.walk_after_drop);
    b.bind("world.scatter_max_attempts", cfg.world.scatter_max_attempts);
    b.bind("world.guard_turn_budget", cfg.world.guard_turn_budget);
    b.bind("world.guard_backup_rounds", cfg.world.guard_backup_rounds);

    b.bind("grasp.members", cfg.grasp.members);
    b.bind("grasp.alpha", cfg.grasp.alpha);
    b.bind("grasp.beta", cfg.grasp.beta);
    b.bind("grasp.batch", cfg.grasp.batch);
    b.bind("grasp.buffer_capacity", cfg.grasp.buffer_capacity);
    b.bind("grasp.lr", cfg.grasp.lr);
    b.bind("grasp.n_grasp", cfg.grasp.n_grasp);
    b.bind("grasp.updates_per_attempt", cfg.grasp.updates_per_attempt);
    b.bind("grasp.n_pt", cfg.grasp.n_pt);
    b.bind("grasp.init_success_prior", cfg.grasp.init_success_prior);
    b.bind("grasp.bootstrap_mask", cfg.grasp.bootstrap_mask);
    b.bind("grasp.bootstrap_keep", cfg.grasp.bootstrap_keep);
    b.bind("grasp.head", cfg.grasp.head);
    bind_net(b, "grasp", cfg.grasp.net);

    b.bind("curriculum.n_start", cfg.curr.n_start);
    b.bind("curriculum.n_stop", cfg.curr.n_stop);
    b.bind("curriculum.n_max", cfg.curr.n_max);
    b.bind("curriculum.n_bt", cfg.curr.n_bt);

    b.bind("nav.gamma", cfg.nav.gamma);
    b.bind("nav.tau", cfg.nav.tau);
    b.bind("nav.batch", cfg.nav.batch);
    b.bind("nav.lr", cfg.nav.lr);
    b.bind("nav.target_entropy", cfg.nav.target_entropy);
    b.bind("nav.alpha_init", cfg.nav.alpha_init);
    b.bind("nav.fixed_alpha", cfg.nav.fixed_alpha);
    b.bind("nav.update_every", cfg.nav.update_every);
    b.bind("nav.buffer_capacity", cfg.nav.buffer_capacity);
    b.bind("nav.relabel", cfg.nav.relabel);
    b.bind("nav.log_std_min", cfg.nav.log_std_min);
    b.bind("nav.log_std_max", cfg.nav.log_std_max);
    bind_net(b, "nav", cfg.nav.net);

    b.bind("eval.horizon", cfg.eval.horizon);
    b.bind("eval.gate_threshold", cfg.eval.gate_threshold);
    b.bind("eval.eval_every", cfg.eval.eval_every);
    b.bind("eval.eval_seeds", cfg.eval.eval_seeds);
    b.bind("eval.smooth_window", cfg.eval.smooth_window);

    b.bind("persist.checkpoint_every", cfg.persist.checkpoint_every);
    b.bind("persist.checkpoint_buffers", cfg.persist.checkpoint_buffers);
    b.bind("persist.flush_every", cfg.persist.flush_every);

    b.finish();
    cfg.finalize();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) { return config_from_toml(TomlTable::parse_file(path)); }

namespace {

void emit_net(std::ostream& os, const NetSpec& n) {
    os << "conv_channels = " << n.conv_channels << "\n"
       << "conv_kernel = " << n.conv_kernel << "\n"
       << "conv_stride = " << n.conv_stride << "\n"
       << "conv_pad = " << n.conv_pad << "\n"
       << "conv_layers = " << n.conv_layers << "\n"
       << "pool = " << n.pool << "\n"
       << "dense_width = " << n.dense_width << "\n"
       << "dense_layers = " << n.dense_layers << "\n";
}

}  // namespace

std::string config_to_toml(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "[run]\n"
       << "master_seed = " << cfg.master_seed << "\n"
       << "total_steps = " << cfg.total_steps << "\n"
       << "curriculum = \"" << (cfg.curriculum == Curriculum::stationary ? "stationary" : "autonomous")
       << "\"\n"
       << "algo = \"" << cfg.algo << "\"\n"
       << "freeze_grasp_after_pretrain = " << (cfg.freeze_grasp_after_pretrain ? "true" : "false") << "\n\n";
    os << "[room]\n"
       << "width = " << format_double(cfg.world.room.width) << "\n"
       << "height = " << format_double(cfg.world.room.height) << "\n"
       << "object_count = " << cfg.world.room.object_count << "\n"
       << "object_radius = " << format_double(cfg.world.room.object_radius) << "\n";
    os << "obstacles = [";
    for (size_t i = 0; i < cfg.world.room.obstacles.size(); ++i) {
        const Rect& r = cfg.world.room.obstacles[i];
        if (i) os << ", ";
        os << "[" << format_double(r.x0) << ", " << format_double(r.y0) << ", " << format_double(r.x1) << ", "
           << format_double(r.y1) << "]";
    }
    os << "]\n\n";
    os << "[obs]\n"
       << "size = " << cfg.world.obs.size << "\n"
       << "crop = " << cfg.world.obs.crop << "\n"
       << "fov_deg = " << format_double(cfg.world.obs.fov_deg) << "\n"
       << "range = " << format_double(cfg.world.obs.range) << "\n"
       << "supersample = " << cfg.world.obs.supersample << "\n"
       << "min_apparent_diag = " << format_double(cfg.world.obs.min_apparent_diag) << "\n\n";
    os << "[world]\n"
       << "grasp_tolerance = " << format_double(cfg.world.grasp_tolerance) << "\n"
       << "walk_before_drop = " << cfg.world.walk_before_drop << "\n"
       << "walk_after_drop = " << cfg.world.walk_after_drop << "\n"
       << "scatter_max_attempts = " << cfg.world.scatter_max_attempts << "\n"
       << "guard_turn_budget = " << cfg.world.guard_turn_budget << "\n"
       << "guard_backup_rounds = " << cfg.world.guard_backup_rounds << "\n\n";
    os << "[grasp]\n"
       << "members = " << cfg.grasp.members << "\n"
       << "alpha = " << format_double(cfg.grasp.alpha) << "\n"
       << "beta = " << format_double(cfg.grasp.beta) << "\n"
       << "batch = " << cfg.grasp.batch << "\n"
       << "buffer_capacity = " << cfg.grasp.buffer_capacity << "\n"
       << "lr = " << format_double(cfg.grasp.lr) << "\n"
       << "n_grasp = " << cfg.grasp.n_grasp << "\n"
       << "updates_per_attempt = " << cfg.grasp.updates_per_attempt << "\n"
       << "n_pt = " << cfg.grasp.n_pt << "\n"
       << "init_success_prior = " << format_double(cfg.grasp.init_success_prior) << "\n"
       << "bootstrap_mask = " << (cfg.grasp.bootstrap_mask ? "true" : "false") << "\n"
       << "bootstrap_keep = " << format_double(cfg.grasp.bootstrap_keep) << "\n"
       << "head = \"" << cfg.grasp.head << "\"\n";
    emit_net(os, cfg.grasp.net);
    os << "\n[curriculum]\n"
       << "n_start = " << cfg.curr.n_start << "\n"
       << "n_stop = " << cfg.curr.n_stop << "\n"
       << "n_max = " << cfg.curr.n_max << "\n"
       << "n_bt = " << cfg.curr.n_bt << "\n\n";
    os << "[nav]\n"
       << "gamma = " << format_double(cfg.nav.gamma) << "\n"
       << "tau = " << format_double(cfg.nav.tau) << "\n"
       << "batch = " << cfg.nav.batch << "\n"
       << "lr = " << format_double(cfg.nav.lr) << "\n"
       << "target_entropy = " << format_double(cfg.nav.target_entropy) << "\n"
       << "alpha_init = " << format_double(cfg.nav.alpha_init) << "\n"
       << "fixed_alpha = " << format_double(cfg.nav.fixed_alpha) << "\n"
       << "update_every = " << cfg.nav.update_every << "\n"
       << "buffer_capacity = " << cfg.nav.buffer_capacity << "\n"
       << "relabel = " << (cfg.nav.relabel ? "true" : "false") << "\n"
       << "log_std_min = " << format_double(cfg.nav.log_std_min) << "\n"
       << "log_std_max = " << format_double(cfg.nav.log_std_max) << "\n";
    emit_net(os, cfg.nav.net);
    os << "\n[eval]\n"
       << "horizon = " << cfg.eval.horizon << "\n"
       << "gate_threshold = " << format_double(cfg.eval.gate_threshold) << "\n"
       << "eval_every = " << cfg.eval.eval_every << "\n"
       << "eval_seeds = " << cfg.eval.eval_seeds << "\n"
       << "smooth_window = " << cfg.eval.smooth_window << "\n\n";
    os << "[persist]\n"
       << "checkpoint_every = " << cfg.persist.checkpoint_every << "\n"
       << "checkpoint_buffers = " << (cfg.persist.checkpoint_buffers ? "true" : "false") << "\n"
       << "flush_every = " << cfg.persist.flush_every << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoint container

void CheckpointWriter::put(const std::string& name, std::vector<int> shape, const float* data, size_t n) {
    if (static_cast<size_t>(Tensor::numel_of(shape)) != n)
        throw std::invalid_argument("checkpoint array '" + name + "': shape/data mismatch");
    for (const Entry& e : entries_)
        if (e.name == name) throw std::invalid_argument("duplicate checkpoint array '" + name + "'");
    entries_.push_back(Entry{name, std::move(shape), std::vector<float>(data, data + n)});
}

void CheckpointWriter::save(const std::string& path) const {
    nlohmann::json header = meta_;
    header["format_version"] = kCheckpointVersion;
    nlohmann::json arrays = nlohmann::json::array();
    uint64_t offset = 0;
    for (const Entry& e : entries_) {
        arrays.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"count", e.data.size()}});
        offset += e.data.size() * sizeof(float);
    }
    header["arrays"] = arrays;
    const std::string header_str = header.dump();

    const std::string tmp = path + ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write("RLMM", 4);
    const uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t hlen = header_str.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const Entry& e : entries_)
        out.write(reinterpret_cast<const char*>(e.data.data()),
                  static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    out.close();
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RLMM", 4) != 0)
        throw std::runtime_error("not a checkpoint container: " + path);
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header_str(hlen, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);

    Checkpoint ckpt;
    ckpt.meta_ = nlohmann::json::parse(header_str);
    for (const auto& a : ckpt.meta_.at("arrays")) {
        const std::string name = a.at("name");
        const size_t count = a.at("count");
        std::vector<float> data(count);
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw std::runtime_error("truncated checkpoint payload at '" + name + "'");
        ckpt.arrays_[name] = std::move(data);
        ckpt.shapes_[name] = a.at("shape").get<std::vector<int>>();
    }
    return ckpt;
}

const std::vector<float>& Checkpoint::array(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw std::runtime_error("checkpoint is missing array '" + name + "'");
    return it->second;
}

const std::vector<int>& Checkpoint::shape(const std::string& name) const {
    auto it = shapes_.find(name);
    if (it == shapes_.end()) throw std::runtime_error("checkpoint is missing array '" + name + "'");
    return it->second;
}

std::vector<std::string> Checkpoint::names() const {
    std::vector<std::string> out;
    out.reserve(arrays_.size());
    for (const auto& [k, v] : arrays_) out.push_back(k);
    return out;
}

// ---------------------------------------------------------------------------
// Metrics CSV

const char* const kMetricsHeader =
    "run_id,variant,seed,step,event,r_g,r_n,p_grasp,dg_size,dn_size,"
    "loss_q1,loss_q2,loss_actor,loss_alpha,loss_grasp,percent_failed,mean_gap,wall_time";

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace {

void append_opt(std::string& line, const std::optional<double>& v) {
    line.push_back(',');
    if (v) line += format_double(*v);
}

void append_opt(std::string& line, const std::optional<long>& v) {
    line.push_back(',');
    if (v) line += std::to_string(*v);
}

}  // namespace

std::string MetricsRow::to_line() const {
    std::string line = run_id + "," + variant + "," + std::to_string(seed) + "," + std::to_string(step) + "," +
                       event;
    append_opt(line, r_g);
    append_opt(line, r_n);
    append_opt(line, p_grasp);
    append_opt(line, dg_size);
    append_opt(line, dn_size);
    append_opt(line, loss_q1);
    append_opt(line, loss_q2);
    append_opt(line, loss_actor);
    append_opt(line, loss_alpha);
    append_opt(line, loss_grasp);
    append_opt(line, percent_failed);
    append_opt(line, mean_gap);
    line.push_back(',');
    line += format_double(wall_time);
    return line;
}

MetricsCsv::MetricsCsv(const std::string& path, int flush_every, bool append)
    : path_(path), flush_every_(std::max(1, flush_every)) {
    if (!append || !std::filesystem::exists(path_)) {
        std::ofstream out(path_, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open metrics csv: " + path_);
        out << kMetricsHeader << "\n";
    }
}

MetricsCsv::~MetricsCsv() {
    try {
        flush();
    } catch (...) {
    }
}

void MetricsCsv::add(const MetricsRow& row) {
    buffer_ += row.to_line();
    buffer_.push_back('\n');
    ++rows_;
    if (++pending_ >= flush_every_) flush();
}

void MetricsCsv::flush() {
    if (buffer_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to metrics csv: " + path_);
    out << buffer_;
    buffer_.clear();
    pending_ = 0;
}

CsvData read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv: " + path);
    CsvData data;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        fields.push_back(cur);
        if (first) {
            data.header = std::move(fields);
            first = false;
        } else {
            data.rows.push_back(std::move(fields));
        }
    }
    return data;
}

int CsvData::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

// ---------------------------------------------------------------------------
// SVG plots

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out.push_back(c);
    }
    return out;
}

}  // namespace

std::string render_svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                            const std::vector<PlotSeries>& series) {
    const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    for (const PlotSeries& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            const double lo = i < s.lo.size() ? s.lo[i] : s.mean[i];
            const double hi = i < s.hi.size() ? s.hi[i] : s.mean[i];
            if (!any) {
                xmin = xmax = s.x[i];
                ymin = lo;
                ymax = hi;
                any = true;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, lo);
            ymax = std::max(ymax, hi);
        }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
       << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" font-family=\"sans-serif\">"
       << svg_escape(title) << "</text>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double xv = xmin + (xmax - xmin) * t / 5.0;
        const double yv = ymin + (ymax - ymin) * t / 5.0;
        os << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18
           << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << format_double(xv)
           << "</text>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
           << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << format_double(yv)
           << "</text>\n";
        os << "<line x1=\"" << ml << "\" y1=\"" << py(yv) << "\" x2=\"" << W - mr << "\" y2=\"" << py(yv)
           << "\" stroke=\"#dddddd\"/>\n";
    }
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << svg_escape(xlabel)
       << "</text>\n";
    os << "<text x=\"18\" y=\"" << (mt + H - mb) / 2
       << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\"rotate(-90 18 "
       << (mt + H - mb) / 2 << ")\">" << svg_escape(ylabel) << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        const char* color = kPalette[si % 6];
        if (!s.lo.empty() && s.lo.size() == s.x.size() && s.hi.size() == s.x.size()) {
            os << "<path d=\"";
            for (size_t i = 0; i < s.x.size(); ++i)
                os << (i ? "L" : "M") << format_double(px(s.x[i])) << " " << format_double(py(s.lo[i]));
            for (size_t i = s.x.size(); i-- > 0;)
                os << "L" << format_double(px(s.x[i])) << " " << format_double(py(s.hi[i]));
            os << "Z\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i)
            os << format_double(px(s.x[i])) << "," << format_double(py(s.mean[i])) << " ";
        os << "\"/>\n";
        os << "<text x=\"" << W - mr - 6 << "\" y=\"" << mt + 16 * (si + 1)
           << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" fill=\"" << color << "\">"
           << svg_escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

DirLock::DirLock(const std::string& dir) {
    std::filesystem::create_directories(dir);
    path_ = dir + "/.lock";
    FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
        throw std::runtime_error("output directory is locked by another process (remove " + path_ +
                                 " if stale)");
    std::fclose(f);
}

DirLock::~DirLock() { std::remove(path_.c_str()); }

}  // namespace relmm
