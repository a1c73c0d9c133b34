#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relmm/config.hpp"

namespace relmm {

// ---------------------------------------------------------------------------
// TOML-syntax configuration files (the key = value / [section] subset, with
// comments, strings, booleans, numbers and nested numeric arrays).

struct TomlValue {
    enum class Type { integer, real, boolean, string, array };
    Type type = Type::integer;
    int64_t i = 0;
    double d = 0.0;
    bool b = false;
    std::string s;
    std::vector<TomlValue> arr;
    int line = 0;

    double as_real() const;
    int64_t as_int() const;
    bool as_bool() const;
    const std::string& as_string() const;
};

struct TomlTable {
    std::map<std::string, TomlValue> values;  // dotted keys

    static TomlTable parse_string(const std::string& text, const std::string& origin = "<string>");
    static TomlTable parse_file(const std::string& path);
};

// Strict loaders: unknown keys and malformed values are hard errors naming
// the offending key and line.
ExperimentConfig config_from_toml(const TomlTable& table);
ExperimentConfig load_config(const std::string& path);
// Full snapshot with every key in a fixed order (checkpoints, docs).
std::string config_to_toml(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoint container: magic "RLMM", u32 version, u64 header length, JSON
// header (config snapshot, rng states, counters, array index), then the
// payload of named little-endian float32 arrays.

inline constexpr uint32_t kCheckpointVersion = 1;

class CheckpointWriter {
public:
    nlohmann::json& meta() { return meta_; }
    void put(const std::string& name, std::vector<int> shape, const float* data, size_t n);
    void put(const std::string& name, std::vector<int> shape, const std::vector<float>& data) {
        put(name, std::move(shape), data.data(), data.size());
    }
    void save(const std::string& path) const;

private:
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::vector<float> data;
    };
    nlohmann::json meta_ = nlohmann::json::object();
    std::vector<Entry> entries_;
};

class Checkpoint {
public:
    static Checkpoint load(const std::string& path);

    const nlohmann::json& meta() const { return meta_; }
    bool has(const std::string& name) const { return arrays_.count(name) > 0; }
    const std::vector<float>& array(const std::string& name) const;
    const std::vector<int>& shape(const std::string& name) const;
    std::vector<std::string> names() const;

private:
    nlohmann::json meta_;
    std::map<std::string, std::vector<float>> arrays_;
    std::map<std::string, std::vector<int>> shapes_;
};

// ---------------------------------------------------------------------------
// Metrics CSV: stable, versioned column order shared by train and eval rows
// (blank where not applicable), flushed at least every flush_every rows.

extern const char* const kMetricsHeader;

struct MetricsRow {
    std::string run_id;
    std::string variant;
    long seed = 0;
    long step = 0;
    std::string event;  // "train" | "eval"
    std::optional<double> r_g, r_n, p_grasp;
    std::optional<long> dg_size, dn_size;
    std::optional<double> loss_q1, loss_q2, loss_actor, loss_alpha, loss_grasp;
    std::optional<double> percent_failed, mean_gap;
    double wall_time = 0.0;

    std::string to_line() const;
};

class MetricsCsv {
public:
    MetricsCsv(const std::string& path, int flush_every, bool append = false);
    ~MetricsCsv();
    void add(const MetricsRow& row);
    void flush();
    const std::string& path() const { return path_; }
    long rows_written() const { return rows_; }

private:
    std::string path_;
    int flush_every_;
    long rows_ = 0;
    int pending_ = 0;
    std::string buffer_;
};

// Parsed CSV (for the plot command and the replay tests).
struct CsvData {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int column(const std::string& name) const;  // -1 when missing
};
CsvData read_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Minimal deterministic SVG line plots: windowed mean with a min/max band.

struct PlotSeries {
    std::string label;
    std::vector<double> x, mean, lo, hi;
};

std::string render_svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                            const std::vector<PlotSeries>& series);
void write_text_file(const std::string& path, const std::string& content);

// One process owns an output directory.
class DirLock {
public:
    explicit DirLock(const std::string& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::string path_;
};

// Deterministic float formatting used across CSV/SVG output.
std::string format_double(double v);

}  // namespace relmm
