#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "iifrl/attribution.hpp"
#include "iifrl/common.hpp"
#include "iifrl/metrics.hpp"
#include "iifrl/nn.hpp"

namespace iifrl {

namespace fs = std::filesystem;

// ---- parameter checkpoints (versioned binary, bit-exact round trip) ----

namespace detail {

constexpr std::uint32_t kCkptMagic = 0x4c464949;  // "IIFL"
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint: truncated file");
    return v;
}

inline void write_mlp(std::ostream& os, const Mlp& m) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.widths.size()));
    for (int w : m.widths) write_pod<std::int32_t>(os, w);
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.theta.size()));
    os.write(reinterpret_cast<const char*>(m.theta.data()),
             static_cast<std::streamsize>(m.theta.size() * sizeof(double)));
}

inline Mlp read_mlp(std::istream& is) {
    auto nw = read_pod<std::uint32_t>(is);
    std::vector<int> widths(nw);
    for (auto& w : widths) w = read_pod<std::int32_t>(is);
    Mlp m(widths);
    auto n = read_pod<std::uint64_t>(is);
    if (n != static_cast<std::uint64_t>(m.theta.size()))
        throw IoError("checkpoint: parameter count does not match shape header");
    is.read(reinterpret_cast<char*>(m.theta.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("checkpoint: truncated parameters");
    return m;
}

}  // namespace detail

inline void save_params(const fs::path& path, const PolicyValueParams& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path.string());
    detail::write_pod(os, detail::kCkptMagic);
    detail::write_pod(os, detail::kCkptVersion);
    detail::write_pod<std::int32_t>(os, p.round);
    detail::write_pod<std::int32_t>(os, p.step);
    detail::write_mlp(os, p.policy);
    detail::write_mlp(os, p.value);
    if (!os) throw IoError("write failed: " + path.string());
}

inline PolicyValueParams load_params(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path.string());
    if (detail::read_pod<std::uint32_t>(is) != detail::kCkptMagic)
        throw IoError("not a checkpoint file: " + path.string());
    if (detail::read_pod<std::uint32_t>(is) != detail::kCkptVersion)
        throw IoError("unsupported checkpoint version: " + path.string());
    PolicyValueParams p;
    p.round = detail::read_pod<std::int32_t>(is);
    p.step = detail::read_pod<std::int32_t>(is);
    p.policy = detail::read_mlp(is);
    p.value = detail::read_mlp(is);
    return p;
}

// ---- CSV ----

inline std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string runlog_csv_header() {
    return "round,test_return,n_filtered,wall_ms_collect,wall_ms_influence,wall_ms_optimize";
}

inline std::string runlog_row_csv(const RunLogRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.3f,%.3f,%.3f", r.round,
                  format_double(r.test_return).c_str(), r.n_filtered, r.wall_ms_collect,
                  r.wall_ms_influence, r.wall_ms_optimize);
    return buf;
}

inline void write_runlog_csv(const fs::path& path, const RunLog& log) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os << runlog_csv_header() << "\n";
    for (const auto& row : log.rows) os << runlog_row_csv(row) << "\n";
}

inline RunLog read_runlog_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for read: " + path.string());
    RunLog log;
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty runlog: " + path.string());
    if (line != runlog_csv_header()) throw IoError("unexpected runlog header: " + path.string());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        RunLogRow r;
        std::stringstream ss(line);
        std::string f;
        auto next = [&]() {
            if (!std::getline(ss, f, ',')) throw IoError("short runlog row: " + line);
            return f;
        };
        r.round = std::stoi(next());
        r.test_return = std::stod(next());
        r.n_filtered = std::stoi(next());
        r.wall_ms_collect = std::stod(next());
        r.wall_ms_influence = std::stod(next());
        r.wall_ms_optimize = std::stod(next());
        log.rows.push_back(r);
    }
    return log;
}

// ---- influence report JSON ----

inline nlohmann::json influence_report_json(const InfluenceReport& rep) {
    nlohmann::json j;
    j["round"] = rep.round;
    j["mode"] = rep.mode == InfluenceMode::FullTracIn ? "full" : "fast";
    j["target"] = rep.target;
    j["target_grad_norm"] = rep.target_grad_norm;
    j["scores"] = std::vector<double>(rep.scores.data(), rep.scores.data() + rep.scores.size());
    return j;
}

inline void write_influence_report(const fs::path& path, const InfluenceReport& rep) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os << influence_report_json(rep).dump(2) << "\n";
}

// ---- hashing & manifest ----

inline std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string file_hash(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot hash missing file: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return fnv1a64_hex(ss.str());
}

inline std::string read_text_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for read: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os << text;
}

}  // namespace iifrl
