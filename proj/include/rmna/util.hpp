#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "rmna/error.hpp"

namespace rmna {

// ---------------------------------------------------------------------------
// Text helpers

// Shortest decimal string that round-trips the float bit-exactly.
inline std::string format_float(float v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline float parse_float(std::string_view s, const std::string& context) {
    float v = 0.0f;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("bad float '" + std::string(s) + "' in " + context);
    return v;
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("bad number '" + std::string(s) + "' in " + context);
    return v;
}

inline long parse_long(std::string_view s, const std::string& context) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("bad integer '" + std::string(s) + "' in " + context);
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

// FNV-1a, used for vocabulary fingerprints in checkpoints.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Logging. Verbosity from RMNA_LOG: error|warn|info|debug (default info).

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("RMNA_LOG");
        if (!env) return LogLevel::Info;
        std::string_view v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "warn") return LogLevel::Warn;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

inline void log(LogLevel level, const std::string& msg) {
    if (level > log_level()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

inline void log_info(const std::string& msg) { log(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::Debug, msg); }
inline void log_warn(const std::string& msg) { log(LogLevel::Warn, msg); }

// ---------------------------------------------------------------------------
// Deterministic parallel map: fn(i) writes only to slot i of its own output,
// so the merged result does not depend on thread scheduling.

inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    unsigned hw = std::thread::hardware_concurrency();
    size_t workers = hw ? hw : 1;
    if (workers <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (workers > n) workers = n;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

} // namespace rmna
