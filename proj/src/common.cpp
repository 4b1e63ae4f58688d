// SPDX-License-Identifier: Apache-2.0
#include "lidda/common.h"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace lidda {

void fail(const std::string& msg) { throw Error(msg); }

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t derive_seed(uint64_t seed, const std::string& tag) {
    uint64_t state = seed ^ fnv1a(tag);
    return splitmix64(state);
}

uint64_t derive_seed(uint64_t seed, const std::string& tag, uint64_t index) {
    uint64_t state = seed ^ fnv1a(tag);
    state = splitmix64(state) ^ (index * 0x9e3779b97f4a7c15ULL);
    return splitmix64(state);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) fail("uniform_int: lo > hi");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(gen_() % span);
}

double Rng::normal(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(gen_);
}

int64_t Rng::poisson(double lambda) {
    if (lambda < 0) fail("poisson: negative rate");
    if (lambda == 0) return 0;
    std::poisson_distribution<int64_t> d(lambda);
    return d(gen_);
}

int64_t Rng::geometric_ge1(double p) {
    if (p <= 0.0 || p > 1.0) fail("geometric_ge1: p must be in (0, 1]");
    if (p == 1.0) return 1;
    double u = 1.0 - uniform();  // (0, 1]
    double m = std::ceil(std::log(u) / std::log1p(-p));
    if (m < 1.0) m = 1.0;
    return static_cast<int64_t>(m);
}

Config Config::load(const std::string& file) {
    return from_string(read_text_file(file));
}

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            fail("config line " + std::to_string(lineno) + ": expected `key = value`");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail("config line " + std::to_string(lineno) + ": empty key");
        cfg.entries_[key] = value;
    }
    return cfg;
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string Config::get_str(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) fail("config: missing key `" + key + "`");
    return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& dflt) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? dflt : it->second;
}

int64_t Config::get_int(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        return std::stoll(v);
    } catch (...) {
        fail("config: key `" + key + "` is not an integer: " + v);
    }
}

int64_t Config::get_int(const std::string& key, int64_t dflt) const {
    return has(key) ? get_int(key) : dflt;
}

double Config::get_double(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        return std::stod(v);
    } catch (...) {
        fail("config: key `" + key + "` is not a number: " + v);
    }
}

double Config::get_double(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
}

bool Config::get_bool(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    std::string v = get_str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail("config: key `" + key + "` is not a bool: " + v);
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    std::vector<std::string> out;
    for (auto& item : split(get_str(key), ',')) {
        std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<std::string> Config::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (auto& [k, v] : entries_)
        if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::string read_text_file(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) fail("cannot open file: " + file);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& file, const std::string& content) {
    std::filesystem::path p(file);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) fail("cannot write file: " + file);
    out << content;
    if (!out) fail("write failed: " + file);
}

bool file_exists(const std::string& file) { return std::filesystem::exists(file); }

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
    std::array<char, 32> buf;
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), ptr);
}

int max_threads() {
    const char* env = std::getenv("LIDDA_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    if (n < 1) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    if (hw > 0 && n > static_cast<int>(hw)) n = static_cast<int>(hw);
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int threads = max_threads();
    if (threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mutex;
    const int workers = static_cast<int>(std::min<int64_t>(threads, n));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int64_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lidda
