// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lidda {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] void fail(const std::string& msg);

// --- seeding ---------------------------------------------------------------
// One user-facing seed fans out to per-purpose streams via splitmix64 over
// (seed, fnv1a(tag)); adding a stream never perturbs the others.

uint64_t splitmix64(uint64_t& state);
uint64_t fnv1a(const std::string& s);
uint64_t derive_seed(uint64_t seed, const std::string& tag);
uint64_t derive_seed(uint64_t seed, const std::string& tag, uint64_t index);

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform() { return dist_(gen_); }                 // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int64_t uniform_int(int64_t lo, int64_t hi);             // inclusive
    double normal(double mean = 0.0, double stddev = 1.0);
    int64_t poisson(double lambda);
    // Geometric on support {1, 2, ...} with mean 1/p.
    int64_t geometric_ge1(double p);
    bool bernoulli(double p) { return uniform() < p; }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }
    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::uniform_real_distribution<double> dist_{0.0, 1.0};
};

// --- flat key-value config files --------------------------------------------
// Format: `key = value`, '#' comments, blank lines ignored.

class Config {
public:
    static Config load(const std::string& file);
    static Config from_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& dflt) const;
    int64_t get_int(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t dflt) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double dflt) const;
    bool get_bool(const std::string& key, bool dflt) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma-separated
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    void set(const std::string& key, const std::string& value);
    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

// --- small file helpers -----------------------------------------------------

std::string read_text_file(const std::string& file);
void write_text_file(const std::string& file, const std::string& content);
bool file_exists(const std::string& file);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

// Shortest round-trip decimal for a double (what nlohmann emits); used for CSV
// so rereads are bit-exact.
std::string format_double(double v);

// --- deterministic parallelism ----------------------------------------------
// Runs fn(i) for i in [0, n). Results must be written to disjoint, index-keyed
// slots; worker count from LIDDA_THREADS (default 1), so outputs never depend
// on scheduling.

int max_threads();
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace lidda
