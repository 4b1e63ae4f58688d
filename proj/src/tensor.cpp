// SPDX-License-Identifier: Apache-2.0
#include "lidda/tensor.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lidda/common.h"

namespace lidda {

Tensor::Tensor(std::vector<int> s, std::vector<double> data)
    : shape(std::move(s)), v(std::move(data)) {
    if (count(shape) != static_cast<int64_t>(v.size()))
        fail("tensor: shape " + shape_str() + " does not match " + std::to_string(v.size()) +
             " values");
}

int64_t Tensor::count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) fail("tensor: negative dimension");
        n *= d;
    }
    return n;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::row(std::vector<double> data) {
    const int n = static_cast<int>(data.size());
    return Tensor({1, n}, std::move(data));
}

int Tensor::rows() const {
    if (shape.size() != 2) fail("tensor: rows() on shape " + shape_str());
    return shape[0];
}

int Tensor::cols() const {
    if (shape.size() != 2) fail("tensor: cols() on shape " + shape_str());
    return shape[1];
}

double Tensor::item() const {
    if (size() != 1) fail("tensor: item() on shape " + shape_str());
    return v[0];
}

std::string Tensor::shape_str() const {
    std::ostringstream ss;
    ss << "[";
    for (size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
    ss << "]";
    return ss.str();
}

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void Tensor::fill(double value) { std::fill(v.begin(), v.end(), value); }

void save_checkpoint(const std::string& file,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream out(file, std::ios::binary);
    if (!out) fail("checkpoint: cannot write " + file);
    nlohmann::json manifest;
    manifest["tensors"] = nlohmann::json::array();
    uint64_t offset = 0;
    for (auto& [name, t] : tensors) {
        manifest["tensors"].push_back(
            {{"name", name}, {"shape", t.shape}, {"offset", offset}});
        out.write(reinterpret_cast<const char*>(t.v.data()),
                  static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        offset += t.v.size() * sizeof(double);
    }
    if (!out) fail("checkpoint: write failed " + file);
    out.close();
    write_text_file(file + ".json", manifest.dump(2) + "\n");
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& file) {
    nlohmann::json manifest = nlohmann::json::parse(read_text_file(file + ".json"));
    std::ifstream in(file, std::ios::binary);
    if (!in) fail("checkpoint: cannot open " + file);
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& entry : manifest.at("tensors")) {
        std::string name = entry.at("name").get<std::string>();
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        uint64_t offset = entry.at("offset").get<uint64_t>();
        Tensor t(shape);
        in.seekg(static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        if (!in) fail("checkpoint: truncated blob for tensor " + name);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace lidda
