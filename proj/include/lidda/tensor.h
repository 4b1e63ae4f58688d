// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lidda {

// Dense row-major double tensor. Shapes are small and fixed per graph; all
// model math is 64-bit.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> data);

    static int64_t count(const std::vector<int>& shape);
    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor row(std::vector<double> data);

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    int rows() const;
    int cols() const;
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }
    double item() const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
    bool all_finite() const;
    void fill(double value);
};

// Named-tensor checkpoint: flat little-endian float64 blob + JSON manifest
// (name, shape, byte offset) at <file>.json.
void save_checkpoint(const std::string& file,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& file);

}  // namespace lidda
