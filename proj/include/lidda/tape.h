// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over the kernel layer. Ops are limited to what the
// attribution model needs; graphs are built eagerly (values computed at node
// creation) and walked once in reverse creation order on backward().
#pragma once

#include <string>
#include <vector>

#include "lidda/tensor.h"

namespace lidda {

class Tape {
public:
    // Parameter leaf: value copied in, gradient accumulated into *grad_sink
    // (same shape) after backward. Unused leaves simply leave the sink as is.
    int leaf(const Tensor& value, Tensor* grad_sink);
    int constant(Tensor value);

    int matmul(int a, int b);     // [M,K]x[K,N]
    int matmul_nt(int a, int b);  // [M,K]x[N,K]^T
    int add(int a, int b);
    int add_n(const std::vector<int>& xs);
    int add_bias(int x, int bias);  // [M,N] + row [1,N]
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int a, double s);
    int concat(int a, int b);  // along last dim, equal leading dim
    int gather_rows(int table, const std::vector<int>& idx);
    int mask_rows(int x, int keep01);        // keep01: const [1,M] of {0,1}
    int softmax_masked(int x, int mask_add);  // mask_add: const [1,N], {0,-1e9}
    int sigmoid(int x);
    int relu(int x);
    int log_clamped(int x);  // ln(max(x, 1e-12))
    int sum(int x);
    int mean(int x);
    int l1_normalize(int x);   // y = x / sum(x)
    int bce(int pred, int labels);  // mean elementwise cross-entropy
    int reshape(int x, std::vector<int> shape);
    int permute_cols(int x, const std::vector<int>& perm);

    const Tensor& value(int id) const { return nodes_[check_id(id)].value; }
    const Tensor& grad(int id) const;

    void backward(int loss);
    void reset();
    size_t size() const { return nodes_.size(); }

    // Finite checks after every op (on by default; throws naming the op).
    static void set_checks(bool on);

private:
    enum class Op {
        Leaf, Const, MatMul, MatMulNT, Add, AddN, AddBias, Sub, Mul, Scale,
        Concat, Gather, MaskRows, SoftmaxMasked, Sigmoid, Relu, Log, Sum,
        Mean, L1Norm, Bce, Reshape, PermuteCols,
    };

    struct Node {
        Op op;
        int a = -1, b = -1;
        std::vector<int> parents;  // AddN only
        std::vector<int> idx;      // Gather / PermuteCols
        double s = 0.0;            // Scale factor
        Tensor value;
        Tensor grad;
        Tensor* sink = nullptr;
        bool has_grad = false;
    };

    int push(Node n, const char* opname);
    int check_id(int id) const;
    Tensor& grad_buf(int id);
    bool backward_done_ = false;
    std::vector<Node> nodes_;
};

}  // namespace lidda
