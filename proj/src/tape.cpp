// SPDX-License-Identifier: Apache-2.0
#include "lidda/tape.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "lidda/common.h"
#include "lidda/kernels.h"

namespace lidda {
namespace {

constexpr double kLogClamp = 1e-12;
constexpr double kBceClamp = 1e-12;

std::atomic<bool> g_checks{true};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        fail(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void Tape::set_checks(bool on) { g_checks.store(on); }

int Tape::check_id(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) fail("tape: bad node id");
    return id;
}

int Tape::push(Node n, const char* opname) {
    if (g_checks.load(std::memory_order_relaxed) && !n.value.all_finite())
        fail(std::string("tape: non-finite values out of op ") + opname);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

int Tape::leaf(const Tensor& value, Tensor* grad_sink) {
    if (grad_sink && !grad_sink->same_shape(value))
        fail("tape: leaf grad sink shape mismatch");
    Node n;
    n.op = Op::Leaf;
    n.value = value;
    n.sink = grad_sink;
    return push(std::move(n), "leaf");
}

int Tape::constant(Tensor value) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(value);
    return push(std::move(n), "const");
}

int Tape::matmul(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.rows())
        fail("matmul: inner dims " + A.shape_str() + " x " + B.shape_str());
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.value = Tensor({A.rows(), B.cols()});
    kernels::active().matmul(n.value.v.data(), A.v.data(), B.v.data(), A.rows(), A.cols(),
                             B.cols());
    return push(std::move(n), "matmul");
}

int Tape::matmul_nt(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.cols())
        fail("matmul_nt: inner dims " + A.shape_str() + " x " + B.shape_str() + "^T");
    Node n;
    n.op = Op::MatMulNT;
    n.a = a;
    n.b = b;
    n.value = Tensor({A.rows(), B.rows()});
    kernels::active().matmul_nt(n.value.v.data(), A.v.data(), B.v.data(), A.rows(), A.cols(),
                                B.rows());
    return push(std::move(n), "matmul_nt");
}

int Tape::add(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    check_same_shape(A, B, "add");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.value = Tensor(A.shape);
    kernels::active().add(n.value.v.data(), A.v.data(), B.v.data(), A.v.size());
    return push(std::move(n), "add");
}

int Tape::add_n(const std::vector<int>& xs) {
    if (xs.empty()) fail("add_n: empty input list");
    Node n;
    n.op = Op::AddN;
    n.parents = xs;
    n.value = value(xs[0]);
    for (size_t i = 1; i < xs.size(); ++i) {
        const Tensor& X = value(xs[i]);
        check_same_shape(n.value, X, "add_n");
        kernels::active().add(n.value.v.data(), n.value.v.data(), X.v.data(), X.v.size());
    }
    return push(std::move(n), "add_n");
}

int Tape::add_bias(int x, int bias) {
    const Tensor& X = value(x);
    const Tensor& B = value(bias);
    if (B.rows() != 1 || B.cols() != X.cols())
        fail("add_bias: bias " + B.shape_str() + " vs input " + X.shape_str());
    Node n;
    n.op = Op::AddBias;
    n.a = x;
    n.b = bias;
    n.value = Tensor(X.shape);
    for (int r = 0; r < X.rows(); ++r)
        kernels::active().add(n.value.v.data() + static_cast<size_t>(r) * X.cols(),
                              X.v.data() + static_cast<size_t>(r) * X.cols(), B.v.data(),
                              X.cols());
    return push(std::move(n), "add_bias");
}

int Tape::sub(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    check_same_shape(A, B, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.value = Tensor(A.shape);
    kernels::active().sub(n.value.v.data(), A.v.data(), B.v.data(), A.v.size());
    return push(std::move(n), "sub");
}

int Tape::mul(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    check_same_shape(A, B, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.value = Tensor(A.shape);
    kernels::active().mul(n.value.v.data(), A.v.data(), B.v.data(), A.v.size());
    return push(std::move(n), "mul");
}

int Tape::scale(int a, double s) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.s = s;
    n.value = Tensor(A.shape);
    kernels::active().scale(n.value.v.data(), A.v.data(), s, A.v.size());
    return push(std::move(n), "scale");
}

int Tape::concat(int a, int b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rows() != B.rows())
        fail("concat: row mismatch " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.op = Op::Concat;
    n.a = a;
    n.b = b;
    n.value = Tensor({A.rows(), A.cols() + B.cols()});
    for (int r = 0; r < A.rows(); ++r) {
        double* dst = n.value.v.data() + static_cast<size_t>(r) * n.value.cols();
        std::copy_n(A.v.data() + static_cast<size_t>(r) * A.cols(), A.cols(), dst);
        std::copy_n(B.v.data() + static_cast<size_t>(r) * B.cols(), B.cols(), dst + A.cols());
    }
    return push(std::move(n), "concat");
}

int Tape::gather_rows(int table, const std::vector<int>& idx) {
    const Tensor& T = value(table);
    const int c = T.cols();
    Node n;
    n.op = Op::Gather;
    n.a = table;
    n.idx = idx;
    n.value = Tensor({static_cast<int>(idx.size()), c});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= T.rows())
            fail("gather_rows: index " + std::to_string(idx[i]) + " out of range [0, " +
                 std::to_string(T.rows()) + ")");
        std::copy_n(T.v.data() + static_cast<size_t>(idx[i]) * c, c, n.value.v.data() + i * c);
    }
    return push(std::move(n), "gather_rows");
}

int Tape::mask_rows(int x, int keep01) {
    const Tensor& X = value(x);
    const Tensor& K = value(keep01);
    if (K.size() != X.rows()) fail("mask_rows: mask size vs rows");
    Node n;
    n.op = Op::MaskRows;
    n.a = x;
    n.b = keep01;
    n.value = Tensor(X.shape);
    for (int r = 0; r < X.rows(); ++r)
        kernels::active().scale(n.value.v.data() + static_cast<size_t>(r) * X.cols(),
                                X.v.data() + static_cast<size_t>(r) * X.cols(), K.v[r],
                                X.cols());
    return push(std::move(n), "mask_rows");
}

int Tape::softmax_masked(int x, int mask_add) {
    const Tensor& X = value(x);
    const Tensor& M = value(mask_add);
    if (M.size() != X.cols()) fail("softmax_masked: mask size vs cols");
    Node n;
    n.op = Op::SoftmaxMasked;
    n.a = x;
    n.b = mask_add;
    n.value = Tensor(X.shape);
    const int c = X.cols();
    for (int r = 0; r < X.rows(); ++r) {
        const double* in = X.v.data() + static_cast<size_t>(r) * c;
        double* out = n.value.v.data() + static_cast<size_t>(r) * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) mx = std::max(mx, in[j] + M.v[j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            out[j] = std::exp(in[j] + M.v[j] - mx);
            s += out[j];
        }
        kernels::active().scale(out, out, 1.0 / s, c);
    }
    return push(std::move(n), "softmax_masked");
}

int Tape::sigmoid(int x) {
    const Tensor& X = value(x);
    Node n;
    n.op = Op::Sigmoid;
    n.a = x;
    n.value = Tensor(X.shape);
    for (size_t i = 0; i < X.v.size(); ++i) n.value.v[i] = stable_sigmoid(X.v[i]);
    return push(std::move(n), "sigmoid");
}

int Tape::relu(int x) {
    const Tensor& X = value(x);
    Node n;
    n.op = Op::Relu;
    n.a = x;
    n.value = Tensor(X.shape);
    for (size_t i = 0; i < X.v.size(); ++i) n.value.v[i] = X.v[i] > 0.0 ? X.v[i] : 0.0;
    return push(std::move(n), "relu");
}

int Tape::log_clamped(int x) {
    const Tensor& X = value(x);
    Node n;
    n.op = Op::Log;
    n.a = x;
    n.value = Tensor(X.shape);
    for (size_t i = 0; i < X.v.size(); ++i) n.value.v[i] = std::log(std::max(X.v[i], kLogClamp));
    return push(std::move(n), "log");
}

int Tape::sum(int x) {
    const Tensor& X = value(x);
    Node n;
    n.op = Op::Sum;
    n.a = x;
    n.value = Tensor::scalar(kernels::active().sum(X.v.data(), X.v.size()));
    return push(std::move(n), "sum");
}

int Tape::mean(int x) {
    const Tensor& X = value(x);
    if (X.size() == 0) fail("mean: empty tensor");
    Node n;
    n.op = Op::Mean;
    n.a = x;
    n.value = Tensor::scalar(kernels::active().sum(X.v.data(), X.v.size()) /
                             static_cast<double>(X.size()));
    return push(std::move(n), "mean");
}

int Tape::l1_normalize(int x) {
    const Tensor& X = value(x);
    const double s = kernels::active().sum(X.v.data(), X.v.size());
    if (s <= 0.0) fail("l1_normalize: non-positive mass");
    Node n;
    n.op = Op::L1Norm;
    n.a = x;
    n.value = Tensor(X.shape);
    kernels::active().scale(n.value.v.data(), X.v.data(), 1.0 / s, X.v.size());
    return push(std::move(n), "l1_normalize");
}

int Tape::bce(int pred, int labels) {
    const Tensor& P = value(pred);
    const Tensor& Y = value(labels);
    check_same_shape(P, Y, "bce");
    if (P.size() == 0) fail("bce: empty tensor");
    double loss = 0.0;
    for (size_t i = 0; i < P.v.size(); ++i) {
        const double p = std::min(std::max(P.v[i], kBceClamp), 1.0 - kBceClamp);
        loss += -(Y.v[i] * std::log(p) + (1.0 - Y.v[i]) * std::log(1.0 - p));
    }
    Node n;
    n.op = Op::Bce;
    n.a = pred;
    n.b = labels;
    n.value = Tensor::scalar(loss / static_cast<double>(P.size()));
    return push(std::move(n), "bce");
}

int Tape::reshape(int x, std::vector<int> shape) {
    const Tensor& X = value(x);
    if (Tensor::count(shape) != X.size()) fail("reshape: element count mismatch");
    Node n;
    n.op = Op::Reshape;
    n.a = x;
    n.value = Tensor(std::move(shape), X.v);
    return push(std::move(n), "reshape");
}

int Tape::permute_cols(int x, const std::vector<int>& perm) {
    const Tensor& X = value(x);
    if (static_cast<int>(perm.size()) != X.cols()) fail("permute_cols: perm size vs cols");
    Node n;
    n.op = Op::PermuteCols;
    n.a = x;
    n.idx = perm;
    n.value = Tensor(X.shape);
    for (int r = 0; r < X.rows(); ++r)
        for (int j = 0; j < X.cols(); ++j) n.value.at(r, j) = X.at(r, perm[j]);
    return push(std::move(n), "permute_cols");
}

const Tensor& Tape::grad(int id) const {
    const Node& n = nodes_[check_id(id)];
    if (!n.has_grad) fail("tape: gradient not populated (backward not run or unused node)");
    return n.grad;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape);
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(int loss) {
    check_id(loss);
    if (backward_done_) fail("tape: backward already run on this graph");
    if (nodes_[loss].value.size() != 1) fail("tape: backward target must be scalar");
    backward_done_ = true;
    grad_buf(loss).v[0] = 1.0;
    const auto& K = kernels::active();

    for (int id = loss; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.has_grad) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::MatMul: {
                const Tensor& A = nodes_[n.a].value;
                const Tensor& B = nodes_[n.b].value;
                Tensor da({A.rows(), A.cols()});
                K.matmul_nt(da.v.data(), g.v.data(), B.v.data(), g.rows(), g.cols(), B.rows());
                Tensor& ga = grad_buf(n.a);
                K.add(ga.v.data(), ga.v.data(), da.v.data(), da.v.size());
                Tensor db({B.rows(), B.cols()});
                K.matmul_tn(db.v.data(), A.v.data(), g.v.data(), A.rows(), A.cols(), g.cols());
                Tensor& gb = grad_buf(n.b);
                K.add(gb.v.data(), gb.v.data(), db.v.data(), db.v.size());
                break;
            }
            case Op::MatMulNT: {
                const Tensor& A = nodes_[n.a].value;
                const Tensor& B = nodes_[n.b].value;
                Tensor da({A.rows(), A.cols()});
                K.matmul(da.v.data(), g.v.data(), B.v.data(), g.rows(), g.cols(), B.cols());
                Tensor& ga = grad_buf(n.a);
                K.add(ga.v.data(), ga.v.data(), da.v.data(), da.v.size());
                Tensor db({B.rows(), B.cols()});
                K.matmul_tn(db.v.data(), g.v.data(), A.v.data(), g.rows(), g.cols(), A.cols());
                Tensor& gb = grad_buf(n.b);
                K.add(gb.v.data(), gb.v.data(), db.v.data(), db.v.size());
                break;
            }
            case Op::Add: {
                Tensor& ga = grad_buf(n.a);
                K.add(ga.v.data(), ga.v.data(), g.v.data(), g.v.size());
                Tensor& gb = grad_buf(n.b);
                K.add(gb.v.data(), gb.v.data(), g.v.data(), g.v.size());
                break;
            }
            case Op::AddN: {
                for (int p : n.parents) {
                    Tensor& gp = grad_buf(p);
                    K.add(gp.v.data(), gp.v.data(), g.v.data(), g.v.size());
                }
                break;
            }
            case Op::AddBias: {
                Tensor& gx = grad_buf(n.a);
                K.add(gx.v.data(), gx.v.data(), g.v.data(), g.v.size());
                Tensor& gb = grad_buf(n.b);
                for (int r = 0; r < g.rows(); ++r)
                    K.add(gb.v.data(), gb.v.data(),
                          g.v.data() + static_cast<size_t>(r) * g.cols(), g.cols());
                break;
            }
            case Op::Sub: {
                Tensor& ga = grad_buf(n.a);
                K.add(ga.v.data(), ga.v.data(), g.v.data(), g.v.size());
                Tensor& gb = grad_buf(n.b);
                K.axpy(gb.v.data(), g.v.data(), -1.0, g.v.size());
                break;
            }
            case Op::Mul: {
                const Tensor& A = nodes_[n.a].value;
                const Tensor& B = nodes_[n.b].value;
                Tensor tmp(g.shape);
                K.mul(tmp.v.data(), g.v.data(), B.v.data(), g.v.size());
                Tensor& ga = grad_buf(n.a);
                K.add(ga.v.data(), ga.v.data(), tmp.v.data(), tmp.v.size());
                K.mul(tmp.v.data(), g.v.data(), A.v.data(), g.v.size());
                Tensor& gb = grad_buf(n.b);
                K.add(gb.v.data(), gb.v.data(), tmp.v.data(), tmp.v.size());
                break;
            }
            case Op::Scale: {
                Tensor& ga = grad_buf(n.a);
                K.axpy(ga.v.data(), g.v.data(), n.s, g.v.size());
                break;
            }
            case Op::Concat: {
                const Tensor& A = nodes_[n.a].value;
                const Tensor& B = nodes_[n.b].value;
                Tensor& ga = grad_buf(n.a);
                Tensor& gb = grad_buf(n.b);
                for (int r = 0; r < A.rows(); ++r) {
                    const double* src = g.v.data() + static_cast<size_t>(r) * g.cols();
                    K.add(ga.v.data() + static_cast<size_t>(r) * A.cols(),
                          ga.v.data() + static_cast<size_t>(r) * A.cols(), src, A.cols());
                    K.add(gb.v.data() + static_cast<size_t>(r) * B.cols(),
                          gb.v.data() + static_cast<size_t>(r) * B.cols(), src + A.cols(),
                          B.cols());
                }
                break;
            }
            case Op::Gather: {
                Tensor& gt = grad_buf(n.a);
                const int c = gt.cols();
                for (size_t i = 0; i < n.idx.size(); ++i)
                    K.add(gt.v.data() + static_cast<size_t>(n.idx[i]) * c,
                          gt.v.data() + static_cast<size_t>(n.idx[i]) * c,
                          g.v.data() + i * c, c);
                break;
            }
            case Op::MaskRows: {
                const Tensor& Kp = nodes_[n.b].value;
                Tensor& gx = grad_buf(n.a);
                for (int r = 0; r < g.rows(); ++r)
                    K.axpy(gx.v.data() + static_cast<size_t>(r) * g.cols(),
                           g.v.data() + static_cast<size_t>(r) * g.cols(), Kp.v[r], g.cols());
                break;
            }
            case Op::SoftmaxMasked: {
                const Tensor& Y = n.value;
                Tensor& gx = grad_buf(n.a);
                const int c = Y.cols();
                for (int r = 0; r < Y.rows(); ++r) {
                    const double* y = Y.v.data() + static_cast<size_t>(r) * c;
                    const double* gy = g.v.data() + static_cast<size_t>(r) * c;
                    const double inner = K.dot(gy, y, c);
                    double* out = gx.v.data() + static_cast<size_t>(r) * c;
                    for (int j = 0; j < c; ++j) out[j] += y[j] * (gy[j] - inner);
                }
                break;
            }
            case Op::Sigmoid: {
                const Tensor& Y = n.value;
                Tensor& gx = grad_buf(n.a);
                for (size_t i = 0; i < Y.v.size(); ++i)
                    gx.v[i] += g.v[i] * Y.v[i] * (1.0 - Y.v[i]);
                break;
            }
            case Op::Relu: {
                const Tensor& X = nodes_[n.a].value;
                Tensor& gx = grad_buf(n.a);
                for (size_t i = 0; i < X.v.size(); ++i)
                    if (X.v[i] > 0.0) gx.v[i] += g.v[i];
                break;
            }
            case Op::Log: {
                const Tensor& X = nodes_[n.a].value;
                Tensor& gx = grad_buf(n.a);
                for (size_t i = 0; i < X.v.size(); ++i)
                    if (X.v[i] > kLogClamp) gx.v[i] += g.v[i] / X.v[i];
                break;
            }
            case Op::Sum: {
                Tensor& gx = grad_buf(n.a);
                const double gv = g.v[0];
                for (double& x : gx.v) x += gv;
                break;
            }
            case Op::Mean: {
                Tensor& gx = grad_buf(n.a);
                const double gv = g.v[0] / static_cast<double>(gx.size());
                for (double& x : gx.v) x += gv;
                break;
            }
            case Op::L1Norm: {
                const Tensor& X = nodes_[n.a].value;
                const Tensor& Y = n.value;
                const double s = K.sum(X.v.data(), X.v.size());
                const double inner = K.dot(g.v.data(), Y.v.data(), g.v.size());
                Tensor& gx = grad_buf(n.a);
                for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += (g.v[i] - inner) / s;
                break;
            }
            case Op::Bce: {
                const Tensor& P = nodes_[n.a].value;
                const Tensor& Y = nodes_[n.b].value;
                Tensor& gp = grad_buf(n.a);
                const double gv = g.v[0] / static_cast<double>(P.size());
                for (size_t i = 0; i < P.v.size(); ++i) {
                    const double p = std::min(std::max(P.v[i], kBceClamp), 1.0 - kBceClamp);
                    gp.v[i] += gv * (p - Y.v[i]) / (p * (1.0 - p));
                }
                break;
            }
            case Op::Reshape: {
                Tensor& gx = grad_buf(n.a);
                K.add(gx.v.data(), gx.v.data(), g.v.data(), g.v.size());
                break;
            }
            case Op::PermuteCols: {
                Tensor& gx = grad_buf(n.a);
                for (int r = 0; r < g.rows(); ++r)
                    for (int j = 0; j < g.cols(); ++j) gx.at(r, n.idx[j]) += g.at(r, j);
                break;
            }
        }
    }

    for (auto& n : nodes_) {
        if (n.op == Op::Leaf && n.sink && n.has_grad)
            K.add(n.sink->v.data(), n.sink->v.data(), n.grad.v.data(), n.grad.v.size());
    }
}

}  // namespace lidda
