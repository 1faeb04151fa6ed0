#pragma once

// Dense numeric building blocks: parameter tensors, deterministically seeded
// initialization, two-layer perceptrons with exact reverse-mode gradients
// (batched over columns), and an AdamW optimizer.
//
// Conventions (part of the checkpoint/test contract):
//   - weights are (out x in), applied as y = W x + b, inputs are columns;
//   - init draws come from one splitmix64 stream in declared tensor order,
//     weights uniform in +/- sqrt(6 / (fan_in + fan_out)) filled row-major,
//     biases start at zero and consume no draws;
//   - hidden activation is exact GELU, output layers are linear.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmx/common.hpp"

namespace lmx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

// d/dx gelu(x) = Phi(x) + x * phi(x)
inline double gelu_grad(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014326779;
    double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// One named parameter matrix plus its gradient accumulator.
struct Tensor {
    std::string name;
    Matrix value;
    Matrix grad;

    Tensor() = default;
    Tensor(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }
};

// Fills a weight tensor from the shared init stream (row-major draw order).
inline void init_uniform(Tensor& t, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
        for (Eigen::Index c = 0; c < t.value.cols(); ++c)
            t.value(r, c) = limit * rng.next_symmetric();
}

// y = W x + b over column batches.
struct Linear {
    Tensor w;  // (out x in)
    Tensor b;  // (out x 1), zero-initialized

    Linear() = default;
    Linear(const std::string& name, Eigen::Index out, Eigen::Index in)
        : w(name + ".w", out, in), b(name + ".b", out, 1) {}

    void init(Rng& rng) { init_uniform(w, rng); }

    Matrix forward(const Matrix& x) const {
        return (w.value * x).colwise() + b.value.col(0);
    }

    // Accumulates parameter gradients; returns gradient w.r.t. the input.
    Matrix backward(const Matrix& x, const Matrix& gy) {
        w.grad.noalias() += gy * x.transpose();
        b.grad.col(0).noalias() += gy.rowwise().sum();
        return w.value.transpose() * gy;
    }

    void collect(std::vector<Tensor*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

// Two-layer perceptron: linear -> GELU -> linear.
struct Mlp2 {
    Linear l1, l2;

    Mlp2() = default;
    Mlp2(const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out)
        : l1(name + ".l1", hidden, in), l2(name + ".l2", out, hidden) {}

    void init(Rng& rng) {
        l1.init(rng);
        l2.init(rng);
    }

    Eigen::Index in_dim() const { return l1.w.value.cols(); }
    Eigen::Index out_dim() const { return l2.w.value.rows(); }

    // Cached intermediates for the backward pass.
    struct Trace {
        Matrix x;   // input columns
        Matrix z1;  // pre-activation
        Matrix a1;  // post-GELU
    };

    Matrix forward(const Matrix& x, Trace* trace = nullptr) const {
        Matrix z1 = l1.forward(x);
        Matrix a1 = z1.unaryExpr([](double v) { return gelu(v); });
        Matrix y = l2.forward(a1);
        if (trace) {
            trace->x = x;
            trace->z1 = std::move(z1);
            trace->a1 = std::move(a1);
        }
        return y;
    }

    Vector forward1(const Vector& x) const { return forward(Matrix(x)).col(0); }

    // gy: gradient w.r.t. output columns. Returns gradient w.r.t. input.
    Matrix backward(const Trace& trace, const Matrix& gy) {
        Matrix ga1 = l2.backward(trace.a1, gy);
        Matrix gz1 =
            ga1.cwiseProduct(trace.z1.unaryExpr([](double v) { return gelu_grad(v); }));
        return l1.backward(trace.x, gz1);
    }

    void collect(std::vector<Tensor*>& out) {
        l1.collect(out);
        l2.collect(out);
    }
};

// Adam with decoupled weight decay; one state slot per registered tensor.
class AdamW {
public:
    struct Config {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
    };

    AdamW(std::vector<Tensor*> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
        for (auto* t : params_) {
            m_.emplace_back(Matrix::Zero(t->value.rows(), t->value.cols()));
            v_.emplace_back(Matrix::Zero(t->value.rows(), t->value.cols()));
        }
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = *params_[i];
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
            Matrix mhat = m_[i] / bc1;
            Matrix vhat = v_[i] / bc2;
            p.value -= cfg_.lr * cfg_.weight_decay * p.value;  // decoupled decay
            p.value.array() -= cfg_.lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps));
        }
    }

    void zero_grad() {
        for (auto* t : params_) t->zero_grad();
    }

private:
    std::vector<Tensor*> params_;
    Config cfg_;
    std::vector<Matrix> m_, v_;
    int t_ = 0;
};

// Numerically stable softmax over a contiguous logit span.
inline void softmax_inplace(double* logits, std::size_t n) {
    double mx = logits[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        logits[i] = std::exp(logits[i] - mx);
        sum += logits[i];
    }
    for (std::size_t i = 0; i < n; ++i) logits[i] /= sum;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> p = logits;
    if (!p.empty()) softmax_inplace(p.data(), p.size());
    return p;
}

}  // namespace lmx
