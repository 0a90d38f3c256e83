#pragma once

#include <cstdint>
#include <string>

#include "quadapt/rng.hpp"
#include "quadapt/tensor.hpp"

namespace quadapt {

/// Elementwise similarity applied to paired projection coordinates.
/// Each kind defines kappa(u, v):
///   product     u*v
///   polynomial  (u*v + c)^d, d a positive integer
///   rbf         exp(-gamma * (u - v)^2), gamma >= 0
///   sigmoid     tanh(s * u*v + c)
struct KernelMap {
    enum class Kind { Product, Polynomial, Rbf, Sigmoid };

    Kind kind = Kind::Product;
    double c = 0.0;      // polynomial / sigmoid offset
    int degree = 2;      // polynomial
    double gamma = 1.0;  // rbf
    double slope = 1.0;  // sigmoid

    static KernelMap product();
    static KernelMap polynomial(double c, int degree);
    static KernelMap rbf(double gamma);
    static KernelMap sigmoid(double slope, double c);

    double eval(double u, double v) const;
    void partials(double u, double v, double& du, double& dv) const;

    std::string describe() const;
};

// kappa applied coordinatewise to equal-length tensors; differentiable in both.
// For kind=product this computes exactly the Hadamard product (same arithmetic,
// same backward rules), so the quadratic path reduces to it bitwise.
TensorPtr kernel_apply(const KernelMap& map, const TensorPtr& u, const TensorPtr& v);

/// Dense per-output bilinear layer: y_i = x^T Wq_i x + Wl_i . x + bias_i.
/// Parameter count m*n^2 + m*n + m: the quadratic blow-up the factorized form
/// below avoids.
struct FullQuadraticLayer {
    TensorPtr Wq;    // [m x n x n]
    TensorPtr Wl;    // [m x n]
    TensorPtr bias;  // [m]

    std::size_t in_dim() const { return Wq->shape[1]; }
    std::size_t out_dim() const { return Wq->shape[0]; }

    static FullQuadraticLayer zeros(std::size_t n, std::size_t m, bool requires_grad = false);
    // Only x^T Wq x sees the symmetric part of Wq; this returns the layer with
    // each Wq_i replaced by (Wq_i + Wq_i^T)/2 for canonical comparisons.
    FullQuadraticLayer symmetrized() const;
};

/// Rank-r factorization of the quadratic term: y = C . ((A x) (hadamard) (B x)).
/// Parameter count r*(2n + m), linear in n for fixed r and m.
struct LowRankQuadraticTerm {
    TensorPtr A;  // [r x n]
    TensorPtr B;  // [r x n]
    TensorPtr C;  // [m x r]

    std::size_t rank() const { return A->shape[0]; }
    std::size_t in_dim() const { return A->shape[1]; }
    std::size_t out_dim() const { return C->shape[0]; }

    // A, B ~ uniform(-1/sqrt(n), 1/sqrt(n)); C = 0, so a freshly attached
    // term is an exact no-op.
    static LowRankQuadraticTerm init(std::size_t n, std::size_t m, std::size_t r, Rng& rng,
                                     bool requires_grad = true);
};

// y_i = x^T Wq_i x + Wl_i . x + bias_i. x may be [n] or batched [b x n].
TensorPtr full_quadratic_forward(const FullQuadraticLayer& layer, const TensorPtr& x);

// y = C . ((A x) (hadamard) (B x)) in O(r*(n+m)) multiply-adds per sample.
// x may be [n] or batched [b x n].
TensorPtr lowrank_quadratic_forward(const LowRankQuadraticTerm& term, const TensorPtr& x);

// Same evaluation with the Hadamard replaced by an arbitrary kernel:
// y = C . kappa(A x, B x).
TensorPtr kernel_quadratic_forward(const LowRankQuadraticTerm& term, const KernelMap& map,
                                   const TensorPtr& x);

// Reconstructs the equivalent dense bilinear form: Wq_i = sum_k C[i,k] *
// outer(A_k, B_k), Wl = 0, bias = 0. Forward of the result equals
// lowrank_quadratic_forward on every x.
FullQuadraticLayer expand_lowrank(const LowRankQuadraticTerm& term);

std::uint64_t param_count(const FullQuadraticLayer& layer);
std::uint64_t param_count(const LowRankQuadraticTerm& term);
std::uint64_t full_quadratic_param_count(std::size_t n, std::size_t m);
std::uint64_t lowrank_param_count(std::size_t n, std::size_t m, std::size_t r);

}  // namespace quadapt
