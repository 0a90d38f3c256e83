#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "quadapt/quadratic.hpp"
#include "quadapt/tensor.hpp"

namespace quadapt {

// How the rank-r* quadratic shift enters the downstream targets: either raw
// channel products, or tanh of each channel product (a shift that no
// polynomial adapter realizes exactly but the sigmoid kernel does).
enum class ShiftWarp { None, Tanh };

std::string warp_name(ShiftWarp warp);
ShiftWarp warp_from_name(const std::string& name);

struct BenchSizes {
    std::size_t pretrain_train = 4096;
    std::size_t pretrain_test = 4096;
    std::size_t downstream_train = 4096;
    std::size_t downstream_test = 4096;
};

struct BenchConfig {
    std::uint64_t seed = 42;
    std::size_t input_dim = 8;
    std::size_t output_dim = 8;
    std::size_t shift_rank = 2;
    double shift_strength = 0.5;
    double noise_sigma = 0.01;
    ShiftWarp warp = ShiftWarp::None;
    BenchSizes sizes;

    void validate() const;
    nlohmann::json to_json() const;
    static BenchConfig from_json(const nlohmann::json& j);
};

struct Split {
    TensorPtr X;  // [N x n]
    TensorPtr Y;  // [N x m]
    std::size_t size() const { return X->shape[0]; }
};

/// Teacher-student benchmark with a known shift:
///   pretrain targets    y = T0 x + noise
///   downstream targets  y = T0 x + eps * Q*(x) + noise
/// where Q* is a rank-r* quadratic (optionally tanh-warped per channel),
/// inputs are uniform on [-1,1]^n and noise is N(0, sigma^2) per component.
/// Identical seed => identical datasets, bit for bit.
struct ShiftBenchmark {
    BenchConfig config;
    TensorPtr teacher_W;          // [m x n], the random linear map T0
    LowRankQuadraticTerm shift;   // rank r* factors of Q*
    Split pretrain_train, pretrain_test, downstream_train, downstream_test;

    TensorPtr teacher_linear(const TensorPtr& X) const;   // X T0^T
    TensorPtr shift_output(const TensorPtr& X) const;     // Q*(X), warp applied
    TensorPtr generator_output(const TensorPtr& X) const; // T0 x + eps Q*(x)

    // Secondary classification variant: label = [first generator output > 0].
    std::vector<int> classification_labels(const Split& split) const;
};

ShiftBenchmark generate(const BenchConfig& config);

// Exact affine least-squares fit to the downstream training targets; returns
// its test MSE — the floor no first-order adapter of any rank can beat here.
// Singular normal equations are regularized with ridge 1e-8 (reported on
// stderr, never fatal).
double linear_floor_oracle(const ShiftBenchmark& bench);

// Downstream test MSE of the true generator itself (noise level up to
// sampling error) — the target a rank-r >= r* quadratic adapter can reach.
// r < r* violates the precondition.
double realizability_oracle(const ShiftBenchmark& bench, std::size_t r);

// Flat-file reuse across runs; same manifest + blob conventions as
// checkpoints.
void export_benchmark(const ShiftBenchmark& bench, const std::string& dir);
ShiftBenchmark load_benchmark(const std::string& dir);

}  // namespace quadapt
