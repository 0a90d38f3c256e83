#include "quadapt/shiftbench.hpp"

#include <cmath>
#include <iostream>

#include "quadapt/checkpoint.hpp"
#include "quadapt/ops.hpp"
#include "quadapt/rng.hpp"

namespace quadapt {

using nlohmann::json;

std::string warp_name(ShiftWarp warp) { return warp == ShiftWarp::None ? "none" : "tanh"; }

ShiftWarp warp_from_name(const std::string& name) {
    if (name == "none") return ShiftWarp::None;
    if (name == "tanh") return ShiftWarp::Tanh;
    throw ValueError("unknown shift warp '" + name + "'");
}

void BenchConfig::validate() const {
    if (input_dim == 0 || output_dim == 0) throw ValueError("bench: dims must be positive");
    if (shift_rank == 0) throw ValueError("bench: shift_rank must be positive");
    if (shift_rank > input_dim) throw ValueError("bench: shift_rank must be <= input_dim");
    if (!(shift_strength >= 0.0) || !std::isfinite(shift_strength)) {
        throw ValueError("bench: shift_strength must be finite and >= 0");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ValueError("bench: noise_sigma must be finite and >= 0");
    }
    if (sizes.pretrain_train == 0 || sizes.pretrain_test == 0 || sizes.downstream_train == 0 ||
        sizes.downstream_test == 0) {
        throw ValueError("bench: split sizes must be positive");
    }
}

json BenchConfig::to_json() const {
    return json{{"seed", seed},
                {"input_dim", input_dim},
                {"output_dim", output_dim},
                {"shift_rank", shift_rank},
                {"shift_strength", shift_strength},
                {"noise_sigma", noise_sigma},
                {"warp", warp_name(warp)},
                {"sizes",
                 {{"pretrain_train", sizes.pretrain_train},
                  {"pretrain_test", sizes.pretrain_test},
                  {"downstream_train", sizes.downstream_train},
                  {"downstream_test", sizes.downstream_test}}}};
}

BenchConfig BenchConfig::from_json(const json& j) {
    if (!j.is_object()) throw ValueError("bench config: expected an object");
    BenchConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "input_dim") {
            cfg.input_dim = value.get<std::size_t>();
        } else if (key == "output_dim") {
            cfg.output_dim = value.get<std::size_t>();
        } else if (key == "shift_rank") {
            cfg.shift_rank = value.get<std::size_t>();
        } else if (key == "shift_strength") {
            cfg.shift_strength = value.get<double>();
        } else if (key == "noise_sigma") {
            cfg.noise_sigma = value.get<double>();
        } else if (key == "warp") {
            cfg.warp = warp_from_name(value.get<std::string>());
        } else if (key == "sizes") {
            for (const auto& [skey, svalue] : value.items()) {
                if (skey == "pretrain_train") {
                    cfg.sizes.pretrain_train = svalue.get<std::size_t>();
                } else if (skey == "pretrain_test") {
                    cfg.sizes.pretrain_test = svalue.get<std::size_t>();
                } else if (skey == "downstream_train") {
                    cfg.sizes.downstream_train = svalue.get<std::size_t>();
                } else if (skey == "downstream_test") {
                    cfg.sizes.downstream_test = svalue.get<std::size_t>();
                } else {
                    throw ValueError("bench config sizes: unknown key '" + skey + "'");
                }
            }
        } else {
            throw ValueError("bench config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

namespace {

KernelMap warp_kernel(ShiftWarp warp) {
    return warp == ShiftWarp::Tanh ? KernelMap::sigmoid(1.0, 0.0) : KernelMap::product();
}

TensorPtr draw_inputs(std::size_t count, std::size_t dim, Rng& rng) {
    std::vector<double> v(count * dim);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::create({count, dim}, std::move(v));
}

}  // namespace

TensorPtr ShiftBenchmark::teacher_linear(const TensorPtr& X) const {
    return matmul(X, transpose2d(teacher_W));
}

TensorPtr ShiftBenchmark::shift_output(const TensorPtr& X) const {
    return kernel_quadratic_forward(shift, warp_kernel(config.warp), X);
}

TensorPtr ShiftBenchmark::generator_output(const TensorPtr& X) const {
    return add(teacher_linear(X), scale(shift_output(X), config.shift_strength));
}

std::vector<int> ShiftBenchmark::classification_labels(const Split& split) const {
    auto gen = generator_output(split.X);
    const std::size_t m = config.output_dim;
    std::vector<int> labels(split.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = gen->data[i * m] > 0.0 ? 1 : 0;
    return labels;
}

ShiftBenchmark generate(const BenchConfig& config) {
    config.validate();
    const std::size_t n = config.input_dim, m = config.output_dim, r = config.shift_rank;

    ShiftBenchmark bench;
    bench.config = config;

    {
        Rng rng(derive_seed(config.seed, "teacher"));
        std::vector<double> w(m * n);
        for (auto& x : w) x = rng.uniform(-1.0, 1.0);
        bench.teacher_W = Tensor::create({m, n}, std::move(w));
    }
    {
        // Shift factors are drawn at O(1) scale (not the adapter's 1/sqrt(n))
        // so channel products have unit-order spread and the tanh warp is
        // genuinely non-polynomial.
        Rng ra(derive_seed(config.seed, "shift/A"));
        Rng rb(derive_seed(config.seed, "shift/B"));
        Rng rc(derive_seed(config.seed, "shift/C"));
        std::vector<double> a(r * n), b(r * n), c(m * r);
        for (auto& x : a) x = ra.uniform(-1.0, 1.0);
        for (auto& x : b) x = rb.uniform(-1.0, 1.0);
        for (auto& x : c) x = rc.uniform(-1.0, 1.0);
        bench.shift.A = Tensor::create({r, n}, std::move(a));
        bench.shift.B = Tensor::create({r, n}, std::move(b));
        bench.shift.C = Tensor::create({m, r}, std::move(c));
    }

    auto make_split = [&](const char* name, std::size_t count, bool shifted) {
        Rng xrng(derive_seed(config.seed, std::string("x/") + name));
        Rng nrng(derive_seed(config.seed, std::string("noise/") + name));
        Split split;
        split.X = draw_inputs(count, n, xrng);
        auto clean = shifted ? bench.generator_output(split.X) : bench.teacher_linear(split.X);
        std::vector<double> y(count * m);
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = clean->data[i] + nrng.normal(0.0, config.noise_sigma);
        }
        split.Y = Tensor::create({count, m}, std::move(y));
        return split;
    };

    bench.pretrain_train = make_split("pretrain_train", config.sizes.pretrain_train, false);
    bench.pretrain_test = make_split("pretrain_test", config.sizes.pretrain_test, false);
    bench.downstream_train = make_split("downstream_train", config.sizes.downstream_train, true);
    bench.downstream_test = make_split("downstream_test", config.sizes.downstream_test, true);
    return bench;
}

namespace {

// Cholesky solve of the (dim x dim) SPD system G * W = R with R (dim x cols).
// Returns false if a pivot collapses.
bool cholesky_solve(std::vector<double> G, std::vector<double>& R, std::size_t dim,
                    std::size_t cols) {
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = G[i * dim + j];
            for (std::size_t k = 0; k < j; ++k) sum -= G[i * dim + k] * G[j * dim + k];
            if (i == j) {
                if (sum <= 1e-300) return false;
                G[i * dim + i] = std::sqrt(sum);
            } else {
                G[i * dim + j] = sum / G[j * dim + j];
            }
        }
    }
    // forward then backward substitution per column
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t i = 0; i < dim; ++i) {
            double sum = R[i * cols + c];
            for (std::size_t k = 0; k < i; ++k) sum -= G[i * dim + k] * R[k * cols + c];
            R[i * cols + c] = sum / G[i * dim + i];
        }
        for (std::size_t i = dim; i-- > 0;) {
            double sum = R[i * cols + c];
            for (std::size_t k = i + 1; k < dim; ++k) sum -= G[k * dim + i] * R[k * cols + c];
            R[i * cols + c] = sum / G[i * dim + i];
        }
    }
    return true;
}

double mean_sq_residual(const Split& split, const std::vector<double>& W, std::size_t n,
                        std::size_t m) {
    // W is [(n+1) x m]: affine map rows [feature][output], last feature = 1.
    double acc = 0.0;
    const std::size_t N = split.size();
    for (std::size_t s = 0; s < N; ++s) {
        const double* x = split.X->data.data() + s * n;
        const double* y = split.Y->data.data() + s * m;
        for (std::size_t o = 0; o < m; ++o) {
            double pred = W[n * m + o];  // intercept
            for (std::size_t j = 0; j < n; ++j) pred += x[j] * W[j * m + o];
            const double d = pred - y[o];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(N * m);
}

}  // namespace

double linear_floor_oracle(const ShiftBenchmark& bench) {
    const auto& train = bench.downstream_train;
    if (train.size() == 0) throw ValueError("linear_floor_oracle: empty downstream train split");
    const std::size_t n = bench.config.input_dim, m = bench.config.output_dim;
    const std::size_t d = n + 1;  // affine features [x, 1]
    const std::size_t N = train.size();

    std::vector<double> G(d * d, 0.0), R(d * m, 0.0);
    for (std::size_t s = 0; s < N; ++s) {
        const double* x = train.X->data.data() + s * n;
        const double* y = train.Y->data.data() + s * m;
        auto feature = [&](std::size_t j) { return j < n ? x[j] : 1.0; };
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j <= i; ++j) G[i * d + j] += feature(i) * feature(j);
            for (std::size_t o = 0; o < m; ++o) R[i * m + o] += feature(i) * y[o];
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) G[i * d + j] = G[j * d + i];

    std::vector<double> solution = R;
    if (!cholesky_solve(G, solution, d, m)) {
        std::cerr << "linear_floor_oracle: singular system, regularizing with ridge 1e-8\n";
        for (std::size_t i = 0; i < d; ++i) G[i * d + i] += 1e-8;
        solution = R;
        if (!cholesky_solve(G, solution, d, m)) {
            throw ValueError("linear_floor_oracle: normal equations unsolvable even with ridge");
        }
    }
    return mean_sq_residual(bench.downstream_test, solution, n, m);
}

double realizability_oracle(const ShiftBenchmark& bench, std::size_t r) {
    if (r < bench.config.shift_rank) {
        throw ValueError("realizability_oracle: r = " + std::to_string(r) +
                         " is below the shift rank " + std::to_string(bench.config.shift_rank));
    }
    const auto& test = bench.downstream_test;
    auto pred = bench.generator_output(test.X);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred->size(); ++i) {
        const double diff = pred->data[i] - test.Y->data[i];
        acc += diff * diff;
    }
    return acc / static_cast<double>(pred->size());
}

void export_benchmark(const ShiftBenchmark& bench, const std::string& dir) {
    NamedTensors tensors{{"teacher.W", bench.teacher_W},
                         {"shift.A", bench.shift.A},
                         {"shift.B", bench.shift.B},
                         {"shift.C", bench.shift.C},
                         {"pretrain_train.X", bench.pretrain_train.X},
                         {"pretrain_train.Y", bench.pretrain_train.Y},
                         {"pretrain_test.X", bench.pretrain_test.X},
                         {"pretrain_test.Y", bench.pretrain_test.Y},
                         {"downstream_train.X", bench.downstream_train.X},
                         {"downstream_train.Y", bench.downstream_train.Y},
                         {"downstream_test.X", bench.downstream_test.X},
                         {"downstream_test.Y", bench.downstream_test.Y}};
    write_checkpoint(dir, "benchmark", json{{"config", bench.config.to_json()}}, tensors);
}

ShiftBenchmark load_benchmark(const std::string& dir) {
    auto ckpt = read_checkpoint(dir);
    if (ckpt.kind != "benchmark") {
        throw CheckpointError("manifest mismatch: expected a benchmark file, got kind '" +
                              ckpt.kind + "'");
    }
    if (!ckpt.meta.contains("config")) {
        throw CheckpointError("manifest mismatch: benchmark lacks config");
    }
    ShiftBenchmark bench;
    bench.config = BenchConfig::from_json(ckpt.meta["config"]);
    bench.teacher_W = ckpt.tensor("teacher.W");
    bench.shift.A = ckpt.tensor("shift.A");
    bench.shift.B = ckpt.tensor("shift.B");
    bench.shift.C = ckpt.tensor("shift.C");
    bench.pretrain_train = {ckpt.tensor("pretrain_train.X"), ckpt.tensor("pretrain_train.Y")};
    bench.pretrain_test = {ckpt.tensor("pretrain_test.X"), ckpt.tensor("pretrain_test.Y")};
    bench.downstream_train = {ckpt.tensor("downstream_train.X"),
                              ckpt.tensor("downstream_train.Y")};
    bench.downstream_test = {ckpt.tensor("downstream_test.X"), ckpt.tensor("downstream_test.Y")};

    const std::size_t n = bench.config.input_dim, m = bench.config.output_dim;
    if (bench.teacher_W->shape != std::vector<std::size_t>{m, n} ||
        bench.shift.A->shape != std::vector<std::size_t>{bench.config.shift_rank, n}) {
        throw CheckpointError("manifest mismatch: benchmark tensor shapes disagree with config");
    }
    return bench;
}

}  // namespace quadapt
