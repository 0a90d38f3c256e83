#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "quadapt/harness.hpp"

namespace quadapt {

// Where a run gets its benchmark: generated inline from a "bench" object or
// loaded from a "bench_path" export.
struct BenchSource {
    std::optional<BenchConfig> inline_cfg;
    std::string path;

    ShiftBenchmark realize() const;
};

struct ModelSpec {
    std::vector<std::size_t> dims;  // empty: [input_dim, output_dim] from bench
    Activation activation = Activation::Gelu;
};

struct PretrainRunConfig {
    BenchSource bench;
    ModelSpec model;
    TrainConfig train;
};

struct AdaptRunConfig {
    BenchSource bench;
    AdapterConfig adapter;
    TrainConfig train;
    std::optional<double> target_mse;
};

struct EvalRunConfig {
    BenchSource bench;
};

struct CompareRunConfig {
    BenchSource bench;
    ModelSpec model;
    TrainConfig train;
    std::optional<TrainConfig> pretrain;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<AdapterConfig> adapters;
    std::optional<double> target_mse;

    CompareOptions options() const;
};

struct SavingsRunConfig {
    BenchSource bench;
    ModelSpec model;
    TrainConfig train;
    std::optional<TrainConfig> pretrain;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    AdapterConfig adapter;
    std::optional<double> target_mse;

    SavingsOptions options() const;
};

nlohmann::json load_json_file(const std::string& path);

// All parsers reject unknown keys before any compute.
PretrainRunConfig parse_pretrain_config(const nlohmann::json& j);
AdaptRunConfig parse_adapt_config(const nlohmann::json& j);
CompareRunConfig parse_compare_config(const nlohmann::json& j);
SavingsRunConfig parse_savings_config(const nlohmann::json& j);

}  // namespace quadapt
