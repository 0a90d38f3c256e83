#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "quadapt/adapter.hpp"
#include "quadapt/basemodel.hpp"
#include "quadapt/shiftbench.hpp"

namespace quadapt {

struct OptimizerConfig {
    enum class Kind { Sgd, Adam };
    Kind kind = Kind::Adam;
    double lr = 0.01;
    double momentum = 0.0;   // sgd
    double beta1 = 0.9;      // adam
    double beta2 = 0.999;    // adam
    double eps = 1e-8;       // adam

    void validate() const;
    nlohmann::json to_json() const;
    static OptimizerConfig from_json(const nlohmann::json& j);
};

struct EarlyStop {
    std::size_t patience = 10;
    double min_delta = 0.0;
};

struct TrainConfig {
    OptimizerConfig optimizer;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    std::optional<EarlyStop> early_stop;  // off by default for comparability

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Everything a completed run reports. The content hash covers all numeric
/// results and the config echo; wall-clock is excluded so identical
/// (seed, config, data) reruns hash identically.
struct TrainReport {
    std::vector<double> train_curve;  // one entry per completed epoch
    std::vector<double> test_curve;
    double final_test_loss = 0.0;
    double wall_seconds = 0.0;
    std::uint64_t trainable_params = 0;
    std::uint64_t updates = 0;
    double target_mse = 0.0;
    std::optional<std::uint64_t> updates_to_target;  // first epoch end at or below target
    bool diverged = false;
    nlohmann::json config_echo;
    std::uint64_t content_hash = 0;

    std::string hash_hex() const;
    nlohmann::json to_json() const;
    std::string to_csv() const;  // epoch,train_mse,test_mse rows
};

// Minimal trainable surface: a batched forward plus the parameter list the
// optimizer may touch. Parameters must not be frozen.
struct ModelView {
    std::function<TensorPtr(const TensorPtr&)> forward;
    std::vector<TensorPtr> params;
};

ModelView view_of(const BaseModel& model);
ModelView view_of(const AdaptedModel& model);

// Deterministic given (seed, config, data): epoch-shuffled minibatch MSE
// training. Only view.params change. A non-finite loss aborts with the
// partial report flagged diverged. target_mse (when finite) drives
// updates_to_target.
TrainReport train(const ModelView& view, const Split& train_split, const Split& test_split,
                  const TrainConfig& cfg, double target_mse = 0.0);

double evaluate_mse(const ModelView& view, const Split& split);
double evaluate_mse(const std::function<TensorPtr(const TensorPtr&)>& forward,
                    const Split& split);

// "Reached the shifted task" threshold: twice the irreducible noise floor,
// with a small absolute floor so noiseless smoke benches stay reachable.
double default_target_mse(const BenchConfig& config);

// Trains a fresh (unfrozen) base on the pretrain split.
struct PretrainSpec {
    std::vector<std::size_t> dims;  // empty: [input_dim, output_dim] from the bench
    Activation activation = Activation::Gelu;
    TrainConfig train;
};
struct PretrainResult {
    BaseModel model;
    TrainReport report;
};
PretrainResult pretrain(const ShiftBenchmark& bench, const PretrainSpec& spec);

// Loads the frozen base, attaches per config, trains the adapter only on the
// downstream split, and re-asserts freeze integrity byte-for-byte.
struct AdaptResult {
    AdaptedModel model;
    TrainReport report;
};
AdaptResult adapt(const std::string& base_ckpt_dir, const ShiftBenchmark& bench,
                  const AdapterConfig& adapter_cfg, const TrainConfig& train_cfg,
                  double target_mse = 0.0);
AdaptResult adapt(const BaseModel& frozen_base, const ShiftBenchmark& bench,
                  const AdapterConfig& adapter_cfg, const TrainConfig& train_cfg,
                  double target_mse = 0.0);

struct SeedOutcome {
    std::uint64_t seed = 0;
    double final_test_mse = 0.0;
    std::optional<std::uint64_t> updates_to_target;
    std::string report_hash;
    bool diverged = false;
};

struct ComparisonRow {
    std::string name;
    std::string family;
    std::size_t rank = 0;
    std::string kernel;
    std::uint64_t params = 0;
    double trainable_fraction = 0.0;
    std::vector<SeedOutcome> per_seed;
    double median_final_test_mse = 0.0;
    std::optional<std::uint64_t> median_updates_to_target;
};

struct ComparisonTable {
    nlohmann::json bench_echo;
    nlohmann::json train_echo;
    std::vector<std::uint64_t> seeds;
    double target_mse = 0.0;
    std::vector<ComparisonRow> rows;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

struct CompareOptions {
    std::vector<AdapterConfig> adapters;
    TrainConfig train;
    std::optional<TrainConfig> pretrain_cfg;  // defaults to `train`
    std::vector<std::size_t> base_dims;       // defaults to [n, m]
    Activation base_activation = Activation::Gelu;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::optional<double> target_mse;
};

// One pretrained base, identical seeds and data order for every row; rows are
// fully isolated from each other.
ComparisonTable compare(const ShiftBenchmark& bench, const CompareOptions& options);

struct SavingsPath {
    std::uint64_t params = 0;
    std::optional<std::uint64_t> updates_to_target;
    std::optional<std::uint64_t> param_steps;  // updates_to_target * params
    double final_test_mse = 0.0;
};

struct SavingsSeedOutcome {
    std::uint64_t seed = 0;
    SavingsPath scratch;
    SavingsPath adapter;
    std::optional<double> ratio;  // adapter param-steps / scratch param-steps
    bool target_unreached = false;
};

struct SavingsReport {
    nlohmann::json bench_echo;
    nlohmann::json train_echo;
    double target_mse = 0.0;
    std::vector<SavingsSeedOutcome> per_seed;
    std::optional<double> median_ratio;
    bool target_unreached = false;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

struct SavingsOptions {
    AdapterConfig adapter;  // the quadratic adapter under test
    TrainConfig train;
    std::optional<TrainConfig> pretrain_cfg;
    std::vector<std::size_t> base_dims;
    Activation base_activation = Activation::Gelu;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::optional<double> target_mse;
};

// (a) trains the fully quadratic-equipped model from scratch on the
// downstream split (attach-point layers become dense bilinear layers, all
// parameters trainable); (b) trains the frozen pretrained base + rank-r
// adapter; reports parameter-steps to target and their ratio.
SavingsReport scratch_vs_adapt(const ShiftBenchmark& bench, const SavingsOptions& options);

double median(std::vector<double> values);

}  // namespace quadapt
