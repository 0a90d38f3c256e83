#include "quadapt/runconfig.hpp"

#include <fstream>

namespace quadapt {

using nlohmann::json;

ShiftBenchmark BenchSource::realize() const {
    if (inline_cfg) return generate(*inline_cfg);
    if (!path.empty()) return load_benchmark(path);
    throw ValueError("config needs either 'bench' or 'bench_path'");
}

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ValueError("invalid JSON in " + path + ": " + e.what());
    }
}

namespace {

ModelSpec parse_model_spec(const json& j) {
    ModelSpec spec;
    for (const auto& [key, value] : j.items()) {
        if (key == "dims") {
            spec.dims = value.get<std::vector<std::size_t>>();
        } else if (key == "activation") {
            const auto name = value.get<std::string>();
            if (name == "gelu") {
                spec.activation = Activation::Gelu;
            } else if (name == "relu") {
                spec.activation = Activation::Relu;
            } else {
                throw ValueError("model: unknown activation '" + name + "'");
            }
        } else {
            throw ValueError("model: unknown key '" + key + "'");
        }
    }
    return spec;
}

// Pulls bench/bench_path out of a config object; both at once is an error.
BenchSource parse_bench_source(const json& j) {
    BenchSource src;
    if (j.contains("bench")) src.inline_cfg = BenchConfig::from_json(j["bench"]);
    if (j.contains("bench_path")) src.path = j["bench_path"].get<std::string>();
    if (src.inline_cfg && !src.path.empty()) {
        throw ValueError("config: 'bench' and 'bench_path' are mutually exclusive");
    }
    if (!src.inline_cfg && src.path.empty()) {
        throw ValueError("config needs either 'bench' or 'bench_path'");
    }
    return src;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const char* context) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ValueError(std::string(context) + ": unknown key '" + key + "'");
    }
}

}  // namespace

PretrainRunConfig parse_pretrain_config(const json& j) {
    reject_unknown(j, {"bench", "bench_path", "model", "train"}, "pretrain config");
    PretrainRunConfig cfg;
    cfg.bench = parse_bench_source(j);
    if (j.contains("model")) cfg.model = parse_model_spec(j["model"]);
    if (!j.contains("train")) throw ValueError("pretrain config: missing 'train'");
    cfg.train = TrainConfig::from_json(j["train"]);
    return cfg;
}

AdaptRunConfig parse_adapt_config(const json& j) {
    reject_unknown(j, {"bench", "bench_path", "adapter", "train", "target_mse"}, "adapt config");
    AdaptRunConfig cfg;
    cfg.bench = parse_bench_source(j);
    if (!j.contains("adapter")) throw ValueError("adapt config: missing 'adapter'");
    cfg.adapter = AdapterConfig::from_json(j["adapter"]);
    if (!j.contains("train")) throw ValueError("adapt config: missing 'train'");
    cfg.train = TrainConfig::from_json(j["train"]);
    if (j.contains("target_mse")) cfg.target_mse = j["target_mse"].get<double>();
    return cfg;
}

CompareOptions CompareRunConfig::options() const {
    CompareOptions opt;
    opt.adapters = adapters;
    opt.train = train;
    opt.pretrain_cfg = pretrain;
    opt.base_dims = model.dims;
    opt.base_activation = model.activation;
    opt.seeds = seeds;
    opt.target_mse = target_mse;
    return opt;
}

CompareRunConfig parse_compare_config(const json& j) {
    reject_unknown(j, {"bench", "bench_path", "model", "train", "pretrain", "seeds", "adapters",
                       "target_mse"},
                   "compare config");
    CompareRunConfig cfg;
    cfg.bench = parse_bench_source(j);
    if (j.contains("model")) cfg.model = parse_model_spec(j["model"]);
    if (!j.contains("train")) throw ValueError("compare config: missing 'train'");
    cfg.train = TrainConfig::from_json(j["train"]);
    if (j.contains("pretrain")) cfg.pretrain = TrainConfig::from_json(j["pretrain"]);
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (!j.contains("adapters")) throw ValueError("compare config: missing 'adapters'");
    for (const auto& a : j["adapters"]) cfg.adapters.push_back(AdapterConfig::from_json(a));
    if (j.contains("target_mse")) cfg.target_mse = j["target_mse"].get<double>();
    return cfg;
}

SavingsOptions SavingsRunConfig::options() const {
    SavingsOptions opt;
    opt.adapter = adapter;
    opt.train = train;
    opt.pretrain_cfg = pretrain;
    opt.base_dims = model.dims;
    opt.base_activation = model.activation;
    opt.seeds = seeds;
    opt.target_mse = target_mse;
    return opt;
}

SavingsRunConfig parse_savings_config(const json& j) {
    reject_unknown(j, {"bench", "bench_path", "model", "train", "pretrain", "seeds", "adapter",
                       "target_mse"},
                   "savings config");
    SavingsRunConfig cfg;
    cfg.bench = parse_bench_source(j);
    if (j.contains("model")) cfg.model = parse_model_spec(j["model"]);
    if (!j.contains("train")) throw ValueError("savings config: missing 'train'");
    cfg.train = TrainConfig::from_json(j["train"]);
    if (j.contains("pretrain")) cfg.pretrain = TrainConfig::from_json(j["pretrain"]);
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (!j.contains("adapter")) throw ValueError("savings config: missing 'adapter'");
    cfg.adapter = AdapterConfig::from_json(j["adapter"]);
    if (j.contains("target_mse")) cfg.target_mse = j["target_mse"].get<double>();
    return cfg;
}

}  // namespace quadapt
