#include "quadapt/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "quadapt/ops.hpp"
#include "quadapt/rng.hpp"

namespace quadapt {

using nlohmann::json;

void OptimizerConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValueError("optimizer: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ValueError("optimizer: momentum must be in [0,1)");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0) {
        throw ValueError("optimizer: betas must be in (0,1)");
    }
    if (!(eps > 0.0)) throw ValueError("optimizer: eps must be > 0");
}

json OptimizerConfig::to_json() const {
    if (kind == Kind::Sgd) {
        return json{{"kind", "sgd"}, {"lr", lr}, {"momentum", momentum}};
    }
    return json{{"kind", "adam"}, {"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}};
}

OptimizerConfig OptimizerConfig::from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ValueError("optimizer: expected {kind, ...}");
    OptimizerConfig cfg;
    const auto kind = j["kind"].get<std::string>();
    if (kind == "sgd") {
        cfg.kind = Kind::Sgd;
    } else if (kind == "adam") {
        cfg.kind = Kind::Adam;
    } else {
        throw ValueError("optimizer: unknown kind '" + kind + "'");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") continue;
        if (key == "lr") {
            cfg.lr = value.get<double>();
        } else if (key == "momentum" && cfg.kind == Kind::Sgd) {
            cfg.momentum = value.get<double>();
        } else if (key == "beta1" && cfg.kind == Kind::Adam) {
            cfg.beta1 = value.get<double>();
        } else if (key == "beta2" && cfg.kind == Kind::Adam) {
            cfg.beta2 = value.get<double>();
        } else if (key == "eps" && cfg.kind == Kind::Adam) {
            cfg.eps = value.get<double>();
        } else {
            throw ValueError("optimizer: unknown key '" + key + "' for kind " + kind);
        }
    }
    cfg.validate();
    return cfg;
}

void TrainConfig::validate() const {
    optimizer.validate();
    if (batch_size < 1) throw ValueError("train: batch_size must be >= 1");
    if (early_stop && early_stop->patience == 0) {
        throw ValueError("train: early_stop patience must be >= 1");
    }
}

json TrainConfig::to_json() const {
    json j{{"optimizer", optimizer.to_json()},
           {"epochs", epochs},
           {"batch_size", batch_size},
           {"seed", seed}};
    if (early_stop) {
        j["early_stop"] = {{"patience", early_stop->patience}, {"min_delta", early_stop->min_delta}};
    }
    return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
    if (!j.is_object()) throw ValueError("train config: expected an object");
    TrainConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "optimizer") {
            cfg.optimizer = OptimizerConfig::from_json(value);
        } else if (key == "epochs") {
            cfg.epochs = value.get<std::size_t>();
        } else if (key == "batch_size") {
            cfg.batch_size = value.get<std::size_t>();
        } else if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "early_stop") {
            EarlyStop es;
            for (const auto& [ekey, evalue] : value.items()) {
                if (ekey == "patience") {
                    es.patience = evalue.get<std::size_t>();
                } else if (ekey == "min_delta") {
                    es.min_delta = evalue.get<double>();
                } else {
                    throw ValueError("train config early_stop: unknown key '" + ekey + "'");
                }
            }
            cfg.early_stop = es;
        } else {
            throw ValueError("train config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

namespace {

void hash_bytes(std::uint64_t& h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
}

void hash_f64(std::uint64_t& h, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    hash_bytes(h, &bits, sizeof(bits));
}

void hash_u64(std::uint64_t& h, std::uint64_t v) { hash_bytes(h, &v, sizeof(v)); }

std::string format_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class Optimizer {
public:
    Optimizer(const OptimizerConfig& cfg, std::vector<TensorPtr> params)
        : cfg_(cfg), params_(std::move(params)) {
        state1_.resize(params_.size());
        state2_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            state1_[i].assign(params_[i]->size(), 0.0);
            if (cfg_.kind == OptimizerConfig::Kind::Adam) {
                state2_[i].assign(params_[i]->size(), 0.0);
            }
        }
    }

    void step() {
        ++t_;
        if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
            for (std::size_t i = 0; i < params_.size(); ++i) {
                auto& p = *params_[i];
                auto& vel = state1_[i];
                for (std::size_t k = 0; k < p.data.size(); ++k) {
                    vel[k] = cfg_.momentum * vel[k] + p.grad[k];
                    p.data[k] -= cfg_.lr * vel[k];
                }
            }
            return;
        }
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i];
            auto& m = state1_[i];
            auto& v = state2_[i];
            for (std::size_t k = 0; k < p.data.size(); ++k) {
                const double g = p.grad[k];
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
                p.data[k] -= cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
            }
        }
    }

private:
    OptimizerConfig cfg_;
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> state1_, state2_;
    std::uint64_t t_ = 0;
};

Split gather_rows(const Split& split, const std::vector<std::size_t>& idx, std::size_t begin,
                  std::size_t end) {
    const std::size_t n = split.X->shape[1], m = split.Y->shape[1];
    const std::size_t count = end - begin;
    std::vector<double> x(count * n), y(count * m);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = idx[begin + i];
        std::copy_n(split.X->data.data() + src * n, n, x.data() + i * n);
        std::copy_n(split.Y->data.data() + src * m, m, y.data() + i * m);
    }
    return Split{Tensor::create({count, n}, std::move(x)), Tensor::create({count, m}, std::move(y))};
}

}  // namespace

std::string TrainReport::hash_hex() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(content_hash));
    return buf;
}

json TrainReport::to_json() const {
    return json{{"final_test_mse", finite_or_null(final_test_loss)},
                {"train_curve", train_curve},
                {"test_curve", test_curve},
                {"wall_seconds", wall_seconds},
                {"trainable_params", trainable_params},
                {"updates", updates},
                {"target_mse", target_mse},
                {"updates_to_target",
                 updates_to_target ? json(*updates_to_target) : json(nullptr)},
                {"diverged", diverged},
                {"config", config_echo},
                {"content_hash", hash_hex()}};
}

std::string TrainReport::to_csv() const {
    std::string out = "epoch,train_mse,test_mse\n";
    for (std::size_t i = 0; i < train_curve.size(); ++i) {
        out += std::to_string(i + 1) + "," + format_g(train_curve[i]) + "," +
               (i < test_curve.size() ? format_g(test_curve[i]) : "") + "\n";
    }
    return out;
}

ModelView view_of(const BaseModel& model) {
    return ModelView{[&model](const TensorPtr& X) { return model.forward(X); },
                     model.trainable_parameters()};
}

ModelView view_of(const AdaptedModel& model) {
    return ModelView{[&model](const TensorPtr& X) { return model.forward(X); },
                     model.trainable_parameters()};
}

double evaluate_mse(const std::function<TensorPtr(const TensorPtr&)>& forward,
                    const Split& split) {
    auto pred = forward(split.X);
    return mse_loss(pred, split.Y)->item();
}

double evaluate_mse(const ModelView& view, const Split& split) {
    return evaluate_mse(view.forward, split);
}

double default_target_mse(const BenchConfig& config) {
    return std::max(2.0 * config.noise_sigma * config.noise_sigma, 1e-6);
}

TrainReport train(const ModelView& view, const Split& train_split, const Split& test_split,
                  const TrainConfig& cfg, double target_mse) {
    cfg.validate();
    for (const auto& p : view.params) {
        if (p->frozen) {
            throw ValueError("train: frozen parameter registered as trainable");
        }
        if (!p->requires_grad) {
            throw ValueError("train: parameter without gradient support in trainable set");
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.trainable_params = 0;
    for (const auto& p : view.params) report.trainable_params += p->size();
    report.target_mse = target_mse;
    report.config_echo = cfg.to_json();

    Optimizer optimizer(cfg.optimizer, view.params);
    Rng shuffle_rng(derive_seed(cfg.seed, "batch_order"));
    const std::size_t N = train_split.size();
    std::vector<std::size_t> idx(N);
    for (std::size_t i = 0; i < N; ++i) idx[i] = i;
    double best_test = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs && !report.diverged; ++epoch) {
        // Fisher-Yates with the run's dedicated stream
        for (std::size_t i = N; i > 1; --i) {
            const std::size_t j = shuffle_rng.index(i);
            std::swap(idx[i - 1], idx[j]);
        }

        double loss_acc = 0.0;
        std::size_t seen = 0;
        for (std::size_t begin = 0; begin < N; begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, N);
            auto batch = gather_rows(train_split, idx, begin, end);
            try {
                Tape tape;
                TapeScope scope(tape);
                auto pred = view.forward(batch.X);
                auto loss = mse_loss(pred, batch.Y);
                loss_acc += loss->item() * static_cast<double>(end - begin);
                seen += end - begin;
                tape.backward(loss);
            } catch (const NonFiniteError&) {
                report.diverged = true;
                break;
            }
            optimizer.step();
            for (const auto& p : view.params) p->zero_grad();
            ++report.updates;
        }
        if (report.diverged) break;

        report.train_curve.push_back(loss_acc / static_cast<double>(seen));
        double test;
        try {
            test = evaluate_mse(view, test_split);
        } catch (const NonFiniteError&) {
            report.diverged = true;
            break;
        }
        report.test_curve.push_back(test);
        if (!report.updates_to_target && target_mse > 0.0 && test <= target_mse) {
            report.updates_to_target = report.updates;
        }
        if (cfg.early_stop) {
            const auto& es = *cfg.early_stop;
            if (test < best_test - es.min_delta) {
                best_test = test;
                epochs_since_best = 0;
            } else if (++epochs_since_best >= es.patience) {
                break;
            }
        }
    }

    if (report.diverged) {
        report.final_test_loss = std::numeric_limits<double>::infinity();
    } else if (!report.test_curve.empty()) {
        report.final_test_loss = report.test_curve.back();
    } else {
        report.final_test_loss = evaluate_mse(view, test_split);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Content hash: everything numeric except wall-clock, so identical runs
    // hash identically.
    std::uint64_t h = 14695981039346656037ULL;
    for (double v : report.train_curve) hash_f64(h, v);
    for (double v : report.test_curve) hash_f64(h, v);
    hash_f64(h, report.final_test_loss);
    hash_u64(h, report.trainable_params);
    hash_u64(h, report.updates);
    hash_f64(h, report.target_mse);
    hash_u64(h, report.updates_to_target ? *report.updates_to_target
                                         : std::numeric_limits<std::uint64_t>::max());
    hash_u64(h, report.diverged ? 1 : 0);
    const std::string cfg_dump = report.config_echo.dump();
    hash_bytes(h, cfg_dump.data(), cfg_dump.size());
    report.content_hash = h;
    return report;
}

PretrainResult pretrain(const ShiftBenchmark& bench, const PretrainSpec& spec) {
    std::vector<std::size_t> dims = spec.dims;
    if (dims.empty()) dims = {bench.config.input_dim, bench.config.output_dim};
    if (dims.front() != bench.config.input_dim || dims.back() != bench.config.output_dim) {
        throw ValueError("pretrain: model dims must start at input_dim and end at output_dim");
    }
    Rng init_rng(derive_seed(spec.train.seed, "base_init"));
    BaseModel model = BaseModel::make_mlp(dims, spec.activation, init_rng);
    auto view = view_of(model);
    TrainReport report = train(view, bench.pretrain_train, bench.pretrain_test, spec.train);
    return PretrainResult{std::move(model), std::move(report)};
}

AdaptResult adapt(const BaseModel& frozen_base, const ShiftBenchmark& bench,
                  const AdapterConfig& adapter_cfg, const TrainConfig& train_cfg,
                  double target_mse) {
    if (!frozen_base.frozen) throw ValueError("adapt: base model must be frozen");
    const auto bytes_before = base_checkpoint_bytes(frozen_base);

    AdaptedModel model = attach(frozen_base, adapter_cfg,
                                derive_seed(train_cfg.seed, "adapter_init"));
    auto view = view_of(model);
    TrainReport report =
        train(view, bench.downstream_train, bench.downstream_test, train_cfg, target_mse);

    const auto bytes_after = base_checkpoint_bytes(frozen_base);
    if (bytes_before != bytes_after) {
        throw Error("adapt: freeze integrity violated, base bytes changed during training");
    }
    return AdaptResult{std::move(model), std::move(report)};
}

AdaptResult adapt(const std::string& base_ckpt_dir, const ShiftBenchmark& bench,
                  const AdapterConfig& adapter_cfg, const TrainConfig& train_cfg,
                  double target_mse) {
    BaseModel base = init_primary_from_checkpoint(base_ckpt_dir);
    return adapt(base, bench, adapter_cfg, train_cfg, target_mse);
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

std::optional<std::uint64_t> median_updates(const std::vector<SeedOutcome>& outcomes) {
    std::vector<double> vals;
    for (const auto& o : outcomes) {
        vals.push_back(o.updates_to_target ? static_cast<double>(*o.updates_to_target)
                                           : std::numeric_limits<double>::infinity());
    }
    const double med = median(vals);
    if (!std::isfinite(med)) return std::nullopt;
    return static_cast<std::uint64_t>(med);
}

}  // namespace

json ComparisonTable::to_json() const {
    json rows_json = json::array();
    for (const auto& row : rows) {
        json per_seed = json::array();
        for (const auto& o : row.per_seed) {
            per_seed.push_back(
                {{"seed", o.seed},
                 {"final_test_mse", finite_or_null(o.final_test_mse)},
                 {"updates_to_target", o.updates_to_target ? json(*o.updates_to_target)
                                                           : json(nullptr)},
                 {"report_hash", o.report_hash},
                 {"diverged", o.diverged}});
        }
        rows_json.push_back(
            {{"name", row.name},
             {"family", row.family},
             {"rank", row.rank},
             {"kernel", row.kernel},
             {"params", row.params},
             {"trainable_fraction", row.trainable_fraction},
             {"per_seed", per_seed},
             {"median_final_test_mse", finite_or_null(row.median_final_test_mse)},
             {"median_updates_to_target",
              row.median_updates_to_target ? json(*row.median_updates_to_target) : json(nullptr)}});
    }
    return json{{"bench", bench_echo},
                {"train", train_echo},
                {"seeds", seeds},
                {"target_mse", target_mse},
                {"rows", rows_json}};
}

std::string ComparisonTable::to_csv() const {
    std::string out =
        "name,family,rank,kernel,params,trainable_fraction,seed,final_test_mse,updates_to_target\n";
    auto emit = [&](const ComparisonRow& row, const std::string& seed_label, double mse,
                    const std::optional<std::uint64_t>& utt) {
        out += row.name + "," + row.family + "," + std::to_string(row.rank) + "," + row.kernel +
               "," + std::to_string(row.params) + "," + format_g(row.trainable_fraction) + "," +
               seed_label + "," + format_g(mse) + "," +
               (utt ? std::to_string(*utt) : std::string("inf")) + "\n";
    };
    for (const auto& row : rows) {
        for (const auto& o : row.per_seed) {
            emit(row, std::to_string(o.seed), o.final_test_mse, o.updates_to_target);
        }
        emit(row, "median", row.median_final_test_mse, row.median_updates_to_target);
    }
    return out;
}

ComparisonTable compare(const ShiftBenchmark& bench, const CompareOptions& options) {
    if (options.adapters.size() < 2) {
        throw ValueError("compare: need at least two adapter configs");
    }
    if (options.seeds.empty()) throw ValueError("compare: need at least one seed");

    const double target = options.target_mse.value_or(default_target_mse(bench.config));

    PretrainSpec spec;
    spec.dims = options.base_dims;
    spec.activation = options.base_activation;
    spec.train = options.pretrain_cfg.value_or(options.train);
    BaseModel base = pretrain(bench, spec).model;
    base.freeze();

    ComparisonTable table;
    table.bench_echo = bench.config.to_json();
    table.train_echo = options.train.to_json();
    table.seeds = options.seeds;
    table.target_mse = target;

    for (std::size_t ci = 0; ci < options.adapters.size(); ++ci) {
        const auto& cfg = options.adapters[ci];
        ComparisonRow row;
        row.name = cfg.name.empty() ? family_name(cfg.family) + "_r" + std::to_string(cfg.rank)
                                    : cfg.name;
        row.family = family_name(cfg.family);
        row.rank = cfg.rank;
        row.kernel = cfg.family == AdapterFamily::KernelQuadratic ? cfg.kernel.describe()
                     : cfg.family == AdapterFamily::Quadratic     ? "product"
                                                                  : "-";
        std::vector<double> finals;
        for (std::uint64_t seed : options.seeds) {
            TrainConfig cell_cfg = options.train;
            cell_cfg.seed = seed;
            AdaptResult result = adapt(base, bench, cfg, cell_cfg, target);
            if (row.params == 0) {
                auto eff = merge_report(result.model);
                row.params = eff.adapter_params;
                row.trainable_fraction = eff.trainable_fraction;
            }
            SeedOutcome outcome;
            outcome.seed = seed;
            outcome.final_test_mse = result.report.final_test_loss;
            outcome.updates_to_target = result.report.updates_to_target;
            outcome.report_hash = result.report.hash_hex();
            outcome.diverged = result.report.diverged;
            finals.push_back(outcome.final_test_mse);
            row.per_seed.push_back(std::move(outcome));
        }
        row.median_final_test_mse = median(finals);
        row.median_updates_to_target = median_updates(row.per_seed);
        table.rows.push_back(std::move(row));
    }
    return table;
}

// ---- scratch vs adapt ----

namespace {

// QuadraNet-style from-scratch model: the base MLP architecture with each
// attach-point linear layer replaced by a dense bilinear layer, everything
// trainable from random init.
struct ScratchQuadModel {
    struct Slot {
        bool quadratic = false;
        LinearLayer lin;
        FullQuadraticLayer full;
    };
    std::vector<Slot> slots;
    Activation act = Activation::Gelu;

    static ScratchQuadModel make(const std::vector<std::size_t>& dims, Activation act,
                                 const std::vector<std::string>& attach_points,
                                 std::uint64_t seed) {
        ScratchQuadModel model;
        model.act = act;
        Rng rng(seed);
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            const std::size_t n = dims[i], m = dims[i + 1];
            const std::string name = "linear" + std::to_string(i);
            const bool is_attach = std::find(attach_points.begin(), attach_points.end(), name) !=
                                   attach_points.end();
            Slot slot;
            slot.quadratic = is_attach;
            const double lin_bound = 1.0 / std::sqrt(static_cast<double>(n));
            if (is_attach) {
                const double quad_bound = 1.0 / static_cast<double>(n);
                std::vector<double> wq(m * n * n), wl(m * n);
                for (auto& v : wq) v = rng.uniform(-quad_bound, quad_bound);
                for (auto& v : wl) v = rng.uniform(-lin_bound, lin_bound);
                slot.full.Wq = Tensor::create({m, n, n}, std::move(wq), true);
                slot.full.Wl = Tensor::create({m, n}, std::move(wl), true);
                slot.full.bias = Tensor::zeros({m}, true);
            } else {
                std::vector<double> w(m * n);
                for (auto& v : w) v = rng.uniform(-lin_bound, lin_bound);
                slot.lin.W = Tensor::create({m, n}, std::move(w), true);
                slot.lin.b = Tensor::zeros({m}, true);
            }
            model.slots.push_back(std::move(slot));
        }
        return model;
    }

    TensorPtr forward(const TensorPtr& X) const {
        TensorPtr cur = X;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            const auto& slot = slots[i];
            if (slot.quadratic) {
                cur = full_quadratic_forward(slot.full, cur);
            } else {
                cur = add_rowvec(matmul(cur, transpose2d(slot.lin.W)), slot.lin.b);
            }
            if (i + 1 < slots.size()) cur = activate(cur, act);
        }
        return cur;
    }

    std::vector<TensorPtr> params() const {
        std::vector<TensorPtr> out;
        for (const auto& slot : slots) {
            if (slot.quadratic) {
                out.push_back(slot.full.Wq);
                out.push_back(slot.full.Wl);
                out.push_back(slot.full.bias);
            } else {
                out.push_back(slot.lin.W);
                out.push_back(slot.lin.b);
            }
        }
        return out;
    }
};

json savings_path_json(const SavingsPath& p) {
    return json{{"params", p.params},
                {"updates_to_target", p.updates_to_target ? json(*p.updates_to_target)
                                                          : json(nullptr)},
                {"param_steps", p.param_steps ? json(*p.param_steps) : json(nullptr)},
                {"final_test_mse", finite_or_null(p.final_test_mse)}};
}

SavingsPath path_from_report(const TrainReport& report) {
    SavingsPath p;
    p.params = report.trainable_params;
    p.updates_to_target = report.updates_to_target;
    if (report.updates_to_target) p.param_steps = *report.updates_to_target * p.params;
    p.final_test_mse = report.final_test_loss;
    return p;
}

}  // namespace

json SavingsReport::to_json() const {
    json per_seed_json = json::array();
    for (const auto& o : per_seed) {
        per_seed_json.push_back({{"seed", o.seed},
                                 {"scratch", savings_path_json(o.scratch)},
                                 {"adapter", savings_path_json(o.adapter)},
                                 {"ratio", o.ratio ? json(*o.ratio) : json(nullptr)},
                                 {"target_unreached", o.target_unreached}});
    }
    return json{{"bench", bench_echo},
                {"train", train_echo},
                {"target_mse", target_mse},
                {"per_seed", per_seed_json},
                {"median_ratio", median_ratio ? json(*median_ratio) : json(nullptr)},
                {"target_unreached", target_unreached}};
}

std::string SavingsReport::to_csv() const {
    std::string out = "seed,path,params,updates_to_target,param_steps,final_test_mse,ratio\n";
    for (const auto& o : per_seed) {
        auto emit = [&](const char* path, const SavingsPath& p) {
            out += std::to_string(o.seed) + "," + path + "," + std::to_string(p.params) + "," +
                   (p.updates_to_target ? std::to_string(*p.updates_to_target)
                                        : std::string("inf")) +
                   "," + (p.param_steps ? std::to_string(*p.param_steps) : std::string("inf")) +
                   "," + format_g(p.final_test_mse) + "," +
                   (o.ratio ? format_g(*o.ratio) : std::string("inf")) + "\n";
        };
        emit("scratch", o.scratch);
        emit("adapter", o.adapter);
    }
    return out;
}

SavingsReport scratch_vs_adapt(const ShiftBenchmark& bench, const SavingsOptions& options) {
    const double target = options.target_mse.value_or(default_target_mse(bench.config));

    std::vector<std::size_t> dims = options.base_dims;
    if (dims.empty()) dims = {bench.config.input_dim, bench.config.output_dim};

    PretrainSpec spec;
    spec.dims = dims;
    spec.activation = options.base_activation;
    spec.train = options.pretrain_cfg.value_or(options.train);
    BaseModel base = pretrain(bench, spec).model;
    base.freeze();

    SavingsReport report;
    report.bench_echo = bench.config.to_json();
    report.train_echo = options.train.to_json();
    report.target_mse = target;

    std::vector<double> ratios;
    for (std::uint64_t seed : options.seeds) {
        TrainConfig cell_cfg = options.train;
        cell_cfg.seed = seed;

        auto scratch = ScratchQuadModel::make(dims, options.base_activation,
                                              options.adapter.attach_points,
                                              derive_seed(seed, "scratch_init"));
        ModelView scratch_view{[&scratch](const TensorPtr& X) { return scratch.forward(X); },
                               scratch.params()};
        TrainReport scratch_report = train(scratch_view, bench.downstream_train,
                                           bench.downstream_test, cell_cfg, target);

        AdaptResult adapter_result = adapt(base, bench, options.adapter, cell_cfg, target);

        SavingsSeedOutcome outcome;
        outcome.seed = seed;
        outcome.scratch = path_from_report(scratch_report);
        outcome.adapter = path_from_report(adapter_result.report);
        if (outcome.scratch.param_steps && outcome.adapter.param_steps) {
            outcome.ratio = static_cast<double>(*outcome.adapter.param_steps) /
                            static_cast<double>(*outcome.scratch.param_steps);
            ratios.push_back(*outcome.ratio);
        } else {
            outcome.target_unreached = true;
            ratios.push_back(std::numeric_limits<double>::infinity());
        }
        report.per_seed.push_back(std::move(outcome));
    }

    const double med = median(ratios);
    if (std::isfinite(med)) {
        report.median_ratio = med;
    } else {
        report.target_unreached = true;
    }
    return report;
}

}  // namespace quadapt
