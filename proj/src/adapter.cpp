#include "quadapt/adapter.hpp"

#include <cmath>

namespace quadapt {

using nlohmann::json;

SparsityMask SparsityMask::dense(const std::vector<int>& bits) {
    SparsityMask m;
    m.pattern.reserve(bits.size());
    for (int b : bits) {
        if (b != 0 && b != 1) throw ValueError("sparsity mask entries must be 0 or 1");
        m.pattern.push_back(static_cast<double>(b));
    }
    if (m.active() == 0) throw ValueError("sparsity mask must keep at least one active channel");
    return m;
}

SparsityMask SparsityMask::strided(std::size_t stride, std::size_t rank) {
    if (stride == 0) throw ValueError("sparsity mask stride must be >= 1");
    SparsityMask m;
    m.pattern.assign(rank, 0.0);
    for (std::size_t i = 0; i < rank; i += stride) m.pattern[i] = 1.0;
    if (m.active() == 0) throw ValueError("sparsity mask must keep at least one active channel");
    return m;
}

std::size_t SparsityMask::active() const {
    std::size_t n = 0;
    for (double v : pattern) n += v != 0.0;
    return n;
}

TensorPtr SparsityMask::as_tensor() const {
    return Tensor::create({pattern.size()}, pattern);
}

SparsityMask MaskSpec::resolve(std::size_t rank) const {
    if (!pattern.empty()) {
        if (pattern.size() != rank) {
            throw ValueError("sparsity mask pattern length " + std::to_string(pattern.size()) +
                             " does not match rank " + std::to_string(rank));
        }
        return SparsityMask::dense(pattern);
    }
    return SparsityMask::strided(stride, rank);
}

json MaskSpec::to_json() const {
    if (!pattern.empty()) return json{{"pattern", pattern}};
    return json{{"strided", stride}};
}

MaskSpec MaskSpec::from_json(const json& j) {
    MaskSpec spec;
    if (!j.is_object()) throw ValueError("mask: expected an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "pattern") {
            spec.pattern = value.get<std::vector<int>>();
        } else if (key == "strided") {
            spec.stride = value.get<std::size_t>();
        } else {
            throw ValueError("mask: unknown key '" + key + "'");
        }
    }
    if (spec.pattern.empty() && spec.stride == 0) {
        throw ValueError("mask: need either 'pattern' or 'strided'");
    }
    if (!spec.pattern.empty() && spec.stride != 0) {
        throw ValueError("mask: 'pattern' and 'strided' are mutually exclusive");
    }
    return spec;
}

std::string family_name(AdapterFamily family) {
    switch (family) {
        case AdapterFamily::Linear:
            return "linear";
        case AdapterFamily::Quadratic:
            return "quadratic";
        case AdapterFamily::KernelQuadratic:
            return "kernel_quadratic";
    }
    return "?";
}

AdapterFamily family_from_name(const std::string& name) {
    if (name == "linear") return AdapterFamily::Linear;
    if (name == "quadratic") return AdapterFamily::Quadratic;
    if (name == "kernel_quadratic") return AdapterFamily::KernelQuadratic;
    throw ValueError("unknown adapter family '" + name + "'");
}

void AdapterConfig::validate() const {
    if (rank == 0) throw ValueError("adapter rank must be >= 1");
    if (!std::isfinite(alpha)) throw ValueError("adapter alpha must be finite");
    if (attach_points.empty()) throw ValueError("adapter needs at least one attach point");
    if (family == AdapterFamily::Linear) {
        if (mask.has_value()) throw ValueError("linear adapters do not take a mask");
        if (kernel.kind != KernelMap::Kind::Product) {
            throw ValueError("linear adapters do not take a kernel");
        }
    }
    if (mask.has_value()) mask->resolve(rank);  // validates pattern length / non-empty
}

KernelMap AdapterConfig::effective_kernel() const {
    return family == AdapterFamily::KernelQuadratic ? kernel : KernelMap::product();
}

namespace {

json kernel_to_json(const KernelMap& k) {
    switch (k.kind) {
        case KernelMap::Kind::Product:
            return json{{"kind", "product"}};
        case KernelMap::Kind::Polynomial:
            return json{{"kind", "polynomial"}, {"c", k.c}, {"degree", k.degree}};
        case KernelMap::Kind::Rbf:
            return json{{"kind", "rbf"}, {"gamma", k.gamma}};
        case KernelMap::Kind::Sigmoid:
            return json{{"kind", "sigmoid"}, {"s", k.slope}, {"c", k.c}};
    }
    return json{};
}

KernelMap kernel_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ValueError("kernel: expected {kind, ...}");
    const auto kind = j["kind"].get<std::string>();
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "kind" && key != "c" && key != "degree" && key != "gamma" && key != "s") {
            throw ValueError("kernel: unknown key '" + key + "'");
        }
    }
    if (kind == "product") return KernelMap::product();
    if (kind == "polynomial") {
        return KernelMap::polynomial(j.value("c", 0.0), j.value("degree", 2));
    }
    if (kind == "rbf") return KernelMap::rbf(j.value("gamma", 1.0));
    if (kind == "sigmoid") return KernelMap::sigmoid(j.value("s", 1.0), j.value("c", 0.0));
    throw ValueError("kernel: unknown kind '" + kind + "'");
}

}  // namespace

json AdapterConfig::to_json() const {
    json j{{"family", family_name(family)},
           {"rank", rank},
           {"alpha", alpha},
           {"attach_points", attach_points}};
    if (family == AdapterFamily::KernelQuadratic) j["kernel"] = kernel_to_json(kernel);
    if (mask.has_value()) j["mask"] = mask->to_json();
    if (!name.empty()) j["name"] = name;
    return j;
}

AdapterConfig AdapterConfig::from_json(const json& j) {
    if (!j.is_object()) throw ValueError("adapter config: expected an object");
    AdapterConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "family") {
            cfg.family = family_from_name(value.get<std::string>());
        } else if (key == "rank") {
            cfg.rank = value.get<std::size_t>();
        } else if (key == "alpha") {
            cfg.alpha = value.get<double>();
        } else if (key == "kernel") {
            cfg.kernel = kernel_from_json(value);
        } else if (key == "mask") {
            cfg.mask = MaskSpec::from_json(value);
        } else if (key == "attach_points") {
            cfg.attach_points = value.get<std::vector<std::string>>();
        } else if (key == "name") {
            cfg.name = value.get<std::string>();
        } else {
            throw ValueError("adapter config: unknown key '" + key + "'");
        }
    }
    if (j.contains("kernel") && cfg.family != AdapterFamily::KernelQuadratic) {
        throw ValueError("adapter config: 'kernel' is only valid for family kernel_quadratic");
    }
    cfg.validate();
    return cfg;
}

TensorPtr linear_adapter_forward(const TensorPtr& A, const TensorPtr& Bup, const TensorPtr& x) {
    const std::size_t n = A->shape[1];
    const bool batched = x->ndim() == 2;
    if ((batched && x->shape[1] != n) || (!batched && (x->ndim() != 1 || x->shape[0] != n))) {
        throw ShapeError("linear_adapter_forward: input " + shape_str(x->shape) +
                         " does not match adapter width " + std::to_string(n));
    }
    TensorPtr X = batched ? x : reshape(x, {1, n});
    auto Y = matmul(matmul(X, transpose2d(A)), transpose2d(Bup));
    return batched ? Y : reshape(Y, {Bup->shape[0]});
}

TensorPtr kernel_adapter_forward(const LowRankQuadraticTerm& term, const KernelMap& kernel,
                                 const TensorPtr& mask, const TensorPtr& x) {
    if (mask) {
        if (mask->ndim() != 1 || mask->shape[0] != term.rank()) {
            throw ShapeError("kernel_adapter_forward: mask length does not match rank");
        }
        double active = 0.0;
        for (double v : mask->data) active += v != 0.0;
        if (active == 0.0) throw ValueError("kernel_adapter_forward: empty mask");
    }
    const std::size_t n = term.in_dim();
    const bool batched = x->ndim() == 2;
    if ((batched && x->shape[1] != n) || (!batched && (x->ndim() != 1 || x->shape[0] != n))) {
        throw ShapeError("kernel_adapter_forward: input " + shape_str(x->shape) +
                         " does not match adapter width " + std::to_string(n));
    }
    TensorPtr X = batched ? x : reshape(x, {1, n});
    auto U = matmul(X, transpose2d(term.A));
    auto V = matmul(X, transpose2d(term.B));
    auto K = kernel_apply(kernel, U, V);
    if (mask) K = scale_columns(K, mask);
    auto Y = matmul(K, transpose2d(term.C));
    return batched ? Y : reshape(Y, {term.out_dim()});
}

TensorPtr quadratic_adapter_forward(const LowRankQuadraticTerm& term, const TensorPtr& mask,
                                    const TensorPtr& x) {
    return kernel_adapter_forward(term, KernelMap::product(), mask, x);
}

std::size_t budget_matched_linear_rank(std::size_t n, std::size_t m, std::size_t r) {
    return (r * (2 * n + m) + (n + m) - 1) / (n + m);
}

TensorPtr AdaptedModel::adapter_output(const AttachedAdapter& att, const TensorPtr& input) const {
    if (const auto* lin = std::get_if<LinearAdapter>(&att.inst)) {
        return linear_adapter_forward(lin->A, lin->Bup, input);
    }
    if (const auto* quad = std::get_if<QuadAdapter>(&att.inst)) {
        return kernel_adapter_forward(quad->term, quad->kernel, quad->mask, input);
    }
    const auto& conv = std::get<ConvQuadAdapter>(att.inst);
    const std::size_t C = input->shape[0], H = input->shape[1], W = input->shape[2];
    auto ua = conv2d_depthwise(input, conv.dw_a);
    auto vb = conv2d_depthwise(input, conv.dw_b);
    auto K = kernel_apply(conv.kernel, ua, vb);
    auto rows = transpose2d(reshape(K, {C, H * W}));  // [HW x C]
    if (conv.mask) rows = scale_columns(rows, conv.mask);
    auto mixed = matmul(rows, transpose2d(conv.cpw));
    return reshape(transpose2d(mixed), {C, H, W});
}

TensorPtr AdaptedModel::forward(const TensorPtr& x) const {
    StageHook hook = [this](const std::string& name, const TensorPtr& input,
                            const TensorPtr& output) -> TensorPtr {
        for (const auto& att : adapters) {
            if (att.point == name) {
                return add(output, scale(adapter_output(att, input), config.alpha));
            }
        }
        return output;
    };
    return base.forward(x, &hook);
}

std::vector<TensorPtr> AdaptedModel::trainable_parameters() const {
    std::vector<TensorPtr> out;
    for (const auto& [name, t] : adapter_named_tensors()) out.push_back(t);
    return out;
}

NamedTensors AdaptedModel::adapter_named_tensors() const {
    NamedTensors out;
    for (const auto& att : adapters) {
        if (const auto* lin = std::get_if<LinearAdapter>(&att.inst)) {
            out.emplace_back(att.point + ".A", lin->A);
            out.emplace_back(att.point + ".Bup", lin->Bup);
        } else if (const auto* quad = std::get_if<QuadAdapter>(&att.inst)) {
            out.emplace_back(att.point + ".A", quad->term.A);
            out.emplace_back(att.point + ".B", quad->term.B);
            out.emplace_back(att.point + ".C", quad->term.C);
        } else {
            const auto& conv = std::get<ConvQuadAdapter>(att.inst);
            out.emplace_back(att.point + ".dw_a", conv.dw_a);
            out.emplace_back(att.point + ".dw_b", conv.dw_b);
            out.emplace_back(att.point + ".cpw", conv.cpw);
        }
    }
    return out;
}

std::uint64_t AdaptedModel::adapter_param_total() const {
    std::uint64_t total = 0;
    for (const auto& [name, t] : adapter_named_tensors()) total += t->size();
    return total;
}

AdaptedModel attach(const BaseModel& base, const AdapterConfig& cfg, std::uint64_t init_seed) {
    cfg.validate();
    AdaptedModel model;
    model.base = base;
    model.config = cfg;

    for (const auto& point : cfg.attach_points) {
        if (!base.has_stage(point)) {
            throw ValueError("unknown attach point '" + point + "'");
        }
        const auto [n, m] = base.stage_widths(point);
        Rng rng(derive_seed(init_seed, "adapter_init/" + point));
        const bool conv_stage = point.size() > 3 && point.ends_with(".dw");

        if (conv_stage) {
            if (cfg.family == AdapterFamily::Linear) {
                throw ValueError("linear adapters are not defined for conv attach point '" +
                                 point + "'");
            }
            if (cfg.rank != n) {
                throw ShapeError("attach point '" + point + "': adapter rank " +
                                 std::to_string(cfg.rank) + " must equal channel width " +
                                 std::to_string(n));
            }
            ConvQuadAdapter conv;
            const double bound = 1.0 / 3.0;  // fan-in 9 per channel
            std::vector<double> a(n * 9), b(n * 9);
            for (auto& v : a) v = rng.uniform(-bound, bound);
            for (auto& v : b) v = rng.uniform(-bound, bound);
            conv.dw_a = Tensor::create({n, 3, 3}, std::move(a), true);
            conv.dw_b = Tensor::create({n, 3, 3}, std::move(b), true);
            conv.cpw = Tensor::zeros({m, n}, true);
            conv.kernel = cfg.effective_kernel();
            conv.mask = cfg.mask ? cfg.mask->resolve(n).as_tensor() : nullptr;
            model.adapters.push_back({point, std::move(conv)});
            continue;
        }

        if (cfg.family == AdapterFamily::Linear) {
            LinearAdapter lin;
            const double bound = 1.0 / std::sqrt(static_cast<double>(n));
            std::vector<double> a(cfg.rank * n);
            for (auto& v : a) v = rng.uniform(-bound, bound);
            lin.A = Tensor::create({cfg.rank, n}, std::move(a), true);
            lin.Bup = Tensor::zeros({m, cfg.rank}, true);
            model.adapters.push_back({point, std::move(lin)});
        } else {
            QuadAdapter quad;
            quad.term = LowRankQuadraticTerm::init(n, m, cfg.rank, rng);
            quad.kernel = cfg.effective_kernel();
            quad.mask = cfg.mask ? cfg.mask->resolve(cfg.rank).as_tensor() : nullptr;
            model.adapters.push_back({point, std::move(quad)});
        }
    }
    return model;
}

json EfficiencyReport::to_json() const {
    return json{{"base_params", base_params},
                {"adapter_params", adapter_params},
                {"trainable_fraction", trainable_fraction}};
}

EfficiencyReport merge_report(const AdaptedModel& model) {
    EfficiencyReport rep;
    rep.base_params = model.base.param_total();
    rep.adapter_params = model.adapter_param_total();
    const auto denom = rep.base_params + rep.adapter_params;
    rep.trainable_fraction =
        denom == 0 ? 0.0 : static_cast<double>(rep.adapter_params) / static_cast<double>(denom);
    return rep;
}

void save_adapter_checkpoint(const AdaptedModel& model, const std::string& dir) {
    json meta{{"config", model.config.to_json()},
              {"base_kind", base_kind_name(model.base.kind)}};
    write_checkpoint(dir, "adapter", meta, model.adapter_named_tensors());
}

AdaptedModel load_adapter_checkpoint(const BaseModel& base, const std::string& dir) {
    auto ckpt = read_checkpoint(dir);
    if (ckpt.kind != "adapter") {
        throw CheckpointError("manifest mismatch: expected an adapter checkpoint, got kind '" +
                              ckpt.kind + "'");
    }
    if (!ckpt.meta.contains("config")) {
        throw CheckpointError("manifest mismatch: adapter checkpoint lacks config");
    }
    AdapterConfig cfg = AdapterConfig::from_json(ckpt.meta["config"]);
    AdaptedModel model = attach(base, cfg, /*init_seed=*/0);
    auto params = model.adapter_named_tensors();
    if (params.size() != ckpt.tensors.size()) {
        throw CheckpointError("manifest mismatch: expected " + std::to_string(params.size()) +
                              " adapter tensors, checkpoint has " +
                              std::to_string(ckpt.tensors.size()));
    }
    for (auto& [name, t] : params) {
        const auto& stored = ckpt.tensor(name);
        if (stored->shape != t->shape) {
            throw CheckpointError("manifest mismatch: adapter tensor '" + name + "' has shape " +
                                  shape_str(stored->shape) + ", expected " + shape_str(t->shape));
        }
        t->data = stored->data;
    }
    return model;
}

}  // namespace quadapt
