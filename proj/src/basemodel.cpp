#include "quadapt/basemodel.hpp"

#include <cmath>

namespace quadapt {

using nlohmann::json;

std::string base_kind_name(BaseKind kind) {
    return kind == BaseKind::Mlp ? "mlp" : "convnext_tiny_toy";
}

BaseKind base_kind_from_name(const std::string& name) {
    if (name == "mlp") return BaseKind::Mlp;
    if (name == "convnext_tiny_toy") return BaseKind::ConvNextTinyToy;
    throw ValueError("unknown base model kind '" + name + "'");
}

namespace {

TensorPtr uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
    std::vector<double> v(shape_product(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor::create(std::move(shape), std::move(v), /*requires_grad=*/true);
}

}  // namespace

BaseModel BaseModel::make_mlp(const std::vector<std::size_t>& dims, Activation act, Rng& rng) {
    if (dims.size() < 2) throw ValueError("mlp needs at least [in, out] dims");
    BaseModel model;
    model.kind = BaseKind::Mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t n = dims[i], m = dims[i + 1];
        LinearLayer lin;
        lin.W = uniform_tensor({m, n}, 1.0 / std::sqrt(static_cast<double>(n)), rng);
        lin.b = Tensor::zeros({m}, /*requires_grad=*/true);
        model.layers.push_back({"linear" + std::to_string(i), lin});
        if (i + 2 < dims.size()) {
            model.layers.push_back({"act" + std::to_string(i), ActivationLayer{act}});
        }
    }
    return model;
}

BaseModel BaseModel::make_convnext(std::size_t channels, std::size_t blocks, Rng& rng) {
    if (channels == 0 || blocks == 0) throw ValueError("convnext needs channels, blocks >= 1");
    BaseModel model;
    model.kind = BaseKind::ConvNextTinyToy;
    const std::size_t C = channels;
    for (std::size_t i = 0; i < blocks; ++i) {
        ConvNextBlock blk;
        blk.dw = uniform_tensor({C, 3, 3}, 1.0 / 3.0, rng);  // fan-in 9
        blk.ln_gamma = Tensor::full({C}, 1.0, true);
        blk.ln_beta = Tensor::zeros({C}, true);
        blk.w_expand = uniform_tensor({4 * C, C}, 1.0 / std::sqrt(static_cast<double>(C)), rng);
        blk.b_expand = Tensor::zeros({4 * C}, true);
        blk.w_contract =
            uniform_tensor({C, 4 * C}, 1.0 / std::sqrt(static_cast<double>(4 * C)), rng);
        blk.b_contract = Tensor::zeros({C}, true);
        model.layers.push_back({"block" + std::to_string(i), blk});
    }
    return model;
}

namespace {

TensorPtr run_linear(const LinearLayer& lin, const TensorPtr& x) {
    return add_rowvec(matmul(x, transpose2d(lin.W)), lin.b);
}

TensorPtr run_block(const ConvNextBlock& blk, const std::string& name, const TensorPtr& x,
                    const StageHook* hook) {
    const std::size_t C = x->shape[0], H = x->shape[1], W = x->shape[2];
    TensorPtr t = conv2d_depthwise(x, blk.dw);
    if (hook) t = (*hook)(name + ".dw", x, t);
    auto rows = transpose2d(reshape(t, {C, H * W}));  // [HW x C]
    auto ln = layer_norm(rows, blk.ln_gamma, blk.ln_beta, blk.ln_eps);
    auto e = add_rowvec(matmul(ln, transpose2d(blk.w_expand)), blk.b_expand);
    auto g = activate(e, Activation::Gelu);
    auto ct = add_rowvec(matmul(g, transpose2d(blk.w_contract)), blk.b_contract);
    auto branch = reshape(transpose2d(ct), {C, H, W});
    return add(x, branch);
}

}  // namespace

TensorPtr BaseModel::forward(const TensorPtr& x, const StageHook* hook) const {
    if (kind == BaseKind::Mlp) {
        const bool batched = x->ndim() == 2;
        TensorPtr cur = batched ? x : reshape(x, {1, x->shape[0]});
        for (const auto& named : layers) {
            if (const auto* lin = std::get_if<LinearLayer>(&named.layer)) {
                if (cur->shape[1] != lin->W->shape[1]) {
                    throw ShapeError("mlp_forward: input width " + std::to_string(cur->shape[1]) +
                                     " does not match " + named.name + " width " +
                                     std::to_string(lin->W->shape[1]));
                }
                TensorPtr out = run_linear(*lin, cur);
                if (hook) out = (*hook)(named.name, cur, out);
                cur = out;
            } else if (const auto* act = std::get_if<ActivationLayer>(&named.layer)) {
                cur = activate(cur, act->kind);
            } else {
                throw ValueError("mlp model contains a non-mlp layer");
            }
        }
        return batched ? cur : reshape(cur, {cur->shape[1]});
    }

    // convnext_tiny_toy: single sample [C x H x W]
    if (x->ndim() != 3) {
        throw ShapeError("convnext forward expects [C x H x W], got " + shape_str(x->shape));
    }
    TensorPtr cur = x;
    for (const auto& named : layers) {
        const auto* blk = std::get_if<ConvNextBlock>(&named.layer);
        if (!blk) throw ValueError("convnext model contains a non-block layer");
        if (cur->shape[0] != blk->dw->shape[0]) {
            throw ShapeError("convnext forward: channel count " + std::to_string(cur->shape[0]) +
                             " does not match " + named.name);
        }
        cur = run_block(*blk, named.name, cur, hook);
    }
    return cur;
}

TensorPtr mlp_forward(const BaseModel& model, const TensorPtr& x) {
    if (model.kind != BaseKind::Mlp) throw ValueError("mlp_forward: model kind is not mlp");
    return model.forward(x);
}

TensorPtr convnext_forward(const BaseModel& model, const TensorPtr& x) {
    if (model.kind != BaseKind::ConvNextTinyToy) {
        throw ValueError("convnext_forward: model kind is not convnext_tiny_toy");
    }
    return model.forward(x);
}

NamedTensors BaseModel::named_parameters() const {
    NamedTensors out;
    for (const auto& named : layers) {
        if (const auto* lin = std::get_if<LinearLayer>(&named.layer)) {
            out.emplace_back(named.name + ".W", lin->W);
            out.emplace_back(named.name + ".b", lin->b);
        } else if (const auto* blk = std::get_if<ConvNextBlock>(&named.layer)) {
            out.emplace_back(named.name + ".dw", blk->dw);
            out.emplace_back(named.name + ".ln.gamma", blk->ln_gamma);
            out.emplace_back(named.name + ".ln.beta", blk->ln_beta);
            out.emplace_back(named.name + ".expand.W", blk->w_expand);
            out.emplace_back(named.name + ".expand.b", blk->b_expand);
            out.emplace_back(named.name + ".contract.W", blk->w_contract);
            out.emplace_back(named.name + ".contract.b", blk->b_contract);
        }
    }
    return out;
}

std::vector<TensorPtr> BaseModel::trainable_parameters() const {
    if (frozen) {
        throw ValueError("model is frozen: its parameters cannot be registered as trainable");
    }
    std::vector<TensorPtr> out;
    for (const auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::uint64_t BaseModel::param_total() const {
    std::uint64_t total = 0;
    for (const auto& [name, t] : named_parameters()) total += t->size();
    return total;
}

void BaseModel::freeze() {
    frozen = true;
    for (const auto& [name, t] : named_parameters()) {
        t->frozen = true;
        t->requires_grad = false;
        t->grad.clear();
    }
}

json BaseModel::arch_meta() const {
    json meta;
    meta["kind"] = base_kind_name(kind);
    if (kind == BaseKind::Mlp) {
        std::vector<std::size_t> dims;
        std::string act = "gelu";
        for (const auto& named : layers) {
            if (const auto* lin = std::get_if<LinearLayer>(&named.layer)) {
                if (dims.empty()) dims.push_back(lin->W->shape[1]);
                dims.push_back(lin->W->shape[0]);
            } else if (const auto* a = std::get_if<ActivationLayer>(&named.layer)) {
                act = a->kind == Activation::Gelu ? "gelu" : "relu";
            }
        }
        meta["dims"] = dims;
        meta["activation"] = act;
    } else {
        const auto* blk = std::get_if<ConvNextBlock>(&layers.front().layer);
        meta["channels"] = blk->dw->shape[0];
        meta["blocks"] = layers.size();
        meta["ln_eps"] = blk->ln_eps;
    }
    return meta;
}

std::pair<std::size_t, std::size_t> BaseModel::stage_widths(const std::string& name) const {
    for (const auto& named : layers) {
        if (const auto* lin = std::get_if<LinearLayer>(&named.layer)) {
            if (named.name == name) return {lin->W->shape[1], lin->W->shape[0]};
        } else if (const auto* blk = std::get_if<ConvNextBlock>(&named.layer)) {
            if (named.name + ".dw" == name) return {blk->dw->shape[0], blk->dw->shape[0]};
        }
    }
    throw ValueError("unknown attach point '" + name + "'");
}

bool BaseModel::has_stage(const std::string& name) const {
    for (const auto& named : layers) {
        if (std::holds_alternative<LinearLayer>(named.layer) && named.name == name) return true;
        if (std::holds_alternative<ConvNextBlock>(named.layer) && named.name + ".dw" == name)
            return true;
    }
    return false;
}

std::vector<std::string> BaseModel::stage_names() const {
    std::vector<std::string> out;
    for (const auto& named : layers) {
        if (std::holds_alternative<LinearLayer>(named.layer)) out.push_back(named.name);
        if (std::holds_alternative<ConvNextBlock>(named.layer)) out.push_back(named.name + ".dw");
    }
    return out;
}

std::vector<std::uint8_t> base_checkpoint_bytes(const BaseModel& model) {
    return checkpoint_bytes(base_kind_name(model.kind), model.arch_meta(),
                            model.named_parameters());
}

void save_base_checkpoint(const BaseModel& model, const std::string& dir) {
    write_checkpoint(dir, base_kind_name(model.kind), model.arch_meta(),
                     model.named_parameters());
}

BaseModel init_primary_from_checkpoint(const std::string& dir) {
    auto ckpt = read_checkpoint(dir);
    BaseKind kind;
    try {
        kind = base_kind_from_name(ckpt.kind);
    } catch (const ValueError& e) {
        throw CheckpointError(std::string("manifest mismatch: ") + e.what());
    }

    // Rebuild the architecture from meta, then require the stored tensors to
    // match its registry name-for-name and shape-for-shape.
    Rng scratch_rng(0);
    BaseModel model;
    if (kind == BaseKind::Mlp) {
        if (!ckpt.meta.contains("dims")) {
            throw CheckpointError("manifest mismatch: mlp checkpoint lacks dims");
        }
        const auto dims = ckpt.meta["dims"].get<std::vector<std::size_t>>();
        const auto act_name = ckpt.meta.value("activation", std::string("gelu"));
        model = BaseModel::make_mlp(dims, act_name == "relu" ? Activation::Relu : Activation::Gelu,
                                    scratch_rng);
    } else {
        if (!ckpt.meta.contains("channels") || !ckpt.meta.contains("blocks")) {
            throw CheckpointError("manifest mismatch: convnext checkpoint lacks channels/blocks");
        }
        model = BaseModel::make_convnext(ckpt.meta["channels"].get<std::size_t>(),
                                         ckpt.meta["blocks"].get<std::size_t>(), scratch_rng);
    }

    auto params = model.named_parameters();
    if (params.size() != ckpt.tensors.size()) {
        throw CheckpointError("manifest mismatch: expected " + std::to_string(params.size()) +
                              " tensors, checkpoint has " + std::to_string(ckpt.tensors.size()));
    }
    for (auto& [name, t] : params) {
        const auto& stored = ckpt.tensor(name);
        if (stored->shape != t->shape) {
            throw CheckpointError("manifest mismatch: tensor '" + name + "' has shape " +
                                  shape_str(stored->shape) + ", expected " + shape_str(t->shape));
        }
        t->data = stored->data;  // bit-exact copy
    }
    model.freeze();
    return model;
}

}  // namespace quadapt
