#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "quadapt/checkpoint.hpp"
#include "quadapt/ops.hpp"
#include "quadapt/rng.hpp"
#include "quadapt/tensor.hpp"

namespace quadapt {

enum class BaseKind { Mlp, ConvNextTinyToy };

std::string base_kind_name(BaseKind kind);
BaseKind base_kind_from_name(const std::string& name);

struct LinearLayer {
    TensorPtr W;  // [out x in]
    TensorPtr b;  // [out]
};

struct ActivationLayer {
    Activation kind;
};

// Depthwise 3x3 -> channel layer_norm -> pointwise expand (4x) -> GELU ->
// pointwise contract -> residual add.
struct ConvNextBlock {
    TensorPtr dw;          // [C x 3 x 3]
    TensorPtr ln_gamma;    // [C]
    TensorPtr ln_beta;     // [C]
    TensorPtr w_expand;    // [4C x C]
    TensorPtr b_expand;    // [4C]
    TensorPtr w_contract;  // [C x 4C]
    TensorPtr b_contract;  // [C]
    double ln_eps = 1e-5;
};

struct NamedLayer {
    std::string name;
    std::variant<LinearLayer, ActivationLayer, ConvNextBlock> layer;
};

// Called at each adaptable stage with (stage name, stage input, stage output);
// returns the output to continue with. Stages are linear layers ("linearK")
// and the depthwise step inside conv blocks ("blockK.dw").
using StageHook =
    std::function<TensorPtr(const std::string&, const TensorPtr&, const TensorPtr&)>;

/// Frozen-able primary network with a named parameter registry.
class BaseModel {
public:
    BaseKind kind = BaseKind::Mlp;
    std::vector<NamedLayer> layers;
    bool frozen = false;

    // dims = layer widths [in, hidden..., out]; GELU (or the given activation)
    // between consecutive linear layers.
    static BaseModel make_mlp(const std::vector<std::size_t>& dims, Activation act, Rng& rng);
    static BaseModel make_convnext(std::size_t channels, std::size_t blocks, Rng& rng);

    TensorPtr forward(const TensorPtr& x, const StageHook* hook = nullptr) const;

    NamedTensors named_parameters() const;
    std::vector<TensorPtr> trainable_parameters() const;  // throws if frozen
    std::uint64_t param_total() const;

    void freeze();

    nlohmann::json arch_meta() const;

    // Widths of the adaptable stage `name` as (input, output); throws
    // ValueError for unknown names.
    std::pair<std::size_t, std::size_t> stage_widths(const std::string& name) const;
    bool has_stage(const std::string& name) const;
    std::vector<std::string> stage_names() const;
};

TensorPtr mlp_forward(const BaseModel& model, const TensorPtr& x);
TensorPtr convnext_forward(const BaseModel& model, const TensorPtr& x);

void save_base_checkpoint(const BaseModel& model, const std::string& dir);
std::vector<std::uint8_t> base_checkpoint_bytes(const BaseModel& model);

// Loads all primary parameters bit-exactly from a base checkpoint and returns
// the model frozen. Throws CheckpointError when the manifest does not match a
// known base kind and shape signature.
BaseModel init_primary_from_checkpoint(const std::string& dir);

}  // namespace quadapt
