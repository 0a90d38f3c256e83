#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "quadapt/basemodel.hpp"
#include "quadapt/quadratic.hpp"

namespace quadapt {

/// Static 0/1 mask over the rank channels of a quadratic adapter. Masked
/// channels contribute exactly 0 to the output and receive exactly 0 gradient.
struct SparsityMask {
    std::vector<double> pattern;  // one 0.0/1.0 entry per rank channel

    static SparsityMask dense(const std::vector<int>& bits);
    static SparsityMask strided(std::size_t stride, std::size_t rank);  // every stride-th active

    std::size_t active() const;
    TensorPtr as_tensor() const;  // constant, never trainable
};

// Mask as configured (before the rank is known): an explicit pattern or a
// stride.
struct MaskSpec {
    std::vector<int> pattern;  // used when non-empty
    std::size_t stride = 0;    // used otherwise

    SparsityMask resolve(std::size_t rank) const;
    nlohmann::json to_json() const;
    static MaskSpec from_json(const nlohmann::json& j);
};

enum class AdapterFamily { Linear, Quadratic, KernelQuadratic };

std::string family_name(AdapterFamily family);
AdapterFamily family_from_name(const std::string& name);

struct AdapterConfig {
    AdapterFamily family = AdapterFamily::Quadratic;
    std::size_t rank = 1;
    double alpha = 1.0;
    KernelMap kernel;  // kernel_quadratic only
    std::optional<MaskSpec> mask;
    std::vector<std::string> attach_points;
    std::string name;  // optional label echoed in reports

    // family=linear forbids kernel and mask; alpha must be finite; rank >= 1.
    void validate() const;
    nlohmann::json to_json() const;
    static AdapterConfig from_json(const nlohmann::json& j);

    // The kernel actually applied: product for the plain quadratic family, so
    // both families share one code path (and match bitwise when the configured
    // kernel is product).
    KernelMap effective_kernel() const;
};

// LoRA-style first-order baseline: y = Bup . (A . x); Bup zero-initialized.
TensorPtr linear_adapter_forward(const TensorPtr& A, const TensorPtr& Bup, const TensorPtr& x);

// y = C . (mask (hadamard) kappa(A x, B x)); mask == nullptr means no mask.
TensorPtr kernel_adapter_forward(const LowRankQuadraticTerm& term, const KernelMap& kernel,
                                 const TensorPtr& mask, const TensorPtr& x);

// kernel_adapter_forward with kappa = product.
TensorPtr quadratic_adapter_forward(const LowRankQuadraticTerm& term, const TensorPtr& mask,
                                    const TensorPtr& x);

// Rank of a first-order adapter whose parameter budget matches (is the
// smallest not below) a quadratic adapter of rank r on the same widths:
// ceil(r * (2n + m) / (n + m)).
std::size_t budget_matched_linear_rank(std::size_t n, std::size_t m, std::size_t r);

struct LinearAdapter {
    TensorPtr A;    // [r x n]
    TensorPtr Bup;  // [m x r]
};

struct QuadAdapter {
    LowRankQuadraticTerm term;
    KernelMap kernel;
    TensorPtr mask;  // [r] constant or nullptr
};

// Channelwise analog for conv stages: pointwise(kappa(dw_a(X), dw_b(X))),
// 3x3 depthwise pairs, pointwise zero-initialized.
struct ConvQuadAdapter {
    TensorPtr dw_a;  // [C x 3 x 3]
    TensorPtr dw_b;  // [C x 3 x 3]
    TensorPtr cpw;   // [C x C]
    KernelMap kernel;
    TensorPtr mask;  // [C] constant or nullptr
};

struct AttachedAdapter {
    std::string point;
    std::variant<LinearAdapter, QuadAdapter, ConvQuadAdapter> inst;
};

/// Frozen base + parallel adapters: adapted_stage(x) = base_stage(x) +
/// alpha * adapter(x). Base parameter bytes are never written by training.
class AdaptedModel {
public:
    BaseModel base;  // shares the frozen base's tensors
    AdapterConfig config;
    std::vector<AttachedAdapter> adapters;

    TensorPtr forward(const TensorPtr& x) const;
    TensorPtr adapter_output(const AttachedAdapter& att, const TensorPtr& input) const;

    std::vector<TensorPtr> trainable_parameters() const;
    NamedTensors adapter_named_tensors() const;
    std::uint64_t adapter_param_total() const;
};

// Composes base and adapters. Fresh attachment is output-identical to the
// base (zero-initialized Bup / C / pointwise). init_seed drives the A/B draws.
AdaptedModel attach(const BaseModel& base, const AdapterConfig& cfg, std::uint64_t init_seed = 0);

struct EfficiencyReport {
    std::uint64_t base_params = 0;
    std::uint64_t adapter_params = 0;
    double trainable_fraction = 0.0;  // adapter / (adapter + base)

    nlohmann::json to_json() const;
};

EfficiencyReport merge_report(const AdaptedModel& model);

// Adapter checkpoints store the AdapterConfig plus adapter tensors only --
// never base weights.
void save_adapter_checkpoint(const AdaptedModel& model, const std::string& dir);
AdaptedModel load_adapter_checkpoint(const BaseModel& base, const std::string& dir);

}  // namespace quadapt
