#pragma once

#include <vector>

#include "quadapt/tensor.hpp"

namespace quadapt {

enum class Activation { Gelu, Relu };

// Elementwise / shape-preserving.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr hadamard(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr activate(const TensorPtr& x, Activation kind);
TensorPtr gelu(const TensorPtr& x);
TensorPtr relu(const TensorPtr& x);

// Layout.
TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> new_shape);
TensorPtr transpose2d(const TensorPtr& a);

// Linear algebra.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr matvec(const TensorPtr& w, const TensorPtr& x);
TensorPtr add_rowvec(const TensorPtr& m, const TensorPtr& v);     // m[p x c] + v[c] per row
TensorPtr scale_columns(const TensorPtr& m, const TensorPtr& s);  // m[p x c] * s[c] per column

// Per-channel 2-D cross-correlation with zero padding preserving H x W.
// x: [C x H x W], k: [C x kh x kw], kh/kw odd.
TensorPtr conv2d_depthwise(const TensorPtr& x, const TensorPtr& k);

// Normalizes the last axis: (x - mean) / sqrt(var + eps) * gamma + beta,
// population (1/C) variance.
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps);

// Reductions / losses (mean over all elements / over batch rows).
TensorPtr sum_all(const TensorPtr& x);
TensorPtr mean_all(const TensorPtr& x);
TensorPtr mse_loss(const TensorPtr& pred, const TensorPtr& target);
TensorPtr softmax_xent_loss(const TensorPtr& logits, const std::vector<int>& targets);

}  // namespace quadapt
