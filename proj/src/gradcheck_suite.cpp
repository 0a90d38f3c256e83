#include <cmath>
#include <utility>

#include "quadapt/adapter.hpp"
#include "quadapt/basemodel.hpp"
#include "quadapt/gradcheck.hpp"
#include "quadapt/ops.hpp"
#include "quadapt/quadratic.hpp"
#include "quadapt/rng.hpp"

namespace quadapt {

namespace {

using ScalarFn = std::function<TensorPtr(const TensorPtr&)>;

// One sweep entry: given a fresh rng, produce the tensor to probe and the
// scalar function differentiated through it.
using Builder = std::function<std::pair<TensorPtr, ScalarFn>(Rng&)>;

TensorPtr draw(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(shape_product(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::create(std::move(shape), std::move(v));
}

// Keeps probes away from the relu kink where central differences break down.
TensorPtr draw_away_from_zero(std::vector<std::size_t> shape, Rng& rng) {
    std::vector<double> v(shape_product(shape));
    for (auto& x : v) {
        do {
            x = rng.uniform(-2.0, 2.0);
        } while (std::fabs(x) < 1e-3);
    }
    return Tensor::create(std::move(shape), std::move(v));
}

TensorPtr sum_sq(const TensorPtr& y) { return sum_all(hadamard(y, y)); }

struct Entry {
    std::string name;
    Builder build;
};

std::vector<Entry> build_entries() {
    std::vector<Entry> entries;
    auto push = [&](std::string name, Builder b) {
        entries.push_back({std::move(name), std::move(b)});
    };

    push("add/a", [](Rng& rng) {
        auto b = draw({3, 4}, rng);
        return std::pair(draw({3, 4}, rng),
                         ScalarFn([b](const TensorPtr& x) { return sum_sq(add(x, b)); }));
    });
    push("sub/b", [](Rng& rng) {
        auto a = draw({3, 4}, rng);
        return std::pair(draw({3, 4}, rng),
                         ScalarFn([a](const TensorPtr& x) { return sum_sq(sub(a, x)); }));
    });
    push("scale", [](Rng& rng) {
        return std::pair(draw({2, 5}, rng),
                         ScalarFn([](const TensorPtr& x) { return sum_sq(scale(x, 1.7)); }));
    });
    push("hadamard/a", [](Rng& rng) {
        auto b = draw({7}, rng);
        return std::pair(draw({7}, rng),
                         ScalarFn([b](const TensorPtr& x) { return sum_sq(hadamard(x, b)); }));
    });
    push("matmul/a", [](Rng& rng) {
        auto b = draw({4, 3}, rng);
        return std::pair(draw({2, 4}, rng),
                         ScalarFn([b](const TensorPtr& x) { return sum_sq(matmul(x, b)); }));
    });
    push("matmul/b", [](Rng& rng) {
        auto a = draw({3, 4}, rng);
        return std::pair(draw({4, 2}, rng),
                         ScalarFn([a](const TensorPtr& x) { return sum_sq(matmul(a, x)); }));
    });
    push("matvec/w", [](Rng& rng) {
        auto v = draw({5}, rng);
        return std::pair(draw({3, 5}, rng),
                         ScalarFn([v](const TensorPtr& x) { return sum_sq(matvec(x, v)); }));
    });
    push("matvec/x", [](Rng& rng) {
        auto w = draw({3, 5}, rng);
        return std::pair(draw({5}, rng),
                         ScalarFn([w](const TensorPtr& x) { return sum_sq(matvec(w, x)); }));
    });
    push("transpose2d", [](Rng& rng) {
        auto b = draw({3, 2}, rng);
        return std::pair(draw({2, 3}, rng), ScalarFn([b](const TensorPtr& x) {
                             return sum_sq(matmul(transpose2d(x), b));
                         }));
    });
    push("reshape", [](Rng& rng) {
        auto b = draw({6}, rng);
        return std::pair(draw({2, 3}, rng), ScalarFn([b](const TensorPtr& x) {
                             return sum_sq(hadamard(reshape(x, {6}), b));
                         }));
    });
    push("add_rowvec/m", [](Rng& rng) {
        auto v = draw({4}, rng);
        return std::pair(draw({3, 4}, rng),
                         ScalarFn([v](const TensorPtr& x) { return sum_sq(add_rowvec(x, v)); }));
    });
    push("add_rowvec/v", [](Rng& rng) {
        auto m = draw({3, 4}, rng);
        return std::pair(draw({4}, rng),
                         ScalarFn([m](const TensorPtr& x) { return sum_sq(add_rowvec(m, x)); }));
    });
    push("scale_columns/m", [](Rng& rng) {
        auto s = draw({4}, rng);
        return std::pair(draw({3, 4}, rng),
                         ScalarFn([s](const TensorPtr& x) { return sum_sq(scale_columns(x, s)); }));
    });
    push("scale_columns/s", [](Rng& rng) {
        auto m = draw({3, 4}, rng);
        return std::pair(draw({4}, rng),
                         ScalarFn([m](const TensorPtr& x) { return sum_sq(scale_columns(m, x)); }));
    });
    push("conv2d_depthwise/x", [](Rng& rng) {
        auto k = draw({2, 3, 3}, rng);
        return std::pair(draw({2, 5, 5}, rng), ScalarFn([k](const TensorPtr& x) {
                             return sum_sq(conv2d_depthwise(x, k));
                         }));
    });
    push("conv2d_depthwise/k", [](Rng& rng) {
        auto x = draw({2, 5, 5}, rng);
        return std::pair(draw({2, 3, 3}, rng), ScalarFn([x](const TensorPtr& k) {
                             return sum_sq(conv2d_depthwise(x, k));
                         }));
    });
    push("layer_norm/x", [](Rng& rng) {
        auto gamma = draw({6}, rng);
        auto beta = draw({6}, rng);
        return std::pair(draw({4, 6}, rng), ScalarFn([gamma, beta](const TensorPtr& x) {
                             return sum_sq(layer_norm(x, gamma, beta, 1e-5));
                         }));
    });
    push("layer_norm/gamma", [](Rng& rng) {
        auto x = draw({4, 6}, rng);
        auto beta = draw({6}, rng);
        return std::pair(draw({6}, rng), ScalarFn([x, beta](const TensorPtr& gamma) {
                             return sum_sq(layer_norm(x, gamma, beta, 1e-5));
                         }));
    });
    push("layer_norm/beta", [](Rng& rng) {
        auto x = draw({4, 6}, rng);
        auto gamma = draw({6}, rng);
        return std::pair(draw({6}, rng), ScalarFn([x, gamma](const TensorPtr& beta) {
                             return sum_sq(layer_norm(x, gamma, beta, 1e-5));
                         }));
    });
    push("gelu", [](Rng& rng) {
        return std::pair(draw({9}, rng),
                         ScalarFn([](const TensorPtr& x) { return sum_sq(gelu(x)); }));
    });
    push("relu", [](Rng& rng) {
        return std::pair(draw_away_from_zero({9}, rng),
                         ScalarFn([](const TensorPtr& x) { return sum_sq(relu(x)); }));
    });
    push("mse_loss", [](Rng& rng) {
        auto target = draw({4, 3}, rng);
        return std::pair(draw({4, 3}, rng),
                         ScalarFn([target](const TensorPtr& x) { return mse_loss(x, target); }));
    });
    push("softmax_xent_loss", [](Rng& rng) {
        std::vector<int> targets(4);
        for (auto& t : targets) t = static_cast<int>(rng.index(5));
        return std::pair(draw({4, 5}, rng), ScalarFn([targets](const TensorPtr& x) {
                             return softmax_xent_loss(x, targets);
                         }));
    });

    const std::vector<std::pair<std::string, KernelMap>> kernels = {
        {"product", KernelMap::product()},
        {"polynomial_d2", KernelMap::polynomial(0.5, 2)},
        {"polynomial_d3", KernelMap::polynomial(0.3, 3)},
        {"rbf", KernelMap::rbf(0.7)},
        {"sigmoid", KernelMap::sigmoid(0.9, 0.3)},
    };
    for (const auto& [kname, kernel] : kernels) {
        push("kernel_apply/" + kname + "/u", [kernel](Rng& rng) {
            auto v = draw({6}, rng);
            return std::pair(draw({6}, rng), ScalarFn([kernel, v](const TensorPtr& u) {
                                 return sum_sq(kernel_apply(kernel, u, v));
                             }));
        });
        push("kernel_apply/" + kname + "/v", [kernel](Rng& rng) {
            auto u = draw({6}, rng);
            return std::pair(draw({6}, rng), ScalarFn([kernel, u](const TensorPtr& v) {
                                 return sum_sq(kernel_apply(kernel, u, v));
                             }));
        });
    }

    // Dense bilinear layer, every parameter slot and the input.
    auto full_layer = [](Rng& rng) {
        FullQuadraticLayer layer;
        layer.Wq = draw({3, 5, 5}, rng, -1.0, 1.0);
        layer.Wl = draw({3, 5}, rng, -1.0, 1.0);
        layer.bias = draw({3}, rng, -1.0, 1.0);
        return layer;
    };
    push("full_quadratic/x", [full_layer](Rng& rng) {
        auto layer = full_layer(rng);
        return std::pair(draw({5}, rng), ScalarFn([layer](const TensorPtr& x) {
                             return sum_sq(full_quadratic_forward(layer, x));
                         }));
    });
    push("full_quadratic/Wq", [full_layer](Rng& rng) {
        auto layer = full_layer(rng);
        auto x = draw({5}, rng);
        return std::pair(layer.Wq, ScalarFn([layer, x](const TensorPtr& wq) {
                             FullQuadraticLayer probed{wq, layer.Wl, layer.bias};
                             return sum_sq(full_quadratic_forward(probed, x));
                         }));
    });
    push("full_quadratic/Wl", [full_layer](Rng& rng) {
        auto layer = full_layer(rng);
        auto x = draw({5}, rng);
        return std::pair(layer.Wl, ScalarFn([layer, x](const TensorPtr& wl) {
                             FullQuadraticLayer probed{layer.Wq, wl, layer.bias};
                             return sum_sq(full_quadratic_forward(probed, x));
                         }));
    });

    // Adapter forwards through an MSE loss, probing input and each parameter.
    auto quad_term = [](Rng& rng) {
        LowRankQuadraticTerm term;
        term.A = draw({3, 6}, rng, -1.0, 1.0);
        term.B = draw({3, 6}, rng, -1.0, 1.0);
        term.C = draw({4, 3}, rng, -1.0, 1.0);
        return term;
    };
    auto mask135 = Tensor::create({3}, {1.0, 0.0, 1.0});
    const std::vector<std::pair<std::string, KernelMap>> adapter_kernels = {
        {"product", KernelMap::product()},
        {"polynomial", KernelMap::polynomial(0.5, 2)},
        {"rbf", KernelMap::rbf(0.7)},
        {"sigmoid", KernelMap::sigmoid(1.0, 0.2)},
    };
    for (const auto& [kname, kernel] : adapter_kernels) {
        push("kernel_adapter/" + kname + "/x", [kernel, quad_term, mask135](Rng& rng) {
            auto term = quad_term(rng);
            auto target = draw({4}, rng);
            return std::pair(draw({6}, rng),
                             ScalarFn([term, kernel, target, mask135](const TensorPtr& x) {
                                 return mse_loss(
                                     kernel_adapter_forward(term, kernel, mask135, x), target);
                             }));
        });
        push("kernel_adapter/" + kname + "/A", [kernel, quad_term](Rng& rng) {
            auto term = quad_term(rng);
            auto x = draw({6}, rng);
            auto target = draw({4}, rng);
            return std::pair(term.A, ScalarFn([term, kernel, x, target](const TensorPtr& a) {
                                 LowRankQuadraticTerm probed{a, term.B, term.C};
                                 return mse_loss(
                                     kernel_adapter_forward(probed, kernel, nullptr, x), target);
                             }));
        });
        push("kernel_adapter/" + kname + "/C", [kernel, quad_term](Rng& rng) {
            auto term = quad_term(rng);
            auto x = draw({6}, rng);
            auto target = draw({4}, rng);
            return std::pair(term.C, ScalarFn([term, kernel, x, target](const TensorPtr& c) {
                                 LowRankQuadraticTerm probed{term.A, term.B, c};
                                 return mse_loss(
                                     kernel_adapter_forward(probed, kernel, nullptr, x), target);
                             }));
        });
    }
    push("linear_adapter/x", [](Rng& rng) {
        auto A = draw({2, 6}, rng, -1.0, 1.0);
        auto Bup = draw({4, 2}, rng, -1.0, 1.0);
        auto target = draw({4}, rng);
        return std::pair(draw({6}, rng), ScalarFn([A, Bup, target](const TensorPtr& x) {
                             return mse_loss(linear_adapter_forward(A, Bup, x), target);
                         }));
    });
    push("linear_adapter/A", [](Rng& rng) {
        auto Bup = draw({4, 2}, rng, -1.0, 1.0);
        auto x = draw({6}, rng);
        auto target = draw({4}, rng);
        return std::pair(draw({2, 6}, rng, -1.0, 1.0),
                         ScalarFn([Bup, x, target](const TensorPtr& a) {
                             return mse_loss(linear_adapter_forward(a, Bup, x), target);
                         }));
    });
    push("linear_adapter/Bup", [](Rng& rng) {
        auto A = draw({2, 6}, rng, -1.0, 1.0);
        auto x = draw({6}, rng);
        auto target = draw({4}, rng);
        return std::pair(draw({4, 2}, rng, -1.0, 1.0),
                         ScalarFn([A, x, target](const TensorPtr& bup) {
                             return mse_loss(linear_adapter_forward(A, bup, x), target);
                         }));
    });

    // Base networks end to end.
    push("mlp2/x", [](Rng& rng) {
        Rng init(rng.next_u64());
        BaseModel model = BaseModel::make_mlp({6, 8, 3}, Activation::Gelu, init);
        auto target = draw({3}, rng);
        return std::pair(draw({6}, rng), ScalarFn([model, target](const TensorPtr& x) {
                             return mse_loss(model.forward(x), target);
                         }));
    });
    push("mlp2/W0", [](Rng& rng) {
        Rng init(rng.next_u64());
        BaseModel model = BaseModel::make_mlp({6, 8, 3}, Activation::Gelu, init);
        auto x = draw({6}, rng);
        auto target = draw({3}, rng);
        auto W0 = std::get<LinearLayer>(model.layers[0].layer).W;
        return std::pair(W0, ScalarFn([model, x, target](const TensorPtr& w) {
                             BaseModel probed = model;
                             auto lin = std::get<LinearLayer>(probed.layers[0].layer);
                             lin.W = w;
                             probed.layers[0].layer = lin;
                             return mse_loss(probed.forward(x), target);
                         }));
    });
    push("convnext_stack/x", [](Rng& rng) {
        Rng init(rng.next_u64());
        BaseModel model = BaseModel::make_convnext(4, 2, init);
        return std::pair(draw({4, 4, 4}, rng, -1.0, 1.0),
                         ScalarFn([model](const TensorPtr& x) {
                             return sum_sq(model.forward(x));
                         }));
    });
    push("convnext_stack/dw0", [](Rng& rng) {
        Rng init(rng.next_u64());
        BaseModel model = BaseModel::make_convnext(4, 2, init);
        auto x = draw({4, 4, 4}, rng, -1.0, 1.0);
        auto dw0 = std::get<ConvNextBlock>(model.layers[0].layer).dw;
        return std::pair(dw0, ScalarFn([model, x](const TensorPtr& dw) {
                             BaseModel probed = model;
                             auto blk = std::get<ConvNextBlock>(probed.layers[0].layer);
                             blk.dw = dw;
                             probed.layers[0].layer = blk;
                             return sum_sq(probed.forward(x));
                         }));
    });

    // Full adapted models: frozen base + trainable adapter, loss wrt input
    // and adapter factors.
    push("adapted_mlp/rbf/x", [](Rng& rng) {
        Rng init(rng.next_u64());
        BaseModel base = BaseModel::make_mlp({6, 4}, Activation::Gelu, init);
        base.freeze();
        AdapterConfig cfg;
        cfg.family = AdapterFamily::KernelQuadratic;
        cfg.kernel = KernelMap::rbf(0.6);
        cfg.rank = 2;
        cfg.attach_points = {"linear0"};
        AdaptedModel model = attach(base, cfg, rng.next_u64());
        // make the adapter branch non-trivial
        auto& quad = std::get<QuadAdapter>(model.adapters[0].inst);
        for (auto& v : quad.term.C->data) v = rng.uniform(-1.0, 1.0);
        auto target = draw({4}, rng);
        return std::pair(draw({6}, rng), ScalarFn([model, target](const TensorPtr& x) {
                             return mse_loss(model.forward(x), target);
                         }));
    });
    push("adapted_mlp/rbf/C", [](Rng& rng) {
        Rng init(rng.next_u64());
        BaseModel base = BaseModel::make_mlp({6, 4}, Activation::Gelu, init);
        base.freeze();
        AdapterConfig cfg;
        cfg.family = AdapterFamily::KernelQuadratic;
        cfg.kernel = KernelMap::rbf(0.6);
        cfg.rank = 2;
        cfg.attach_points = {"linear0"};
        AdaptedModel model = attach(base, cfg, rng.next_u64());
        auto& quad = std::get<QuadAdapter>(model.adapters[0].inst);
        for (auto& v : quad.term.C->data) v = rng.uniform(-1.0, 1.0);
        auto x = draw({6}, rng);
        auto target = draw({4}, rng);
        auto C = quad.term.C;
        return std::pair(C, ScalarFn([model, x, target](const TensorPtr& c) {
                             AdaptedModel probed = model;
                             auto quad_probed = std::get<QuadAdapter>(probed.adapters[0].inst);
                             quad_probed.term.C = c;
                             probed.adapters[0].inst = quad_probed;
                             return mse_loss(probed.forward(x), target);
                         }));
    });
    push("adapted_conv/product/dw_a", [](Rng& rng) {
        Rng init(rng.next_u64());
        BaseModel base = BaseModel::make_convnext(3, 1, init);
        base.freeze();
        AdapterConfig cfg;
        cfg.family = AdapterFamily::Quadratic;
        cfg.rank = 3;
        cfg.attach_points = {"block0.dw"};
        AdaptedModel model = attach(base, cfg, rng.next_u64());
        auto& conv = std::get<ConvQuadAdapter>(model.adapters[0].inst);
        for (auto& v : conv.cpw->data) v = rng.uniform(-1.0, 1.0);
        auto x = draw({3, 4, 4}, rng, -1.0, 1.0);
        auto dwa = conv.dw_a;
        return std::pair(dwa, ScalarFn([model, x](const TensorPtr& dw) {
                             AdaptedModel probed = model;
                             auto conv_probed = std::get<ConvQuadAdapter>(probed.adapters[0].inst);
                             conv_probed.dw_a = dw;
                             probed.adapters[0].inst = conv_probed;
                             return sum_sq(probed.forward(x));
                         }));
    });

    return entries;
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck_suite(int probes, std::uint64_t seed) {
    if (probes < 1) throw ValueError("gradcheck: probes must be >= 1");
    std::vector<GradcheckEntry> results;
    for (const auto& entry : build_entries()) {
        Rng rng(derive_seed(seed, "gradcheck/" + entry.name));
        GradcheckEntry result;
        result.name = entry.name;
        result.probes = probes;
        for (int p = 0; p < probes; ++p) {
            auto [x0, fn] = entry.build(rng);
            const double err = finite_diff_check(fn, x0, kGradcheckStep);
            result.max_rel_err = std::max(result.max_rel_err, err);
        }
        result.passed = result.max_rel_err < kGradcheckTol;
        results.push_back(std::move(result));
    }
    return results;
}

}  // namespace quadapt
