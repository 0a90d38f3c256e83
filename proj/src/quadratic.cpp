#include "quadapt/quadratic.hpp"

#include <cmath>

#include "quadapt/ops.hpp"

namespace quadapt {

KernelMap KernelMap::product() { return KernelMap{}; }

KernelMap KernelMap::polynomial(double c, int degree) {
    if (degree < 1) throw ValueError("polynomial kernel: degree must be a positive integer");
    KernelMap k;
    k.kind = Kind::Polynomial;
    k.c = c;
    k.degree = degree;
    return k;
}

KernelMap KernelMap::rbf(double gamma) {
    if (gamma < 0.0) throw ValueError("rbf kernel: gamma must be >= 0");
    KernelMap k;
    k.kind = Kind::Rbf;
    k.gamma = gamma;
    return k;
}

KernelMap KernelMap::sigmoid(double slope, double c) {
    KernelMap k;
    k.kind = Kind::Sigmoid;
    k.slope = slope;
    k.c = c;
    return k;
}

double KernelMap::eval(double u, double v) const {
    switch (kind) {
        case Kind::Product:
            return u * v;
        case Kind::Polynomial:
            return std::pow(u * v + c, static_cast<double>(degree));
        case Kind::Rbf: {
            const double d = u - v;
            return std::exp(-gamma * d * d);
        }
        case Kind::Sigmoid:
            return std::tanh(slope * u * v + c);
    }
    return 0.0;
}

void KernelMap::partials(double u, double v, double& du, double& dv) const {
    switch (kind) {
        case Kind::Product:
            du = v;
            dv = u;
            return;
        case Kind::Polynomial: {
            const double base = u * v + c;
            const double inner =
                static_cast<double>(degree) * std::pow(base, static_cast<double>(degree - 1));
            du = inner * v;
            dv = inner * u;
            return;
        }
        case Kind::Rbf: {
            const double d = u - v;
            const double k = std::exp(-gamma * d * d);
            du = -2.0 * gamma * d * k;
            dv = 2.0 * gamma * d * k;
            return;
        }
        case Kind::Sigmoid: {
            const double t = std::tanh(slope * u * v + c);
            const double sech2 = 1.0 - t * t;
            du = slope * v * sech2;
            dv = slope * u * sech2;
            return;
        }
    }
}

std::string KernelMap::describe() const {
    switch (kind) {
        case Kind::Product:
            return "product";
        case Kind::Polynomial:
            return "polynomial(c=" + std::to_string(c) + ",d=" + std::to_string(degree) + ")";
        case Kind::Rbf:
            return "rbf(gamma=" + std::to_string(gamma) + ")";
        case Kind::Sigmoid:
            return "sigmoid(s=" + std::to_string(slope) + ",c=" + std::to_string(c) + ")";
    }
    return "?";
}

TensorPtr kernel_apply(const KernelMap& map, const TensorPtr& u, const TensorPtr& v) {
    if (u->shape != v->shape) {
        throw ShapeError("kernel_apply: shape mismatch " + shape_str(u->shape) + " vs " +
                         shape_str(v->shape));
    }
    std::vector<double> out_v(u->size());
    for (std::size_t i = 0; i < out_v.size(); ++i) out_v[i] = map.eval(u->data[i], v->data[i]);
    const bool rec = active_tape() && (u->requires_grad || v->requires_grad);
    auto out = Tensor::create(u->shape, std::move(out_v), rec);
    check_finite(*out, "kernel_apply");
    if (rec) {
        active_tape()->record(out, [map, u, v, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                const double g = out->grad[i];
                double du, dv;
                map.partials(u->data[i], v->data[i], du, dv);
                if (u->requires_grad) {
                    u->ensure_grad();
                    u->grad[i] += g * du;
                }
                if (v->requires_grad) {
                    v->ensure_grad();
                    v->grad[i] += g * dv;
                }
            }
        }, "kernel_apply");
    }
    return out;
}

FullQuadraticLayer FullQuadraticLayer::zeros(std::size_t n, std::size_t m, bool requires_grad) {
    FullQuadraticLayer layer;
    layer.Wq = Tensor::zeros({m, n, n}, requires_grad);
    layer.Wl = Tensor::zeros({m, n}, requires_grad);
    layer.bias = Tensor::zeros({m}, requires_grad);
    return layer;
}

FullQuadraticLayer FullQuadraticLayer::symmetrized() const {
    const std::size_t m = out_dim(), n = in_dim();
    std::vector<double> w(Wq->data.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* src = Wq->data.data() + i * n * n;
        double* dst = w.data() + i * n * n;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
                dst[a * n + b] = 0.5 * (src[a * n + b] + src[b * n + a]);
    }
    FullQuadraticLayer out;
    out.Wq = Tensor::create({m, n, n}, std::move(w));
    out.Wl = Tensor::create(Wl->shape, Wl->data);
    out.bias = Tensor::create(bias->shape, bias->data);
    return out;
}

LowRankQuadraticTerm LowRankQuadraticTerm::init(std::size_t n, std::size_t m, std::size_t r,
                                                Rng& rng, bool requires_grad) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> a(r * n), b(r * n);
    for (auto& x : a) x = rng.uniform(-bound, bound);
    for (auto& x : b) x = rng.uniform(-bound, bound);
    LowRankQuadraticTerm term;
    term.A = Tensor::create({r, n}, std::move(a), requires_grad);
    term.B = Tensor::create({r, n}, std::move(b), requires_grad);
    term.C = Tensor::zeros({m, r}, requires_grad);
    return term;
}

TensorPtr full_quadratic_forward(const FullQuadraticLayer& layer, const TensorPtr& x) {
    const std::size_t n = layer.in_dim(), m = layer.out_dim();
    const bool batched = x->ndim() == 2;
    if ((batched && x->shape[1] != n) || (!batched && (x->ndim() != 1 || x->shape[0] != n))) {
        throw ShapeError("full_quadratic_forward: input " + shape_str(x->shape) +
                         " does not match layer width " + std::to_string(n));
    }
    const std::size_t bsz = batched ? x->shape[0] : 1;
    const auto& Wq = layer.Wq;
    const auto& Wl = layer.Wl;
    const auto& bias = layer.bias;

    std::vector<double> out_v(bsz * m, 0.0);
    for (std::size_t s = 0; s < bsz; ++s) {
        const double* xs = x->data.data() + s * n;
        double* ys = out_v.data() + s * m;
        for (std::size_t i = 0; i < m; ++i) {
            const double* M = Wq->data.data() + i * n * n;
            double quad = 0.0;
            for (std::size_t a = 0; a < n; ++a) {
                double acc = 0.0;
                for (std::size_t b = 0; b < n; ++b) acc += M[a * n + b] * xs[b];
                quad += xs[a] * acc;
            }
            double lin = 0.0;
            const double* wl = Wl->data.data() + i * n;
            for (std::size_t a = 0; a < n; ++a) lin += wl[a] * xs[a];
            ys[i] = quad + lin + bias->data[i];
        }
    }
    const bool rec = active_tape() && (Wq->requires_grad || Wl->requires_grad ||
                                       bias->requires_grad || x->requires_grad);
    auto out = Tensor::create(batched ? std::vector<std::size_t>{bsz, m}
                                      : std::vector<std::size_t>{m},
                              std::move(out_v), rec);
    check_finite(*out, "full_quadratic_forward");
    if (rec) {
        auto X = x;
        active_tape()->record(out, [Wq, Wl, bias, X, out, n, m, bsz] {
            for (std::size_t s = 0; s < bsz; ++s) {
                const double* xs = X->data.data() + s * n;
                const double* gy = out->grad.data() + s * m;
                for (std::size_t i = 0; i < m; ++i) {
                    const double g = gy[i];
                    if (g == 0.0) continue;
                    const double* M = Wq->data.data() + i * n * n;
                    if (Wq->requires_grad) {
                        Wq->ensure_grad();
                        double* dM = Wq->grad.data() + i * n * n;
                        for (std::size_t a = 0; a < n; ++a)
                            for (std::size_t b = 0; b < n; ++b)
                                dM[a * n + b] += g * xs[a] * xs[b];
                    }
                    if (Wl->requires_grad) {
                        Wl->ensure_grad();
                        double* dWl = Wl->grad.data() + i * n;
                        for (std::size_t a = 0; a < n; ++a) dWl[a] += g * xs[a];
                    }
                    if (bias->requires_grad) {
                        bias->ensure_grad();
                        bias->grad[i] += g;
                    }
                    if (X->requires_grad) {
                        X->ensure_grad();
                        double* dx = X->grad.data() + s * n;
                        // d/dx x^T M x = (M + M^T) x
                        for (std::size_t a = 0; a < n; ++a) {
                            double acc = 0.0;
                            for (std::size_t b = 0; b < n; ++b)
                                acc += (M[a * n + b] + M[b * n + a]) * xs[b];
                            dx[a] += g * (acc + Wl->data[i * n + a]);
                        }
                    }
                }
            }
        }, "full_quadratic_forward");
    }
    return out;
}

TensorPtr kernel_quadratic_forward(const LowRankQuadraticTerm& term, const KernelMap& map,
                                   const TensorPtr& x) {
    const std::size_t n = term.in_dim();
    const bool batched = x->ndim() == 2;
    if ((batched && x->shape[1] != n) || (!batched && (x->ndim() != 1 || x->shape[0] != n))) {
        throw ShapeError("kernel_quadratic_forward: input " + shape_str(x->shape) +
                         " does not match term width " + std::to_string(n));
    }
    TensorPtr X = batched ? x : reshape(x, {1, n});
    auto U = matmul(X, transpose2d(term.A));
    auto V = matmul(X, transpose2d(term.B));
    auto K = kernel_apply(map, U, V);
    auto Y = matmul(K, transpose2d(term.C));
    return batched ? Y : reshape(Y, {term.out_dim()});
}

TensorPtr lowrank_quadratic_forward(const LowRankQuadraticTerm& term, const TensorPtr& x) {
    return kernel_quadratic_forward(term, KernelMap::product(), x);
}

FullQuadraticLayer expand_lowrank(const LowRankQuadraticTerm& term) {
    const std::size_t n = term.in_dim(), m = term.out_dim(), r = term.rank();
    std::vector<double> wq(m * n * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* M = wq.data() + i * n * n;
        for (std::size_t k = 0; k < r; ++k) {
            const double c = term.C->data[i * r + k];
            if (c == 0.0) continue;
            const double* ak = term.A->data.data() + k * n;
            const double* bk = term.B->data.data() + k * n;
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b) M[a * n + b] += c * ak[a] * bk[b];
        }
    }
    FullQuadraticLayer layer;
    layer.Wq = Tensor::create({m, n, n}, std::move(wq));
    layer.Wl = Tensor::zeros({m, n});
    layer.bias = Tensor::zeros({m});
    return layer;
}

std::uint64_t param_count(const FullQuadraticLayer& layer) {
    return layer.Wq->size() + layer.Wl->size() + layer.bias->size();
}

std::uint64_t param_count(const LowRankQuadraticTerm& term) {
    return term.A->size() + term.B->size() + term.C->size();
}

std::uint64_t full_quadratic_param_count(std::size_t n, std::size_t m) {
    return static_cast<std::uint64_t>(m) * n * n + static_cast<std::uint64_t>(m) * n + m;
}

std::uint64_t lowrank_param_count(std::size_t n, std::size_t m, std::size_t r) {
    return static_cast<std::uint64_t>(r) * (2 * n + m);
}

}  // namespace quadapt
