#include "quadapt/ops.hpp"

#include <cmath>
#include <cstddef>

namespace quadapt {

namespace {

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!same_shape(a, b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
}

bool should_record(std::initializer_list<const TensorPtr*> inputs) {
    if (!active_tape()) return false;
    for (const TensorPtr* t : inputs) {
        if ((*t)->requires_grad) return true;
    }
    return false;
}

TensorPtr finish(std::vector<std::size_t> shape, std::vector<double> values, bool rec,
                 const char* op) {
    auto out = Tensor::create(std::move(shape), std::move(values), rec);
    check_finite(*out, op);
    return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "add");
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->data[i] + b->data[i];
    const bool rec = should_record({&a, &b});
    auto out = finish(a->shape, std::move(v), rec, "add");
    if (rec) {
        active_tape()->record(out, [a, b, out] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
            }
        }, "add");
    }
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "sub");
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->data[i] - b->data[i];
    const bool rec = should_record({&a, &b});
    auto out = finish(a->shape, std::move(v), rec, "sub");
    if (rec) {
        active_tape()->record(out, [a, b, out] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] -= out->grad[i];
            }
        }, "sub");
    }
    return out;
}

TensorPtr hadamard(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "hadamard");
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->data[i] * b->data[i];
    const bool rec = should_record({&a, &b});
    auto out = finish(a->shape, std::move(v), rec, "hadamard");
    if (rec) {
        active_tape()->record(out, [a, b, out] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    a->grad[i] += out->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    b->grad[i] += out->grad[i] * a->data[i];
            }
        }, "hadamard");
    }
    return out;
}

TensorPtr scale(const TensorPtr& a, double s) {
    if (!std::isfinite(s)) throw NonFiniteError("scale: non-finite factor");
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->data[i] * s;
    const bool rec = should_record({&a});
    auto out = finish(a->shape, std::move(v), rec, "scale");
    if (rec) {
        active_tape()->record(out, [a, out, s] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * s;
        }, "scale");
    }
    return out;
}

namespace {

double gelu_value(double x) {
    // Exact Gaussian-CDF form: 0.5 * x * (1 + erf(x / sqrt(2))).
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    return cdf + x * pdf;
}

}  // namespace

TensorPtr activate(const TensorPtr& x, Activation kind) {
    std::vector<double> v(x->size());
    if (kind == Activation::Gelu) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = gelu_value(x->data[i]);
    } else {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
    }
    const bool rec = should_record({&x});
    auto out = finish(x->shape, std::move(v), rec, "activate");
    if (rec) {
        active_tape()->record(out, [x, out, kind] {
            if (!x->requires_grad) return;
            x->ensure_grad();
            if (kind == Activation::Gelu) {
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    x->grad[i] += out->grad[i] * gelu_derivative(x->data[i]);
            } else {
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    x->grad[i] += x->data[i] > 0.0 ? out->grad[i] : 0.0;
            }
        }, "activate");
    }
    return out;
}

TensorPtr gelu(const TensorPtr& x) { return activate(x, Activation::Gelu); }
TensorPtr relu(const TensorPtr& x) { return activate(x, Activation::Relu); }

TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> new_shape) {
    if (shape_product(new_shape) != a->size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a->shape) + " as " +
                         shape_str(new_shape));
    }
    const bool rec = should_record({&a});
    auto out = finish(std::move(new_shape), a->data, rec, "reshape");
    if (rec) {
        active_tape()->record(out, [a, out] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        }, "reshape");
    }
    return out;
}

TensorPtr transpose2d(const TensorPtr& a) {
    if (a->ndim() != 2) throw ShapeError("transpose2d: expected 2-D, got " + shape_str(a->shape));
    const std::size_t m = a->shape[0], n = a->shape[1];
    std::vector<double> v(a->size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a->data[i * n + j];
    const bool rec = should_record({&a});
    auto out = finish({n, m}, std::move(v), rec, "transpose2d");
    if (rec) {
        active_tape()->record(out, [a, out, m, n] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[j * m + i];
        }, "transpose2d");
    }
    return out;
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->ndim() != 2 || b->ndim() != 2) {
        throw ShapeError("matmul: expected 2-D operands, got " + shape_str(a->shape) + " and " +
                         shape_str(b->shape));
    }
    const std::size_t m = a->shape[0], k = a->shape[1], k2 = b->shape[0], n = b->shape[1];
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    std::vector<double> v(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a->data[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) v[i * n + j] += aip * b->data[p * n + j];
        }
    }
    const bool rec = should_record({&a, &b});
    auto out = finish({m, n}, std::move(v), rec, "matmul");
    if (rec) {
        active_tape()->record(out, [a, b, out, m, k, n] {
            // dA = dC * B^T, dB = A^T * dC
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            acc += out->grad[i * n + j] * b->data[p * n + j];
                        a->grad[i * k + p] += acc;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                            acc += a->data[i * k + p] * out->grad[i * n + j];
                        b->grad[p * n + j] += acc;
                    }
            }
        }, "matmul");
    }
    return out;
}

TensorPtr matvec(const TensorPtr& w, const TensorPtr& x) {
    if (w->ndim() != 2 || x->ndim() != 1) {
        throw ShapeError("matvec: expected [m x n] and [n], got " + shape_str(w->shape) + " and " +
                         shape_str(x->shape));
    }
    const std::size_t m = w->shape[0], n = w->shape[1];
    if (x->shape[0] != n) {
        throw ShapeError("matvec: dimensions disagree, " + shape_str(w->shape) + " vs " +
                         shape_str(x->shape));
    }
    std::vector<double> v(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += w->data[i * n + j] * x->data[j];
        v[i] = acc;
    }
    const bool rec = should_record({&w, &x});
    auto out = finish({m}, std::move(v), rec, "matvec");
    if (rec) {
        active_tape()->record(out, [w, x, out, m, n] {
            if (w->requires_grad) {
                w->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        w->grad[i * n + j] += out->grad[i] * x->data[j];
            }
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i) acc += w->data[i * n + j] * out->grad[i];
                    x->grad[j] += acc;
                }
            }
        }, "matvec");
    }
    return out;
}

TensorPtr add_rowvec(const TensorPtr& m, const TensorPtr& v) {
    if (m->ndim() != 2 || v->ndim() != 1 || m->shape[1] != v->shape[0]) {
        throw ShapeError("add_rowvec: expected [p x c] and [c], got " + shape_str(m->shape) +
                         " and " + shape_str(v->shape));
    }
    const std::size_t p = m->shape[0], c = m->shape[1];
    std::vector<double> out_v(m->size());
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < c; ++j) out_v[i * c + j] = m->data[i * c + j] + v->data[j];
    const bool rec = should_record({&m, &v});
    auto out = finish(m->shape, std::move(out_v), rec, "add_rowvec");
    if (rec) {
        active_tape()->record(out, [m, v, out, p, c] {
            if (m->requires_grad) {
                m->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) m->grad[i] += out->grad[i];
            }
            if (v->requires_grad) {
                v->ensure_grad();
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t j = 0; j < c; ++j) v->grad[j] += out->grad[i * c + j];
            }
        }, "add_rowvec");
    }
    return out;
}

TensorPtr scale_columns(const TensorPtr& m, const TensorPtr& s) {
    if (m->ndim() != 2 || s->ndim() != 1 || m->shape[1] != s->shape[0]) {
        throw ShapeError("scale_columns: expected [p x c] and [c], got " + shape_str(m->shape) +
                         " and " + shape_str(s->shape));
    }
    const std::size_t p = m->shape[0], c = m->shape[1];
    std::vector<double> out_v(m->size());
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < c; ++j) out_v[i * c + j] = m->data[i * c + j] * s->data[j];
    const bool rec = should_record({&m, &s});
    auto out = finish(m->shape, std::move(out_v), rec, "scale_columns");
    if (rec) {
        active_tape()->record(out, [m, s, out, p, c] {
            if (m->requires_grad) {
                m->ensure_grad();
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        m->grad[i * c + j] += out->grad[i * c + j] * s->data[j];
            }
            if (s->requires_grad) {
                s->ensure_grad();
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        s->grad[j] += out->grad[i * c + j] * m->data[i * c + j];
            }
        }, "scale_columns");
    }
    return out;
}

TensorPtr conv2d_depthwise(const TensorPtr& x, const TensorPtr& k) {
    if (x->ndim() != 3 || k->ndim() != 3) {
        throw ShapeError("conv2d_depthwise: expected [C x H x W] and [C x kh x kw], got " +
                         shape_str(x->shape) + " and " + shape_str(k->shape));
    }
    const std::size_t C = x->shape[0], H = x->shape[1], W = x->shape[2];
    if (k->shape[0] != C) {
        throw ShapeError("conv2d_depthwise: channel counts disagree, " + shape_str(x->shape) +
                         " vs " + shape_str(k->shape));
    }
    const std::size_t kh = k->shape[1], kw = k->shape[2];
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw ShapeError("conv2d_depthwise: kernel sides must be odd, got " + shape_str(k->shape));
    }
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
    const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
    const std::ptrdiff_t sh = static_cast<std::ptrdiff_t>(H);
    const std::ptrdiff_t sw = static_cast<std::ptrdiff_t>(W);

    std::vector<double> v(x->size(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const double* xc = x->data.data() + c * H * W;
        const double* kc = k->data.data() + c * kh * kw;
        double* yc = v.data() + c * H * W;
        for (std::ptrdiff_t i = 0; i < sh; ++i) {
            for (std::ptrdiff_t j = 0; j < sw; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < kh; ++p) {
                    const std::ptrdiff_t ii = i + static_cast<std::ptrdiff_t>(p) - ph;
                    if (ii < 0 || ii >= sh) continue;
                    for (std::size_t q = 0; q < kw; ++q) {
                        const std::ptrdiff_t jj = j + static_cast<std::ptrdiff_t>(q) - pw;
                        if (jj < 0 || jj >= sw) continue;
                        acc += xc[ii * sw + jj] * kc[p * kw + q];
                    }
                }
                yc[i * sw + j] = acc;
            }
        }
    }
    const bool rec = should_record({&x, &k});
    auto out = finish(x->shape, std::move(v), rec, "conv2d_depthwise");
    if (rec) {
        active_tape()->record(out, [x, k, out, C, H, W, kh, kw, ph, pw] {
            const auto sh = static_cast<std::ptrdiff_t>(H);
            const auto sw = static_cast<std::ptrdiff_t>(W);
            for (std::size_t c = 0; c < C; ++c) {
                const double* gc = out->grad.data() + c * H * W;
                const double* xc = x->data.data() + c * H * W;
                const double* kc = k->data.data() + c * kh * kw;
                if (x->requires_grad) {
                    x->ensure_grad();
                    double* dxc = x->grad.data() + c * H * W;
                    for (std::ptrdiff_t i = 0; i < sh; ++i)
                        for (std::ptrdiff_t j = 0; j < sw; ++j) {
                            const double g = gc[i * sw + j];
                            if (g == 0.0) continue;
                            for (std::size_t p = 0; p < kh; ++p) {
                                const std::ptrdiff_t ii = i + static_cast<std::ptrdiff_t>(p) - ph;
                                if (ii < 0 || ii >= sh) continue;
                                for (std::size_t q = 0; q < kw; ++q) {
                                    const std::ptrdiff_t jj =
                                        j + static_cast<std::ptrdiff_t>(q) - pw;
                                    if (jj < 0 || jj >= sw) continue;
                                    dxc[ii * sw + jj] += g * kc[p * kw + q];
                                }
                            }
                        }
                }
                if (k->requires_grad) {
                    k->ensure_grad();
                    double* dkc = k->grad.data() + c * kh * kw;
                    for (std::size_t p = 0; p < kh; ++p)
                        for (std::size_t q = 0; q < kw; ++q) {
                            double acc = 0.0;
                            for (std::ptrdiff_t i = 0; i < sh; ++i) {
                                const std::ptrdiff_t ii = i + static_cast<std::ptrdiff_t>(p) - ph;
                                if (ii < 0 || ii >= sh) continue;
                                for (std::ptrdiff_t j = 0; j < sw; ++j) {
                                    const std::ptrdiff_t jj =
                                        j + static_cast<std::ptrdiff_t>(q) - pw;
                                    if (jj < 0 || jj >= sw) continue;
                                    acc += gc[i * sw + j] * xc[ii * sw + jj];
                                }
                            }
                            dkc[p * kw + q] += acc;
                        }
                }
            }
        }, "conv2d_depthwise");
    }
    return out;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps) {
    if (eps <= 0.0) throw ValueError("layer_norm: eps must be > 0");
    if (x->ndim() < 1 || gamma->ndim() != 1 || beta->ndim() != 1) {
        throw ShapeError("layer_norm: expected x[... x C], gamma[C], beta[C]");
    }
    const std::size_t C = x->shape.back();
    if (gamma->shape[0] != C || beta->shape[0] != C) {
        throw ShapeError("layer_norm: channel count mismatch, x " + shape_str(x->shape) +
                         " vs gamma " + shape_str(gamma->shape));
    }
    const std::size_t P = x->size() / C;

    std::vector<double> v(x->size());
    auto xhat = std::make_shared<std::vector<double>>(x->size());
    auto inv_std = std::make_shared<std::vector<double>>(P);
    for (std::size_t r = 0; r < P; ++r) {
        const double* xr = x->data.data() + r * C;
        double mean = 0.0;
        for (std::size_t j = 0; j < C; ++j) mean += xr[j];
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(C);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t j = 0; j < C; ++j) {
            const double xh = (xr[j] - mean) * inv;
            (*xhat)[r * C + j] = xh;
            v[r * C + j] = xh * gamma->data[j] + beta->data[j];
        }
    }
    const bool rec = should_record({&x, &gamma, &beta});
    auto out = finish(x->shape, std::move(v), rec, "layer_norm");
    if (rec) {
        active_tape()->record(out, [x, gamma, beta, out, xhat, inv_std, P, C] {
            for (std::size_t r = 0; r < P; ++r) {
                const double* g = out->grad.data() + r * C;
                const double* xh = xhat->data() + r * C;
                if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    for (std::size_t j = 0; j < C; ++j) gamma->grad[j] += g[j] * xh[j];
                }
                if (beta->requires_grad) {
                    beta->ensure_grad();
                    for (std::size_t j = 0; j < C; ++j) beta->grad[j] += g[j];
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    // dxhat = g * gamma; dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (std::size_t j = 0; j < C; ++j) {
                        const double dxh = g[j] * gamma->data[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[j];
                    }
                    mean_dxh /= static_cast<double>(C);
                    mean_dxh_xh /= static_cast<double>(C);
                    const double inv = (*inv_std)[r];
                    for (std::size_t j = 0; j < C; ++j) {
                        const double dxh = g[j] * gamma->data[j];
                        x->grad[r * C + j] += inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
            }
        }, "layer_norm");
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& x) {
    double acc = 0.0;
    for (double v : x->data) acc += v;
    const bool rec = should_record({&x});
    auto out = finish({1}, {acc}, rec, "sum_all");
    if (rec) {
        active_tape()->record(out, [x, out] {
            if (!x->requires_grad) return;
            x->ensure_grad();
            const double g = out->grad[0];
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        }, "sum_all");
    }
    return out;
}

TensorPtr mean_all(const TensorPtr& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x->size()));
}

TensorPtr mse_loss(const TensorPtr& pred, const TensorPtr& target) {
    require_same_shape(*pred, *target, "mse_loss");
    auto d = sub(pred, target);
    return mean_all(hadamard(d, d));
}

TensorPtr softmax_xent_loss(const TensorPtr& logits, const std::vector<int>& targets) {
    TensorPtr l = logits;
    if (l->ndim() == 1) l = reshape(l, {1, l->shape[0]});
    if (l->ndim() != 2) {
        throw ShapeError("softmax_xent_loss: expected [b x k] logits, got " +
                         shape_str(logits->shape));
    }
    const std::size_t b = l->shape[0], k = l->shape[1];
    if (targets.size() != b) {
        throw ShapeError("softmax_xent_loss: got " + std::to_string(targets.size()) +
                         " targets for batch of " + std::to_string(b));
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= k) {
            throw ValueError("softmax_xent_loss: class index " + std::to_string(t) +
                             " out of range [0, " + std::to_string(k) + ")");
        }
    }
    auto softmax = std::make_shared<std::vector<double>>(l->size());
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* row = l->data.data() + i * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        const double lse = mx + std::log(denom);
        for (std::size_t j = 0; j < k; ++j) (*softmax)[i * k + j] = std::exp(row[j] - lse);
        loss += lse - row[targets[i]];
    }
    loss /= static_cast<double>(b);
    const bool rec = should_record({&l});
    auto out = finish({1}, {loss}, rec, "softmax_xent_loss");
    if (rec) {
        auto tcopy = targets;
        active_tape()->record(out, [l, out, softmax, tcopy, b, k] {
            if (!l->requires_grad) return;
            l->ensure_grad();
            const double g = out->grad[0] / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < k; ++j) {
                    const double onehot = (static_cast<std::size_t>(tcopy[i]) == j) ? 1.0 : 0.0;
                    l->grad[i * k + j] += g * ((*softmax)[i * k + j] - onehot);
                }
        }, "softmax_xent_loss");
    }
    return out;
}

}  // namespace quadapt
