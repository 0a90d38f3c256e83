#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "quadapt/adapter.hpp"
#include "quadapt/basemodel.hpp"
#include "quadapt/cli.hpp"
#include "quadapt/gradcheck.hpp"
#include "quadapt/harness.hpp"
#include "quadapt/ops.hpp"
#include "quadapt/quadratic.hpp"
#include "quadapt/runconfig.hpp"
#include "quadapt/shiftbench.hpp"

namespace py = pybind11;
using namespace quadapt;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

TensorPtr to_tensor(const DoubleArray& arr) {
    std::vector<std::size_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = static_cast<std::size_t>(arr.shape(i));
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor::create(std::move(shape), std::move(data));
}

py::array_t<double> to_numpy(const TensorPtr& t) {
    std::vector<py::ssize_t> shape(t->shape.begin(), t->shape.end());
    py::array_t<double> out(shape);
    std::copy(t->data.begin(), t->data.end(), out.mutable_data());
    return out;
}

KernelMap make_kernel(const std::string& kind, double c, int degree, double gamma, double s) {
    if (kind == "product") return KernelMap::product();
    if (kind == "polynomial") return KernelMap::polynomial(c, degree);
    if (kind == "rbf") return KernelMap::rbf(gamma);
    if (kind == "sigmoid") return KernelMap::sigmoid(s, c);
    throw ValueError("unknown kernel kind '" + kind + "'");
}

LowRankQuadraticTerm make_term(const DoubleArray& A, const DoubleArray& B, const DoubleArray& C) {
    LowRankQuadraticTerm term;
    term.A = to_tensor(A);
    term.B = to_tensor(B);
    term.C = to_tensor(C);
    if (term.A->ndim() != 2 || term.B->ndim() != 2 || term.C->ndim() != 2) {
        throw ShapeError("lowrank term factors must be 2-D");
    }
    return term;
}

ShiftBenchmark bench_from_json_str(const std::string& config_json) {
    return generate(BenchConfig::from_json(nlohmann::json::parse(config_json)));
}

}  // namespace

PYBIND11_MODULE(quadapt, m) {
    m.doc() = "quadratic kernel adapters: core operations and experiment entry points";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ShapeError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const ValueError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.def("matmul", [](const DoubleArray& a, const DoubleArray& b) {
        return to_numpy(matmul(to_tensor(a), to_tensor(b)));
    });
    m.def("hadamard", [](const DoubleArray& a, const DoubleArray& b) {
        return to_numpy(hadamard(to_tensor(a), to_tensor(b)));
    });
    m.def("conv2d_depthwise", [](const DoubleArray& x, const DoubleArray& k) {
        return to_numpy(conv2d_depthwise(to_tensor(x), to_tensor(k)));
    });
    m.def(
        "layer_norm",
        [](const DoubleArray& x, const DoubleArray& gamma, const DoubleArray& beta, double eps) {
            return to_numpy(layer_norm(to_tensor(x), to_tensor(gamma), to_tensor(beta), eps));
        },
        py::arg("x"), py::arg("gamma"), py::arg("beta"), py::arg("eps") = 1e-5);
    m.def("gelu", [](const DoubleArray& x) { return to_numpy(gelu(to_tensor(x))); });
    m.def("relu", [](const DoubleArray& x) { return to_numpy(relu(to_tensor(x))); });
    m.def("mse_loss", [](const DoubleArray& pred, const DoubleArray& target) {
        return mse_loss(to_tensor(pred), to_tensor(target))->item();
    });
    m.def("softmax_xent_loss", [](const DoubleArray& logits, const std::vector<int>& targets) {
        return softmax_xent_loss(to_tensor(logits), targets)->item();
    });

    m.def(
        "kernel_apply",
        [](const std::string& kind, const DoubleArray& u, const DoubleArray& v, double c,
           int degree, double gamma, double s) {
            return to_numpy(kernel_apply(make_kernel(kind, c, degree, gamma, s), to_tensor(u),
                                         to_tensor(v)));
        },
        py::arg("kind"), py::arg("u"), py::arg("v"), py::arg("c") = 0.0, py::arg("degree") = 2,
        py::arg("gamma") = 1.0, py::arg("s") = 1.0);

    m.def("lowrank_forward",
          [](const DoubleArray& A, const DoubleArray& B, const DoubleArray& C,
             const DoubleArray& x) {
              return to_numpy(lowrank_quadratic_forward(make_term(A, B, C), to_tensor(x)));
          });
    m.def(
        "kernel_forward",
        [](const DoubleArray& A, const DoubleArray& B, const DoubleArray& C, const std::string& kind,
           const DoubleArray& x, double c, int degree, double gamma, double s) {
            return to_numpy(kernel_quadratic_forward(make_term(A, B, C),
                                                     make_kernel(kind, c, degree, gamma, s),
                                                     to_tensor(x)));
        },
        py::arg("A"), py::arg("B"), py::arg("C"), py::arg("kind"), py::arg("x"), py::arg("c") = 0.0,
        py::arg("degree") = 2, py::arg("gamma") = 1.0, py::arg("s") = 1.0);
    m.def("full_forward", [](const DoubleArray& Wq, const DoubleArray& Wl, const DoubleArray& bias,
                             const DoubleArray& x) {
        FullQuadraticLayer layer{to_tensor(Wq), to_tensor(Wl), to_tensor(bias)};
        return to_numpy(full_quadratic_forward(layer, to_tensor(x)));
    });
    m.def("expand_lowrank", [](const DoubleArray& A, const DoubleArray& B, const DoubleArray& C) {
        return to_numpy(expand_lowrank(make_term(A, B, C)).Wq);
    });
    m.def("linear_adapter_forward",
          [](const DoubleArray& A, const DoubleArray& Bup, const DoubleArray& x) {
              return to_numpy(linear_adapter_forward(to_tensor(A), to_tensor(Bup), to_tensor(x)));
          });

    m.def("lowrank_param_count", &lowrank_param_count);
    m.def("full_param_count", &full_quadratic_param_count);
    m.def("budget_matched_linear_rank", &budget_matched_linear_rank);

    m.def("generate_bench", [](const std::string& config_json) {
        auto bench = bench_from_json_str(config_json);
        py::dict out;
        out["teacher_W"] = to_numpy(bench.teacher_W);
        out["shift_A"] = to_numpy(bench.shift.A);
        out["shift_B"] = to_numpy(bench.shift.B);
        out["shift_C"] = to_numpy(bench.shift.C);
        auto put = [&](const char* name, const Split& split) {
            out[(std::string(name) + "_X").c_str()] = to_numpy(split.X);
            out[(std::string(name) + "_Y").c_str()] = to_numpy(split.Y);
        };
        put("pretrain_train", bench.pretrain_train);
        put("pretrain_test", bench.pretrain_test);
        put("downstream_train", bench.downstream_train);
        put("downstream_test", bench.downstream_test);
        return out;
    });
    m.def("linear_floor", [](const std::string& config_json) {
        return linear_floor_oracle(bench_from_json_str(config_json));
    });
    m.def("realizability", [](const std::string& config_json, std::size_t r) {
        return realizability_oracle(bench_from_json_str(config_json), r);
    });

    m.def(
        "gradcheck",
        [](int probes, std::uint64_t seed) {
            auto results = run_gradcheck_suite(probes, seed);
            for (const auto& r : results) {
                if (!r.passed) {
                    throw std::runtime_error("gradcheck failed: " + r.name +
                                             " max_rel_err=" + std::to_string(r.max_rel_err));
                }
            }
            return results.size();
        },
        py::arg("probes") = 3, py::arg("seed") = 2024);

    m.def("main", &cli_main, "CLI entry point; returns the process exit code");
}
