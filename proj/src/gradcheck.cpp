#include "quadapt/gradcheck.hpp"

#include <cmath>

namespace quadapt {

double finite_diff_check(const std::function<TensorPtr(const TensorPtr&)>& f, const TensorPtr& x,
                         double h) {
    if (!(h > 0.0)) throw ValueError("finite_diff_check: h must be > 0");

    auto leaf = Tensor::create(x->shape, x->data, /*requires_grad=*/true);
    Tape tape;
    {
        TapeScope scope(tape);
        auto y = f(leaf);
        tape.backward(y);
    }
    const std::vector<double> analytic = leaf->grad;

    double worst = 0.0;
    std::vector<double> probe = x->data;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double fp = f(Tensor::create(x->shape, probe))->item();
        probe[i] = saved - h;
        const double fm = f(Tensor::create(x->shape, probe))->item();
        probe[i] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        if (!std::isfinite(numeric)) {
            throw NonFiniteError("finite_diff_check: non-finite numeric derivative");
        }
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace quadapt
