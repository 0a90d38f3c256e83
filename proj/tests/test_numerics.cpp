#include <cmath>

#include "doctest.h"
#include "quadapt/gradcheck.hpp"
#include "quadapt/ops.hpp"
#include "quadapt/rng.hpp"

using namespace quadapt;

namespace {

TensorPtr random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0,
                        double hi = 2.0) {
    std::vector<double> v(shape_product(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::create(std::move(shape), std::move(v));
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("tensor construction enforces invariants") {
    CHECK_THROWS_AS(Tensor::create({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::create({2}, {1.0, std::nan("")}), NonFiniteError);
    CHECK_THROWS_AS(Tensor::create({0}, {}), ShapeError);
    auto t = Tensor::create({2, 2}, {1, 2, 3, 4}, true);
    CHECK(t->grad.size() == t->data.size());
}

TEST_CASE("matmul examples") {
    auto a = Tensor::create({2, 2}, {1, 2, 3, 4});
    auto eye = Tensor::create({2, 2}, {1, 0, 0, 1});
    auto c = matmul(a, eye);
    CHECK(c->data == std::vector<double>{1, 2, 3, 4});

    auto row = Tensor::create({1, 2}, {1, 2});
    auto col = Tensor::create({2, 1}, {3, 4});
    CHECK(matmul(row, col)->data[0] == doctest::Approx(11.0).epsilon(1e-15));

    auto zero = Tensor::zeros({2, 2});
    auto b = Tensor::create({2, 2}, {5, -1, 2, 7});
    for (double v : matmul(zero, b)->data) CHECK(v == 0.0);

    CHECK_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("matmul associativity on random conforming triples") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = random_tensor({3, 4}, rng);
        auto b = random_tensor({4, 5}, rng);
        auto c = random_tensor({5, 2}, rng);
        auto left = matmul(matmul(a, b), c);
        auto right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left->size(); ++i) {
            CHECK(left->data[i] == doctest::Approx(right->data[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("hadamard examples") {
    auto a = Tensor::vec({1, 2, 3});
    auto ones = Tensor::full({3}, 1.0);
    CHECK(hadamard(a, ones)->data == std::vector<double>{1, 2, 3});
    CHECK(hadamard(Tensor::vec({3}), Tensor::vec({-1}))->data[0] == -3.0);
    auto sq = hadamard(Tensor::vec({2, -2}), Tensor::vec({2, -2}));
    CHECK(sq->data == std::vector<double>{4, 4});
    CHECK_THROWS_AS(hadamard(a, Tensor::vec({1, 2})), ShapeError);
}

TEST_CASE("conv2d_depthwise hand-counted taps") {
    auto x = Tensor::full({1, 3, 3}, 1.0);
    auto k = Tensor::full({1, 3, 3}, 1.0);
    auto y = conv2d_depthwise(x, k);
    // corners see 4 taps, edges 6, center 9
    CHECK(y->data == std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4});
}

TEST_CASE("conv2d_depthwise delta kernel is the exact identity") {
    Rng rng(11);
    auto x = random_tensor({3, 5, 4}, rng);
    auto delta = Tensor::zeros({3, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) delta->data[c * 9 + 4] = 1.0;
    auto y = conv2d_depthwise(x, delta);
    CHECK(y->data == x->data);

    auto zero_k = Tensor::zeros({3, 3, 3});
    for (double v : conv2d_depthwise(x, zero_k)->data) CHECK(v == 0.0);
}

TEST_CASE("conv2d_depthwise rejects even kernels and channel mismatch") {
    auto x = Tensor::full({2, 4, 4}, 1.0);
    CHECK_THROWS_AS(conv2d_depthwise(x, Tensor::full({2, 2, 3}, 1.0)), ShapeError);
    CHECK_THROWS_AS(conv2d_depthwise(x, Tensor::full({3, 3, 3}, 1.0)), ShapeError);
}

TEST_CASE("layer_norm examples") {
    auto gamma = Tensor::full({3}, 1.0);
    auto beta = Tensor::zeros({3});
    auto y = layer_norm(Tensor::vec({1, 2, 3}), gamma, beta, 1e-12);
    CHECK(y->data[0] == doctest::Approx(-1.224745).epsilon(1e-5));
    CHECK(y->data[1] == doctest::Approx(0.0).scale(1));
    CHECK(y->data[2] == doctest::Approx(1.224745).epsilon(1e-5));

    // constant input: eps absorbs the zero variance, output is beta
    auto beta2 = Tensor::vec({0.5, -0.25, 4});
    auto yc = layer_norm(Tensor::full({3}, 7.0), gamma, beta2, 1e-5);
    CHECK(yc->data == beta2->data);

    // gamma = 0: output is beta everywhere
    auto y0 = layer_norm(Tensor::vec({1, 2, 3}), Tensor::zeros({3}), beta2, 1e-5);
    CHECK(y0->data == beta2->data);

    CHECK_THROWS_AS(layer_norm(Tensor::vec({1, 2, 3}), gamma, beta, 0.0), ValueError);
}

TEST_CASE("activation examples") {
    CHECK(gelu(Tensor::vec({0}))->data[0] == 0.0);
    CHECK(relu(Tensor::vec({-5}))->data[0] == 0.0);
    CHECK(relu(Tensor::vec({5}))->data[0] == 5.0);
    CHECK(gelu(Tensor::vec({1}))->data[0] == doctest::Approx(0.841345).epsilon(1e-6));
}

TEST_CASE("loss examples") {
    Rng rng(3);
    auto x = random_tensor({6}, rng);
    CHECK(mse_loss(x, x)->item() == 0.0);
    CHECK(mse_loss(Tensor::vec({0, 2}), Tensor::vec({0, 0}))->item() == doctest::Approx(2.0));

    for (std::size_t k : {2, 5, 9}) {
        auto logits = Tensor::full({k}, 0.7);  // uniform predictive distribution
        CHECK(softmax_xent_loss(logits, {1})->item() ==
              doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
    }
    CHECK_THROWS_AS(softmax_xent_loss(Tensor::vec({1, 2, 3}), {3}), ValueError);
    CHECK_THROWS_AS(softmax_xent_loss(Tensor::vec({1, 2, 3}), {-1}), ValueError);
    CHECK_THROWS_AS(mse_loss(Tensor::vec({1, 2}), Tensor::vec({1, 2, 3})), ShapeError);
}

TEST_CASE("backward populates leaf gradients") {
    auto x = Tensor::create({3}, {1, 2, 3}, true);

    SUBCASE("sum gives ones") {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(sum_all(x));
        CHECK(x->grad == std::vector<double>{1, 1, 1});
    }
    SUBCASE("sum of squares gives 2x") {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(sum_all(hadamard(x, x)));
        CHECK(x->grad == std::vector<double>{2, 4, 6});
    }
    SUBCASE("leaf used twice accumulates") {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(add(sum_all(x), sum_all(x)));
        CHECK(x->grad == std::vector<double>{2, 2, 2});
    }
}

TEST_CASE("backward misuse raises tape errors") {
    auto x = Tensor::create({3}, {1, 2, 3}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        auto y = hadamard(x, x);  // not scalar
        CHECK_THROWS_AS(tape.backward(y), TapeError);
    }
    Tape other;
    auto detached = Tensor::scalar(4.0, true);
    CHECK_THROWS_AS(other.backward(detached), TapeError);
}

TEST_CASE("backward is deterministic across identical tapes") {
    auto build = [] {
        Rng rng(99);
        auto x = random_tensor({4, 4}, rng);
        auto leaf = Tensor::create(x->shape, x->data, true);
        auto w = random_tensor({4, 4}, rng);
        Tape tape;
        TapeScope scope(tape);
        auto y = matmul(leaf, w);
        auto loss = mse_loss(y, Tensor::zeros({4, 4}));
        tape.backward(loss);
        return leaf->grad;
    };
    CHECK(build() == build());
}

TEST_CASE("finite_diff_check examples") {
    Rng rng(17);
    auto x = random_tensor({5}, rng);
    CHECK(finite_diff_check([](const TensorPtr& t) { return sum_all(t); }, x, 1e-5) < 1e-9);

    auto cubic = [](const TensorPtr& t) { return sum_all(hadamard(hadamard(t, t), t)); };
    CHECK(finite_diff_check(cubic, Tensor::vec({1, -1}), 1e-5) < 1e-6);
    CHECK_THROWS_AS(finite_diff_check(cubic, x, 0.0), ValueError);
}

TEST_CASE("gradcheck suite passes at reduced probe count") {
    auto results = run_gradcheck_suite(3, 515);
    for (const auto& r : results) {
        INFO(r.name, " max_rel_err=", r.max_rel_err);
        CHECK(r.passed);
    }
    CHECK(results.size() >= 25);
}

TEST_CASE("non-finite values surface as errors from ops") {
    auto big = Tensor::full({2, 2}, 1e308);
    CHECK_THROWS_AS(matmul(big, big), NonFiniteError);
    CHECK_THROWS_AS(scale(big, 1e10), NonFiniteError);
}

}  // TEST_SUITE
