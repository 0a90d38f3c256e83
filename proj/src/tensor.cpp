#include "quadapt/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace quadapt {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void check_finite(const Tensor& t, const char* where) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(where) + ": non-finite value produced");
        }
    }
}

TensorPtr Tensor::create(std::vector<std::size_t> shape, std::vector<double> values,
                         bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_product(shape) != values.size()) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw NonFiniteError("tensor construction: non-finite value");
    }
    auto t = TensorPtr(new Tensor());
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->data.size(), 0.0);
    return t;
}

TensorPtr Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    const std::size_t n = shape_product(shape);
    return create(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

TensorPtr Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    const std::size_t n = shape_product(shape);
    return create(std::move(shape), std::vector<double>(n, value), requires_grad);
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return create({1}, {value}, requires_grad);
}

TensorPtr Tensor::vec(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return create({n}, std::move(values), requires_grad);
}

double Tensor::item() const {
    if (!is_scalar()) throw ShapeError("item() requires a scalar tensor, got " + shape_str(shape));
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (grad.size() != data.size()) {
        grad.assign(data.size(), 0.0);
    } else {
        std::fill(grad.begin(), grad.end(), 0.0);
    }
}

namespace {
std::atomic<std::uint64_t> g_tape_counter{1};
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape::Tape() : gen_(g_tape_counter.fetch_add(1)) {}

void Tape::record(const TensorPtr& out, std::function<void()> backward_fn, const char* op) {
    out->tape_gen = gen_;
    out->node_id = nodes_.size();
    out->ensure_grad();
    nodes_.push_back(Node{std::move(backward_fn), op});
}

void Tape::backward(const TensorPtr& root) {
    if (!root->is_scalar()) {
        throw TapeError("backward: root must be scalar, got " + shape_str(root->shape));
    }
    if (root->tape_gen != gen_ || root->node_id >= nodes_.size()) {
        throw TapeError("backward: root tensor is detached from this tape");
    }
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (std::size_t i = root->node_id + 1; i-- > 0;) {
        nodes_[i].fn();
    }
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

Tape* active_tape() { return g_active_tape; }

}  // namespace quadapt
