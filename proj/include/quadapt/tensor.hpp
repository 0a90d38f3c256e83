#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "quadapt/errors.hpp"

namespace quadapt {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

/// Dense row-major f64 tensor with an optional gradient buffer.
///
/// Values are validated finite at construction; every op re-validates its
/// output and throws NonFiniteError instead of propagating NaN/Inf. Tensors
/// are immutable after construction except through gradient accumulation.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    bool frozen = false;        // parameter excluded from any trainable set
    std::vector<double> grad;   // same length as data once allocated

    // Set when an op records this tensor as its output on a tape.
    std::uint64_t tape_gen = 0;
    std::size_t node_id = 0;

    static TensorPtr create(std::vector<std::size_t> shape, std::vector<double> values,
                            bool requires_grad = false);
    static TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<std::size_t> shape, double value,
                          bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);
    static TensorPtr vec(std::vector<double> values, bool requires_grad = false);

    std::size_t size() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    bool is_scalar() const { return data.size() == 1; }
    double item() const;

    void ensure_grad();
    void zero_grad();

private:
    Tensor() = default;
};

/// Ordered record of executed operations. Ops append themselves while a
/// TapeScope is active; backward() replays the record once, in reverse, so
/// every node is visited exactly once and inputs always come after their
/// consumers.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Seeds root->grad with 1 and replays backward rules from the root's node
    // down to the start of the tape. Gradients accumulate additively; callers
    // zero them between steps.
    void backward(const TensorPtr& root);

    void record(const TensorPtr& out, std::function<void()> backward_fn, const char* op);

    std::size_t num_ops() const { return nodes_.size(); }
    std::uint64_t generation() const { return gen_; }

private:
    struct Node {
        std::function<void()> fn;
        const char* op;
    };
    std::vector<Node> nodes_;
    std::uint64_t gen_;
};

/// RAII guard selecting the active tape for the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// The tape ops currently record onto, or nullptr when evaluating gradient-free.
Tape* active_tape();

// Throws NonFiniteError if any element of t is NaN/Inf. `where` names the op.
void check_finite(const Tensor& t, const char* where);

}  // namespace quadapt
