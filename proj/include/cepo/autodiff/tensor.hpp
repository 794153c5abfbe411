// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors and the reverse-mode tape.
//
// A Tensor is a cheap handle to shared storage (value, gradient, shape). A Tape
// records the operations applied to tensors that require gradients, in
// execution order, and replays them backwards. Tapes are meant to be built per
// forward pass and thrown away afterwards.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cepo::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

/// Raised when operation inputs do not conform to the operation kind.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(d_); }

    const Shape& shape() const { return d_->shape; }
    std::size_t dim() const { return d_->shape.size(); }
    std::size_t numel() const { return d_->value.size(); }
    /// Leading extent of a 2-D tensor.
    std::size_t rows() const;
    /// Trailing extent of a 2-D tensor.
    std::size_t cols() const;

    std::span<const double> values() const { return d_->value; }
    std::span<double> mutable_values() { return d_->value; }
    double item() const;
    double at(std::size_t i) const { return d_->value[i]; }

    bool requires_grad() const { return d_ && d_->requires_grad; }
    void set_requires_grad(bool on) { d_->requires_grad = on; }

    /// Gradient buffer; empty when no gradient has reached this tensor.
    std::span<const double> grad() const { return d_->grad; }
    std::span<double> mutable_grad() { return d_->grad; }
    bool has_grad() const { return !d_->grad.empty(); }
    void zero_grad();
    /// Adds `g` into the gradient buffer, allocating it on first use.
    void accumulate_grad(std::span<const double> g);
    std::span<double> ensure_grad();
    void clear_grad() { d_->grad.clear(); }

    /// Deep copy: fresh storage, same values, no gradient, same requires_grad.
    Tensor clone() const;

    bool same_storage(const Tensor& other) const noexcept { return d_ == other.d_; }

private:
    struct Data {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}

    std::shared_ptr<Data> d_;
};

enum class OpKind {
    MatMul,
    Add,
    AddBias,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Exp,
    Log,
    Tanh,
    Softplus,
    Relu,
    Gelu,
    Clamp,
    Minimum,
    LayerNorm,
    Embedding,
    LogSoftmax,
    Gather,
    SliceRows,
    Reshape,
    Sum,
    Mean,
    CausalAttention,
    StopGradient,
};

const char* op_name(OpKind kind) noexcept;

/// Reverse-mode tape. Nodes are appended in execution order, so every node's
/// inputs precede it. `backward` visits each node once, newest first.
class Tape {
public:
    enum class Mode {
        Record,     ///< record nodes for tensors that require grad
        Inference,  ///< never record; outputs never require grad
    };

    struct Node {
        OpKind kind;
        std::vector<Tensor> inputs;
        Tensor output;
        /// Propagates output.grad() into the inputs that require grad.
        std::function<void(const Node&)> backward;
    };

    Tape() = default;
    explicit Tape(Mode mode) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    bool recording() const noexcept { return mode_ == Mode::Record; }
    Mode mode() const noexcept { return mode_; }

    /// True when a node should be recorded for these inputs.
    bool wants(std::initializer_list<const Tensor*> inputs) const;

    void record(OpKind kind, std::vector<Tensor> inputs, Tensor output,
                std::function<void(const Node&)> backward);

    /// Accumulate d(root)/d(t) into every reachable tensor that requires grad.
    /// Intermediate gradients are reset first, so repeated calls add exactly
    /// one more copy of the gradient to leaves.
    void backward(const Tensor& root);

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    void clear() { nodes_.clear(); sg_frozen_.clear(); sg_cursor_ = 0; }

    /// Stop-gradient replay: when frozen values are installed, successive
    /// stop_gradient calls return them in order instead of their inputs. Used
    /// by finite-difference oracles to hold detached quantities fixed.
    void install_frozen_stop_gradients(std::vector<std::vector<double>> values);
    void enable_stop_gradient_log(bool on) { sg_logging_ = on; }
    bool logging_stop_gradients() const noexcept { return sg_logging_; }
    std::vector<std::vector<double>> take_stop_gradient_log();
    bool replaying_stop_gradients() const noexcept { return !sg_frozen_.empty(); }
    const std::vector<double>* next_frozen_stop_gradient();
    void log_stop_gradient(std::span<const double> v);

private:
    Mode mode_ = Mode::Record;
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> sg_frozen_;
    std::vector<std::vector<double>> sg_log_;
    std::size_t sg_cursor_ = 0;
    bool sg_logging_ = false;
};

} // namespace cepo::ad
