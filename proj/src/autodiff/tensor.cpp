// SPDX-License-Identifier: Apache-2.0
#include "cepo/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

namespace cepo::ad {

std::size_t shape_numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto d = std::make_shared<Data>();
    d->value.assign(shape_numel(shape), value);
    d->shape = std::move(shape);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values do not fill shape " +
                         shape_str(shape));
    }
    auto d = std::make_shared<Data>();
    d->shape = std::move(shape);
    d->value = std::move(values);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
    if (dim() != 2) throw ShapeError("rows() on non-matrix of shape " + shape_str(shape()));
    return d_->shape[0];
}

std::size_t Tensor::cols() const {
    if (dim() != 2) throw ShapeError("cols() on non-matrix of shape " + shape_str(shape()));
    return d_->shape[1];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return d_->value[0];
}

void Tensor::zero_grad() {
    d_->grad.assign(d_->value.size(), 0.0);
}

std::span<double> Tensor::ensure_grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0.0);
    return d_->grad;
}

void Tensor::accumulate_grad(std::span<const double> g) {
    auto dst = ensure_grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Tensor Tensor::clone() const {
    auto d = std::make_shared<Data>();
    d->shape = d_->shape;
    d->value = d_->value;
    d->requires_grad = d_->requires_grad;
    return Tensor(std::move(d));
}

const char* op_name(OpKind kind) noexcept {
    switch (kind) {
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Tanh: return "tanh";
    case OpKind::Softplus: return "softplus";
    case OpKind::Relu: return "relu";
    case OpKind::Gelu: return "gelu";
    case OpKind::Clamp: return "clamp";
    case OpKind::Minimum: return "minimum";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Embedding: return "embedding";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::Gather: return "gather";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::Reshape: return "reshape";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::CausalAttention: return "causal_attention";
    case OpKind::StopGradient: return "stop_gradient";
    }
    return "?";
}

bool Tape::wants(std::initializer_list<const Tensor*> inputs) const {
    if (!recording()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void Tape::record(OpKind kind, std::vector<Tensor> inputs, Tensor output,
                  std::function<void(const Node&)> backward) {
    nodes_.push_back(Node{kind, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& root) {
    if (root.numel() != 1) {
        throw ShapeError("backward: root must be a scalar, got shape " + shape_str(root.shape()));
    }
    for (auto& n : nodes_) {
        Tensor out = n.output;
        out.clear_grad();
    }
    if (!root.requires_grad()) return;
    Tensor r = root;
    const double one = 1.0;
    r.accumulate_grad(std::span<const double>(&one, 1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!it->output.has_grad()) continue;
        it->backward(*it);
    }
}

void Tape::install_frozen_stop_gradients(std::vector<std::vector<double>> values) {
    sg_frozen_ = std::move(values);
    sg_cursor_ = 0;
}

std::vector<std::vector<double>> Tape::take_stop_gradient_log() {
    return std::exchange(sg_log_, {});
}

const std::vector<double>* Tape::next_frozen_stop_gradient() {
    if (sg_cursor_ >= sg_frozen_.size()) {
        throw std::logic_error("stop_gradient replay: more stop_gradient calls than recorded values");
    }
    return &sg_frozen_[sg_cursor_++];
}

void Tape::log_stop_gradient(std::span<const double> v) {
    sg_log_.emplace_back(v.begin(), v.end());
}

} // namespace cepo::ad
