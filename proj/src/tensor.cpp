#include "frwkv/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

FRWKV_BEGIN_NAMESPACE

Shape::Shape(std::initializer_list<int> dims) : Shape(std::span<const int>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const int> dims) {
  if (dims.empty() || dims.size() > kMaxRank) {
    throw std::invalid_argument("Shape: rank must be in [1, 4], got " + std::to_string(dims.size()));
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] < 1) {
      throw std::invalid_argument("Shape: extents must be >= 1");
    }
    dims_[i] = dims[i];
  }
  rank_ = static_cast<int>(dims.size());
}

std::int64_t Shape::numel() const {
  if (rank_ == 0) return 0;
  std::int64_t n = 1;
  for (int i = 0; i < rank_; ++i) n *= dims_[static_cast<std::size_t>(i)];
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (int i = 0; i < rank_; ++i) {
    if (i) os << 'x';
    os << dims_[static_cast<std::size_t>(i)];
  }
  os << ']';
  return os.str();
}

std::span<Real> TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
  return grad;
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, Real(0)); }

Tensor Tensor::full(const Shape& shape, Real value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data.assign(static_cast<std::size_t>(shape.numel()), value);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<Real> data) {
  if (static_cast<std::int64_t>(data.size()) != shape.numel()) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape.str());
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value) { return from_data(Shape{1}, {value}); }

Tensor Tensor::leaf(const Shape& shape, std::vector<Real> data) {
  Tensor t = from_data(shape, std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

Real Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " + shape().str() + " is not a scalar");
  }
  return impl_->data[0];
}

Real Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = shape();
  if (s.rank() != 4) throw std::invalid_argument("Tensor::at: rank-4 tensor required");
  return impl_->data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * s.c() + c) * s.h() + h) * s.w() + w)];
}

void Tensor::zero_grad() const {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0));
}

Tensor Tensor::detach() const { return from_data(shape(), impl_->data); }

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local bool g_grad_suspended = false;
}  // namespace

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_grad_suspended ? nullptr : g_active_tape; }

void Tape::record(const char* kind, Tensor& output, std::vector<std::shared_ptr<TensorImpl>> inputs,
                  BackwardFn fn) {
  if (consumed_) throw std::logic_error("Tape: cannot record on a consumed tape");
  output.impl()->requires_grad = true;
  output.impl()->is_leaf = false;
  nodes_.push_back(Node{kind, std::move(inputs), output.impl(), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("backward: tape already consumed");
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  }
  consumed_ = true;
  if (loss.requires_grad()) {
    loss.impl()->grad_buffer()[0] += Real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      TensorImpl& out = *it->output;
      if (out.grad.empty()) continue;  // no path to the loss
      it->fn(out.grad);
    }
  }
  // Intermediate gradients are released with the tape; leaf gradients stay.
  for (auto& node : nodes_) {
    node.output->grad.clear();
    node.output->grad.shrink_to_fit();
  }
  nodes_.clear();
}

void backward(const Tensor& loss) {
  Tape* tape = g_active_tape;
  if (tape == nullptr) throw std::logic_error("backward: no active tape");
  tape->backward(loss);
}

namespace autograd {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t != nullptr && t->defined() && t->requires_grad(); });
}

bool should_record(std::span<const Tensor> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

void record(const char* kind, Tensor& output, std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  std::vector<std::shared_ptr<TensorImpl>> impls;
  impls.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined()) impls.push_back(t->impl());
  }
  Tape::active()->record(kind, output, std::move(impls), std::move(fn));
}

void record(const char* kind, Tensor& output, std::span<const Tensor> inputs, BackwardFn fn) {
  std::vector<std::shared_ptr<TensorImpl>> impls;
  impls.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (t.defined()) impls.push_back(t.impl());
  }
  Tape::active()->record(kind, output, std::move(impls), std::move(fn));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_suspended) { g_grad_suspended = true; }
NoGradGuard::~NoGradGuard() { g_grad_suspended = previous_; }

}  // namespace autograd

FRWKV_END_NAMESPACE
