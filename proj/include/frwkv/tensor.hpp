#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "frwkv/config.hpp"

FRWKV_BEGIN_NAMESPACE

/// Up to four extents, interpreted as N,C,H,W for rank-4 tensors.
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<int> dims);
  explicit Shape(std::span<const int> dims);

  int rank() const { return rank_; }
  int operator[](int i) const { return dims_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const;
  std::span<const int> dims() const { return {dims_.data(), static_cast<std::size_t>(rank_)}; }

  // NCHW accessors, valid for rank-4 shapes only.
  int n() const { return dims_[0]; }
  int c() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }

  bool operator==(const Shape& other) const = default;
  std::string str() const;

 private:
  std::array<int, kMaxRank> dims_{};
  int rank_ = 0;
};

/// Storage behind a Tensor handle. Data is immutable once the tensor has been
/// handed out, except for parameters updated by an optimizer between steps.
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  bool is_leaf = true;

  std::span<Real> grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, Real value);
  static Tensor from_data(const Shape& shape, std::vector<Real> data);
  static Tensor scalar(Real value);
  /// Leaf tensor that accumulates gradients when used under a tape.
  static Tensor leaf(const Shape& shape, std::vector<Real> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t numel() const { return impl_->shape.numel(); }
  int rank() const { return impl_->shape.rank(); }
  std::span<const Real> data() const { return impl_->data; }
  const Real* ptr() const { return impl_->data.data(); }
  Real item() const;
  Real at(int n, int c, int h, int w) const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  std::span<const Real> grad() const { return impl_->grad_buffer(); }
  void zero_grad() const;

  /// In-place access reserved for optimizers and finite-difference probes.
  std::span<Real> mutable_data() const { return impl_->data; }

  /// Copy that does not participate in gradient tracking.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

using BackwardFn = std::function<void(std::span<const Real> grad_out)>;

/// Append-only record of differentiable operations. Constructing a Tape makes
/// it the active tape for the calling thread until it is destroyed.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  /// Seeds d(loss)/d(loss) = 1 and replays nodes in reverse append order.
  /// Consumes the tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void record(const char* kind, Tensor& output, std::vector<std::shared_ptr<TensorImpl>> inputs,
              BackwardFn fn);

 private:
  struct Node {
    const char* kind;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Runs backward on the thread's active tape.
void backward(const Tensor& loss);

namespace autograd {

/// True when a tape is active and any input is tracked.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(std::span<const Tensor> inputs);

/// Registers `output` on the active tape. Caller must have checked should_record.
void record(const char* kind, Tensor& output, std::initializer_list<const Tensor*> inputs,
            BackwardFn fn);
void record(const char* kind, Tensor& output, std::span<const Tensor> inputs, BackwardFn fn);

/// Temporarily suspends recording on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace autograd

FRWKV_END_NAMESPACE
