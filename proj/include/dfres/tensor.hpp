#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dfres {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Global accounting of bytes held by tensor buffers. Used to measure the
// transient footprint of attention variants.
namespace memstats {
std::size_t live_bytes();
std::size_t peak_bytes();
// Resets the peak to the current live byte count.
void reset_peak();
void on_alloc(std::size_t bytes);
void on_free(std::size_t bytes);
}  // namespace memstats

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    memstats::on_alloc(n * sizeof(T));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) noexcept {
    memstats::on_free(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, TrackingAllocator<T>>;

// Thread-local switch for graph recording. Inference paths run under
// NoGradGuard so no backward closures or saved inputs are retained.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct Node {
  const char* name = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Receives the output tensor (data and populated grad) and accumulates
  // into the grads of `inputs`.
  std::function<void(const TensorImpl<T>&)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> grad_fn;

  Buffer<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

// Dense row-major array with optional reverse-mode gradient. Copies are
// shallow handles; data is immutable once produced by an op, only leaf
// tensors (parameters, inputs under test) are mutated in place.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::span<const T> values, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::initializer_list<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  // Only valid on leaves; ops never hand out writable views of results.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  // Populates grad on every reachable requires_grad leaf. The recorded graph
  // is released as it is consumed.
  void backward() const;

  // Fresh leaf with a copy of the data and no history.
  Tensor detach() const;

  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  const Impl& checked() const;
  std::shared_ptr<Impl> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dfres
