#include "dfres/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "dfres/errors.hpp"

namespace dfres {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace memstats {
namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

std::size_t live_bytes() { return g_live.load(); }
std::size_t peak_bytes() { return g_peak.load(); }
void reset_peak() { g_peak.store(g_live.load()); }

void on_alloc(std::size_t bytes) {
  const std::size_t now = g_live.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void on_free(std::size_t bytes) { g_live.fetch_sub(bytes); }
}  // namespace memstats

namespace {
thread_local bool t_grad_enabled = true;
}

bool GradMode::enabled() { return t_grad_enabled; }
void GradMode::set_enabled(bool enabled) { t_grad_enabled = enabled; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::span<const T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("from_data: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  std::copy(values.begin(), values.end(), t.impl_->data.begin());
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::initializer_list<T> values, bool requires_grad) {
  return from_data(std::move(shape), std::span<const T>(values.begin(), values.size()),
                   requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

template <typename T>
const typename Tensor<T>::Impl& Tensor<T>::checked() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return *impl_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return checked().shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for shape " + shape_str(s));
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return checked().data.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return checked().data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  checked();
  if (impl_->grad_fn) throw std::logic_error("mutable_data on a non-leaf tensor");
  return impl_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return checked().data[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return checked().requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  checked();
  impl_->requires_grad = value;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return checked().grad_fn == nullptr;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !checked().grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return checked().grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  checked();
  return impl_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
  checked();
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::backward() const {
  const Impl& root = checked();
  if (root.data.size() != 1) {
    throw DimensionError("backward() requires a scalar loss, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  // The order owns its nodes: releasing a grad_fn below may drop the last
  // other reference to an intermediate that has not been visited yet.
  std::vector<std::shared_ptr<Impl>> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<std::shared_ptr<Impl>, std::size_t>> stack;
  stack.emplace_back(impl_, 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      std::shared_ptr<Impl> child = node->grad_fn->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    order.push_back(std::move(node));
    stack.pop_back();
  }

  impl_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = it->get();
    if (!node->grad_fn) continue;
    if (!node->grad.empty()) node->grad_fn->backward(*node);
    node->grad_fn.reset();
    // Intermediate grads are never read after propagation.
    Buffer<T>().swap(node->grad);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(shape(), data(), false);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace dfres
