#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "denseseg/core/tensor.hpp"

namespace dseg {

/// Reverse-mode tape. Ops append one record per executed differentiable
/// call; `backward` replays the gradient rules newest-first and then drops
/// every record, releasing the activations they saved.
///
/// One tape exists per thread and scalar type (`Tape<T>::current()`), so a
/// forward/backward pass must stay on the thread that started it.
template <typename T>
class Tape {
 public:
  // Receives d(loss)/d(output) and accumulates into the inputs' grads.
  using BackwardFn = std::function<void(std::span<const T>)>;

  struct Record {
    std::string op;
    std::vector<NodePtr<T>> inputs;
    NodePtr<T> output;
    BackwardFn backward;
  };

  static Tape& current() {
    thread_local Tape tape;
    return tape;
  }

  bool enabled() const { return enabled_; }
  void set_enabled(bool flag) { enabled_ = flag; }

  // True when an op over `inputs` must be recorded.
  bool wants(std::initializer_list<const BasicTensor<T>*> inputs) const {
    if (!enabled_) return false;
    for (const auto* t : inputs) {
      if (t && t->defined() && t->requires_grad()) return true;
    }
    return false;
  }
  bool wants(const std::vector<BasicTensor<T>>& inputs) const {
    if (!enabled_) return false;
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) return true;
    }
    return false;
  }

  void record(std::string op, std::vector<BasicTensor<T>> inputs, BasicTensor<T>& output,
              BackwardFn fn) {
    Record rec;
    rec.op = std::move(op);
    rec.inputs.reserve(inputs.size());
    for (auto& in : inputs) rec.inputs.push_back(in.node());
    rec.output = output.node();
    rec.backward = std::move(fn);
    output.set_requires_grad(true);
    output.node()->producer = static_cast<std::ptrdiff_t>(records_.size());
    output.node()->tape = this;
    records_.push_back(std::move(rec));
  }

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  void clear() {
    for (auto& rec : records_) detach(rec);
    records_.clear();
  }

  /// Seeds d(loss)/d(loss) = 1 and replays every record up to the loss's
  /// producer in reverse. Returns the number of gradient rules executed.
  std::size_t backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw ShapeError("backward: loss must hold exactly one element");
    }
    auto& node = *loss.node();
    if (!node.requires_grad) throw ShapeError("backward: loss does not require grad");
    if (node.is_leaf()) {
      node.ensure_grad()[0] += T(1);
      return 0;
    }
    const auto idx = static_cast<std::size_t>(node.producer);
    if (node.tape != this || idx >= records_.size() || records_[idx].output.get() != &node) {
      throw ShapeError("backward: loss is detached from the active tape");
    }
    node.ensure_grad()[0] += T(1);
    for (std::size_t i = idx + 1; i < records_.size(); ++i) detach(records_[i]);

    std::size_t visited = 0;
    for (std::size_t i = idx + 1; i-- > 0;) {
      auto& rec = records_[i];
      auto& out = *rec.output;
      if (!out.grad.empty()) {
        rec.backward(std::span<const T>(out.grad));
        ++visited;
        if (!out.retain_grad) {
          out.grad.clear();
          out.grad.shrink_to_fit();
        }
      }
      detach(rec);
    }
    records_.clear();
    return visited;
  }

 private:
  static void detach(Record& rec) {
    if (rec.output) {
      rec.output->producer = -1;
      rec.output->tape = nullptr;
    }
    rec.backward = nullptr;
    rec.inputs.clear();
    rec.output.reset();
  }

  std::vector<Record> records_;
  bool enabled_ = true;
};

/// Disables recording on the current thread's tape for its lifetime.
template <typename T = float>
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape<T>::current().enabled()) { Tape<T>::current().set_enabled(false); }
  ~NoGradGuard() { Tape<T>::current().set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
std::size_t backward(const BasicTensor<T>& loss) {
  return Tape<T>::current().backward(loss);
}

namespace detail {

// Fingerprint of the branch taken at every ReLU/max kink, collected while a
// gradient check probes a point.
struct KinkLog {
  bool active = false;
  std::uint64_t hash = 1469598103934665603ull;
};

inline KinkLog& kink_log() {
  thread_local KinkLog log;
  return log;
}

inline void note_branch(KinkLog& log, bool taken) {
  log.hash = (log.hash ^ static_cast<std::uint64_t>(taken)) * 1099511628211ull;
}

inline bool& finite_checks_enabled() {
  static bool enabled = true;
  return enabled;
}

template <typename T>
void check_finite(const BasicTensor<T>& out, const char* op) {
  if (finite_checks_enabled() && !all_finite<T>(out.data())) {
    throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

// Accumulation target for an input's gradient, or empty when it takes none.
template <typename T>
std::span<T> grad_sink(const NodePtr<T>& node) {
  if (!node || !node->requires_grad) return {};
  return node->ensure_grad();
}

}  // namespace detail

}  // namespace dseg
