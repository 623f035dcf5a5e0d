#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "denseseg/arch/network_spec.hpp"
#include "denseseg/core/tensor.hpp"
#include "denseseg/nn/batch_norm.hpp"
#include "denseseg/nn/conv3d.hpp"

namespace dseg {

enum class ParamRole { weight, bias, gamma, beta, running_mean, running_var };

inline const char* to_string(ParamRole r) {
  switch (r) {
    case ParamRole::weight: return "weight";
    case ParamRole::bias: return "bias";
    case ParamRole::gamma: return "gamma";
    case ParamRole::beta: return "beta";
    case ParamRole::running_mean: return "running_mean";
    case ParamRole::running_var: return "running_var";
  }
  return "?";
}

inline bool is_running_stat(ParamRole r) {
  return r == ParamRole::running_mean || r == ParamRole::running_var;
}

inline constexpr ParamRole kAllRoles[] = {ParamRole::weight,     ParamRole::bias,
                                          ParamRole::gamma,      ParamRole::beta,
                                          ParamRole::running_mean, ParamRole::running_var};

/// Tensors owned by one learnable layer; unused roles stay undefined.
template <typename T>
struct ParamGroup {
  BasicTensor<T> weight, bias, gamma, beta, running_mean, running_var;

  BasicTensor<T>& get(ParamRole r) {
    switch (r) {
      case ParamRole::weight: return weight;
      case ParamRole::bias: return bias;
      case ParamRole::gamma: return gamma;
      case ParamRole::beta: return beta;
      case ParamRole::running_mean: return running_mean;
      case ParamRole::running_var: return running_var;
    }
    return weight;
  }
  const BasicTensor<T>& get(ParamRole r) const { return const_cast<ParamGroup*>(this)->get(r); }

  BnState<T> bn_state() const { return {gamma, beta, running_mean, running_var}; }
};

/// Learned weights and BN statistics keyed by layer name.
template <typename T>
class ParamStore {
 public:
  ParamGroup<T>& group(const std::string& layer) {
    auto it = groups_.find(layer);
    if (it == groups_.end()) throw ShapeError("param store has no entry for layer '" + layer + "'");
    return it->second;
  }
  const ParamGroup<T>& group(const std::string& layer) const {
    return const_cast<ParamStore*>(this)->group(layer);
  }
  ParamGroup<T>& insert(const std::string& layer) { return groups_[layer]; }
  bool contains(const std::string& layer) const { return groups_.count(layer) != 0; }
  std::size_t size() const { return groups_.size(); }
  const std::map<std::string, ParamGroup<T>>& groups() const { return groups_; }

  // Visits every defined tensor as (layer, role, tensor) in key order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& [name, g] : groups_) {
      for (auto role : kAllRoles) {
        auto& t = g.get(role);
        if (t.defined()) fn(name, role, t);
      }
    }
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [name, g] : groups_) {
      for (auto role : kAllRoles) {
        const auto& t = g.get(role);
        if (t.defined()) fn(name, role, t);
      }
    }
  }

  ParamStore clone() const {
    ParamStore copy;
    for_each([&](const std::string& name, ParamRole role, const BasicTensor<T>& t) {
      copy.insert(name).get(role) = t.clone();
    });
    return copy;
  }

  void zero_grad() {
    for_each([](const std::string&, ParamRole, BasicTensor<T>& t) { t.zero_grad(); });
  }

 private:
  std::map<std::string, ParamGroup<T>> groups_;
};

/// Expected tensor shapes for every learnable layer of `spec`.
inline std::map<std::string, std::map<ParamRole, Shape>> expected_param_shapes(
    const NetworkSpec& spec) {
  std::map<std::string, std::map<ParamRole, Shape>> out;
  for (const auto& d : spec.layers) {
    switch (d.kind) {
      case LayerKind::conv: {
        auto& m = out[d.name];
        m[ParamRole::weight] = {d.out_channels, d.in_channels, d.kernel, d.kernel, d.kernel};
        if (d.bias) m[ParamRole::bias] = {d.out_channels};
        break;
      }
      case LayerKind::conv_transpose: {
        auto& m = out[d.name];
        m[ParamRole::weight] = {d.in_channels, d.out_channels, d.kernel, d.kernel, d.kernel};
        if (d.bias) m[ParamRole::bias] = {d.out_channels};
        break;
      }
      case LayerKind::batch_norm: {
        auto& m = out[d.name];
        for (auto r : {ParamRole::gamma, ParamRole::beta, ParamRole::running_mean,
                       ParamRole::running_var}) {
          m[r] = {d.in_channels};
        }
        break;
      }
      default: break;
    }
  }
  return out;
}

/// Throws unless `store` holds exactly the tensors `spec` needs, with matching shapes.
template <typename T>
void check_store_matches(const NetworkSpec& spec, const ParamStore<T>& store) {
  const auto expected = expected_param_shapes(spec);
  if (expected.size() != store.size()) {
    throw ShapeError("param store has " + std::to_string(store.size()) + " layers, spec needs " +
                     std::to_string(expected.size()));
  }
  for (const auto& [layer, roles] : expected) {
    if (!store.contains(layer)) throw ShapeError("param store lacks layer '" + layer + "'");
    const auto& g = store.group(layer);
    for (auto role : kAllRoles) {
      const auto it = roles.find(role);
      const auto& t = g.get(role);
      if (it == roles.end()) {
        if (t.defined()) {
          throw ShapeError("param store has orphan " + std::string(to_string(role)) + " for '" +
                           layer + "'");
        }
        continue;
      }
      if (!t.defined() || t.shape() != it->second) {
        throw ShapeError("param store entry " + layer + "/" + to_string(role) + " should be " +
                         shape_str(it->second));
      }
    }
  }
}

}  // namespace dseg
