#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "denseseg/arch/network.hpp"
#include "denseseg/core/gradcheck.hpp"
#include "denseseg/core/ops.hpp"
#include "denseseg/nn/activation.hpp"
#include "denseseg/nn/batch_norm.hpp"
#include "denseseg/nn/conv3d.hpp"
#include "denseseg/nn/softmax.hpp"
#include "denseseg/nn/upsample.hpp"

namespace dseg {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
  double tol = 1e-3;
};

namespace detail {

using D = BasicTensor<double>;

inline D random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  auto t = D::zeros(s);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// Random values with |v| in [margin, 1], so a ReLU sees no kink within eps.
inline D off_kink_tensor(const Shape& s, std::mt19937_64& rng, double margin) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  auto t = D::zeros(s);
  for (auto& v : t.data()) v = (rng() & 1) ? u(rng) : -u(rng);
  return t;
}

/// sum(y * w) with a fixed random `w`, so every output element carries a
/// distinct weight in the loss.
inline D probe_loss(const D& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(y * random_tensor(y.shape(), rng));
}

}  // namespace detail

/// Double-precision finite-difference checks of every differentiable op.
inline std::vector<GradCheckCase> op_gradcheck_suite(std::uint64_t seed = 1) {
  using detail::D;
  using detail::probe_loss;
  using detail::random_tensor;
  std::mt19937_64 rng(seed);
  std::vector<GradCheckCase> out;
  auto run = [&](const std::string& name, const std::function<D()>& f, std::vector<D> inputs,
                 GradCheckOptions opts = {}) {
    out.push_back({name, grad_check<double>(f, std::move(inputs), opts), opts.tol});
  };

  for (std::size_t stride : {1, 2}) {
    auto x = random_tensor({2, 3, 5, 5, 5}, rng);
    ConvParams<double> p{random_tensor({2, 3, 3, 3, 3}, rng), random_tensor({2}, rng), stride, 1};
    run("conv3d s=" + std::to_string(stride), [&] { return probe_loss(conv3d(x, p), 11); },
        {x, p.weight, p.bias});
  }
  {
    auto x = random_tensor({1, 4, 3, 3, 3}, rng);
    ConvParams<double> p{random_tensor({3, 4, 1, 1, 1}, rng), random_tensor({3}, rng), 1, 0};
    run("conv3d 1x1x1", [&] { return probe_loss(conv3d(x, p), 12); }, {x, p.weight, p.bias});
  }
  {
    auto x = random_tensor({1, 3, 2, 2, 2}, rng);
    auto w = random_tensor({3, 2, 2, 2, 2}, rng);
    auto b = random_tensor({2}, rng);
    run("conv_transpose3d", [&] { return probe_loss(conv_transpose3d(x, w, b, 2), 13); }, {x, w, b});
  }
  {
    auto x = random_tensor({2, 3, 4, 4, 4}, rng);
    auto st = BnState<double>::identity(3);
    st.gamma = random_tensor({3}, rng, 0.5, 1.5);
    st.beta = random_tensor({3}, rng);
    run("batch_norm(train)", [&] { return probe_loss(batch_norm(x, st, Mode::train), 14); },
        {x, st.gamma, st.beta});
  }
  {
    auto x = random_tensor({2, 3, 4, 4, 4}, rng);
    auto st = BnState<double>::identity(3);
    st.gamma = random_tensor({3}, rng, 0.5, 1.5);
    st.beta = random_tensor({3}, rng);
    st.running_mean = random_tensor({3}, rng);
    st.running_var = random_tensor({3}, rng, 0.5, 2.0);
    run("batch_norm(infer)", [&] { return probe_loss(batch_norm(x, st, Mode::infer), 15); },
        {x, st.gamma, st.beta});
  }
  {
    auto x = detail::off_kink_tensor({2, 3, 4, 4, 4}, rng, 0.01);
    run("relu", [&] { return probe_loss(relu(x), 16); }, {x});
  }
  {
    auto x = detail::off_kink_tensor({2, 3, 4, 4, 4}, rng, 0.01);
    run("dropout(train)", [&] {
      std::mt19937_64 drop(99);
      return probe_loss(dropout(x, 0.2, Mode::train, drop), 17);
    }, {x});
  }
  {
    auto x = random_tensor({1, 4, 3, 3, 3}, rng, -2.0, 2.0);
    std::vector<std::uint8_t> labels(27);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % 4);
    run("softmax+cross_entropy", [&] { return cross_entropy(x, labels); }, {x});
    run("softmax_channels", [&] { return probe_loss(softmax_channels(x), 18); }, {x});
  }
  for (auto mode : {UpsampleMode::nearest, UpsampleMode::trilinear}) {
    auto x = random_tensor({2, 3, 2, 3, 2}, rng);
    run(std::string("upsample ") + to_string(mode), [&] { return probe_loss(upsample(x, 2, mode), 19); },
        {x});
  }
  {
    auto a = random_tensor({2, 2, 3, 3, 3}, rng);
    auto b = random_tensor({2, 1, 3, 3, 3}, rng);
    run("concat_channels", [&] { return probe_loss(concat_channels<double>({a, b, a}), 20); }, {a, b});
  }
  {
    auto a = random_tensor({2, 3, 2, 2, 2}, rng);
    auto b = random_tensor({2, 3, 2, 2, 2}, rng);
    run("elementwise add/sub/mul", [&] { return probe_loss((a + b) * (a - b) * a, 21); }, {a, b});
  }
  return out;
}

/// Whole-network check on the tiny configuration (k=2, k0=4, one layer per
/// block) with input [1, 2, 16^3]. Inference mode: at 16^3 the deepest BN sees
/// a single voxel, which has no batch statistics.
inline std::vector<GradCheckCase> network_gradcheck_suite(std::uint64_t seed = 2) {
  HyperParams hp;
  hp.growth_rate = 2;
  hp.stem_channels = 4;
  hp.layers_per_block = 1;
  std::mt19937_64 rng(seed);
  auto net = build_network<double>(hp, rng);
  auto x = detail::random_tensor({1, 2, 16, 16, 16}, rng);
  std::vector<std::uint8_t> labels(16 * 16 * 16);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % hp.num_classes);

  auto& P = net.params;
  std::vector<BasicTensor<double>> inputs{
      x,
      P.group("stem.1.conv").get(ParamRole::weight),
      P.group("stem.2.bn").get(ParamRole::gamma),
      P.group("block1.layer1.conv2").get(ParamRole::weight),
      P.group("trans2.conv").get(ParamRole::bias),
      P.group("fuse4.conv").get(ParamRole::weight),
      P.group("classifier").get(ParamRole::weight),
      P.group("classifier").get(ParamRole::bias),
  };
  GradCheckOptions opts;
  opts.eps = 1e-6;
  opts.tol = 1e-2;
  opts.max_probes_per_input = 48;

  std::vector<GradCheckCase> out;
  auto f_infer = [&] { return cross_entropy(forward_full(net.spec, P, x, Mode::infer), labels); };
  out.push_back({"tiny network (infer)", grad_check<double>(f_infer, inputs, opts), opts.tol});

  // Train mode needs two samples so the deepest BN has two values per channel.
  auto x2 = detail::random_tensor({2, 2, 16, 16, 16}, rng);
  std::vector<std::uint8_t> labels2(2 * 16 * 16 * 16);
  for (auto& l : labels2) l = static_cast<std::uint8_t>(rng() % hp.num_classes);
  inputs.front() = x2;
  auto f_train = [&] {
    std::mt19937_64 drop(5);
    return cross_entropy(forward_full(net.spec, P, x2, Mode::train, &drop), labels2);
  };
  out.push_back({"tiny network (train, N=2)", grad_check<double>(f_train, inputs, opts), opts.tol});
  return out;
}

}  // namespace dseg
