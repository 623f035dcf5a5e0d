// Acceptance report: one PASS/FAIL line per criterion.
//   acceptance            criteria 1-4 and 6-9
//   acceptance --learning criterion 5 (full 500-iteration phantom run)
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "denseseg/arch/gradcheck_suite.hpp"
#include "denseseg/denseseg.hpp"

using namespace dseg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& what, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << what << "  [" << detail << "]"
            << std::endl;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void criterion_depth() {
  const auto t0 = Clock::now();
  const auto r = audit(build_spec(HyperParams{}));
  const double secs = seconds_since(t0);
  report(1, "depth", r.weighted_layer_count == 47 && secs < 1.0,
         "layers " + std::to_string(r.weighted_layer_count) + ", expected 47, " + fmt(secs) + " s");
}

void criterion_params() {
  HyperParams hp;
  std::mt19937_64 rng(1);
  auto net = build_network<float>(hp, rng);
  std::size_t walked = 0;
  net.params.for_each([&](const std::string&, ParamRole role, const Tensor& t) {
    if (!is_running_stat(role)) walked += t.numel();
  });
  const auto r = audit(net.spec);
  const bool ok = r.total_params == walked && static_cast<double>(r.total_params) < kDenseVoxNetParams;
  report(2, "parameter accounting", ok,
         "audit " + std::to_string(r.total_params) + ", store walk " + std::to_string(walked) +
             ", vs 1.55M " + fmt(100.0 * r.deviation_from_reference()) + "%, limit 4.34M");
}

void criterion_feature_maps() {
  const auto r = audit(build_spec(HyperParams{}));
  bool ok = r.channel_trace() == "32->96->48->112->56->120->60->124" && !r.composite_inputs.empty();
  std::size_t bad = 0;
  for (const auto& c : r.composite_inputs) bad += c.measured != c.expected;
  ok = ok && bad == 0;
  report(3, "feature-map formula", ok,
         "trace " + r.channel_trace() + ", " + std::to_string(r.composite_inputs.size()) + " layers checked, " +
             std::to_string(bad) + " mismatches");
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  auto cases = op_gradcheck_suite();
  auto net = network_gradcheck_suite();
  cases.insert(cases.end(), net.begin(), net.end());
  const double secs = seconds_since(t0);
  std::size_t failed = 0;
  double worst_op = 0, worst_net = 0;
  for (const auto& c : cases) {
    const bool ok = c.report.pass && c.report.max_rel_err <= c.tol;
    failed += !ok;
    (c.tol > 1e-3 ? worst_net : worst_op) = std::max(c.tol > 1e-3 ? worst_net : worst_op, c.report.max_rel_err);
    std::cout << "      " << (ok ? "ok  " : "BAD ") << c.name << "  rel " << fmt(c.report.max_rel_err) << " tol "
              << c.tol << "  probes " << c.report.checked << "  kinks " << c.report.skipped << '\n';
  }
  report(4, "gradient correctness", failed == 0 && secs < 120.0,
         std::to_string(cases.size() - failed) + "/" + std::to_string(cases.size()) + " cases, worst op " +
             fmt(worst_op) + ", worst network " + fmt(worst_net) + ", " + fmt(secs) + " s");
}

// Criterion 6 helpers: brute-force surface and all-pairs distances.

std::vector<Voxel> brute_surface(const Mask& m) {
  std::vector<Voxel> out;
  const auto& d = m.dims;
  for (std::size_t z = 0; z < d[0]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[2]; ++x) {
        if (!m.on[m.index(z, y, x)]) continue;
        const bool edge = z == 0 || y == 0 || x == 0 || z + 1 == d[0] || y + 1 == d[1] || x + 1 == d[2];
        if (edge || !m.on[m.index(z - 1, y, x)] || !m.on[m.index(z + 1, y, x)] || !m.on[m.index(z, y - 1, x)] ||
            !m.on[m.index(z, y + 1, x)] || !m.on[m.index(z, y, x - 1)] || !m.on[m.index(z, y, x + 1)])
          out.push_back({z, y, x});
      }
  return out;
}

double directed_sum(const std::vector<Voxel>& a, const std::vector<Voxel>& b, const Spacing3& s) {
  double total = 0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      const double dz = s[0] * ((double)p[0] - (double)q[0]);
      const double dy = s[1] * ((double)p[1] - (double)q[1]);
      const double dx = s[2] * ((double)p[2] - (double)q[2]);
      best = std::min(best, std::sqrt((dz * dz + dy * dy) + dx * dx));
    }
    total += best;
  }
  return total;
}

void criterion_metrics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const Spacing3 spacings[] = {{1, 1, 1}, {0.5f, 1, 2}, {1.25f, 0.75f, 1}};
  std::size_t pairs = 0, mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const Dims3 d{2 + rng() % 11, 2 + rng() % 11, 2 + rng() % 11};
    std::bernoulli_distribution ba(0.05 + (rng() % 60) / 100.0), bb(0.05 + (rng() % 60) / 100.0);
    Mask a{d, std::vector<std::uint8_t>(dims_numel(d))}, b = a;
    for (auto& v : a.on) v = ba(rng);
    for (auto& v : b.on) v = bb(rng);
    const auto& sp = spacings[t % 3];
    const auto sa = brute_surface(a), sb = brute_surface(b);
    std::optional<double> ref_mhd, ref_asd;
    if (!sa.empty() && !sb.empty()) {
      const double ab = directed_sum(sa, sb, sp), ba_ = directed_sum(sb, sa, sp);
      ref_mhd = std::max(ab / sa.size(), ba_ / sb.size());
      ref_asd = (ab + ba_) / (sa.size() + sb.size());
    }
    ++pairs;
    mismatches += mhd(a, b, sp) != ref_mhd || asd(a, b, sp) != ref_asd;
  }

  std::size_t dice_checks = 0, dice_bad = 0;
  for (int t = 0; t < 100; ++t) {
    LabelVolume p, g;
    p.dims = g.dims = {1 + rng() % 12, 1 + rng() % 12, 1 + rng() % 12};
    p.labels.resize(dims_numel(p.dims));
    g.labels.resize(p.labels.size());
    for (auto& v : p.labels) v = rng() % 4;
    for (auto& v : g.labels) v = rng() % 4;
    for (std::uint8_t c = 0; c < 4; ++c) {
      std::size_t np = 0, ng = 0, both = 0;
      for (std::size_t i = 0; i < p.labels.size(); ++i) {
        np += p.labels[i] == c;
        ng += g.labels[i] == c;
        both += p.labels[i] == c && g.labels[i] == c;
      }
      const double ref = np + ng == 0 ? 1.0 : 2.0 * both / double(np + ng);
      ++dice_checks;
      dice_bad += dice(p, g, c) != ref;
    }
  }
  const double avg = average_dsc({91.25, 91.57, 94.69});
  const bool avg_ok = std::round(avg * 100.0) / 100.0 == 92.50;
  const double secs = seconds_since(t0);
  report(6, "metrics oracle", mismatches == 0 && dice_bad == 0 && avg_ok && secs < 60.0,
         std::to_string(pairs - mismatches) + "/" + std::to_string(pairs) + " distance pairs exact, " +
             std::to_string(dice_checks - dice_bad) + "/" + std::to_string(dice_checks) + " dice exact, average " +
             fmt(avg) + ", " + fmt(secs) + " s");
}

void criterion_schedule() {
  TrainConfig cfg;
  const double a = lr_at(0, cfg), b = lr_at(50000, cfg), c = lr_at(125000, cfg);
  const bool ok = float(a) == 2e-4f && float(b) == 2e-5f && float(c) == 2e-6f &&
                  lr_at(49999, cfg) == a && lr_at(99999, cfg) == b;
  report(7, "learning-rate schedule", ok, "lr " + fmt(a) + " / " + fmt(b) + " / " + fmt(c));
}

void criterion_inference() {
  std::mt19937_64 rng(5);
  auto net = build_network<float>(HyperParams{}, rng);
  const std::size_t p = 32;
  std::normal_distribution<float> nd(0.3f, 2.0f);
  std::vector<Volume> mods(2, Volume{{p, p, p}, {1, 1, 1}, std::vector<float>(p * p * p)});
  for (auto& m : mods) {
    for (auto& v : m.data) v = nd(rng);
    m = normalize_volume(m);
  }
  auto x = Tensor::zeros({1, 2, p, p, p});
  for (std::size_t c = 0; c < 2; ++c) std::copy(mods[c].data.begin(), mods[c].data.end(), x.data().begin() + c * p * p * p);
  std::vector<std::uint8_t> ref;
  {
    NoGradGuard<> g;
    ref = argmax_channels(forward_full(net.spec, net.params, x, Mode::infer));
  }
  std::size_t runs = 0, mismatched = 0;
  for (auto mode : {VoteMode::majority, VoteMode::mean_prob})
    for (std::size_t stride : {1, 5, 16, 32}) {
      ++runs;
      mismatched += sliding_window_predict(net.spec, net.params, mods, p, stride, mode).labels != ref;
    }

  double worst_mu = 0, worst_sd = 0;
  std::uniform_real_distribution<double> u(-50, 50), us(0.01, 100);
  for (int t = 0; t < 20; ++t) {
    const Dims3 d{2 + rng() % 30, 2 + rng() % 30, 2 + rng() % 30};
    Volume v{d, {1, 1, 1}, std::vector<float>(dims_numel(d))};
    std::normal_distribution<double> g(u(rng), us(rng));
    for (auto& f : v.data) f = static_cast<float>(g(rng));
    const auto n = normalize_volume(v);
    double s = 0, s2 = 0;
    for (float f : n.data) s += f;
    const double mu = s / n.data.size();
    for (float f : n.data) s2 += (f - mu) * (f - mu);
    worst_mu = std::max(worst_mu, std::abs(mu));
    worst_sd = std::max(worst_sd, std::abs(std::sqrt(s2 / n.data.size()) - 1.0));
  }
  report(8, "inference consistency", mismatched == 0 && worst_mu < 1e-5 && worst_sd < 1e-4,
         std::to_string(runs - mismatched) + "/" + std::to_string(runs) + " tilings equal argmax, max |mu| " +
             fmt(worst_mu) + ", max |sd-1| " + fmt(worst_sd));
}

template <typename A, typename B>
bool bits_equal(const A& a, const B& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  return true;
}

void criterion_io() {
  std::mt19937_64 rng(9);
  Volume v{{7, 5, 3}, {0.8f, 1.1f, 2.5f}, std::vector<float>(105)};
  for (auto& f : v.data) f = std::bit_cast<float>(static_cast<std::uint32_t>(rng()) & 0xBF7FFFFFu);
  v.data[0] = -0.0f;
  v.data[1] = std::numeric_limits<float>::denorm_min();
  const auto vb = std::get<Volume>(io::decode_vvol(io::encode_vvol(v), "vvol"));
  LabelVolume l{{4, 4, 4}, {1, 1, 1}, std::vector<std::uint8_t>(64)};
  for (auto& x : l.labels) x = rng() % 4;
  const auto lb = std::get<LabelVolume>(io::decode_vvol(io::encode_vvol(l), "vvol"));
  const bool vvol_ok = bits_equal(vb.data, v.data) && vb.dims == v.dims && vb.spacing == v.spacing &&
                       lb.labels == l.labels;

  HyperParams hp;
  hp.growth_rate = 2;
  hp.stem_channels = 4;
  hp.layers_per_block = 1;
  hp.upsample_path_channels = 4;
  auto net = build_network<float>(hp, rng);
  const auto bytes = encode_checkpoint(net.spec, net.params);
  const auto back = decode_checkpoint(bytes);
  bool ck_ok = encode_checkpoint(net.spec, back.params) == bytes;
  std::size_t tensors = 0;
  net.params.for_each([&](const std::string& layer, ParamRole role, const Tensor& t) {
    ++tensors;
    ck_ok = ck_ok && bits_equal(back.params.group(layer).get(role).data(), t.data());
  });

  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.patch_size = 16;
  cfg.lr0 = 1e-2;
  cfg.max_iters = 4;
  cfg.seed = 31;
  std::vector<Sample> data{gen_phantom(1, {32, 32, 32}, 0.05), gen_phantom(2, {32, 32, 32}, 0.05)};
  const auto r1 = train(data, cfg, hp);
  const auto r2 = train(data, cfg, hp);
  double worst = 0;
  bool same_len = r1.trace.size() == r2.trace.size() && !r1.trace.empty();
  for (std::size_t i = 0; same_len && i < r1.trace.size(); ++i)
    worst = std::max(worst, std::abs(r1.trace[i].loss - r2.trace[i].loss) / std::abs(r1.trace[i].loss));
  report(9, "I/O and determinism", vvol_ok && ck_ok && same_len && worst <= 1e-5,
         std::string("vvol ") + (vvol_ok ? "bit-exact" : "differs") + ", checkpoint " + std::to_string(tensors) +
             " tensors " + (ck_ok ? "bit-exact" : "differ") + ", rerun max rel diff " + fmt(worst));
}

void criterion_learning() {
  const auto t0 = Clock::now();
  std::vector<Sample> data{gen_phantom(7, {64, 64, 64}, 0.05), gen_phantom(8, {64, 64, 64}, 0.05)};
  TrainConfig cfg;
  HyperParams hp;
  TrainHooks hooks;
  hooks.on_iteration = [&](const LossRecord& r) {
    if (r.iter % 25 == 0 || r.iter + 1 == cfg.max_iters)
      std::cout << "      iter " << r.iter << "  loss " << fmt(r.loss) << "  " << fmt(seconds_since(t0)) << " s"
                << std::endl;
  };
  auto res = train(data, cfg, hp, hooks);
  const double train_secs = seconds_since(t0);
  const double final_loss = res.trace.back().loss;

  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : data) {
    const auto norm = normalize_sample(s);
    auto pred = sliding_window_predict(res.net.spec, res.net.params, norm.modalities, cfg.patch_size,
                                       cfg.patch_size / 2, VoteMode::majority);
    pred.spacing = s.labels.spacing;
    for (std::uint8_t c = 1; c < 4; ++c, ++n) sum += dice(pred, s.labels, c);
  }
  const double mean_dice = sum / n;
  const double secs = seconds_since(t0);
  report(5, "phantom learning quality", mean_dice >= 0.90 && final_loss < 0.1,
         "mean dice " + fmt(mean_dice) + " (>= 0.90), final loss " + fmt(final_loss) + " (< 0.1)");
  report(5, "phantom learning runtime", secs <= 1800.0,
         fmt(secs) + " s total, " + fmt(train_secs) + " s training, limit 1800 s");
}

}  // namespace

int main(int argc, char** argv) {
  const bool learning = argc > 1 && std::strcmp(argv[1], "--learning") == 0;
  try {
    if (learning) {
      criterion_learning();
    } else {
      criterion_depth();
      criterion_params();
      criterion_feature_maps();
      criterion_gradients();
      criterion_metrics();
      criterion_schedule();
      criterion_inference();
      criterion_io();
    }
  } catch (const std::exception& e) {
    std::cout << "FAIL  aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion line(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
