#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "denseseg/arch/gradcheck_suite.hpp"
#include "denseseg/denseseg.hpp"

namespace fs = std::filesystem;
using namespace dseg;

namespace {

struct GenDataArgs {
  std::string out;
  std::size_t count = 2;
  std::size_t size = 64;
  std::uint64_t seed = 7;
  double noise = 0.05;
};

struct TrainArgs {
  std::string manifest, config, out;
  std::optional<std::size_t> max_iters;
  bool quiet = false;
};

struct PredictArgs {
  std::string checkpoint, t1, t2, out;
  std::size_t patch = 64;
  std::optional<std::size_t> stride;
  std::string vote = "majority";
};

struct EvaluateArgs {
  std::string pred, gt, out;
};

int gen_data(const GenDataArgs& a) {
  fs::create_directories(a.out);
  std::vector<io::ManifestEntry> entries;
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto seed = a.seed + i;
    auto s = gen_phantom(seed, {a.size, a.size, a.size}, a.noise);
    const std::string id = "phantom_" + std::to_string(seed);
    io::ManifestEntry e{id, id + "_t1.vvol", id + "_t2.vvol", id + "_labels.vvol"};
    io::write_vvol(fs::path(a.out) / e.t1, s.modalities[0]);
    io::write_vvol(fs::path(a.out) / e.t2, s.modalities[1]);
    io::write_vvol(fs::path(a.out) / e.labels, s.labels);
    entries.push_back(e);
    std::cout << "wrote " << id << " (" << dims_str(s.dims()) << ")\n";
  }
  io::write_manifest(fs::path(a.out) / "manifest.csv", entries);
  std::cout << "manifest: " << (fs::path(a.out) / "manifest.csv").string() << '\n';
  return 0;
}

int train_cmd(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_config(a.config);
  if (a.max_iters) rc.train.max_iters = *a.max_iters;
  rc.hp.validate();
  rc.train.validate(rc.hp);
  std::vector<Sample> data;
  for (const auto& e : io::read_manifest(a.manifest)) data.push_back(io::load_sample(e));
  fs::create_directories(a.out);
  const fs::path out(a.out);

  TrainHooks hooks;
  const auto start = std::chrono::steady_clock::now();
  if (!a.quiet) {
    hooks.on_iteration = [&](const LossRecord& r) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cout << "iter " << r.iter << "  lr " << r.lr << "  loss " << r.loss << "  (" << secs << " s)\n"
                << std::flush;
    };
  }
  hooks.on_checkpoint = [&](std::size_t iter, const Network<float>& net) {
    const bool final = iter == rc.train.max_iters;
    const auto path = final ? out / "checkpoint.dsgc" : out / ("checkpoint_" + std::to_string(iter) + ".dsgc");
    save_checkpoint(net.spec, net.params, path);
  };
  auto res = train(data, rc.train, rc.hp, hooks);
  io::write_file_atomic(out / "loss.csv", loss_trace_csv(res.trace));
  std::cout << "checkpoint: " << (out / "checkpoint.dsgc").string() << '\n';
  if (!res.trace.empty()) std::cout << "final loss: " << res.trace.back().loss << '\n';
  return 0;
}

int predict_cmd(const PredictArgs& a) {
  const auto mode = parse_vote_mode(a.vote);
  auto ckpt = read_checkpoint(a.checkpoint);
  if (!ckpt.hp) throw FormatError("checkpoint: missing hyperparameter record");
  const auto spec = build_spec(*ckpt.hp);
  auto params = load_checkpoint(a.checkpoint, spec);
  auto t1 = io::read_volume(a.t1);
  auto t2 = io::read_volume(a.t2);
  if (t1.dims != t2.dims) {
    throw ShapeError("t1 is " + dims_str(t1.dims) + " but t2 is " + dims_str(t2.dims));
  }
  if (t1.spacing != t2.spacing) throw ShapeError("t1 and t2 spacing differ");
  const std::size_t stride = a.stride.value_or(a.patch / 2);
  std::vector<Volume> mods{normalize_volume(t1), normalize_volume(t2)};
  auto labels = sliding_window_predict(spec, params, mods, a.patch, stride, mode);
  io::write_vvol(a.out, labels);
  std::cout << "wrote " << a.out << " (" << dims_str(labels.dims) << ", stride " << stride << ", "
            << to_string(mode) << ")\n";
  return 0;
}

int evaluate_cmd(const EvaluateArgs& a) {
  auto pred = io::read_labels(a.pred);
  auto gt = io::read_labels(a.gt);
  auto rep = evaluate(pred, gt);
  io::write_file_atomic(a.out, rep.csv());
  print_metrics(std::cout, rep);
  return 0;
}

int audit_cmd(const std::string& config, bool per_layer) {
  const HyperParams hp = config.empty() ? HyperParams{} : load_config(config).hp;
  print_audit(std::cout, audit(build_spec(hp)), per_layer);
  return 0;
}

int gradcheck_cmd(bool skip_network) {
  auto cases = op_gradcheck_suite();
  if (!skip_network) {
    auto net = network_gradcheck_suite();
    cases.insert(cases.end(), net.begin(), net.end());
  }
  bool ok = true;
  for (const auto& c : cases) {
    std::printf("%-28s %s  max_rel_err %.3e  (tol %.0e, %zu probes, %zu at kinks)\n", c.name.c_str(),
                c.report.pass ? "PASS" : "FAIL", c.report.max_rel_err, c.tol, c.report.checked,
                c.report.skipped);
    ok = ok && c.report.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D densely connected network for volumetric tissue segmentation"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Write synthetic phantom samples and a manifest");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--count", gd.count, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--size", gd.size, "Cube edge in voxels")->check(CLI::Range(32, 1024));
  gen->add_option("--seed", gd.seed, "Seed of the first sample");
  gen->add_option("--noise", gd.noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train on the samples of a manifest");
  tr->add_option("--manifest", ta.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  tr->add_option("--config", ta.config, "key = value config file")->check(CLI::ExistingFile);
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_option("--max-iters", ta.max_iters, "Override max_iters");
  tr->add_flag("--quiet", ta.quiet, "No per-iteration log");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Segment a T1/T2 pair");
  pr->add_option("--checkpoint", pa.checkpoint)->required()->check(CLI::ExistingFile);
  pr->add_option("--t1", pa.t1)->required()->check(CLI::ExistingFile);
  pr->add_option("--t2", pa.t2)->required()->check(CLI::ExistingFile);
  pr->add_option("--out", pa.out, "Output label volume")->required();
  pr->add_option("--patch", pa.patch, "Tile edge in voxels");
  pr->add_option("--stride", pa.stride, "Tile stride (default patch/2)");
  pr->add_option("--vote", pa.vote, "majority or mean_prob")->check(CLI::IsMember({"majority", "mean_prob"}));

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "DSC, MHD and ASD of a prediction");
  ev->add_option("--pred", ea.pred)->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", ea.gt)->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ea.out, "Metrics CSV")->required();

  std::string audit_config;
  bool per_layer = false;
  auto* au = app.add_subcommand("audit", "Layer and parameter accounting");
  au->add_option("--config", audit_config)->check(CLI::ExistingFile);
  au->add_flag("--per-layer", per_layer, "List every learnable layer");

  bool skip_network = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_flag("--ops-only", skip_network, "Skip the whole-network check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return gen_data(gd);
    if (*tr) return train_cmd(ta);
    if (*pr) return predict_cmd(pa);
    if (*ev) return evaluate_cmd(ea);
    if (*au) return audit_cmd(audit_config, per_layer);
    if (*gc) return gradcheck_cmd(skip_network);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
