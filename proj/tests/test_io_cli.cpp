#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "denseseg/io/manifest.hpp"
#include "denseseg/io/phantom.hpp"
#include "denseseg/io/vvol.hpp"

using namespace dseg;
using namespace dseg::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "denseseg_io_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + DENSESEG_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

}  // namespace

TEST(Vvol, RoundTripBothDtypes) {
  Volume v{{2, 3, 4}, {0.5f, 1.0f, 2.0f}, {}};
  for (int i = 0; i < 24; ++i) v.data.push_back(i * 0.25f - 3.0f);
  auto back = std::get<Volume>(decode_vvol(encode_vvol(v), "v"));
  EXPECT_EQ(back.dims, v.dims);
  EXPECT_EQ(back.spacing, v.spacing);
  EXPECT_EQ(back.data, v.data);

  LabelVolume l{{3, 1, 2}, {1, 1, 1}, {0, 1, 2, 3, 2, 1}};
  auto lb = std::get<LabelVolume>(decode_vvol(encode_vvol(l), "l"));
  EXPECT_EQ(lb.labels, l.labels);
  EXPECT_EQ(lb.dims, l.dims);

  auto dir = scratch("vvol");
  write_vvol(dir / "v.vvol", v);
  EXPECT_EQ(read_volume(dir / "v.vvol").data, v.data);
  EXPECT_THROW(read_labels(dir / "v.vvol"), FormatError);
}

TEST(Vvol, HeaderLayout) {
  LabelVolume l{{1, 1, 2}, {1, 1, 1}, {7, 9}};
  auto b = encode_vvol(l);
  ASSERT_EQ(b.size(), 4u + 2 + 1 + 1 + 12 + 12 + 2);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "VVOL");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[6], kDtypeU8);
  EXPECT_EQ(b[7], 3);
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[16], 2);
  EXPECT_EQ(b[b.size() - 2], 7);
}

TEST(Vvol, RejectsMalformed) {
  LabelVolume l{{2, 2, 2}, {1, 1, 1}, std::vector<std::uint8_t>(8, 1)};
  auto good = encode_vvol(l);
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_vvol(bad_magic, "x"), FormatError);
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(decode_vvol(truncated, "x"), FormatError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_vvol(trailing, "x"), FormatError);
  auto short_header = std::vector<std::uint8_t>(good.begin(), good.begin() + 10);
  EXPECT_THROW(decode_vvol(short_header, "x"), FormatError);
  auto bad_dtype = good;
  bad_dtype[6] = 5;
  EXPECT_THROW(decode_vvol(bad_dtype, "x"), FormatError);
  auto zero_dim = good;
  zero_dim[8] = 0;
  EXPECT_THROW(decode_vvol(zero_dim, "x"), FormatError);
  EXPECT_THROW(read_vvol(scratch("missing") / "nope.vvol"), IoError);
}

TEST(Phantom, DeterministicAndSeedSensitive) {
  auto a = gen_phantom(5, {32, 32, 32}, 0.05);
  auto b = gen_phantom(5, {32, 32, 32}, 0.05);
  auto c = gen_phantom(6, {32, 32, 32}, 0.05);
  EXPECT_EQ(a.labels.labels, b.labels.labels);
  EXPECT_EQ(a.modalities[0].data, b.modalities[0].data);
  EXPECT_EQ(a.modalities[1].data, b.modalities[1].data);
  EXPECT_NE(a.labels.labels, c.labels.labels);
  EXPECT_THROW(gen_phantom(1, {16, 32, 32}, 0.0), ShapeError);
}

TEST(Phantom, NoiselessIntensitiesFollowLabels) {
  auto s = gen_phantom(3, {40, 36, 32}, 0.0);
  s.validate();
  for (std::size_t i = 0; i < s.labels.numel(); ++i) {
    const auto l = s.labels.labels[i];
    ASSERT_EQ(s.modalities[0].data[i], kPhantomT1[l]);
    ASSERT_EQ(s.modalities[1].data[i], kPhantomT2[l]);
  }
}

TEST(Phantom, EveryClassPresent) {
  for (std::uint64_t seed : {7, 8, 9}) {
    auto s = gen_phantom(seed, {64, 64, 64}, 0.05);
    std::array<std::size_t, 4> count{};
    for (auto l : s.labels.labels) ++count[l];
    for (std::size_t c = 0; c < 4; ++c) EXPECT_GE(count[c], s.labels.numel() / 100) << "class " << c;
  }
}

TEST(Manifest, RoundTripWithRelativePaths) {
  auto dir = scratch("manifest");
  auto s = gen_phantom(1, {32, 32, 32}, 0.0);
  write_vvol(dir / "t1.vvol", s.modalities[0]);
  write_vvol(dir / "t2.vvol", s.modalities[1]);
  write_vvol(dir / "lab.vvol", s.labels);
  write_manifest(dir / "m.csv", {{"a", "t1.vvol", "t2.vvol", "lab.vvol"}});
  auto entries = read_manifest(dir / "m.csv");
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].t1, dir / "t1.vvol");
  auto loaded = load_sample(entries[0]);
  EXPECT_EQ(loaded.labels.labels, s.labels.labels);
  EXPECT_EQ(loaded.modalities[1].data, s.modalities[1].data);
}

TEST(Manifest, RejectsBadInput) {
  auto dir = scratch("manifest_bad");
  EXPECT_THROW(read_manifest(dir / "none.csv"), IoError);
  std::ofstream(dir / "short.csv") << "a, b, c\n";
  EXPECT_THROW(read_manifest(dir / "short.csv"), FormatError);
  std::ofstream(dir / "empty.csv") << "# nothing\n";
  EXPECT_THROW(read_manifest(dir / "empty.csv"), FormatError);
  std::ofstream(dir / "gone.csv") << "a, x.vvol, y.vvol, z.vvol\n";
  EXPECT_THROW(load_sample(read_manifest(dir / "gone.csv")[0]), IoError);
}

TEST(Manifest, RejectsMismatchedSample) {
  auto dir = scratch("manifest_dims");
  auto s = gen_phantom(1, {32, 32, 32}, 0.0);
  auto t = gen_phantom(1, {32, 32, 40}, 0.0);
  write_vvol(dir / "t1.vvol", s.modalities[0]);
  write_vvol(dir / "t2.vvol", t.modalities[1]);
  write_vvol(dir / "lab.vvol", s.labels);
  write_manifest(dir / "m.csv", {{"a", "t1.vvol", "t2.vvol", "lab.vvol"}});
  EXPECT_THROW(load_sample(read_manifest(dir / "m.csv")[0]), ShapeError);
}

TEST(Cli, AuditReportsDepth) {
  auto dir = scratch("cli_audit");
  ASSERT_EQ(run("audit", dir / "log"), 0);
  EXPECT_NE(slurp(dir / "log").find("layers: 47"), std::string::npos);
}

TEST(Cli, UnknownSubcommandAndMissingArgsFail) {
  auto dir = scratch("cli_bad");
  EXPECT_NE(run("frobnicate", dir / "log"), 0);
  EXPECT_NE(run("predict --t1 x", dir / "log"), 0);
  EXPECT_NE(run("", dir / "log"), 0);
}

TEST(Cli, EvaluateIdenticalLabels) {
  auto dir = scratch("cli_eval");
  ASSERT_EQ(run("gen-data --out \"" + dir.string() + "\" --count 1 --size 32 --seed 3", dir / "log"), 0);
  const auto lab = (dir / "phantom_3_labels.vvol").string();
  ASSERT_EQ(run("evaluate --pred \"" + lab + "\" --gt \"" + lab + "\" --out \"" + (dir / "m.csv").string() + "\"",
                dir / "log"),
            0);
  const auto csv = slurp(dir / "m.csv");
  EXPECT_NE(csv.find("CSF,1,0,0"), std::string::npos) << csv;
  EXPECT_NE(csv.find("average,1,,"), std::string::npos) << csv;
}

TEST(Cli, TrainPredictEvaluateEndToEnd) {
  auto dir = scratch("cli_e2e");
  ASSERT_EQ(run("gen-data --out \"" + dir.string() + "\" --count 1 --size 32 --seed 11", dir / "log"), 0);
  std::ofstream(dir / "tiny.cfg") << "growth_rate = 2\nstem_channels = 4\nlayers_per_block = 1\n"
                                     "upsample_path_channels = 4\nbatch_size = 2\npatch_size = 16\n"
                                     "max_iters = 2\ncheckpoint_every = 1\n";
  ASSERT_EQ(run("train --manifest \"" + (dir / "manifest.csv").string() + "\" --config \"" +
                    (dir / "tiny.cfg").string() + "\" --out \"" + (dir / "run").string() + "\"",
                dir / "log"),
            0)
      << slurp(dir / "log");
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.dsgc"));
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint_1.dsgc"));
  EXPECT_EQ(slurp(dir / "run" / "loss.csv").substr(0, 12), "iter,lr,loss");

  const auto ck = (dir / "run" / "checkpoint.dsgc").string();
  const auto t1 = (dir / "phantom_11_t1.vvol").string();
  const auto t2 = (dir / "phantom_11_t2.vvol").string();
  const auto pred = (dir / "pred.vvol").string();
  ASSERT_EQ(run("predict --checkpoint \"" + ck + "\" --t1 \"" + t1 + "\" --t2 \"" + t2 + "\" --out \"" + pred +
                    "\" --patch 16 --vote mean_prob",
                dir / "log"),
            0)
      << slurp(dir / "log");
  auto labels = read_labels(pred);
  EXPECT_EQ(labels.dims, (Dims3{32, 32, 32}));
  for (auto l : labels.labels) ASSERT_LT(l, 4);

  ASSERT_EQ(run("evaluate --pred \"" + pred + "\" --gt \"" + (dir / "phantom_11_labels.vvol").string() +
                    "\" --out \"" + (dir / "m.csv").string() + "\"",
                dir / "log"),
            0);
  EXPECT_NE(slurp(dir / "log").find("average"), std::string::npos);
}

TEST(Cli, PredictRejectsMismatchedModalities) {
  auto dir = scratch("cli_mismatch");
  ASSERT_EQ(run("gen-data --out \"" + dir.string() + "\" --count 1 --size 32 --seed 1", dir / "log"), 0);
  ASSERT_EQ(run("gen-data --out \"" + (dir / "b").string() + "\" --count 1 --size 40 --seed 2", dir / "log"), 0);
  std::ofstream(dir / "tiny.cfg") << "growth_rate = 2\nstem_channels = 4\nlayers_per_block = 1\n"
                                     "upsample_path_channels = 4\nbatch_size = 2\npatch_size = 16\nmax_iters = 1\n";
  ASSERT_EQ(run("train --quiet --manifest \"" + (dir / "manifest.csv").string() + "\" --config \"" +
                    (dir / "tiny.cfg").string() + "\" --out \"" + (dir / "run").string() + "\"",
                dir / "log"),
            0);
  const int rc = run("predict --checkpoint \"" + (dir / "run" / "checkpoint.dsgc").string() + "\" --t1 \"" +
                         (dir / "phantom_1_t1.vvol").string() + "\" --t2 \"" + (dir / "b" / "phantom_2_t2.vvol").string() +
                         "\" --out \"" + (dir / "p.vvol").string() + "\" --patch 16",
                     dir / "log");
  EXPECT_NE(rc, 0);
  EXPECT_NE(slurp(dir / "log").find("error:"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "p.vvol"));
}
