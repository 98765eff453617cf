#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "deanet/checkpoint.hpp"
#include "deanet/cli.hpp"
#include "deanet/config.hpp"
#include "deanet/iqa.hpp"
#include "deanet/png_io.hpp"
#include "deanet/wls.hpp"
#include "support/synthetic.hpp"

using namespace deanet;
using deanet::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "deanet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<std::string> kTiny = {"--set", "net.depth_levels=3", "--set", "net.base_channels=4",
                                        "--set", "net.dense_growth=4",  "--set", "train.patch_size=32",
                                        "--set", "train.lr=0.001",      "--set", "wls.lambda=0.5"};

std::vector<std::string> tiny(std::vector<std::string> rest) {
  std::vector<std::string> a = kTiny;
  a.insert(a.end(), rest.begin(), rest.end());
  return a;
}

}  // namespace

TEST(Cli, MetricsIdentity) {
  TempDir dir("cli");
  const fs::path img = dir.path() / "img.png";
  write_png(img, deanet::testing::natural_image(3, 48, 48));
  const auto r = run({"metrics", img.string(), img.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "PSNR inf\nSSIM 1.000\nFSIM 1.000\nMAE 0.000\nGMSD 0.000\n");
  const auto csv = run({"metrics", "--csv", img.string(), img.string()});
  EXPECT_EQ(csv.out, "psnr,ssim,fsim,mae,gmsd\ninf,1.000,1.000,0.000,0.000\n");
}

TEST(Cli, UnknownKeyExitsOne) {
  const auto r = run({"--set", "wls.lamda=2", "--dump-config"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("wls.lamda"), std::string::npos) << r.err;

  TempDir dir("cli");
  std::ofstream(dir.path() / "bad.cfg") << "train.epochs = 3\nmystery = 1\n";
  const auto f = run({"--config", (dir.path() / "bad.cfg").string(), "--dump-config"});
  EXPECT_EQ(f.code, 1);
  EXPECT_NE(f.err.find("mystery"), std::string::npos) << f.err;
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"enhance", "--in", "x.png"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, MissingFileExitsTwo) {
  const auto r = run({"metrics", "/nonexistent/a.png", "/nonexistent/b.png"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/nonexistent/a.png"), std::string::npos) << r.err;
}

TEST(Cli, DumpConfigReproducesRun) {
  TempDir dir("cli");
  std::ofstream(dir.path() / "run.cfg") << "wls.lambda = 2\ntrain.seed = 5\n";
  const auto r = run({"--config", (dir.path() / "run.cfg").string(), "--set", "wls.lambda=0.75", "--seed", "9",
                      "--dump-config"});
  ASSERT_EQ(r.code, 0) << r.err;
  Config c;
  apply_config_text(c, r.out, "dump");
  EXPECT_EQ(c.wls.lambda, 0.75);  // --set beats the file
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(dump_config(c), r.out);
  std::ofstream(dir.path() / "dumped.cfg") << r.out;
  EXPECT_EQ(run({"--config", (dir.path() / "dumped.cfg").string(), "--dump-config"}).out, r.out);
}

TEST(Cli, EffectiveConfigEchoedToStderr) {
  TempDir dir("cli");
  const fs::path img = dir.path() / "img.png";
  write_png(img, deanet::testing::natural_image(3, 24, 24));
  const auto r = run({"--set", "wls.lambda=0.3", "wls", "--in", img.string(), "--out-base",
                      (dir.path() / "b.png").string(), "--out-detail", (dir.path() / "d.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("wls.lambda = 0.3\n"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, WlsSidecarIsExact) {
  TempDir dir("cli");
  const fs::path img = dir.path() / "img.png";
  write_png(img, deanet::testing::natural_image(4, 30, 26));
  const auto r = run({"wls", "--in", img.string(), "--out-base", (dir.path() / "b.png").string(), "--out-detail",
                      (dir.path() / "d.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto entries = read_checkpoint(dir.path() / "b.dean");
  const auto* low = find_entry(entries, "wls.low");
  const auto* high = find_entry(entries, "wls.high");
  ASSERT_TRUE(low && high);
  EXPECT_EQ(low->dims, (std::vector<std::uint32_t>{3, 30, 26}));
  const auto split = frequency_split(read_png(img));
  for (std::size_t i = 0; i < low->values.size(); ++i) {
    ASSERT_EQ(low->values[i], static_cast<float>(split.low_freq.data()[i]));
    ASSERT_EQ(high->values[i], static_cast<float>(split.high_freq.data()[i]));
  }
  EXPECT_EQ(read_png(dir.path() / "d.png").height(), 30);
}

class CliTrainTest : public ::testing::Test {
 protected:
  void SetUp() override { deanet::testing::write_lol_dataset(data.path(), 2, 40, 44, 21); }
  TempDir data{"data"};
  TempDir ckpt{"ck"};
};

TEST_F(CliTrainTest, EnhanceMatchesEvaluateReport) {
  const std::string root = data.path().string(), ck = ckpt.path().string();
  ASSERT_EQ(run(tiny({"--set", "train.steps=3", "train", "--stage", "1", "--data", root, "--ckpt", ck})).code, 0);
  const auto s2 = run(tiny({"--set", "train.steps=3", "train", "--stage", "2", "--data", root, "--ckpt", ck}));
  ASSERT_EQ(s2.code, 0) << s2.err;

  const auto ev = run(tiny({"evaluate", "--data", root, "--ckpt", ck}));
  ASSERT_EQ(ev.code, 0) << ev.err;
  const std::string csv = slurp(ckpt.path() / "eval_report.csv");
  ASSERT_TRUE(fs::exists(ckpt.path() / "eval_report.txt"));
  // second row: 000.png,<psnr>,...
  std::stringstream ss(csv);
  std::string header, row;
  std::getline(ss, header);
  std::getline(ss, row);
  ASSERT_EQ(row.rfind("000.png,", 0), 0u) << csv;
  const double logged = std::stod(row.substr(8));

  const fs::path out = ckpt.path() / "out.png";
  const fs::path low = data.path() / "low" / "000.png", high = data.path() / "high" / "000.png";
  const auto e = run(tiny({"enhance", "--in", low.string(), "--ckpt", ck, "--out", out.string(), "--dump-intermediates",
                           (ckpt.path() / "inter").string()}));
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(fs::exists(ckpt.path() / "inter" / "reflectance_enhanced.png"));
  const auto m = run({"metrics", "--csv", out.string(), high.string()});
  ASSERT_EQ(m.code, 0) << m.err;
  const double measured = std::stod(m.out.substr(m.out.find('\n') + 1));
  EXPECT_NEAR(measured, logged, 0.01);

  // Byte-identical output on a second run.
  const fs::path out2 = ckpt.path() / "out2.png";
  ASSERT_EQ(run(tiny({"enhance", "--in", low.string(), "--ckpt", ck, "--out", out2.string()})).code, 0);
  EXPECT_EQ(slurp(out), slurp(out2));

  const auto d = run(tiny({"decompose", "--in", low.string(), "--ckpt", ck, "--out-dir", (ckpt.path() / "dec").string()}));
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_EQ(read_png(ckpt.path() / "dec" / "illumination.png").width(), 44);
}

TEST_F(CliTrainTest, StageRequiredForStagedSchedule) {
  const auto r = run(tiny({"train", "--data", data.path().string(), "--ckpt", ckpt.path().string()}));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--stage"), std::string::npos) << r.err;
}

TEST_F(CliTrainTest, NonFiniteLossExitsThree) {
  const auto r = run(tiny({"--set", "train.lr=1e30", "--set", "train.steps=4", "train", "--stage", "1", "--data",
                           data.path().string(), "--ckpt", ckpt.path().string()}));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("step"), std::string::npos) << r.err;
}

TEST_F(CliTrainTest, MissingCheckpointExitsTwo) {
  const auto r = run(tiny({"enhance", "--in", (data.path() / "low" / "000.png").string(), "--ckpt",
                           ckpt.path().string(), "--out", (ckpt.path() / "y.png").string()}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("decom.dean"), std::string::npos) << r.err;
}

TEST(Cli, NiqeFitNeedsTenImages) {
  TempDir dir("cli");
  for (int i = 0; i < 3; ++i)
    write_png(dir.path() / ("n" + std::to_string(i) + ".png"), deanet::testing::natural_image(i, 200, 200));
  const auto r = run({"niqe-fit", "--in", dir.path().string(), "--out", (dir.path() / "m.dean").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir.path() / "m.dean"));
}
