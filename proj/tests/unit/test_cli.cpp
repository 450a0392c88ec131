#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "sparsealign/io.hpp"

using namespace sparsealign;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          (std::string("sparsealign_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Outcome run(const std::string &args) const {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = read_file_bytes(out);
    o.err = read_file_bytes(err);
    return o;
  }

  fs::path write(const std::string &name, const std::string &text) const {
    write_file_bytes(dir / name, text);
    return dir / name;
  }

  std::string q(const fs::path &p) const { return "\"" + p.string() + "\""; }
};

const char *kConfig2d = R"({
  "seed": 5,
  "phantom": {"preset": "2d"},
  "solver": {"max_iterations": 15},
  "schedule": {"etas": [0.5, 1]}
})";

nlohmann::json read_json(const fs::path &p) { return nlohmann::json::parse(read_file_bytes(p)); }

}  // namespace

TEST_F(Cli, SimulateIsDeterministic) {
  const fs::path cfg = write("c.json", kConfig2d);
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out-dir " + q(dir / "a")).code, 0);
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out-dir " + q(dir / "b")).code, 0);
  for (const char *f : {"ground_truth.json", "stack.tstk", "traces.csv"}) {
    EXPECT_EQ(read_file_bytes(dir / "a" / f), read_file_bytes(dir / "b" / f)) << f;
  }
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --seed 6 --out-dir " + q(dir / "c")).code, 0);
  EXPECT_NE(read_file_bytes(dir / "a" / "ground_truth.json"), read_file_bytes(dir / "c" / "ground_truth.json"));
}

TEST_F(Cli, FullPipeline) {
  const fs::path cfg = write("c.json", kConfig2d);
  const fs::path sim = dir / "sim", al = dir / "align";
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out-dir " + q(sim)).code, 0);

  const Outcome a = run("align --config " + q(cfg) + " --stack " + q(sim / "stack.tstk") + " --out-dir " + q(al));
  ASSERT_EQ(a.code, 0) << a.err;
  const auto result = read_json(al / "result.json");
  EXPECT_EQ(result.at("kind"), "alignment_result");
  const double initial = result.at("levels").at(0).at("initial_loss").get<double>();
  EXPECT_LT(result.at("final_loss").get<double>(), 1e-4 * initial);
  const std::string history = read_file_bytes(al / "loss_history.csv");
  EXPECT_EQ(history.substr(0, history.find('\n')), "level,iteration,step,loss,markers");

  const Outcome b = run("baseline --config " + q(cfg) + " --traces " + q(sim / "traces.csv") + " --stack " +
                        q(sim / "stack.tstk") + " --out " + q(dir / "bl" / "baseline.json"));
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_LT(read_json(dir / "bl" / "baseline.json").at("residual").get<double>(), 1e-8);

  const Outcome e = run("eval --truth " + q(sim / "ground_truth.json") + " --estimate " + q(al / "result.json") +
                        " --out-dir " + q(dir / "ev") + " --grid 200 --field-nodes 50");
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = read_json(dir / "ev" / "report.json");
  EXPECT_TRUE(std::isfinite(report.at("E_global").get<double>()));
  EXPECT_EQ(read_file_bytes(dir / "ev" / "error_field.pgm").substr(0, 9), "P5\n50 50\n");

  const Outcome r = run("render --result " + q(al / "result.json") + " --like " + q(sim / "stack.tstk") + " --out " +
                        q(dir / "r.tstk"));
  ASSERT_EQ(r.code, 0) << r.err;
  const TiltStack data = read_tiltstack(sim / "stack.tstk");
  const TiltStack back = read_tiltstack(dir / "r.tstk");
  ASSERT_EQ(back.values.size(), data.values.size());
  double diff = 0.0;
  for (std::size_t i = 0; i < data.values.size(); ++i) diff += (back.values[i] - data.values[i]) * (back.values[i] - data.values[i]);
  EXPECT_LT(diff, 1e-3 * data.squared_norm());

  // A second run from the same inputs reproduces every output byte.
  ASSERT_EQ(run("align --config " + q(cfg) + " --stack " + q(sim / "stack.tstk") + " --out-dir " + q(dir / "align2")).code, 0);
  EXPECT_EQ(read_file_bytes(al / "result.json"), read_file_bytes(dir / "align2" / "result.json"));
  EXPECT_EQ(read_file_bytes(al / "loss_history.csv"), read_file_bytes(dir / "align2" / "loss_history.csv"));
}

TEST_F(Cli, EvalOfTruthAgainstItselfIsZero) {
  const fs::path cfg = write("c.json", R"({"phantom": {"preset": "3d_cubic"}, "geometry": {"n_angles": 5}})");
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out-dir " + q(dir / "s")).code, 0);
  const fs::path gt = dir / "s" / "ground_truth.json";
  const Outcome e = run("eval --truth " + q(gt) + " --estimate " + q(gt) + " --out-dir " + q(dir / "ev") + " --grid 20");
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = read_json(dir / "ev" / "report.json");
  EXPECT_EQ(report.at("E_global").get<double>(), 0.0);
  EXPECT_EQ(report.at("E_markers").get<double>(), 0.0);
  EXPECT_EQ(report.at("matching").at("spurious_count"), 0);
  EXPECT_EQ(report.at("matching").at("missed_count"), 0);
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  const fs::path bad = write("bad.json", R"({"solver": {"max_iter": 3}})");
  Outcome o = run("simulate --config " + q(bad));
  EXPECT_EQ(o.code, 2);
  EXPECT_EQ(o.err.rfind("E:", 0), 0u) << o.err;
  EXPECT_NE(o.err.find("solver.max_iter"), std::string::npos) << o.err;

  o = run("simulate --config " + q(bad) + " --bogus");
  EXPECT_EQ(o.code, 2);
  EXPECT_EQ(o.err.rfind("E:", 0), 0u) << o.err;

  o = run("");
  EXPECT_EQ(o.code, 2);

  o = run("align --config " + q(write("ok.json", "{}")));
  EXPECT_EQ(o.code, 2) << "neither --stack nor --mrc";
}

TEST_F(Cli, DataErrorsExitWithThree) {
  const fs::path junk = write("junk.tstk", "not a stack");
  Outcome o = run("align --stack " + q(junk) + " --out-dir " + q(dir / "o"));
  EXPECT_EQ(o.code, 3);
  EXPECT_EQ(o.err.rfind("E:", 0), 0u) << o.err;

  o = run("eval --truth " + q(dir / "missing.json") + " --estimate " + q(dir / "missing.json") + " --out-dir " +
          q(dir / "o"));
  EXPECT_EQ(o.code, 3);
  EXPECT_EQ(o.err.rfind("E:", 0), 0u) << o.err;
}

TEST_F(Cli, AlignsMrcInput) {
  // 16 x 16 x 4 float32 MRC holding one centred bead of std 1.5 px.
  const int n = 16, frames = 4;
  std::string bytes(1024, '\0');
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes[at + b] = static_cast<char>((v >> (8 * b)) & 0xff);
  };
  auto putf = [&](std::size_t at, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put32(at, v);
  };
  put32(0, n), put32(4, n), put32(8, frames), put32(12, 2);
  put32(28, n), put32(32, n), put32(36, frames);
  putf(40, n), putf(44, n), putf(48, frames);
  put32(64, 1), put32(68, 2), put32(72, 3);
  bytes.replace(208, 4, "MAP ");
  bytes[212] = 0x44, bytes[213] = 0x44;
  for (int z = 0; z < frames; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double r2 = (x - 7.5) * (x - 7.5) + (y - 7.5) * (y - 7.5);
        bytes.resize(bytes.size() + 4);
        putf(bytes.size() - 4, static_cast<float>(std::exp(-r2 / (2 * 1.5 * 1.5))));
      }
  const fs::path mrc = write("bead.mrc", bytes);

  std::ostringstream cfg;
  cfg << R"({"phantom": {"preset": "3d_quadratic"}, "geometry": {"angles_deg": [-60, -20, 20, 60], "shape_sigma": 1.5},)"
      << R"( "solver": {"max_iterations": 3, "fit_deformation": false, "sample_box": {"lower": [-6, -6, -3], "upper": [6, 6, 3]}},)"
      << R"( "deformation": {"spatial_degree": 0}})";
  const fs::path c = write("mrc.json", cfg.str());
  const Outcome o = run("align --config " + q(c) + " --mrc " + q(mrc) + " --out-dir " + q(dir / "o"));
  ASSERT_EQ(o.code, 0) << o.err;
  const auto result = read_json(dir / "o" / "result.json");
  EXPECT_EQ(result.at("dimension"), 3);
  const auto &markers = result.at("markers");
  ASSERT_GE(markers.size(), 1u);
  double best = 1e9;
  for (const auto &m : markers) {
    const auto r = m.at("location").get<std::vector<double>>();
    best = std::min(best, std::hypot(r[0], r[1], r[2]));
  }
  EXPECT_LT(best, 0.25);

  // The 5 x 3 fixture is below the smallest usable level size.
  EXPECT_EQ(run("align --config " + q(c) + " --mrc " + q(fs::path(TEST_DATA_DIR) / "mode2_le.mrc") + " --out-dir " +
                q(dir / "p")).code,
            2);
}
