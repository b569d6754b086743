#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "coach/cae.hpp"
#include "coach/network.hpp"
#include "coach/run.hpp"

namespace coach {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "coach_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    save_network_file((root_ / "enc.bin").string(), init_cae(Preset::test, 1).encoder());
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string path(const std::string& child) { return (root_ / child).string(); }

  static fs::path root_;
};

fs::path CliTest::root_;

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"fly"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--encoder", path("enc.bin")}).code, cli::kExitUsage);  // no --out
  EXPECT_EQ(run_cli({"train", "--encoder", path("enc.bin"), "--out", path("x"), "--task", "maze"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--encoder", path("enc.bin"), "--out", path("x"), "--trace-decay", "1.5"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--encoder", path("enc.bin"), "--out", path("x"), "--seed", "1", "--seeds", "2,3"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"pretrain", "--frames", "0", "--out", path("p")}).code, cli::kExitUsage);
  // --preset contradicting the encoder's input size is a bad invocation.
  EXPECT_EQ(run_cli({"train", "--encoder", path("enc.bin"), "--preset", "full", "--out", path("x")}).code,
            cli::kExitUsage);
  const auto r = run_cli({"train", "--steps", "abc", "--encoder", path("enc.bin"), "--out", path("x")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_NE((r.out + r.err).find("train"), std::string::npos);
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
  EXPECT_EQ(run_cli({"train", "--encoder", path("missing.bin"), "--out", path("x")}).code, cli::kExitRuntime);
  std::ofstream(path("garbage.bin")) << "not a network";
  EXPECT_EQ(run_cli({"train", "--encoder", path("garbage.bin"), "--out", path("x")}).code, cli::kExitRuntime);
}

TEST_F(CliTest, ZeroStepsWritesHeaderOnlyLog) {
  const auto r = run_cli({"train", "--steps", "0", "--encoder", path("enc.bin"), "--out", path("zero")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(slurp(path("zero/runlog.csv")), std::string(kRunLogHeader) + "\n");
  EXPECT_TRUE(fs::exists(path("zero/run.json")));
  EXPECT_TRUE(fs::exists(path("zero/params.bin")));
}

TEST_F(CliTest, TrainIsDeterministicAndWritesOutputs) {
  const std::vector<std::string> base = {"train", "--task", "patrol", "--steps", "120", "--encoder", path("enc.bin")};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("det_a"), "--frames-dir", path("det_a/frames")});
  b.insert(b.end(), {"--out", path("det_b")});
  ASSERT_EQ(run_cli(a).code, cli::kExitOk);
  ASSERT_EQ(run_cli(b).code, cli::kExitOk);
  EXPECT_EQ(slurp(path("det_a/runlog.csv")), slurp(path("det_b/runlog.csv")));
  EXPECT_EQ(slurp(path("det_a/params.bin")), slurp(path("det_b/params.bin")));
  EXPECT_EQ(slurp(path("det_a/feedback.csv")).substr(0, 25), "chunk,pos_count,neg_count");
  EXPECT_TRUE(fs::exists(path("det_a/frames/frame_0_0.png")));
  EXPECT_TRUE(fs::exists(path("det_a/frames/frame_0_119.png")));
  std::ifstream log(path("det_a/runlog.csv"));
  EXPECT_EQ(read_run_log(log).size(), 120u);
}

TEST_F(CliTest, HyperParameterFlagsReachRunConfig) {
  const auto r = run_cli({"train", "--steps", "3", "--encoder", path("enc.bin"), "--out", path("hp"), "--delay", "2",
                          "--trace-decay", "0.5", "--window-size", "7", "--minibatch-size", "4", "--entropy-coef",
                          "0.25", "--learning-rate", "0.001", "--ratio-clamp", "5", "--feedback-prob", "0.5",
                          "--algo", "linear"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto text = slurp(path("hp/run.json"));
  for (const char* needle : {"\"delay\": 2", "\"trace_decay\": 0.5", "\"window_size\": 7", "\"minibatch_size\": 4",
                             "\"entropy_coef\": 0.25", "\"learning_rate\": 0.001", "\"ratio_clamp\": 5.0",
                             "\"feedback_prob\": 0.5", "\"algo\": \"linear\""}) {
    EXPECT_NE(text.find(needle), std::string::npos) << needle << "\n" << text;
  }
}

TEST_F(CliTest, SeedsAndEval) {
  const auto r = run_cli({"train", "--task", "patrol", "--steps", "100", "--seeds", "1,2,3", "--encoder",
                          path("enc.bin"), "--out", path("multi")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  for (int s = 1; s <= 3; ++s) EXPECT_TRUE(fs::exists(path("multi/seed_" + std::to_string(s) + "/runlog.csv")));
  const auto e = run_cli({"eval", path("multi"), "--out", path("multi/eval.csv")});
  ASSERT_EQ(e.code, cli::kExitOk) << e.err;
  const auto csv = slurp(path("multi/eval.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "chunk,n,mean_center_dist,ci_low_center_dist,ci_high_center_dist,mean_angle_deg,ci_low_angle_deg,"
            "ci_high_angle_deg");
  EXPECT_NE(csv.find("\n0,3,"), std::string::npos);

  ASSERT_EQ(run_cli({"train", "--steps", "5", "--encoder", path("enc.bin"), "--out", path("goal")}).code,
            cli::kExitOk);
  EXPECT_EQ(run_cli({"eval", path("multi/seed_1"), path("goal")}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"eval", path("nowhere")}).code, cli::kExitUsage);
}

TEST_F(CliTest, ValuesCommand) {
  const auto r = run_cli({"values", "--out", path("values.csv")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto csv = slurp(path("values.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "x,z,heading,action,q");
  EXPECT_NE(csv.find("\n3,4,1,0,199\n"), std::string::npos);
  EXPECT_EQ(run_cli({"values", "--gamma", "1.0"}).code, cli::kExitUsage);
}

TEST_F(CliTest, PretrainIsDeterministic) {
  const std::vector<std::string> base = {"pretrain", "--preset", "test", "--frames", "48", "--epochs", "2",
                                         "--seed", "9"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("pre_a"), "--dataset", path("pre_a/frames.bin")});
  b.insert(b.end(), {"--out", path("pre_b")});
  ASSERT_EQ(run_cli(a).code, cli::kExitOk);
  ASSERT_EQ(run_cli(b).code, cli::kExitOk);
  EXPECT_EQ(slurp(path("pre_a/encoder.bin")), slurp(path("pre_b/encoder.bin")));
  EXPECT_EQ(slurp(path("pre_a/loss.csv")), slurp(path("pre_b/loss.csv")));
  EXPECT_EQ(slurp(path("pre_a/frames.bin")).substr(0, 8), "COACHDS1");
  EXPECT_EQ(slurp(path("pre_a/loss.csv")).substr(0, 11), "epoch,loss\n");
  const auto enc = load_network_file(path("pre_a/encoder.bin"));
  EXPECT_EQ(enc.input_shape(), (Shape{3, 32, 32}));
}

}  // namespace
}  // namespace coach
