#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "skel/cli.hpp"
#include "skel/data.hpp"
#include "skel/model.hpp"

namespace skel {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("skel_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("SKEL_SEED");
  }
  void TearDown() override {
    fs::remove_all(dir_);
    unsetenv("SKEL_SEED");
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "skel");
    return run_cli(args);
  }

  static std::string read(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& p, const std::string& text) { std::ofstream(p) << text; }

  int gen_data() {
    return run({"gen-data", "--n-traj", "3", "--steps", "20", "--out", path("data.csv"), "--seed", "1"});
  }

  int train(const std::string& method = "skel") {
    return run({"train", "--data", path("data.csv"), "--method", method, "--epochs", "5", "--embedding-dim", "4",
                "--hidden", "6", "--out-model", path("model.json"), "--out-log", path("log.csv")});
  }

  fs::path dir_;
};

TEST_F(Cli, FullPipeline) {
  ASSERT_EQ(gen_data(), kExitOk);
  EXPECT_EQ(load_csv(path("data.csv")).size(), 3u);
  ASSERT_EQ(train(), kExitOk);
  EXPECT_EQ(load_model(path("model.json")).embedding_dim, 4);
  EXPECT_EQ(read(path("log.csv")).substr(0, 5), "epoch");

  ASSERT_EQ(run({"simulate", "--model", path("model.json"), "--data", path("data.csv"), "--horizon", "7", "--out",
                 path("sim.csv")}),
            kExitOk);
  const Dataset sim = load_csv(path("sim.csv"));
  ASSERT_EQ(sim.size(), 3u);
  EXPECT_EQ(sim[0].length(), 8);
  EXPECT_EQ(sim[0].source_id.substr(sim[0].source_id.size() - 4), "_sim");

  ASSERT_EQ(run({"eval", "--model", path("model.json"), "--data", path("data.csv"), "--out", path("eval.json")}), kExitOk);
  const auto eval = nlohmann::json::parse(read(path("eval.json")));
  EXPECT_TRUE(eval.contains("nse"));

  ASSERT_EQ(run({"certify", "--model", path("model.json"), "--data", path("data.csv"), "--out", path("cert.json")}),
            kExitOk);
  const auto cert = nlohmann::json::parse(read(path("cert.json")));
  EXPECT_TRUE(cert["verdict"] == "pass" || cert["verdict"] == "fail");

  ASSERT_EQ(run({"compare", "--data", path("data.csv"), "--epochs", "3", "--embedding-dim", "4", "--hidden", "6",
                 "--methods", "skel", "lkis", "--workers", "2", "--perturb-samples", "2", "--out", path("cmp.json"),
                 "--out-csv", path("cmp.csv")}),
            kExitOk);
  const auto cmp = nlohmann::json::parse(read(path("cmp.json")));
  EXPECT_EQ(cmp["folds"].size(), 6u);
  EXPECT_TRUE(cmp["summary"].contains("lkis"));
}

TEST_F(Cli, GenDataRowCount) {
  ASSERT_EQ(run({"gen-data", "--kind", "tanh_contraction", "--n-traj", "5", "--steps", "200", "--seed", "1", "--out",
                 path("d.csv")}),
            kExitOk);
  const std::string text = read(path("d.csv"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1001);
}

TEST_F(Cli, HorizonZeroReturnsReconstructedStart) {
  ASSERT_EQ(gen_data(), kExitOk);
  ASSERT_EQ(run({"train", "--data", path("data.csv"), "--epochs", "3", "--embedding-dim", "4", "--hidden", "6",
                 "--left-inverse", "projection", "--out-model", path("model.json"), "--out-log", path("log.csv")}),
            kExitOk);
  ASSERT_EQ(run({"simulate", "--model", path("model.json"), "--data", path("data.csv"), "--horizon", "0", "--out",
                 path("sim.csv")}),
            kExitOk);
  const Dataset sim = load_csv(path("sim.csv"));
  const Dataset data = load_csv(path("data.csv"));
  ASSERT_EQ(sim[0].length(), 1);
  EXPECT_LT((sim[0].states.col(0) - data[0].states.col(0)).norm(), 1e-12);
}

TEST_F(Cli, UnstableModelFileFailsVerdictWithExitZero) {
  ASSERT_EQ(gen_data(), kExitOk);
  ASSERT_EQ(train("lkis"), kExitOk);
  auto doc = nlohmann::json::parse(read(path("model.json")));
  // Replace the frozen operator by 1.01 I.
  auto& op = doc["params"]["op.A"];
  const int n = op["shape"][0].get<int>();
  std::vector<double> data(static_cast<std::size_t>(n * n), 0.0);
  for (int i = 0; i < n; ++i) data[static_cast<std::size_t>(i * n + i)] = 1.01;
  op["data"] = data;
  write(path("unstable.json"), doc.dump());
  ASSERT_EQ(run({"certify", "--model", path("unstable.json"), "--data", path("data.csv"), "--out", path("c.json")}),
            kExitOk);
  const auto cert = nlohmann::json::parse(read(path("c.json")));
  EXPECT_EQ(cert["verdict"], "fail");
  EXPECT_NE(cert["reasons"][0].get<std::string>().find("spectral radius"), std::string::npos);
}

TEST_F(Cli, SeedFallsBackToEnvironment) {
  ASSERT_EQ(run({"gen-data", "--noise-std", "0.1", "--out", path("a.csv"), "--seed", "5"}), kExitOk);
  setenv("SKEL_SEED", "5", 1);
  ASSERT_EQ(run({"gen-data", "--noise-std", "0.1", "--out", path("b.csv")}), kExitOk);
  EXPECT_EQ(read(path("a.csv")), read(path("b.csv")));
  setenv("SKEL_SEED", "abc", 1);
  EXPECT_EQ(run({"gen-data", "--out", path("c.csv")}), kExitUsage);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  write(path("cfg.json"), R"({"n_traj": 2, "steps": 10, "kind": "linear_sink"})");
  ASSERT_EQ(run({"gen-data", "--config", path("cfg.json"), "--steps", "12", "--out", path("d.csv")}), kExitOk);
  const Dataset d = load_csv(path("d.csv"));
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].length(), 12);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({}), kExitUsage);
  EXPECT_EQ(run({"bogus"}), kExitUsage);
  EXPECT_EQ(run({"gen-data", "--no-such-flag", "1"}), kExitUsage);
  EXPECT_EQ(run({"gen-data", "--steps", "many"}), kExitUsage);
  write(path("bad.json"), R"({"unknown_field": 1})");
  EXPECT_EQ(run({"gen-data", "--config", path("bad.json")}), kExitUsage);
  write(path("typed.json"), R"({"steps": "ten"})");
  EXPECT_EQ(run({"gen-data", "--config", path("typed.json")}), kExitUsage);
  EXPECT_EQ(run({"train", "--out-model", path("m.json")}), kExitUsage);
  EXPECT_EQ(run({"train", "--data", path("missing.csv")}), kExitUsage);
  ASSERT_EQ(gen_data(), kExitOk);
  EXPECT_EQ(run({"train", "--data", path("data.csv"), "--embedding-dim", "1"}), kExitUsage);
  EXPECT_EQ(run({"eval", "--model", path("missing.json"), "--data", path("data.csv")}), kExitUsage);
}

TEST_F(Cli, DimensionMismatchIsUsageError) {
  ASSERT_EQ(gen_data(), kExitOk);
  ASSERT_EQ(train(), kExitOk);
  ASSERT_EQ(run({"gen-data", "--kind", "spiral_sink", "--n-traj", "2", "--steps", "10", "--out", path("s.csv")}),
            kExitOk);
  EXPECT_EQ(run({"simulate", "--model", path("model.json"), "--data", path("s.csv"), "--out", path("x.csv")}),
            kExitUsage);
}

TEST_F(Cli, DefectiveEigenfunctionsAreNotCliErrors) {
  ASSERT_EQ(gen_data(), kExitOk);
  for (const std::string method : {"soc", "lkis"}) {
    ASSERT_EQ(train(method), kExitOk);
    EXPECT_EQ(run({"certify", "--model", path("model.json"), "--data", path("data.csv"), "--out", path("c.json")}),
              kExitOk);
  }
}

}  // namespace
}  // namespace skel
