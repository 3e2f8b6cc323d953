#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "fprune/checkpoint.hpp"
#include "fprune/report.hpp"
#include "json.hpp"

using namespace fprune;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fprune_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    nlohmann::json j = {
        {"seed", 3},
        {"data", {{"num_classes", 3}, {"per_class", 30}, {"test_per_class", 10}, {"image_shape", {1, 8, 8}}}},
        {"model", {{"widths", {4, 4}}}},
        {"baseline", {{"epochs", 2}}},
        {"reward", {{"rollout_epochs", 0}}},
        {"trainer", {{"max_epochs", 8}, {"window", 3}, {"workers", 1}}},
        {"pipeline", {{"finetune_epochs", 1}, {"timing", {{"enabled", false}}}}},
        {"output", {{"dir", dir_.string()}}}};
    config_ = (dir_ / "config.json").string();
    write_text_file(config_, j.dump(2));
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  std::string config_;
};

}  // namespace

TEST(CliConfig, DefaultsRoundTrip) {
  const auto text = cli::config_to_json(cli::RunConfig{});
  EXPECT_EQ(cli::config_to_json(cli::parse_config(text)), text);
  auto d = run_cli({"defaults"});
  EXPECT_EQ(d.code, 0);
  EXPECT_EQ(d.out, text);
}

TEST(CliConfig, UnknownNestedKeyIsNamed) {
  try {
    cli::parse_config(R"({"trainer": {"rollout": 5}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("trainer.rollout"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cli::parse_config(R"({"modle": {}})"), ConfigError);
  EXPECT_THROW(cli::parse_config(R"({"trainer": {"rollouts": "five"}})"), ConfigError);
  EXPECT_THROW(cli::parse_config("[1,2"), ConfigError);
}

TEST(CliConfig, PartialConfigKeepsDefaults) {
  auto c = cli::parse_config(R"({"reward": {"bound": 1.5}})");
  EXPECT_EQ(c.reward.bound, 1.5);
  EXPECT_EQ(c.trainer.rollouts, cli::RunConfig{}.trainer.rollouts);
  auto p = cli::make_prune_config(c);
  EXPECT_EQ(p.bound, 1.5);
  EXPECT_EQ(p.trainer.rollouts, 5u);
}

TEST_F(CliTest, ErrorExitCodes) {
  EXPECT_EQ(run_cli({"report"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"prune", "--bogus"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"prune", "--config", config_, "--bound", "-1"}).code, cli::kConfigError);
  // no checkpoint yet
  EXPECT_EQ(run_cli({"prune", "--config", config_, "--layer", "0"}).code, cli::kDataError);
  write_text_file(dir_ / "bad.json", "{\"method\": 1}");
  auto bad = run_cli({"report", (dir_ / "bad.json").string()});
  EXPECT_EQ(bad.code, cli::kDataError);
  EXPECT_NE(bad.err.find("bad.json"), std::string::npos);
  write_text_file(dir_ / "typo.json", R"({"modle": {}})");
  auto typo = run_cli({"train-baseline", "--config", (dir_ / "typo.json").string()});
  EXPECT_EQ(typo.code, cli::kConfigError);
  EXPECT_NE(typo.err.find("modle"), std::string::npos);
}

TEST_F(CliTest, BaselinePruneAndCompare) {
  auto b = run_cli({"train-baseline", "--config", config_});
  ASSERT_EQ(b.code, 0) << b.err;
  const auto ckpt = dir_ / "baseline.fpck";
  ASSERT_TRUE(fs::exists(ckpt));
  const auto first = read_text_file(ckpt);
  ASSERT_EQ(run_cli({"train-baseline", "--config", config_}).code, 0);
  EXPECT_EQ(read_text_file(ckpt), first) << "baseline training must be deterministic";
  // planted duplicates double the trained widths
  EXPECT_EQ(load_checkpoint(ckpt).total_prunable_filters(), 8u);

  auto none = run_cli({"prune", "--config", config_, "--layer", "0", "--max-epochs", "0", "--tag", "noop"});
  ASSERT_EQ(none.code, 0) << none.err;
  EXPECT_EQ(load_report(dir_ / "noop.json").filter_prune_ratio, 0.0);

  EXPECT_EQ(run_cli({"prune", "--config", config_, "--layer", "9"}).code, cli::kConfigError);
  EXPECT_EQ(run_cli({"prune", "--config", config_, "--method", "l1"}).code, cli::kConfigError);

  auto learned = run_cli({"prune", "--config", config_, "--all"});
  ASSERT_EQ(learned.code, 0) << learned.err;
  const auto rep = load_report(dir_ / "learned.json");
  EXPECT_TRUE(fs::exists(dir_ / "learned.fpck"));
  EXPECT_TRUE(fs::exists(dir_ / "learned_layers.csv"));

  auto l1 = run_cli({"prune", "--config", config_, "--method", "l1", "--from-report",
                     (dir_ / "learned.json").string()});
  ASSERT_EQ(l1.code, 0) << l1.err;
  auto rnd = run_cli({"prune", "--config", config_, "--method", "random", "--from-report",
                      (dir_ / "learned.json").string()});
  ASSERT_EQ(rnd.code, 0) << rnd.err;
  for (const char* f : {"l1.json", "random.json"}) {
    const auto other = load_report(dir_ / f);
    EXPECT_EQ(other.filters_after, rep.filters_after) << f;
    EXPECT_EQ(other.params_after, rep.params_after) << f;
  }
  EXPECT_TRUE(load_report(dir_ / "random.json").selection_seed.has_value());

  const auto csv = (dir_ / "cmp.csv").string();
  auto cmp = run_cli({"report", (dir_ / "learned.json").string(), (dir_ / "l1.json").string(),
                      (dir_ / "random.json").string(), "--csv", csv});
  ASSERT_EQ(cmp.code, 0) << cmp.err;
  EXPECT_NE(cmp.out.find("learned"), std::string::npos);
  const auto text = read_text_file(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
