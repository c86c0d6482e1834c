// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

// Drives the ndif binary on a tiny configuration.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ndif/checkpoint.hpp"
#include "ndif/textio.hpp"

namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "synthetic": {"n_events": 70},
  "unet": {"base_channels": 8, "time_embed_dim": 16},
  "train": {"epochs": 1, "batch_size": 8},
  "forecast": {"num_samples": 4, "batch": 4}
})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("ndif_test_cli_" + std::to_string(getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.json") << kTinyConfig;
    ASSERT_EQ(run("gen-data --out data"), 0);
    ASSERT_EQ(run("train --data data --out run --quiet"), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  // Runs `ndif <args>` inside the scratch directory with the tiny config
  // (unless the caller supplies its own); returns the exit code.
  static int run(const std::string& args, const std::string& env = "",
                 bool tiny = true) {
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" NDIF_CLI_PATH "' " +
                            args + (tiny && args.find("--help") == std::string::npos
                                        ? " --config tiny.json"
                                        : "") +
                            " > last.out 2> last.err";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, HelpOnEverySubcommandExitsZero) {
  for (const char* sub : {"gen-data", "train", "sample", "forecast", "eval", "plot"}) {
    EXPECT_EQ(run(std::string(sub) + " --help"), 0) << sub;
    const auto help = slurp(dir_ / "last.out");
    EXPECT_NE(help.find("--seed"), std::string::npos) << sub;
    EXPECT_NE(help.find("--config"), std::string::npos) << sub;
  }
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("", "", false), 2);
  EXPECT_EQ(run("bogus", "", false), 2);
  EXPECT_EQ(run("train --epochs many"), 2);
  EXPECT_EQ(run("gen-data --n-events 0 --out d0"), 2);
  EXPECT_FALSE(fs::exists(dir_ / "d0"));
  EXPECT_EQ(run("forecast --event-id E00001 --cutoff-days 9"), 2);
  EXPECT_EQ(run("forecast --event-id E00001 --cutoff-days 0.01"), 2);
  EXPECT_EQ(run("eval --seed 3", "NDIF_SEED=x"), 2);
}

TEST_F(Cli, DataErrorsExitThree) {
  EXPECT_EQ(run("forecast --event-id NOPE"), 3);
  EXPECT_NE(slurp(dir_ / "last.err").find("unknown event id"), std::string::npos);
  EXPECT_EQ(run("sample --model missing.ndif"), 3);
  EXPECT_EQ(run("eval --data nowhere"), 3);
}

TEST_F(Cli, GenDataWritesPartitionsAndRefusesToOverwrite) {
  for (const char* f : {"train.csv", "validation.csv", "test.csv", "manifest.json", "config.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "data" / f)) << f;
  }
  EXPECT_EQ(lines(dir_ / "data" / "train.csv")[0], "event_id,tau_days,sigma_t_m");
  EXPECT_EQ(run("gen-data --out data"), 2);
  EXPECT_EQ(run("gen-data --out data2"), 0);
  for (const char* f : {"train.csv", "validation.csv", "test.csv", "manifest.json"}) {
    EXPECT_EQ(slurp(dir_ / "data" / f), slurp(dir_ / "data2" / f)) << f;
  }
  EXPECT_EQ(run("gen-data --out data2 --force --seed 8"), 0);
  EXPECT_NE(slurp(dir_ / "data" / "train.csv"), slurp(dir_ / "data2" / "train.csv"));
}

TEST_F(Cli, SeedPrecedence) {
  ASSERT_EQ(run("gen-data --out s_env", "NDIF_SEED=11"), 0);
  ASSERT_EQ(run("gen-data --out s_flag --seed 11"), 0);
  ASSERT_EQ(run("gen-data --out s_both --seed 7", "NDIF_SEED=11"), 0);
  EXPECT_EQ(slurp(dir_ / "s_env" / "train.csv"), slurp(dir_ / "s_flag" / "train.csv"));
  EXPECT_EQ(slurp(dir_ / "s_both" / "train.csv"), slurp(dir_ / "data" / "train.csv"));
  EXPECT_NE(slurp(dir_ / "s_env" / "train.csv"), slurp(dir_ / "data" / "train.csv"));
  EXPECT_NE(slurp(dir_ / "s_env" / "config.json").find("\"seed\": 11"), std::string::npos);
}

TEST_F(Cli, TrainZeroEpochsGivesLoadableInitialWeights) {
  ASSERT_EQ(run("train --data data --out run0 --epochs 0"), 0);
  const auto c = ndif::load_checkpoint(dir_ / "run0" / "model.ndif");
  EXPECT_EQ(c.epochs_done, 0);
  ASSERT_TRUE(c.optimizer.has_value());
  EXPECT_EQ(c.optimizer->step_count, 0);
  EXPECT_EQ(c.unet.base_channels, 8u);
  EXPECT_EQ(lines(dir_ / "run0" / "loss.csv").size(), 1u);
  EXPECT_TRUE(fs::exists(dir_ / "run0" / "config.json"));
}

TEST_F(Cli, ResumeContinuesTheStepCounter) {
  ASSERT_EQ(run("train --data data --out runr --epochs 1"), 0);
  const auto first = ndif::load_checkpoint(dir_ / "runr" / "model.ndif");
  EXPECT_EQ(first.optimizer->step_count, 7);  // 50 series, batch 8
  EXPECT_EQ(run("train --data data --out runr --epochs 2"), 2);  // refuses without --resume
  ASSERT_EQ(run("train --data data --out runr --epochs 2 --resume"), 0);
  const auto second = ndif::load_checkpoint(dir_ / "runr" / "model.ndif");
  EXPECT_EQ(second.epochs_done, 2);
  EXPECT_EQ(second.optimizer->step_count, 14);
  const auto log = lines(dir_ / "runr" / "loss.csv");
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(split(log[1])[0], "1");
  EXPECT_EQ(split(log[2])[0], "2");
  EXPECT_EQ(split(log[2])[1], "14");
}

TEST_F(Cli, SampleWritesPositiveSeries) {
  ASSERT_EQ(run("sample --count 3 --out samples.csv --svg samples.svg"), 0);
  const auto rows = lines(dir_ / "samples.csv");
  ASSERT_EQ(rows.size(), 4u);  // header + 3
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split(rows[r]);
    ASSERT_EQ(f.size(), 168u);
    for (const auto& v : f) EXPECT_GT(ndif::parse_double(v, "samples"), 0.0);
  }
  const auto again = slurp(dir_ / "samples.csv");
  ASSERT_EQ(run("sample --count 3 --out samples.csv"), 0);
  EXPECT_EQ(slurp(dir_ / "samples.csv"), again);
  EXPECT_TRUE(fs::exists(dir_ / "samples.svg"));
}

TEST_F(Cli, SingleSampleForecastCollapsesTheBand) {
  const auto id = split(lines(dir_ / "data" / "test.csv")[1])[0];
  ASSERT_EQ(run("forecast --event-id " + id + " --num-samples 1 --out f1 --svg"), 0);
  const auto rows = lines(dir_ / "f1" / ("forecast_" + id + ".csv"));
  ASSERT_EQ(rows.size(), 169u);
  EXPECT_EQ(rows[0], "tau_days,median_m,q05_m,q95_m,known_flag");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto f = split(rows[r]);
    EXPECT_EQ(f[1], f[2]);
    EXPECT_EQ(f[1], f[3]);
    EXPECT_EQ(f[4], r <= 121 ? "1" : "0");
  }
  EXPECT_EQ(split(lines(dir_ / "f1" / ("trajectories_" + id + ".csv"))[0]).size(), 2u);
  EXPECT_TRUE(fs::exists(dir_ / "f1" / ("plot_" + id + ".svg")));
}

TEST_F(Cli, EvalEmitsExactlyTwoModelRows) {
  ASSERT_EQ(run("eval --cutoff-days 2 --out ev --per-event --quiet"), 0);
  const auto rows = lines(dir_ / "ev" / "metrics.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "model,cutoff_days,n,mae_m,rmse_m");
  EXPECT_EQ(split(rows[1])[0], "baseline");
  EXPECT_EQ(split(rows[2])[0], "diffusion");
  EXPECT_EQ(split(rows[1])[2], split(rows[2])[2]);  // identical sample pool
  EXPECT_TRUE(fs::exists(dir_ / "ev" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir_ / "ev" / "events.csv"));
  const auto table = slurp(dir_ / "last.out");
  EXPECT_NE(table.find("baseline"), std::string::npos);
  EXPECT_NE(table.find("diffusion"), std::string::npos);
}

TEST_F(Cli, PlotWritesOneSvgPerEvent) {
  ASSERT_EQ(run("plot --first 2 --out plots"), 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "plots")) {
    EXPECT_EQ(e.path().extension(), ".svg");
    ++n;
  }
  EXPECT_EQ(n, 2u);
}
