#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using ultrasnn::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ultrasnn_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::vector<std::string> kBlobTrain{"train",    "--dataset", "blobs", "--model",  "ultradlif", "--hidden",
                                          "8",        "--epochs",  "2",     "--batch",  "16",        "--input",
                                          "analog",   "--blob-per-class", "24", "--seed", "5"};

}  // namespace

TEST(Cli, RegionsReportMatchesFormula) {
  const Outcome o = invoke({"analyze", "regions", "--hidden", "3", "--inputs", "2", "--seed", "7"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = nlohmann::json::parse(o.out);
  EXPECT_EQ(j["formula"], 7);
  EXPECT_EQ(j["empirical"], 7);
  EXPECT_TRUE(j["within_bound"].get<bool>());
}

TEST(Cli, EnergyIsTimestepsTimesRate) {
  auto j = nlohmann::json::parse(invoke({"analyze", "energy", "--rate", "0.404", "--timesteps", "1"}).out);
  EXPECT_NEAR(j["energy"].get<double>(), 0.404, 1e-12);
  j = nlohmann::json::parse(invoke({"analyze", "energy", "--rate", "0.248", "--timesteps", "30"}).out);
  EXPECT_NEAR(j["energy"].get<double>(), 7.44, 1e-12);
}

TEST(Cli, GradcheckExitCodes) {
  EXPECT_EQ(invoke({"gradcheck", "--model", "ultradlif"}).code, 0);
  const Outcome lif = invoke({"gradcheck", "--model", "lif"});
  EXPECT_EQ(lif.code, 1);
  EXPECT_FALSE(lif.out.empty());
}

TEST(Cli, ErrorCategoriesMapToExitCodes) {
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({"analyze", "regions", "--frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"train", "--dataset", "blobs"}).code, 2);
  EXPECT_EQ(invoke({"gradcheck", "--model", "nosuch"}).code, 2);
  EXPECT_EQ(invoke({"eval", "--checkpoint", "/nonexistent/ckpt.bin"}).code, 3);
  EXPECT_EQ(invoke({"train", "--dataset", "mnist", "--data-dir", "/nonexistent", "--out",
                    scratch("missing").string()}).code, 3);
  EXPECT_EQ(invoke({"train", "--dataset", "blobs", "--epochs", "0", "--out", scratch("zero").string()}).code, 2);
}

TEST(Cli, TrainWritesArtifactsAndReplayIsByteIdentical) {
  const fs::path dir = scratch("train");
  auto args = kBlobTrain;
  args.insert(args.end(), {"--out", dir.string()});
  const Outcome o = invoke(args);
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"metrics.csv", "checkpoint.bin", "checkpoint_final.bin", "summary.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  const fs::path again = scratch("replay");
  const Outcome r = invoke({"replay", "--manifest", (dir / "manifest.json").string(), "--out", again.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "metrics.csv"), slurp(again / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "checkpoint.bin"), slurp(again / "checkpoint.bin"));

  const Outcome e = invoke({"eval", "--checkpoint", (dir / "checkpoint.bin").string(), "--dataset", "blobs",
                            "--input", "analog", "--blob-per-class", "24", "--seed", "5"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  const auto eval = nlohmann::json::parse(e.out);
  EXPECT_DOUBLE_EQ(eval["acc"].get<double>(), summary["best"]["acc"].get<double>());
}

TEST(Cli, ExplicitFlagsOverrideConfigFile) {
  const fs::path dir = scratch("config");
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "epochs = 3\nbatch = 8\nlr0 = 0.01\n";
  }
  auto args = kBlobTrain;
  args.insert(args.end(), {"--config", (dir / "run.cfg").string(), "--out", (dir / "out").string()});
  // kBlobTrain already sets --epochs 2 and --batch 16; only lr0 should come from the file.
  ASSERT_EQ(invoke(args).code, 0);
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  const auto& a = m["args"];
  auto value_of = [&](const std::string& flag) {
    for (std::size_t i = 0; i + 1 < a.size(); ++i)
      if (a[i] == flag) return a[i + 1].get<std::string>();
    return std::string();
  };
  EXPECT_EQ(value_of("--epochs"), "2");
  EXPECT_EQ(value_of("--batch"), "16");
  EXPECT_EQ(value_of("--lr0"), "0.01");
  std::istringstream csv(slurp(dir / "out" / "metrics.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3u);
}
