#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mghf/image_io.hpp"
#include "mghf/weights_io.hpp"

using namespace mghf;
using nlohmann::json;

namespace {

std::string work_dir() {
  static const std::string dir = [] {
    std::string d = ::testing::TempDir() + "mghf_cli_work";
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, std::string* out = nullptr, std::string* err = nullptr) {
  static int counter = 0;
  const std::string so = work_dir() + "/stdout" + std::to_string(counter) + ".txt";
  const std::string se = work_dir() + "/stderr" + std::to_string(counter) + ".txt";
  ++counter;
  const std::string cmd = std::string(MGHF_CLI_PATH) + " " + args + " > " + so + " 2> " + se;
  const int rc = std::system(cmd.c_str());
  if (out) *out = slurp(so);
  if (err) *err = slurp(se);
  if (rc == -1 || !WIFEXITED(rc)) return -1;
  return WEXITSTATUS(rc);
}

struct SharedArtifacts {
  std::string weights;
  std::string image_a;
  std::string image_b;
};

const SharedArtifacts& artifacts() {
  static const SharedArtifacts a = [] {
    SharedArtifacts art;
    art.weights = work_dir() + "/base.mghf";
    DfeModel model = make_dfe(4, 1);
    Rng rng(mix_seed(17, 99));
    randomize_all(model, rng);
    save_weights(art.weights, collect_params(model));

    Rng img_rng(401);
    art.image_a = work_dir() + "/a.ppm";
    save_ppm(art.image_a, random_tensor(img_rng, 3, 24, 24, 0.0, 1.0));
    art.image_b = work_dir() + "/b.ppm";
    save_ppm(art.image_b, random_tensor(img_rng, 3, 24, 24, 0.0, 1.0));
    return art;
  }();
  return a;
}

std::string score_args(const std::string& gt, const std::string& sr, const std::string& extra) {
  return "score --gt " + gt + " --sr " + sr + " --weights " + artifacts().weights +
         " --set patch_size=8 --set stride=8 --set sinkhorn_max_iters=20000 " + extra;
}

}  // namespace

TEST(CliUsage, BadInvocationsExitOne) {
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("--bogus"), 1);
  EXPECT_EQ(run_cli("train"), 1);
  EXPECT_EQ(run_cli("score --gt x.ppm"), 1);
}

TEST(CliUsage, SetSyntaxAndUnknownKeys) {
  const std::string w = work_dir() + "/syntax.mghf";
  std::string err;
  EXPECT_EQ(run_cli("train --out " + w + " --iters 0 --set n_channels=4 --set gamma1", nullptr,
                    &err),
            1);
  EXPECT_NE(err.find("key=value"), std::string::npos);
  EXPECT_EQ(run_cli("train --out " + w + " --iters 0 --set nope=1", nullptr, &err), 2);
  EXPECT_NE(err.find("unknown key"), std::string::npos);
}

TEST(CliTrain, WritesWeightsAndCurve) {
  const std::string w = work_dir() + "/short.mghf";
  const std::string curve = work_dir() + "/short.csv";
  std::string err;
  const int rc = run_cli("train --out " + w + " --curve " + curve +
                             " --iters 4 --seed 3 --set n_channels=4 --set image_size=12"
                             " --set batch=2",
                         nullptr, &err);
  EXPECT_EQ(rc, 0);
  EXPECT_NE(err.find("parameters"), std::string::npos);

  auto arrays = load_weights(w);
  ASSERT_FALSE(arrays.empty());
  EXPECT_EQ(arrays[0].name, "expand.w");
  DfeModel model = dfe_from_arrays(arrays);
  EXPECT_EQ(model.n_channels, 4);

  const std::string csv = slurp(curve);
  EXPECT_EQ(csv.rfind("iter,loss,lr\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(CliTrain, ZeroIterationsStillWritesWeights) {
  const std::string w = work_dir() + "/zero.mghf";
  const std::string curve = work_dir() + "/zero.csv";
  const int rc = run_cli("train --out " + w + " --curve " + curve +
                         " --iters 0 --set n_channels=4 --set image_size=12");
  EXPECT_EQ(rc, 0);
  EXPECT_FALSE(load_weights(w).empty());
  EXPECT_EQ(slurp(curve), "iter,loss,lr\n");
}

TEST(CliTrain, SameSeedGivesByteIdenticalWeights) {
  const std::string common =
      " --iters 3 --set n_channels=4 --set image_size=12 --set batch=2 --seed 5";
  const std::string w1 = work_dir() + "/rep1.mghf";
  const std::string w2 = work_dir() + "/rep2.mghf";
  const std::string w3 = work_dir() + "/rep3.mghf";
  EXPECT_EQ(run_cli("train --out " + w1 + common), 0);
  EXPECT_EQ(run_cli("train --out " + w2 + common), 0);
  EXPECT_EQ(run_cli("train --out " + w3 +
                    " --iters 3 --set n_channels=4 --set image_size=12 --set batch=2 --seed 6"),
            0);
  EXPECT_EQ(slurp(w1), slurp(w2));
  EXPECT_NE(slurp(w1), slurp(w3));
}

TEST(CliScore, IdenticalImagesScoreZeroInPlainMode) {
  std::string out;
  const int rc =
      run_cli(score_args(artifacts().image_a, artifacts().image_a, "--mode n"), &out);
  ASSERT_EQ(rc, 0);
  const json j = json::parse(out);
  EXPECT_EQ(j["mode"], "n");
  EXPECT_EQ(j["mghf_n"].get<double>(), 0.0);
  EXPECT_TRUE(j["csc"].is_null());
  EXPECT_TRUE(j["lip"].is_null());
  EXPECT_TRUE(j["mghf_c"].is_null());
  EXPECT_TRUE(j["sinkhorn"].is_null());
  EXPECT_TRUE(j["durations_ms"].is_null());
}

TEST(CliScore, CompositeIdenticalImagesLeaveOnlyContrastiveTerm) {
  std::string out;
  const int rc = run_cli(score_args(artifacts().image_a, artifacts().image_a, "--mode c"), &out);
  ASSERT_EQ(rc, 0);
  const json j = json::parse(out);
  EXPECT_EQ(j["mode"], "c");
  EXPECT_EQ(j["mghf_n"].get<double>(), 0.0);
  EXPECT_EQ(j["csc"]["total"].get<double>(), 0.0);
  EXPECT_TRUE(j["sinkhorn"]["converged"].get<bool>());
  const double lip = j["lip"].get<double>();
  EXPECT_GE(lip, 0.0);
  EXPECT_DOUBLE_EQ(j["mghf_c"].get<double>(), 1e-3 * lip);
  EXPECT_EQ(j["pruning"]["m"].get<int>(), 2);
  ASSERT_EQ(j["pruning"]["selected"].size(), 2u);
  EXPECT_EQ(j["config"]["patch_size"], "8");
}

TEST(CliScore, DistinctImagesScorePositive) {
  std::string out;
  const int rc =
      run_cli(score_args(artifacts().image_a, artifacts().image_b, "--mode n"), &out);
  ASSERT_EQ(rc, 0);
  EXPECT_GT(json::parse(out)["mghf_n"].get<double>(), 0.0);
}

TEST(CliScore, ReportIsByteStableAndOutFileMatchesStdout) {
  const std::string out_path = work_dir() + "/report.json";
  std::string out1, out2;
  ASSERT_EQ(run_cli(score_args(artifacts().image_a, artifacts().image_b,
                               "--mode c --out " + out_path),
                    &out1),
            0);
  ASSERT_EQ(run_cli(score_args(artifacts().image_a, artifacts().image_b, "--mode c"), &out2), 0);
  EXPECT_EQ(out1, out2);
  EXPECT_EQ(slurp(out_path), out1);
}

TEST(CliScore, UnconvergedPlanRefusedUnlessAllowed) {
  const std::string base = "score --gt " + artifacts().image_a + " --sr " + artifacts().image_b +
                           " --weights " + artifacts().weights +
                           " --set patch_size=8 --set stride=8 --set sinkhorn_max_iters=1 --mode c";
  std::string err;
  EXPECT_EQ(run_cli(base, nullptr, &err), 3);
  EXPECT_NE(err.find("--allow-unconverged"), std::string::npos);

  std::string out;
  ASSERT_EQ(run_cli(base + " --allow-unconverged", &out), 0);
  const json j = json::parse(out);
  EXPECT_FALSE(j["sinkhorn"]["converged"].get<bool>());
  EXPECT_GT(j["sinkhorn"]["max_residual"].get<double>(), 0.0);
}

TEST(CliScore, TimingsAppearOnlyWhenRequested) {
  std::string out;
  ASSERT_EQ(run_cli(score_args(artifacts().image_a, artifacts().image_b, "--mode c --timings"),
                    &out),
            0);
  const json j = json::parse(out);
  ASSERT_TRUE(j["durations_ms"].is_object());
  EXPECT_GE(j["durations_ms"]["total"].get<double>(), 0.0);
  EXPECT_GE(j["durations_ms"]["extract"].get<double>(), 0.0);
}

TEST(CliScore, IoAndArgumentFailuresUseDistinctCodes) {
  std::string err;
  EXPECT_EQ(run_cli(score_args(artifacts().image_a, artifacts().image_a, "--mode x"), nullptr,
                    &err),
            1);
  EXPECT_NE(err.find("--mode"), std::string::npos);

  EXPECT_EQ(run_cli("score --gt " + artifacts().image_a + " --sr " + artifacts().image_a +
                        " --weights " + work_dir() + "/absent.mghf --mode n",
                    nullptr, &err),
            2);

  const std::string small = work_dir() + "/small.ppm";
  Rng rng(409);
  save_ppm(small, random_tensor(rng, 3, 12, 12, 0.0, 1.0));
  EXPECT_EQ(run_cli(score_args(artifacts().image_a, small, "--mode n"), nullptr, &err), 2);
  EXPECT_NE(err.find("differ"), std::string::npos);

  const std::string junk = work_dir() + "/junk.img";
  std::ofstream(junk) << "not an image";
  EXPECT_EQ(run_cli(score_args(junk, junk, "--mode n"), nullptr, &err), 2);
}

TEST(CliInspect, TableListsEveryMap) {
  std::string out;
  const int rc = run_cli("inspect --image " + artifacts().image_a + " --weights " +
                             artifacts().weights,
                         &out);
  ASSERT_EQ(rc, 0);
  const json j = json::parse(out);
  EXPECT_EQ(j["n_maps"].get<int>(), 4);
  EXPECT_EQ(j["m"].get<int>(), 2);
  ASSERT_EQ(j["maps"].size(), 4u);
  int selected = 0;
  for (const auto& row : j["maps"]) {
    const double h = row["h_norm_g"].get<double>();
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 1.0);
    EXPECT_EQ(row["h_norm_g"], row["h_norm_s"]);
    if (row["selected"].get<bool>()) {
      ++selected;
      EXPECT_GE(row["weight"].get<double>(), 1.0);
    } else {
      EXPECT_TRUE(row["weight"].is_null());
    }
  }
  EXPECT_EQ(selected, 2);
}

TEST(CliInspect, RejectsDegenerateBins) {
  std::string err;
  EXPECT_EQ(run_cli("inspect --image " + artifacts().image_a + " --weights " +
                        artifacts().weights + " --bins 1",
                    nullptr, &err),
            1);
  EXPECT_NE(err.find("--bins"), std::string::npos);
}

TEST(CliGradcheck, ZeroToleranceFailsEveryRow) {
  std::string out;
  EXPECT_EQ(run_cli("gradcheck --tol 0", &out), 3);
  EXPECT_NE(out.find("FAIL"), std::string::npos);
  EXPECT_EQ(out.find("PASS"), std::string::npos);
}

TEST(CliGradcheck, DefaultTolerancesPass) {
  std::string out;
  EXPECT_EQ(run_cli("gradcheck --seed 2", &out), 0);
  EXPECT_NE(out.find("all "), std::string::npos);
  EXPECT_EQ(out.find("FAIL"), std::string::npos);
}

TEST(CliConfig, FileAppliesBeforeFlags) {
  const std::string cfg = work_dir() + "/score.cfg";
  std::ofstream(cfg) << "gamma1=9\npatch_size=8\nstride=8\nsinkhorn_max_iters=20000\n";
  std::string out;
  const int rc = run_cli("score --gt " + artifacts().image_a + " --sr " + artifacts().image_a +
                             " --weights " + artifacts().weights +
                             " --config " + cfg + " --set gamma1=4 --mode c",
                         &out);
  ASSERT_EQ(rc, 0);
  const json j = json::parse(out);
  EXPECT_EQ(j["config"]["gamma1"], "4");
  EXPECT_EQ(j["gammas"][0].get<double>(), 4.0);
  EXPECT_EQ(j["config"]["patch_size"], "8");
}
