#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mghf/gradcheck_suite.hpp"
#include "mghf/mghf.hpp"

namespace {

using namespace mghf;

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw IoError("short write to " + path);
}

void apply_overrides(Options& opts, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("--set expects key=value, got '" + kv + "'");
    set_option(opts, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

int cmd_train(const std::string& out_path, const std::string& curve_path, Options& opts) {
  DfeModel model = make_dfe(opts.n_channels, opts.n_blocks, opts.hidden, opts.scale_clamp);
  Rng rng(mix_seed(opts.train.seed, 0x1417));
  init_identity(model, rng);
  ClassifierHead head =
      make_classifier_head(opts.n_channels, opts.image_size, opts.image_size, opts.classes, rng);

  ToyDataset data;
  data.classes = opts.classes;
  data.height = opts.image_size;
  data.width = opts.image_size;
  data.seed = opts.train.seed;

  TrainResult result = train(model, head, data, opts.train);
  save_weights(out_path, collect_params(model));
  if (!curve_path.empty()) write_text(curve_path, curve_csv(result.curve));

  const DfeParamReport pr = dfe_param_report(model);
  std::cerr << "trained " << opts.train.total_iters << " iterations; extractor has "
            << pr.param_count << " parameters (" << pr.bytes << " bytes as f32)\n";
  if (!result.curve.empty())
    std::cerr << "final loss " << result.curve.back().loss << ", final lr "
              << result.curve.back().lr << "\n";
  return 0;
}

int cmd_score(const std::string& gt_path, const std::string& sr_path,
              const std::string& weights_path, const std::string& mode,
              const std::string& out_path, bool no_lip, bool allow_unconverged, bool timings,
              Options& opts) {
  if (mode != "n" && mode != "c") throw ArgumentError("--mode must be n or c, got '" + mode + "'");
  DfeModel model = load_dfe(weights_path, opts.scale_clamp);
  opts.n_channels = model.n_channels;
  opts.n_blocks = static_cast<int>(model.blocks.size());
  opts.hidden = model.blocks.empty() ? 0 : model.blocks[0].scale_net.conv1.out_ch;

  Tensor gt = load_image(gt_path);
  Tensor sr = load_image(sr_path);
  if (!gt.same_shape(sr))
    throw IoError("score: image sizes differ: " + gt_path + " is " + gt.shape_str() + ", " +
                  sr_path + " is " + sr.shape_str());

  if (no_lip) opts.loss.lip_enabled = false;

  LossReport report;
  if (mode == "n") {
    report = mghf_n_image(model, gt, sr, timings).report;
  } else {
    const int in_dim = opts.loss.monce.patch_size * opts.loss.monce.patch_size;
    EmbeddingHead head = make_embedding_head(in_dim, opts.loss.embed_hidden, opts.loss.embed_dim,
                                             opts.loss.embed_seed);
    report = mghf_c_image(model, gt, sr, opts.loss, head, timings).report;
    if (report.has_lip && !report.lip_converged && !allow_unconverged)
      throw NumericalError(
          "score: sinkhorn did not converge (max residual " +
          std::to_string(report.lip_max_residual) +
          "); raise sinkhorn_max_iters or pass --allow-unconverged to accept the plan");
  }

  const std::string json = score_report_json(report, opts);
  std::cout << json << "\n";
  if (!out_path.empty()) write_text(out_path, json + "\n");
  return 0;
}

int cmd_inspect(const std::string& image_path, const std::string& weights_path,
                const std::string& out_path, Options& opts) {
  DfeModel model = load_dfe(weights_path, opts.scale_clamp);
  opts.n_channels = model.n_channels;
  opts.n_blocks = static_cast<int>(model.blocks.size());
  opts.hidden = model.blocks.empty() ? 0 : model.blocks[0].scale_net.conv1.out_ch;

  Tensor img = load_image(image_path);
  FeatureStack maps = dfe_extract(model, img);
  ImportanceProfile profile = compute_profile(maps, maps, opts.loss.pruning);

  const std::string json = inspect_report_json(profile, opts);
  std::cout << json << "\n";
  if (!out_path.empty()) write_text(out_path, json + "\n");
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tol_override, bool has_tol) {
  GradCheckTols tols;
  if (has_tol) {
    tols.per_loss = tol_override;
    tols.end_to_end = tol_override;
    tols.end_to_end_lip = tol_override;
  }
  GradCheckSummary summary = run_gradcheck(seed, tols);
  std::printf("%-14s %-8s %-12s %-10s %s\n", "check", "seed", "rel_error", "tol", "status");
  int failures = 0;
  for (const auto& row : summary.rows) {
    std::printf("%-14s %-8llu %-12.3e %-10.1e %s\n", row.name.c_str(),
                static_cast<unsigned long long>(row.seed % 100000000ull), row.rel_error, row.tol,
                row.pass ? "PASS" : "FAIL");
    if (!row.pass) ++failures;
  }
  if (failures > 0)
    throw NumericalError("gradcheck: " + std::to_string(failures) + " of " +
                         std::to_string(summary.rows.size()) + " checks failed");
  std::printf("all %zu checks passed\n", summary.rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"detail-feature perceptual losses: training, scoring, inspection"};
  app.require_subcommand(1);

  mghf::Options opts;
  std::string config_path;
  std::vector<std::string> sets;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--set", sets, "override a single config key (key=value, repeatable)");
  };

  auto* train_cmd = app.add_subcommand("train", "pretrain an extractor on the synthetic task");
  std::string train_out, train_curve;
  std::uint64_t train_seed = 0;
  long train_iters = -1;
  int train_classes = -1;
  train_cmd->add_option("--out", train_out, "output weights file")->required();
  train_cmd->add_option("--curve", train_curve, "loss-curve CSV path");
  auto* opt_seed = train_cmd->add_option("--seed", train_seed, "training seed");
  auto* opt_iters = train_cmd->add_option("--iters", train_iters, "iterations to run");
  auto* opt_classes = train_cmd->add_option("--classes", train_classes, "synthetic class count");
  add_common(train_cmd);

  auto* score_cmd = app.add_subcommand("score", "score a reconstruction against ground truth");
  std::string gt_path, sr_path, weights_path, mode = "c", score_out;
  bool no_lip = false, allow_unconverged = false, timings = false;
  score_cmd->add_option("--gt", gt_path, "ground-truth image (PNG or PPM)")->required();
  score_cmd->add_option("--sr", sr_path, "reconstructed image (PNG or PPM)")->required();
  score_cmd->add_option("--weights", weights_path, "extractor weights")->required();
  score_cmd->add_option("--mode", mode, "n (plain feature MSE) or c (composite)");
  score_cmd->add_option("--out", score_out, "also write the JSON report here");
  score_cmd->add_flag("--no-lip", no_lip, "drop the patch-contrastive term");
  score_cmd->add_flag("--allow-unconverged", allow_unconverged,
                      "accept a transport plan that did not reach tolerance");
  score_cmd->add_flag("--timings", timings, "measure and embed wall-clock durations");
  add_common(score_cmd);

  auto* inspect_cmd = app.add_subcommand("inspect", "per-map entropy and importance table");
  std::string inspect_image, inspect_weights, inspect_out;
  int inspect_bins = -1;
  inspect_cmd->add_option("--image", inspect_image, "input image (PNG or PPM)")->required();
  inspect_cmd->add_option("--weights", inspect_weights, "extractor weights")->required();
  inspect_cmd->add_option("--out", inspect_out, "also write the JSON report here");
  auto* opt_bins = inspect_cmd->add_option("--bins", inspect_bins, "histogram buckets");
  add_common(inspect_cmd);

  auto* grad_cmd = app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
  std::uint64_t grad_seed = 0;
  double grad_tol = 0.0;
  grad_cmd->add_option("--seed", grad_seed, "base seed for the probe points");
  auto* opt_tol = grad_cmd->add_option("--tol", grad_tol, "override every tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (!config_path.empty()) mghf::apply_config_file(opts, config_path);
    apply_overrides(opts, sets);

    if (train_cmd->parsed()) {
      if (opt_seed->count()) opts.train.seed = train_seed;
      if (opt_iters->count()) opts.train.total_iters = train_iters;
      if (opt_classes->count()) opts.classes = train_classes;
      return cmd_train(train_out, train_curve, opts);
    }
    if (score_cmd->parsed())
      return cmd_score(gt_path, sr_path, weights_path, mode, score_out, no_lip, allow_unconverged,
                       timings, opts);
    if (inspect_cmd->parsed()) {
      if (opt_bins->count()) {
        if (inspect_bins < 2) throw mghf::ArgumentError("--bins must be >= 2");
        opts.loss.pruning.bins = inspect_bins;
      }
      return cmd_inspect(inspect_image, inspect_weights, inspect_out, opts);
    }
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_seed, grad_tol, opt_tol->count() > 0);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const mghf::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mghf::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mghf::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mghf::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
