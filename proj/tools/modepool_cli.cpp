#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "modepool/harness.hpp"

using namespace modepool;

namespace {

ExperimentConfig load_config(const std::string& path, const std::string& output_dir_override) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : parse_config_file(path);
  if (!output_dir_override.empty()) cfg.output_dir = output_dir_override;
  cfg.validate();
  return cfg;
}

void report(const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << "wrote " << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mode-seeking pooling library and experiment harness"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string output_dir;
  app.add_option("--config,-c", config_path, "experiment config (JSON)")->configurable(false);
  app.add_option("--output-dir,-o", output_dir, "override the config output directory");

  auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset as XYZ + manifest");

  auto* tr = app.add_subcommand("train", "train one model per pooling operator");
  std::vector<std::string> train_ops;
  tr->add_option("--operator", train_ops, "pooling operator(s); default: config pool operator");

  auto* ev = app.add_subcommand("eval", "evaluate a trained model on the clean test split");
  std::string eval_op;
  ev->add_option("--operator", eval_op, "pooling operator; default: config pool operator");

  auto* sw = app.add_subcommand("sweep", "robustness sweep over one augmentation axis");
  std::string axis = "outliers";
  sw->add_option("--axis", axis, "outliers|noise|dropout|clustered")->required();

  auto* th = app.add_subcommand("threshold-sweep",
                                "re-evaluate histogram pooling across bin half-widths");
  std::vector<double> thresholds;
  th->add_option("--thresholds", thresholds, "half-width list; default: config thresholds");

  auto* be = app.add_subcommand("bench", "pooling micro-benchmarks");
  std::vector<std::string> presets;
  be->add_option("--preset", presets, "shape preset NxD or NxDxB (default: 2048x1024, 512x512)");
  int reps = 20;
  be->add_option("--reps", reps, "minimum repetitions per operator");

  auto* dg = app.add_subcommand("diag", "feature-histogram and pooled-difference diagnostics");
  std::string diag_cloud, diag_aug;
  dg->add_option("--cloud", diag_cloud, "clean cloud (XYZ); default: config test split");
  dg->add_option("--augmented", diag_aug, "augmented cloud (XYZ)");

  auto* dm = app.add_subcommand("demo-mmap", "2-D mixture density / marginal-peak demo");
  MmapDemoOptions mopt;
  std::string mixture_file;
  dm->add_option("--preset", mopt.preset, "built-in mixture: fig3 or fig4");
  dm->add_option("--mixture", mixture_file, "custom mixture description (JSON)");
  dm->add_option("--samples", mopt.samples, "samples per seed");
  dm->add_option("--seeds", mopt.seeds, "number of seeds");
  dm->add_option("--bins", mopt.bins, "histogram bins per axis");
  dm->add_option("--range", [&](const std::vector<std::string>& v) {
      if (v.size() != 2) return false;
      mopt.range_lo = std::stod(v[0]);
      mopt.range_hi = std::stod(v[1]);
      return true;
    }, "histogram range lo hi")->expected(2);
  dm->add_option("--grid", mopt.grid, "density grid resolution");
  dm->add_option("--seed", mopt.base_seed, "base sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig cfg = load_config(config_path, output_dir);
    if (gen->parsed()) {
      const auto files = cmd_gen_data(cfg);
      std::cout << "wrote " << files.size() - 1 << " clouds + manifest under "
                << resolve_output_dir(cfg) << "/dataset\n";
    } else if (tr->parsed()) {
      report(cmd_train(cfg, train_ops));
    } else if (ev->parsed()) {
      std::cout << "wrote " << cmd_eval(cfg, eval_op) << "\n";
    } else if (sw->parsed()) {
      std::cout << "wrote " << cmd_sweep(cfg, sweep_axis_from_string(axis)) << "\n";
    } else if (th->parsed()) {
      ExperimentConfig tcfg = cfg;
      if (!thresholds.empty()) {
        tcfg.sweep.thresholds = thresholds;
        tcfg.validate();
      }
      std::cout << "wrote " << cmd_threshold_sweep(tcfg) << "\n";
    } else if (be->parsed()) {
      std::cout << "wrote " << cmd_bench(cfg, presets, reps) << "\n";
    } else if (dg->parsed()) {
      std::optional<std::string> c, a;
      if (!diag_cloud.empty()) c = diag_cloud;
      if (!diag_aug.empty()) a = diag_aug;
      report(cmd_diag(cfg, c, a));
    } else if (dm->parsed()) {
      if (!mixture_file.empty()) mopt.mixture_file = mixture_file;
      report(cmd_demo_mmap(cfg, mopt));
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
