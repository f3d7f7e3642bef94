#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "modepool/cloud.hpp"
#include "modepool/density.hpp"
#include "modepool/nn.hpp"
#include "modepool/pooling.hpp"

namespace modepool {

struct DatasetSpec {
  std::vector<ShapeClass> classes = {ShapeClass::sphere, ShapeClass::box, ShapeClass::cylinder,
                                     ShapeClass::cone, ShapeClass::torus};
  int points = 512;
  int train_per_class = 100;
  int test_per_class = 20;
  std::uint64_t seed = 42;
};

struct ModelSpec {
  std::vector<int> mlp_widths = {32, 64, 128};
  std::vector<int> fc_hidden = {64};
  bool with_normals = false;
  int normals_k = 20;
  std::uint64_t init_seed = 7;
};

struct SweepSpec {
  std::vector<std::string> operators = {"max", "histogram", "ransac", "m_estimator"};
  std::vector<double> outlier_levels = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> noise_levels = {0.0, 0.02, 0.04, 0.06, 0.08, 0.1};
  std::vector<double> dropout_levels = {0.0, 0.5, 0.7, 0.9};
  std::vector<int> clustered_levels = {200, 300, 400};
  std::string clustered_points_mode = "total";  // "total" or "per_surface"
  std::vector<double> thresholds = {0.01, 0.05, 0.1, 0.13, 0.143, 0.15, 0.2, 0.5, 1.0, 5.0};
  double threshold_outlier_ratio = 0.5;
  double threshold_noise_sigma = 0.1;
  std::uint64_t eval_seed = 9;
  int diag_dims = 50;
  double diag_outlier_ratio = 0.5;
  std::string diag_operator = "max";  // whose feature map the diagnostics use
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelSpec model;
  PoolConfig pool;
  TrainConfig train;
  SweepSpec sweep;
  std::string output_dir = "out";

  void validate() const;
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json_text(const std::string& text);

// Canonical serialized form of the parsed config (defaults filled in, keys
// sorted); its FNV-1a hash stamps every CSV.
std::string canonical_config_json(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Output root; the MODEPOOL_OUT environment variable, when set, overrides the
// parent of cfg.output_dir.
std::string resolve_output_dir(const ExperimentConfig& cfg);

// deterministic dataset derivation (shared by gen-data / train / eval / sweep)
std::vector<PointCloud> make_split(const DatasetSpec& spec, bool test_split);

enum class SweepAxis { outliers, noise, dropout, clustered };
SweepAxis sweep_axis_from_string(const std::string& s);
std::string to_string(SweepAxis a);

std::string model_path(const ExperimentConfig& cfg, const std::string& op_name);

// Command implementations backing the CLI (and the acceptance suite). Paths
// of the files they wrote are returned for test consumption.

std::vector<std::string> cmd_gen_data(const ExperimentConfig& cfg);

std::vector<std::string> cmd_train(const ExperimentConfig& cfg,
                                   const std::vector<std::string>& operators,
                                   bool quiet = false);

std::string cmd_eval(const ExperimentConfig& cfg, const std::string& op_name);

std::string cmd_sweep(const ExperimentConfig& cfg, SweepAxis axis);

std::string cmd_threshold_sweep(const ExperimentConfig& cfg);

std::string cmd_bench(const ExperimentConfig& cfg, const std::vector<std::string>& presets,
                      int min_reps = 20);

// Feature-histogram and pooled-difference diagnostics over the test split
// using the diag operator's trained feature map; when cloud_path/augmented
// are given, runs on that single pair instead.
std::vector<std::string> cmd_diag(const ExperimentConfig& cfg,
                                  const std::optional<std::string>& cloud_path = std::nullopt,
                                  const std::optional<std::string>& augmented_path = std::nullopt);

struct MmapDemoOptions {
  std::string preset = "fig3";                 // ignored when mixture_file is set
  std::optional<std::string> mixture_file;     // JSON mixture description
  int samples = 100000;
  int seeds = 20;
  int bins = 70;
  double range_lo = -5.0;
  double range_hi = 5.0;
  int grid = 200;
  std::uint64_t base_seed = 1;
};

std::vector<std::string> cmd_demo_mmap(const ExperimentConfig& cfg, const MmapDemoOptions& opt);

Mixture2D parse_mixture_json_text(const std::string& text);

// small CSV helpers shared with the tests
struct CsvTable {
  std::vector<std::string> comments;  // leading '#' lines
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
  double number(std::size_t row, const std::string& name) const;
  const std::string& cell(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

}  // namespace modepool
