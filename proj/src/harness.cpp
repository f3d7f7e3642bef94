#include "modepool/harness.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "modepool/cloud_io.hpp"
#include "modepool/estimators.hpp"

namespace modepool {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

void allow_keys(const json& j, const std::vector<std::string>& keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw config_error(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void require_ascending(const std::vector<double>& v, const std::string& name) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) throw config_error(name + ": levels must be sorted ascending");
  }
}

void require_ascending(const std::vector<int>& v, const std::string& name) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) throw config_error(name + ": levels must be sorted ascending");
  }
}

json pool_to_json(const PoolConfig& p) {
  json j;
  j["operator"] = to_string(p.op);
  j["bins"] = p.bins;
  j["range"] = {p.range_lo, p.range_hi};
  j["histogram_value"] =
      p.histogram_value == HistogramValue::member_mean ? "member_mean" : "bin_center";
  j["epsilon"] = p.epsilon;
  j["hypothesis_fraction"] = p.hypothesis_fraction;
  j["ransac_value"] = p.ransac_value == RansacValue::hypothesis ? "hypothesis" : "inlier_mean";
  j["seed"] = p.seed;
  j["rho"] = to_string(p.rho);
  j["tau"] = p.tau;
  j["max_iters"] = p.max_iters;
  j["tol"] = p.tol;
  j["grad_mode"] = to_string(p.grad_mode);
  return j;
}

PoolConfig pool_from_json(const json& j) {
  allow_keys(j,
             {"operator", "bins", "range", "histogram_value", "epsilon", "hypothesis_fraction",
              "ransac_value", "seed", "rho", "tau", "max_iters", "tol", "grad_mode"},
             "pool");
  PoolConfig p;
  if (j.contains("operator")) p.op = pool_operator_from_string(j.at("operator").get<std::string>());
  read_field(j, "bins", p.bins);
  if (j.contains("range")) {
    const auto r = j.at("range");
    if (!r.is_array() || r.size() != 2) throw config_error("range: expected [lo, hi]");
    p.range_lo = r[0].get<double>();
    p.range_hi = r[1].get<double>();
  }
  if (j.contains("histogram_value")) {
    const auto s = j.at("histogram_value").get<std::string>();
    if (s == "member_mean") p.histogram_value = HistogramValue::member_mean;
    else if (s == "bin_center") p.histogram_value = HistogramValue::bin_center;
    else throw config_error("histogram_value: unknown value '" + s + "'");
  }
  read_field(j, "epsilon", p.epsilon);
  read_field(j, "hypothesis_fraction", p.hypothesis_fraction);
  if (j.contains("ransac_value")) {
    const auto s = j.at("ransac_value").get<std::string>();
    if (s == "hypothesis") p.ransac_value = RansacValue::hypothesis;
    else if (s == "inlier_mean") p.ransac_value = RansacValue::inlier_mean;
    else throw config_error("ransac_value: unknown value '" + s + "'");
  }
  read_field(j, "seed", p.seed);
  if (j.contains("rho")) p.rho = rho_kind_from_string(j.at("rho").get<std::string>());
  read_field(j, "tau", p.tau);
  read_field(j, "max_iters", p.max_iters);
  read_field(j, "tol", p.tol);
  if (j.contains("grad_mode")) p.grad_mode = grad_mode_from_string(j.at("grad_mode").get<std::string>());
  return p;
}

// CSV assembly with deterministic provenance comments
class CsvWriter {
 public:
  CsvWriter(std::string command, const ExperimentConfig& cfg) {
    buf_ += "# tool=modepool\n";
    buf_ += "# command=" + command + "\n";
    buf_ += "# config_hash=" + hex64(config_hash(cfg)) + "\n";
  }

  void comment(const std::string& line) { buf_ += "# " + line + "\n"; }

  void header(const std::vector<std::string>& cols) { row_of(cols); }

  void row(const std::vector<std::string>& cells) { row_of(cells); }

  static std::string num(double v) { return format_double(v); }

  void write(const std::string& path) const { atomic_write_file(path, buf_); }

 private:
  void row_of(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) buf_ += ',';
      buf_ += cells[i];
    }
    buf_ += '\n';
  }
  std::string buf_;
};

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.classes.empty()) throw config_error("classes: must not be empty");
  if (dataset.points < 8) throw config_error("points: must be >= 8");
  if (dataset.train_per_class < 1) throw config_error("train_per_class: must be >= 1");
  if (dataset.test_per_class < 1) throw config_error("test_per_class: must be >= 1");
  if (model.mlp_widths.empty()) throw config_error("mlp_widths: must not be empty");
  for (int w : model.mlp_widths)
    if (w < 1) throw config_error("mlp_widths: widths must be >= 1");
  for (int w : model.fc_hidden)
    if (w < 1) throw config_error("fc_hidden: widths must be >= 1");
  if (model.normals_k < 3) throw config_error("normals_k: must be >= 3");
  train.validate();
  for (const auto& op : sweep.operators) pool_operator_from_string(op);
  pool_operator_from_string(sweep.diag_operator);
  require_ascending(sweep.outlier_levels, "outlier_levels");
  require_ascending(sweep.noise_levels, "noise_levels");
  require_ascending(sweep.dropout_levels, "dropout_levels");
  require_ascending(sweep.clustered_levels, "clustered_levels");
  require_ascending(sweep.thresholds, "thresholds");
  if (sweep.clustered_points_mode != "total" && sweep.clustered_points_mode != "per_surface")
    throw config_error("clustered_points_mode: must be 'total' or 'per_surface'");
  if (sweep.diag_dims < 1) throw config_error("diag_dims: must be >= 1");
  if (output_dir.empty()) throw config_error("output_dir: must not be empty");
  // every operator that can run must have a valid parameterization
  for (const auto& name : sweep.operators) {
    PoolConfig p = pool;
    p.op = pool_operator_from_string(name);
    p.validate();
  }
  pool.validate();
}

ExperimentConfig parse_config_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config: invalid JSON: ") + e.what());
  }
  allow_keys(j, {"dataset", "model", "pool", "train", "sweep", "output_dir"}, "config");

  ExperimentConfig cfg;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      allow_keys(d, {"classes", "points", "train_per_class", "test_per_class", "seed"},
                 "dataset");
      if (d.contains("classes")) {
        cfg.dataset.classes.clear();
        for (const auto& c : d.at("classes"))
          cfg.dataset.classes.push_back(shape_class_from_string(c.get<std::string>()));
      }
      read_field(d, "points", cfg.dataset.points);
      read_field(d, "train_per_class", cfg.dataset.train_per_class);
      read_field(d, "test_per_class", cfg.dataset.test_per_class);
      read_field(d, "seed", cfg.dataset.seed);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      allow_keys(m, {"mlp_widths", "fc_hidden", "with_normals", "normals_k", "init_seed"},
                 "model");
      read_field(m, "mlp_widths", cfg.model.mlp_widths);
      read_field(m, "fc_hidden", cfg.model.fc_hidden);
      read_field(m, "with_normals", cfg.model.with_normals);
      read_field(m, "normals_k", cfg.model.normals_k);
      read_field(m, "init_seed", cfg.model.init_seed);
    }
    if (j.contains("pool")) cfg.pool = pool_from_json(j.at("pool"));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      allow_keys(t,
                 {"learning_rate", "epochs", "batch_size", "optimizer", "seed",
                  "rotate_augment", "parallelism"},
                 "train");
      read_field(t, "learning_rate", cfg.train.learning_rate);
      read_field(t, "epochs", cfg.train.epochs);
      read_field(t, "batch_size", cfg.train.batch_size);
      if (t.contains("optimizer"))
        cfg.train.optimizer = optimizer_from_string(t.at("optimizer").get<std::string>());
      read_field(t, "seed", cfg.train.seed);
      read_field(t, "rotate_augment", cfg.train.rotate_augment);
      read_field(t, "parallelism", cfg.train.parallelism);
    }
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      allow_keys(s,
                 {"operators", "outlier_levels", "noise_levels", "dropout_levels",
                  "clustered_levels", "clustered_points_mode", "thresholds",
                  "threshold_outlier_ratio", "threshold_noise_sigma", "eval_seed", "diag_dims",
                  "diag_outlier_ratio", "diag_operator"},
                 "sweep");
      read_field(s, "operators", cfg.sweep.operators);
      read_field(s, "outlier_levels", cfg.sweep.outlier_levels);
      read_field(s, "noise_levels", cfg.sweep.noise_levels);
      read_field(s, "dropout_levels", cfg.sweep.dropout_levels);
      read_field(s, "clustered_levels", cfg.sweep.clustered_levels);
      read_field(s, "clustered_points_mode", cfg.sweep.clustered_points_mode);
      read_field(s, "thresholds", cfg.sweep.thresholds);
      read_field(s, "threshold_outlier_ratio", cfg.sweep.threshold_outlier_ratio);
      read_field(s, "threshold_noise_sigma", cfg.sweep.threshold_noise_sigma);
      read_field(s, "eval_seed", cfg.sweep.eval_seed);
      read_field(s, "diag_dims", cfg.sweep.diag_dims);
      read_field(s, "diag_outlier_ratio", cfg.sweep.diag_outlier_ratio);
      read_field(s, "diag_operator", cfg.sweep.diag_operator);
    }
    read_field(j, "output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json_text(ss.str());
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
  json j;
  json d;
  json classes = json::array();
  for (auto c : cfg.dataset.classes) classes.push_back(to_string(c));
  d["classes"] = classes;
  d["points"] = cfg.dataset.points;
  d["train_per_class"] = cfg.dataset.train_per_class;
  d["test_per_class"] = cfg.dataset.test_per_class;
  d["seed"] = cfg.dataset.seed;
  j["dataset"] = d;

  json m;
  m["mlp_widths"] = cfg.model.mlp_widths;
  m["fc_hidden"] = cfg.model.fc_hidden;
  m["with_normals"] = cfg.model.with_normals;
  m["normals_k"] = cfg.model.normals_k;
  m["init_seed"] = cfg.model.init_seed;
  j["model"] = m;

  j["pool"] = pool_to_json(cfg.pool);

  json t;
  t["learning_rate"] = cfg.train.learning_rate;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["optimizer"] = to_string(cfg.train.optimizer);
  t["seed"] = cfg.train.seed;
  t["rotate_augment"] = cfg.train.rotate_augment;
  j["train"] = t;

  json s;
  s["operators"] = cfg.sweep.operators;
  s["outlier_levels"] = cfg.sweep.outlier_levels;
  s["noise_levels"] = cfg.sweep.noise_levels;
  s["dropout_levels"] = cfg.sweep.dropout_levels;
  s["clustered_levels"] = cfg.sweep.clustered_levels;
  s["clustered_points_mode"] = cfg.sweep.clustered_points_mode;
  s["thresholds"] = cfg.sweep.thresholds;
  s["threshold_outlier_ratio"] = cfg.sweep.threshold_outlier_ratio;
  s["threshold_noise_sigma"] = cfg.sweep.threshold_noise_sigma;
  s["eval_seed"] = cfg.sweep.eval_seed;
  s["diag_dims"] = cfg.sweep.diag_dims;
  s["diag_outlier_ratio"] = cfg.sweep.diag_outlier_ratio;
  s["diag_operator"] = cfg.sweep.diag_operator;
  j["sweep"] = s;

  // output_dir stays out: the hash identifies the experiment, not where its
  // files land
  return j.dump();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a(canonical_config_json(cfg));
}

std::string resolve_output_dir(const ExperimentConfig& cfg) {
  const char* root = std::getenv("MODEPOOL_OUT");
  if (root && *root) return (fs::path(root) / cfg.output_dir).string();
  return cfg.output_dir;
}

std::vector<PointCloud> make_split(const DatasetSpec& spec, bool test_split) {
  std::vector<PointCloud> out;
  const int per_class = test_split ? spec.test_per_class : spec.train_per_class;
  out.reserve(spec.classes.size() * static_cast<std::size_t>(per_class));
  for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
    for (int i = 0; i < per_class; ++i) {
      const std::uint64_t seed =
          mix_seed(mix_seed(spec.seed, ci), static_cast<std::uint64_t>(i) * 2 + (test_split ? 1 : 0));
      PointCloud cloud = generate_shape(spec.classes[ci], spec.points, seed);
      cloud.label = static_cast<int>(ci);
      out.push_back(std::move(cloud));
    }
  }
  return out;
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "outliers") return SweepAxis::outliers;
  if (s == "noise") return SweepAxis::noise;
  if (s == "dropout") return SweepAxis::dropout;
  if (s == "clustered") return SweepAxis::clustered;
  throw config_error("axis: unknown sweep axis '" + s + "'");
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::outliers: return "outliers";
    case SweepAxis::noise: return "noise";
    case SweepAxis::dropout: return "dropout";
    case SweepAxis::clustered: return "clustered";
  }
  return "?";
}

std::string model_path(const ExperimentConfig& cfg, const std::string& op_name) {
  return (fs::path(resolve_output_dir(cfg)) / "models" / (op_name + ".mpm")).string();
}

namespace {

PoolConfig pool_for_operator(const ExperimentConfig& cfg, const std::string& op_name) {
  PoolConfig p = cfg.pool;
  p.op = pool_operator_from_string(op_name);
  return p;
}

PointCloud prepare_for_model(const ExperimentConfig& cfg, const ClassifierModel& model,
                             PointCloud cloud) {
  if (model.input_dim == 6) cloud = estimate_normals(cloud, cfg.model.normals_k);
  return cloud;
}

struct EvalRow {
  double accuracy = 0.0;
  long correct = 0;
  long total = 0;
  std::vector<long> class_correct;
  std::vector<long> class_total;
  double mean_pool_dist = 0.0;
};

// Evaluates a model over augmented copies of the test clouds; the clean
// pooled features are supplied so the pooled-output displacement can be
// reported alongside the accuracy.
EvalRow evaluate_level(const ExperimentConfig& cfg, const ClassifierModel& model,
                       const std::vector<PointCloud>& test,
                       const std::vector<Eigen::VectorXd>& clean_pooled,
                       const std::function<PointCloud(const PointCloud&, std::size_t)>& augment) {
  EvalRow row;
  const std::size_t classes = cfg.dataset.classes.size();
  row.class_correct.assign(classes, 0);
  row.class_total.assign(classes, 0);
  double dist_sum = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    PointCloud cloud = prepare_for_model(cfg, model, augment(test[i], i));
    ForwardCache cache;
    const Eigen::VectorXd logits = forward(model, cloud, &cache);
    Eigen::Index am = 0;
    logits.maxCoeff(&am);
    const bool ok = static_cast<int>(am) == test[i].label;
    row.correct += ok;
    row.class_correct[test[i].label] += ok;
    row.class_total[test[i].label] += 1;
    dist_sum += (cache.pooled.output - clean_pooled[i]).norm();
  }
  row.total = static_cast<long>(test.size());
  row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.total);
  row.mean_pool_dist = dist_sum / static_cast<double>(test.size());
  return row;
}

std::vector<Eigen::VectorXd> clean_pooled_features(const ExperimentConfig& cfg,
                                                   const ClassifierModel& model,
                                                   const std::vector<PointCloud>& test) {
  std::vector<Eigen::VectorXd> out(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    ForwardCache cache;
    forward(model, prepare_for_model(cfg, model, test[i]), &cache);
    out[i] = cache.pooled.output;
  }
  return out;
}

std::vector<std::string> class_columns(const ExperimentConfig& cfg) {
  std::vector<std::string> cols;
  for (auto c : cfg.dataset.classes) cols.push_back("acc_" + to_string(c));
  return cols;
}

void append_class_cells(std::vector<std::string>& cells, const EvalRow& row) {
  for (std::size_t c = 0; c < row.class_total.size(); ++c) {
    cells.push_back(CsvWriter::num(row.class_total[c] == 0
                                       ? 0.0
                                       : static_cast<double>(row.class_correct[c]) /
                                             static_cast<double>(row.class_total[c])));
  }
}

}  // namespace

std::vector<std::string> cmd_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out_dir = fs::path(resolve_output_dir(cfg)) / "dataset";
  std::vector<std::string> written;

  CsvWriter manifest("gen-data", cfg);
  manifest.header({"file", "split", "class", "label", "points", "seed"});

  for (int split = 0; split < 2; ++split) {
    const bool test_split = split == 1;
    const char* split_name = test_split ? "test" : "train";
    const int per_class = test_split ? cfg.dataset.test_per_class : cfg.dataset.train_per_class;
    for (std::size_t ci = 0; ci < cfg.dataset.classes.size(); ++ci) {
      for (int i = 0; i < per_class; ++i) {
        const std::uint64_t seed = mix_seed(mix_seed(cfg.dataset.seed, ci),
                                            static_cast<std::uint64_t>(i) * 2 + (test_split ? 1 : 0));
        PointCloud cloud = generate_shape(cfg.dataset.classes[ci], cfg.dataset.points, seed);
        const std::string name = to_string(cfg.dataset.classes[ci]) + "_" + split_name + "_" +
                                 std::to_string(i) + ".xyz";
        const std::string path = (out_dir / name).string();
        save_xyz(cloud, path);
        written.push_back(path);
        manifest.row({name, split_name, to_string(cfg.dataset.classes[ci]), std::to_string(ci),
                      std::to_string(cfg.dataset.points), std::to_string(seed)});
      }
    }
  }
  const std::string manifest_path = (out_dir / "manifest.csv").string();
  manifest.write(manifest_path);
  written.push_back(manifest_path);
  return written;
}

std::vector<std::string> cmd_train(const ExperimentConfig& cfg,
                                   const std::vector<std::string>& operators, bool quiet) {
  cfg.validate();
  const auto ops = operators.empty() ? std::vector<std::string>{to_string(cfg.pool.op)} : operators;
  std::vector<PointCloud> train_set = make_split(cfg.dataset, false);
  if (cfg.model.with_normals) {
    for (auto& c : train_set) c = estimate_normals(c, cfg.model.normals_k);
  }

  std::vector<std::string> written;
  for (const auto& op_name : ops) {
    PoolConfig pool = pool_for_operator(cfg, op_name);
    pool.validate();
    ClassifierModel model = make_classifier(cfg.model.with_normals ? 6 : 3, cfg.model.mlp_widths,
                                            cfg.model.fc_hidden,
                                            static_cast<int>(cfg.dataset.classes.size()), pool,
                                            cfg.model.init_seed);
    const auto curve = train(model, train_set, cfg.train);
    if (!quiet) {
      const int cadence = std::max(1, cfg.train.epochs / 10);
      for (const auto& st : curve) {
        if (st.epoch % cadence == 0 || st.epoch == cfg.train.epochs) {
          std::cout << "train[" << op_name << "] epoch " << st.epoch << "/" << cfg.train.epochs
                    << " loss=" << st.loss << " acc=" << st.accuracy << "\n";
        }
      }
    }

    const std::string mpath = model_path(cfg, op_name);
    save_model(model, mpath);
    written.push_back(mpath);

    CsvWriter csv("train", cfg);
    csv.comment("operator=" + op_name);
    csv.header({"epoch", "loss", "accuracy"});
    for (const auto& st : curve) {
      csv.row({std::to_string(st.epoch), CsvWriter::num(st.loss), CsvWriter::num(st.accuracy)});
    }
    const std::string cpath =
        (fs::path(resolve_output_dir(cfg)) / ("train_" + op_name + ".csv")).string();
    csv.write(cpath);
    written.push_back(cpath);
  }
  return written;
}

std::string cmd_eval(const ExperimentConfig& cfg, const std::string& op_name) {
  cfg.validate();
  const std::string name = op_name.empty() ? to_string(cfg.pool.op) : op_name;
  ClassifierModel model = load_model(model_path(cfg, name), pool_operator_from_string(name));
  const std::vector<PointCloud> test = make_split(cfg.dataset, true);
  const auto clean_pooled = clean_pooled_features(cfg, model, test);
  EvalRow row = evaluate_level(cfg, model, test, clean_pooled,
                               [](const PointCloud& c, std::size_t) { return c; });

  CsvWriter csv("eval", cfg);
  std::vector<std::string> cols = {"operator", "accuracy", "correct", "total"};
  for (const auto& c : class_columns(cfg)) cols.push_back(c);
  csv.header(cols);
  std::vector<std::string> cells = {name, CsvWriter::num(row.accuracy),
                                    std::to_string(row.correct), std::to_string(row.total)};
  append_class_cells(cells, row);
  csv.row(cells);

  const std::string path = (fs::path(resolve_output_dir(cfg)) / ("eval_" + name + ".csv")).string();
  csv.write(path);
  return path;
}

namespace {

std::function<PointCloud(const PointCloud&, std::size_t)> augment_for(
    const ExperimentConfig& cfg, SweepAxis axis, double level, std::size_t level_index) {
  const std::uint64_t axis_seed =
      mix_seed(cfg.sweep.eval_seed, static_cast<std::uint64_t>(axis) * 1000 + level_index);
  const int surfaces = 2;
  const std::string mode = cfg.sweep.clustered_points_mode;
  return [=](const PointCloud& cloud, std::size_t i) {
    const std::uint64_t seed = mix_seed(axis_seed, i);
    switch (axis) {
      case SweepAxis::outliers:
        return level > 0.0 ? add_uniform_outliers(cloud, level, seed) : cloud;
      case SweepAxis::noise:
        return level > 0.0 ? add_gaussian_noise(cloud, level, seed) : cloud;
      case SweepAxis::dropout:
        return level > 0.0 ? random_dropout(cloud, level, seed) : cloud;
      case SweepAxis::clustered: {
        if (level <= 0.0) return cloud;
        const int per_surface = mode == "total"
                                    ? std::max(1, static_cast<int>(level) / surfaces)
                                    : static_cast<int>(level);
        return add_clustered_outliers(cloud, surfaces, per_surface, seed);
      }
    }
    return cloud;
  };
}

}  // namespace

std::string cmd_sweep(const ExperimentConfig& cfg, SweepAxis axis) {
  cfg.validate();
  std::vector<double> levels;
  switch (axis) {
    case SweepAxis::outliers: levels = cfg.sweep.outlier_levels; break;
    case SweepAxis::noise: levels = cfg.sweep.noise_levels; break;
    case SweepAxis::dropout: levels = cfg.sweep.dropout_levels; break;
    case SweepAxis::clustered:
      for (int l : cfg.sweep.clustered_levels) levels.push_back(l);
      break;
  }
  if (levels.empty()) throw config_error("sweep: no levels configured for this axis");

  const std::vector<PointCloud> test = make_split(cfg.dataset, true);

  CsvWriter csv("sweep", cfg);
  csv.comment("axis=" + to_string(axis));
  csv.comment("eval_seed=" + std::to_string(cfg.sweep.eval_seed));
  std::vector<std::string> cols = {"axis",  "level",          "operator",
                                   "accuracy", "correct",        "total",
                                   "mean_pool_dist"};
  for (const auto& c : class_columns(cfg)) cols.push_back(c);
  csv.header(cols);

  for (const auto& op_name : cfg.sweep.operators) {
    ClassifierModel model = load_model(model_path(cfg, op_name), pool_operator_from_string(op_name));
    const auto clean_pooled = clean_pooled_features(cfg, model, test);

    // levels evaluated in a worker pool; rows assembled in config order
    std::vector<std::future<EvalRow>> futures;
    futures.reserve(levels.size());
    for (std::size_t li = 0; li < levels.size(); ++li) {
      futures.push_back(std::async(std::launch::async, [&, li] {
        return evaluate_level(cfg, model, test, clean_pooled,
                              augment_for(cfg, axis, levels[li], li));
      }));
    }
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const EvalRow row = futures[li].get();
      std::vector<std::string> cells = {to_string(axis),
                                        CsvWriter::num(levels[li]),
                                        op_name,
                                        CsvWriter::num(row.accuracy),
                                        std::to_string(row.correct),
                                        std::to_string(row.total),
                                        CsvWriter::num(row.mean_pool_dist)};
      append_class_cells(cells, row);
      csv.row(cells);
    }
  }

  const std::string path =
      (fs::path(resolve_output_dir(cfg)) / ("sweep_" + to_string(axis) + ".csv")).string();
  csv.write(path);
  return path;
}

std::string cmd_threshold_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.sweep.thresholds.empty()) throw config_error("thresholds: must not be empty");
  ClassifierModel model = load_model(model_path(cfg, "histogram"), PoolOperator::histogram);
  const std::vector<PointCloud> test = make_split(cfg.dataset, true);

  CsvWriter csv("threshold-sweep", cfg);
  csv.comment("threshold = half of the histogram bin width");
  csv.comment("outlier_ratio=" + format_double(cfg.sweep.threshold_outlier_ratio) +
              " noise_sigma=" + format_double(cfg.sweep.threshold_noise_sigma));
  csv.header({"threshold", "bins", "clean_accuracy", "outlier_accuracy", "noise_accuracy"});

  double best_threshold = cfg.sweep.thresholds.front();
  double best_outlier_acc = -1.0;
  std::vector<std::array<double, 5>> rows;
  for (std::size_t ti = 0; ti < cfg.sweep.thresholds.size(); ++ti) {
    const double h = cfg.sweep.thresholds[ti];
    if (!(h > 0.0)) throw config_error("thresholds: must be > 0");
    const double span = model.pool.range_hi - model.pool.range_lo;
    const int bins = std::max(2, static_cast<int>(std::llround(span / (2.0 * h))));
    ClassifierModel variant = model;
    variant.pool.bins = bins;

    const auto clean_pooled = clean_pooled_features(cfg, variant, test);
    const EvalRow clean = evaluate_level(cfg, variant, test, clean_pooled,
                                         [](const PointCloud& c, std::size_t) { return c; });
    const std::uint64_t out_seed = mix_seed(cfg.sweep.eval_seed, 5000 + ti);
    const EvalRow outl = evaluate_level(
        cfg, variant, test, clean_pooled, [&](const PointCloud& c, std::size_t i) {
          return add_uniform_outliers(c, cfg.sweep.threshold_outlier_ratio, mix_seed(out_seed, i));
        });
    const std::uint64_t noise_seed = mix_seed(cfg.sweep.eval_seed, 6000 + ti);
    const EvalRow noise = evaluate_level(
        cfg, variant, test, clean_pooled, [&](const PointCloud& c, std::size_t i) {
          return add_gaussian_noise(c, cfg.sweep.threshold_noise_sigma, mix_seed(noise_seed, i));
        });
    rows.push_back({h, static_cast<double>(bins), clean.accuracy, outl.accuracy, noise.accuracy});
    if (outl.accuracy > best_outlier_acc) {
      best_outlier_acc = outl.accuracy;
      best_threshold = h;
    }
  }
  csv.comment("best_threshold_by_outlier_accuracy=" + format_double(best_threshold));
  for (const auto& r : rows) {
    csv.row({CsvWriter::num(r[0]), std::to_string(static_cast<int>(r[1])), CsvWriter::num(r[2]),
             CsvWriter::num(r[3]), CsvWriter::num(r[4])});
  }

  const std::string path = (fs::path(resolve_output_dir(cfg)) / "threshold_sweep.csv").string();
  csv.write(path);
  return path;
}

std::string cmd_bench(const ExperimentConfig& cfg, const std::vector<std::string>& presets,
                      int min_reps) {
  cfg.validate();
  struct Shape {
    std::string name;
    int n, d, batch;
  };
  std::vector<Shape> shapes;
  for (const auto& p : presets) {
    int n = 0, d = 0, b = 10;
    if (std::sscanf(p.c_str(), "%dx%dx%d", &n, &d, &b) >= 2 && n > 0 && d > 0 && b > 0) {
      shapes.push_back({p, n, d, b});
    } else {
      throw config_error("preset: expected NxD or NxDxB, got '" + p + "'");
    }
  }
  if (shapes.empty()) {
    shapes.push_back({"2048x1024", 2048, 1024, 10});
    shapes.push_back({"512x512", 512, 512, 10});
  }

  const std::vector<std::string> all_ops = {"max",       "mean",   "median",
                                            "histogram", "ransac", "m_estimator"};

  CsvWriter csv("bench", cfg);
  csv.comment("reps counted per pooled feature map");
  csv.header({"shape", "n_points", "dims", "batch", "operator", "reps", "mean_s", "median_s",
              "min_s", "max_s", "ratio_vs_max"});

  for (const auto& shape : shapes) {
    double max_mean = 0.0;
    std::vector<std::pair<std::string, TimingStats>> stats;
    for (const auto& op_name : all_ops) {
      PoolConfig pool = pool_for_operator(cfg, op_name);
      TimingStats st = pool_timing_bench(shape.n, shape.d, shape.batch, pool, min_reps,
                                         cfg.sweep.eval_seed);
      if (op_name == "max") max_mean = st.mean_s;
      stats.emplace_back(op_name, st);
    }
    for (const auto& [op_name, st] : stats) {
      csv.row({shape.name, std::to_string(shape.n), std::to_string(shape.d),
               std::to_string(shape.batch), op_name, std::to_string(st.reps),
               CsvWriter::num(st.mean_s), CsvWriter::num(st.median_s), CsvWriter::num(st.min_s),
               CsvWriter::num(st.max_s),
               CsvWriter::num(max_mean > 0.0 ? st.mean_s / max_mean : 0.0)});
    }
  }

  const std::string path = (fs::path(resolve_output_dir(cfg)) / "bench.csv").string();
  csv.write(path);
  return path;
}

std::vector<std::string> cmd_diag(const ExperimentConfig& cfg,
                                  const std::optional<std::string>& cloud_path,
                                  const std::optional<std::string>& augmented_path) {
  cfg.validate();
  if (cloud_path.has_value() != augmented_path.has_value())
    throw config_error("diag: --cloud and --augmented must be given together");

  ClassifierModel model = load_model(model_path(cfg, cfg.sweep.diag_operator),
                                     pool_operator_from_string(cfg.sweep.diag_operator));

  std::vector<std::pair<PointCloud, PointCloud>> pairs;  // clean, augmented
  if (cloud_path) {
    pairs.emplace_back(load_xyz(*cloud_path), load_xyz(*augmented_path));
  } else {
    const std::vector<PointCloud> test = make_split(cfg.dataset, true);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const std::uint64_t seed = mix_seed(cfg.sweep.eval_seed, 9000 + i);
      pairs.emplace_back(test[i],
                         add_uniform_outliers(test[i], cfg.sweep.diag_outlier_ratio, seed));
    }
  }

  const int feat_dim = model.feature_dim();
  Rng dim_rng(mix_seed(cfg.sweep.eval_seed, 77));
  const auto dims =
      sample_without_replacement(dim_rng, feat_dim, std::min(cfg.sweep.diag_dims, feat_dim));

  auto features_of = [&](const PointCloud& cloud) {
    ForwardCache cache;
    forward(model, prepare_for_model(cfg, model, cloud), &cache);
    return cache.mlp_act.back();
  };

  CsvWriter diff_csv("diag", cfg);
  diff_csv.comment("feature map from operator=" + cfg.sweep.diag_operator);
  diff_csv.comment("outlier_ratio=" + format_double(cfg.sweep.diag_outlier_ratio));
  diff_csv.header({"cloud", "operator", "dist_sampled", "dist_full"});

  CsvWriter pooled_csv("diag", cfg);
  pooled_csv.comment("pooled outputs per operator on sampled dimensions of cloud 0");
  pooled_csv.header({"dim", "operator", "clean", "augmented", "abs_diff"});

  CsvWriter hist_csv("diag", cfg);
  hist_csv.comment("per-dimension feature histograms, clean vs augmented, cloud 0");
  hist_csv.header({"dim", "bin_lo", "bin_hi", "count_clean", "count_aug"});

  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const Eigen::MatrixXd f_clean = features_of(pairs[pi].first);
    const Eigen::MatrixXd f_aug = features_of(pairs[pi].second);

    for (const auto& op_name : cfg.sweep.operators) {
      PoolConfig pool = pool_for_operator(cfg, op_name);
      const Eigen::VectorXd p_clean = pool_forward(f_clean, pool).output;
      const Eigen::VectorXd p_aug = pool_forward(f_aug, pool).output;
      double sampled = 0.0;
      for (int dim : dims) {
        const double d = p_clean[dim] - p_aug[dim];
        sampled += d * d;
      }
      diff_csv.row({std::to_string(pi), op_name, CsvWriter::num(std::sqrt(sampled)),
                    CsvWriter::num((p_clean - p_aug).norm())});

      if (pi == 0) {
        for (int dim : dims) {
          pooled_csv.row({std::to_string(dim), op_name, CsvWriter::num(p_clean[dim]),
                          CsvWriter::num(p_aug[dim]),
                          CsvWriter::num(std::abs(p_clean[dim] - p_aug[dim]))});
        }
      }
    }

    if (pi == 0) {
      const double lo = cfg.pool.range_lo, hi = cfg.pool.range_hi;
      const int bins = cfg.pool.bins;
      const double width = (hi - lo) / bins;
      for (int dim : dims) {
        std::vector<long> cc(bins, 0), ca(bins, 0);
        const double inv = 1.0 / width;
        auto bin_at = [&](double v) {
          double t = (v - lo) * inv;
          return t <= 0.0 ? 0 : (t >= bins - 1 ? bins - 1 : static_cast<int>(t));
        };
        for (Eigen::Index i = 0; i < f_clean.rows(); ++i) cc[bin_at(f_clean(i, dim))]++;
        for (Eigen::Index i = 0; i < f_aug.rows(); ++i) ca[bin_at(f_aug(i, dim))]++;
        for (int b = 0; b < bins; ++b) {
          if (cc[b] == 0 && ca[b] == 0) continue;
          hist_csv.row({std::to_string(dim), CsvWriter::num(lo + b * width),
                        CsvWriter::num(lo + (b + 1) * width), std::to_string(cc[b]),
                        std::to_string(ca[b])});
        }
      }
    }
  }

  const fs::path base = fs::path(resolve_output_dir(cfg));
  std::vector<std::string> written;
  diff_csv.write((base / "diag_diff.csv").string());
  written.push_back((base / "diag_diff.csv").string());
  pooled_csv.write((base / "diag_pooled.csv").string());
  written.push_back((base / "diag_pooled.csv").string());
  hist_csv.write((base / "diag_feature_hist.csv").string());
  written.push_back((base / "diag_feature_hist.csv").string());
  return written;
}

Mixture2D parse_mixture_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("mixture: invalid JSON: ") + e.what());
  }
  allow_keys(j, {"gaussians", "uniform"}, "mixture");
  Mixture2D mix;
  if (j.contains("gaussians")) {
    for (const auto& g : j.at("gaussians")) {
      allow_keys(g, {"weight", "mean", "cov"}, "mixture.gaussians");
      GaussianComponent2D c;
      c.weight = g.at("weight").get<double>();
      const auto mean = g.at("mean");
      c.mean << mean.at(0).get<double>(), mean.at(1).get<double>();
      const auto cov = g.at("cov");
      c.cov << cov.at(0).at(0).get<double>(), cov.at(0).at(1).get<double>(),
          cov.at(1).at(0).get<double>(), cov.at(1).at(1).get<double>();
      mix.gaussians.push_back(c);
    }
  }
  if (j.contains("uniform")) {
    const auto& u = j.at("uniform");
    allow_keys(u, {"weight", "lo", "hi"}, "mixture.uniform");
    UniformComponent2D c;
    c.weight = u.at("weight").get<double>();
    c.lo << u.at("lo").at(0).get<double>(), u.at("lo").at(1).get<double>();
    c.hi << u.at("hi").at(0).get<double>(), u.at("hi").at(1).get<double>();
    mix.uniform = c;
  }
  mix.validate();
  return mix;
}

std::vector<std::string> cmd_demo_mmap(const ExperimentConfig& cfg, const MmapDemoOptions& opt) {
  Mixture2D mix;
  if (opt.mixture_file) {
    std::ifstream in(*opt.mixture_file);
    if (!in) throw config_error("mixture: cannot open " + *opt.mixture_file);
    std::stringstream ss;
    ss << in.rdbuf();
    mix = parse_mixture_json_text(ss.str());
  } else {
    mix = preset_mixture(opt.preset);
  }
  if (opt.samples < 1 || opt.seeds < 1 || opt.bins < 2 || opt.grid < 2)
    throw config_error("demo-mmap: samples/seeds/bins/grid out of range");

  const fs::path base = fs::path(resolve_output_dir(cfg));
  std::vector<std::string> written;

  Eigen::Vector2d lo, hi;
  mix.support_box(6.0, lo, hi);

  {
    CsvWriter csv("demo-mmap", cfg);
    csv.comment("density grid over the support box");
    csv.header({"x", "y", "pdf"});
    for (int i = 0; i <= opt.grid; ++i) {
      const double x = lo[0] + (hi[0] - lo[0]) * i / opt.grid;
      for (int j = 0; j <= opt.grid; ++j) {
        const double y = lo[1] + (hi[1] - lo[1]) * j / opt.grid;
        csv.row({CsvWriter::num(x), CsvWriter::num(y),
                 CsvWriter::num(density_at(mix, Eigen::Vector2d(x, y)))});
      }
    }
    const std::string path = (base / "demo_density.csv").string();
    csv.write(path);
    written.push_back(path);
  }

  {
    CsvWriter csv("demo-mmap", cfg);
    csv.comment("marginal densities per axis");
    csv.header({"axis", "t", "pdf"});
    const int steps = 2000;
    for (int axis = 0; axis < 2; ++axis) {
      for (int i = 0; i <= steps; ++i) {
        const double t = lo[axis] + (hi[axis] - lo[axis]) * i / steps;
        csv.row({std::to_string(axis), CsvWriter::num(t),
                 CsvWriter::num(marginal_density_at(mix, axis, t))});
      }
    }
    const std::string path = (base / "demo_marginals.csv").string();
    csv.write(path);
    written.push_back(path);
  }

  {
    CsvWriter csv("demo-mmap", cfg);
    csv.comment("samples=" + std::to_string(opt.samples) + " bins=" + std::to_string(opt.bins) +
                " range=[" + format_double(opt.range_lo) + "," + format_double(opt.range_hi) +
                "]");
    csv.header({"kind", "axis", "seed", "x", "y", "value", "flag"});

    const JointPeak joint = joint_peak(mix);
    csv.row({"joint_peak", "", "", CsvWriter::num(joint.location[0]),
             CsvWriter::num(joint.location[1]), CsvWriter::num(joint.value),
             joint.unique ? "unique" : "non-unique"});
    for (int axis = 0; axis < 2; ++axis) {
      const MarginalPeak mp = marginal_peak(mix, axis);
      csv.row({"marginal_peak", std::to_string(axis), "", CsvWriter::num(mp.location), "",
               CsvWriter::num(mp.value), ""});
    }
    csv.row({"grid_mass", "", "", "", "", CsvWriter::num(grid_mass(mix)), ""});

    for (int s = 0; s < opt.seeds; ++s) {
      Rng rng(mix_seed(opt.base_seed, s));
      const Samples2D samples = sample_mixture(mix, opt.samples, rng);
      const Eigen::Vector2d est = mmap_estimate(samples, opt.bins, opt.range_lo, opt.range_hi);
      csv.row({"mmap", "", std::to_string(s), CsvWriter::num(est[0]), CsvWriter::num(est[1]),
               CsvWriter::num((est - joint.location).norm()), ""});
    }
    const std::string path = (base / "demo_peaks.csv").string();
    csv.write(path);
    written.push_back(path);
  }
  return written;
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

const std::string& CsvTable::cell(std::size_t row, const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw std::out_of_range("csv: no column '" + name + "'");
  return rows.at(row).at(static_cast<std::size_t>(c));
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  return std::strtod(cell(row, name).c_str(), nullptr);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(io_error::kind::open_failed, "cannot open " + path);
  CsvTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      table.comments.push_back(line);
      continue;
    }
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    cells.push_back(cur);
    if (table.header.empty()) {
      table.header = std::move(cells);
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

}  // namespace modepool
