#include "modepool/pooling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "modepool/estimators.hpp"

namespace modepool {

std::string to_string(PoolOperator op) {
  switch (op) {
    case PoolOperator::max: return "max";
    case PoolOperator::mean: return "mean";
    case PoolOperator::median: return "median";
    case PoolOperator::histogram: return "histogram";
    case PoolOperator::ransac: return "ransac";
    case PoolOperator::m_estimator: return "m_estimator";
  }
  return "?";
}

std::string to_string(GradMode m) {
  return m == GradMode::winner_only ? "winner_only" : "inlier_mean";
}

std::string to_string(RhoKind k) {
  return k == RhoKind::truncated_quadratic ? "truncated_quadratic" : "welsch";
}

PoolOperator pool_operator_from_string(const std::string& s) {
  if (s == "max") return PoolOperator::max;
  if (s == "mean") return PoolOperator::mean;
  if (s == "median") return PoolOperator::median;
  if (s == "histogram") return PoolOperator::histogram;
  if (s == "ransac") return PoolOperator::ransac;
  if (s == "m_estimator") return PoolOperator::m_estimator;
  throw config_error("operator: unknown pooling operator '" + s + "'");
}

GradMode grad_mode_from_string(const std::string& s) {
  if (s == "winner_only") return GradMode::winner_only;
  if (s == "inlier_mean") return GradMode::inlier_mean;
  throw config_error("grad_mode: unknown mode '" + s + "'");
}

RhoKind rho_kind_from_string(const std::string& s) {
  if (s == "truncated_quadratic" || s == "tq") return RhoKind::truncated_quadratic;
  if (s == "welsch") return RhoKind::welsch;
  throw config_error("rho: unknown kind '" + s + "'");
}

void PoolConfig::validate() const {
  switch (op) {
    case PoolOperator::histogram:
      if (bins < 2) throw config_error("bins: must be >= 2");
      if (!(range_lo < range_hi) || !std::isfinite(range_lo) || !std::isfinite(range_hi))
        throw config_error("range: requires finite lo < hi");
      break;
    case PoolOperator::ransac:
      if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw config_error("epsilon: must be > 0");
      if (!(hypothesis_fraction > 0.0) || hypothesis_fraction > 1.0)
        throw config_error("hypothesis_fraction: must be in (0, 1]");
      break;
    case PoolOperator::m_estimator:
      if (!(tau > 0.0) || !std::isfinite(tau)) throw config_error("tau: must be > 0");
      if (max_iters < 1) throw config_error("max_iters: must be >= 1");
      if (!(tol > 0.0)) throw config_error("tol: must be > 0");
      break;
    default:
      break;
  }
}

namespace {

inline int bin_of(double v, double lo, double inv_width, int bins) {
  double t = (v - lo) * inv_width;
  if (t <= 0.0) return 0;
  if (t >= static_cast<double>(bins - 1)) return bins - 1;
  return static_cast<int>(t);
}

struct HistWorkspace {
  std::vector<std::int64_t> count;
  std::vector<double> sum;
  void reset(int bins) {
    count.assign(bins, 0);
    sum.assign(bins, 0.0);
  }
};

struct Hist1dCore {
  double value = 0.0;
  int mode_bin = -1;
  int winner_row = -1;
};

Hist1dCore histogram_column(const double* x, Eigen::Index n, int bins, double lo, double hi,
                            HistogramValue value_kind, HistWorkspace& ws) {
  const double width = (hi - lo) / bins;
  const double inv_width = 1.0 / width;
  ws.reset(bins);
  auto* count = ws.count.data();
  auto* sum = ws.sum.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = x[i];
    const int b = bin_of(v, lo, inv_width, bins);
    count[b] += 1;
    sum[b] += v;
  }
  int mode = 0;
  std::int64_t best = count[0];
  for (int b = 1; b < bins; ++b) {
    if (count[b] > best) {
      best = count[b];
      mode = b;
    }
  }
  Hist1dCore out;
  out.mode_bin = mode;
  out.value = value_kind == HistogramValue::member_mean
                  ? sum[mode] / static_cast<double>(count[mode])
                  : lo + (mode + 0.5) * width;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (bin_of(x[i], lo, inv_width, bins) == mode) {
      out.winner_row = static_cast<int>(i);
      break;
    }
  }
  return out;
}

std::vector<int> ransac_hypothesis_rows(Eigen::Index n, double fraction, std::uint64_t seed) {
  int m = static_cast<int>(std::ceil(fraction * static_cast<double>(n)));
  m = std::clamp(m, 1, static_cast<int>(n));
  if (m == static_cast<int>(n)) {
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
  }
  Rng rng(seed);
  return sample_without_replacement(rng, static_cast<int>(n), m);
}

struct Ransac1dCore {
  double value = 0.0;
  int winner_row = -1;
  std::int64_t inlier_count = 0;
};

// Count ties break toward the smallest hypothesis value (then the lowest
// row), so the winner is a function of the value multiset and the output is
// permutation invariant whenever every row is a hypothesis.
Ransac1dCore ransac_column(const double* x, Eigen::Index n, double eps,
                           const std::vector<int>& hyp_rows, RansacValue value_kind) {
  Ransac1dCore out;
  double best_v = std::numeric_limits<double>::infinity();
  for (int h : hyp_rows) {
    const double v = x[h];
    std::int64_t c = 0;
    for (Eigen::Index i = 0; i < n; ++i) c += (std::abs(x[i] - v) <= eps);
    if (c > out.inlier_count || (c == out.inlier_count && v < best_v)) {
      out.inlier_count = c;
      out.winner_row = h;
      best_v = v;
    }
  }
  const double win = x[out.winner_row];
  if (value_kind == RansacValue::hypothesis) {
    out.value = win;
  } else {
    double s = 0.0;
    std::int64_t c = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(x[i] - win) <= eps) {
        s += x[i];
        ++c;
      }
    }
    out.value = s / static_cast<double>(c);
  }
  return out;
}

void check_input(const Eigen::Ref<const Eigen::MatrixXd>& features) {
  if (features.rows() < 1 || features.cols() < 1)
    throw std::invalid_argument("features: need N >= 1 rows and D >= 1 columns");
  require_finite(features, "features");
}

}  // namespace

Pool1d histogram_pool_1d(const Eigen::Ref<const Eigen::VectorXd>& column, int bins,
                         double range_lo, double range_hi, HistogramValue value_kind) {
  if (bins < 2) throw config_error("bins: must be >= 2");
  if (!(range_lo < range_hi)) throw config_error("range: requires lo < hi");
  check_input(column);
  HistWorkspace ws;
  Hist1dCore core =
      histogram_column(column.data(), column.size(), bins, range_lo, range_hi, value_kind, ws);
  Pool1d out;
  out.value = core.value;
  out.winner_row = core.winner_row;
  out.mode_bin = core.mode_bin;
  const double inv_width = bins / (range_hi - range_lo);
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    if (bin_of(column[i], range_lo, inv_width, bins) == core.mode_bin)
      out.inlier_rows.push_back(static_cast<int>(i));
  }
  return out;
}

Pool1d ransac_pool_1d(const Eigen::Ref<const Eigen::VectorXd>& column, double epsilon,
                      double hypothesis_fraction, std::uint64_t seed, RansacValue value_kind) {
  if (!(epsilon > 0.0)) throw config_error("epsilon: must be > 0");
  if (!(hypothesis_fraction > 0.0) || hypothesis_fraction > 1.0)
    throw config_error("hypothesis_fraction: must be in (0, 1]");
  check_input(column);
  const auto rows = ransac_hypothesis_rows(column.size(), hypothesis_fraction, seed);
  Ransac1dCore core = ransac_column(column.data(), column.size(), epsilon, rows, value_kind);
  Pool1d out;
  out.value = core.value;
  out.winner_row = core.winner_row;
  const double win = column[core.winner_row];
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    if (std::abs(column[i] - win) <= epsilon) out.inlier_rows.push_back(static_cast<int>(i));
  }
  return out;
}

PoolResult pool_forward(const Eigen::Ref<const Eigen::MatrixXd>& features,
                        const PoolConfig& config) {
  config.validate();
  check_input(features);
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();

  PoolResult res;
  res.output.resize(d);
  auto& sel = res.selection;
  sel.op = config.op;
  sel.rows = n;
  sel.winner = Eigen::VectorXi::Constant(d, -1);
  sel.winner_alt = Eigen::VectorXi::Constant(d, -1);

  switch (config.op) {
    case PoolOperator::max: {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double* x = features.col(j).data();
        double best = x[0];
        int row = 0;
        for (Eigen::Index i = 1; i < n; ++i) {
          if (x[i] > best) {
            best = x[i];
            row = static_cast<int>(i);
          }
        }
        res.output[j] = best;
        sel.winner[j] = row;
      }
      break;
    }
    case PoolOperator::mean: {
      res.output = features.colwise().mean();
      break;
    }
    case PoolOperator::median: {
      for (Eigen::Index j = 0; j < d; ++j) {
        MedianResult m = column_median(features.col(j));
        res.output[j] = m.value;
        sel.winner[j] = m.lower_row;
        sel.winner_alt[j] = m.upper_row;
      }
      break;
    }
    case PoolOperator::histogram: {
      sel.mode_bin = Eigen::VectorXi::Constant(d, -1);
      HistWorkspace ws;
      for (Eigen::Index j = 0; j < d; ++j) {
        Hist1dCore core = histogram_column(features.col(j).data(), n, config.bins,
                                           config.range_lo, config.range_hi,
                                           config.histogram_value, ws);
        res.output[j] = core.value;
        sel.winner[j] = core.winner_row;
        sel.mode_bin[j] = core.mode_bin;
      }
      break;
    }
    case PoolOperator::ransac: {
      const auto rows = ransac_hypothesis_rows(n, config.hypothesis_fraction, config.seed);
      for (Eigen::Index j = 0; j < d; ++j) {
        Ransac1dCore core =
            ransac_column(features.col(j).data(), n, config.epsilon, rows, config.ransac_value);
        res.output[j] = core.value;
        sel.winner[j] = core.winner_row;
      }
      break;
    }
    case PoolOperator::m_estimator: {
      sel.estimate.resize(d);
      sel.converged.resize(d);
      RhoFunction rho{config.rho, config.tau};
      for (Eigen::Index j = 0; j < d; ++j) {
        MedianResult med = column_median(features.col(j));
        IrlsTrace trace =
            m_estimate_1d(features.col(j), rho, med.value, config.max_iters, config.tol);
        res.output[j] = trace.estimate;
        sel.estimate[j] = trace.estimate;
        sel.converged[j] = trace.converged;
        sel.winner[j] = med.lower_row;
        sel.winner_alt[j] = med.upper_row;
      }
      break;
    }
  }
  return res;
}

std::vector<int> selected_inlier_rows(const Eigen::Ref<const Eigen::VectorXd>& column,
                                      const PoolConfig& config, const PoolSelection& selection,
                                      int dim) {
  const Eigen::Index n = column.size();
  std::vector<int> rows;
  switch (selection.op) {
    case PoolOperator::mean: {
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), 0);
      break;
    }
    case PoolOperator::max: {
      rows.push_back(selection.winner[dim]);
      break;
    }
    case PoolOperator::median: {
      rows.push_back(selection.winner[dim]);
      if (selection.winner_alt[dim] != selection.winner[dim])
        rows.push_back(selection.winner_alt[dim]);
      break;
    }
    case PoolOperator::histogram: {
      const double inv_width = config.bins / (config.range_hi - config.range_lo);
      const int mode = selection.mode_bin[dim];
      for (Eigen::Index i = 0; i < n; ++i) {
        if (bin_of(column[i], config.range_lo, inv_width, config.bins) == mode)
          rows.push_back(static_cast<int>(i));
      }
      break;
    }
    case PoolOperator::ransac: {
      const double win = column[selection.winner[dim]];
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(column[i] - win) <= config.epsilon) rows.push_back(static_cast<int>(i));
      }
      break;
    }
    case PoolOperator::m_estimator: {
      RhoFunction rho{config.rho, config.tau};
      const double y = selection.estimate[dim];
      for (Eigen::Index i = 0; i < n; ++i) {
        if (rho.weight(column[i] - y) > 0.0) rows.push_back(static_cast<int>(i));
      }
      break;
    }
  }
  return rows;
}

Eigen::MatrixXd pool_backward(const Eigen::Ref<const Eigen::MatrixXd>& features,
                              const PoolConfig& config, const PoolSelection& selection,
                              const Eigen::Ref<const Eigen::VectorXd>& upstream_grad) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (selection.rows != n || upstream_grad.size() != d ||
      (selection.op != PoolOperator::mean && selection.winner.size() != d))
    throw std::invalid_argument("pool_backward: selection/features shape mismatch");
  if (selection.op != config.op)
    throw std::invalid_argument("pool_backward: selection was produced by a different operator");

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double g = upstream_grad[j];
    switch (config.op) {
      case PoolOperator::mean:
        grad.col(j).setConstant(g / static_cast<double>(n));
        break;
      case PoolOperator::max:
        grad(selection.winner[j], j) = g;
        break;
      case PoolOperator::median: {
        if (selection.winner_alt[j] != selection.winner[j]) {
          grad(selection.winner[j], j) = 0.5 * g;
          grad(selection.winner_alt[j], j) = 0.5 * g;
        } else {
          grad(selection.winner[j], j) = g;
        }
        break;
      }
      case PoolOperator::histogram:
      case PoolOperator::ransac: {
        if (config.grad_mode == GradMode::winner_only) {
          grad(selection.winner[j], j) = g;
        } else {
          const auto rows =
              selected_inlier_rows(features.col(j), config, selection, static_cast<int>(j));
          const double share = g / static_cast<double>(rows.size());
          for (int r : rows) grad(r, j) = share;
        }
        break;
      }
      case PoolOperator::m_estimator: {
        // Converged dims use the frozen-weight rule; a dim that fell back to
        // the median routes like median pooling.
        RhoFunction rho{config.rho, config.tau};
        const double y = selection.estimate[j];
        double wsum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) wsum += rho.weight(features(i, j) - y);
        if (selection.converged[j] && wsum > 0.0) {
          for (Eigen::Index i = 0; i < n; ++i)
            grad(i, j) = g * rho.weight(features(i, j) - y) / wsum;
        } else if (selection.winner_alt[j] != selection.winner[j]) {
          grad(selection.winner[j], j) = 0.5 * g;
          grad(selection.winner_alt[j], j) = 0.5 * g;
        } else {
          grad(selection.winner[j], j) = g;
        }
        break;
      }
    }
  }
  return grad;
}

TimingStats pool_timing_bench(int n_points, int dims, int batch, const PoolConfig& config,
                              int min_reps, std::uint64_t seed) {
  if (n_points < 1 || dims < 1 || batch < 1)
    throw std::invalid_argument("pool_timing_bench: sizes must be >= 1");
  config.validate();

  Rng rng(seed);
  std::vector<Eigen::MatrixXd> maps(batch);
  for (auto& m : maps) {
    m.resize(n_points, dims);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.gaussian();
  }

  volatile double sink = 0.0;  // keep the optimizer from dropping the calls
  sink += pool_forward(maps[0], config).output[0];

  const int reps = std::max(min_reps, 20);
  std::vector<double> times(reps);
  for (int r = 0; r < reps; ++r) {
    const auto& m = maps[r % batch];
    auto t0 = std::chrono::steady_clock::now();
    PoolResult res = pool_forward(m, config);
    auto t1 = std::chrono::steady_clock::now();
    sink += res.output[res.output.size() - 1];
    times[r] = std::chrono::duration<double>(t1 - t0).count();
  }
  (void)sink;

  TimingStats st;
  st.reps = reps;
  st.min_s = *std::min_element(times.begin(), times.end());
  st.max_s = *std::max_element(times.begin(), times.end());
  st.mean_s = std::accumulate(times.begin(), times.end(), 0.0) / reps;
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  st.median_s = reps % 2 == 1 ? sorted[reps / 2]
                              : 0.5 * (sorted[reps / 2 - 1] + sorted[reps / 2]);
  return st;
}

}  // namespace modepool
