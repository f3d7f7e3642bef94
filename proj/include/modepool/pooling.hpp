#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "modepool/common.hpp"

namespace modepool {

// Aggregation operators reducing an N x D feature map to a 1 x D global
// feature, one dimension at a time.
enum class PoolOperator { max, mean, median, histogram, ransac, m_estimator };

// How the backward pass routes the upstream gradient for the mode-seeking
// operators (histogram, ransac).
enum class GradMode { winner_only, inlier_mean };

// What value histogram pooling reports for the winning bin.
enum class HistogramValue { member_mean, bin_center };

// What value RANSAC pooling reports for the winning hypothesis.
enum class RansacValue { hypothesis, inlier_mean };

enum class RhoKind { truncated_quadratic, welsch };

std::string to_string(PoolOperator op);
std::string to_string(GradMode m);
std::string to_string(RhoKind k);
PoolOperator pool_operator_from_string(const std::string& s);
GradMode grad_mode_from_string(const std::string& s);
RhoKind rho_kind_from_string(const std::string& s);

struct PoolConfig {
  PoolOperator op = PoolOperator::histogram;

  // histogram
  int bins = 70;
  double range_lo = -10.0;
  double range_hi = 10.0;
  HistogramValue histogram_value = HistogramValue::member_mean;

  // ransac
  double epsilon = 0.143;
  double hypothesis_fraction = 0.5;
  RansacValue ransac_value = RansacValue::hypothesis;
  std::uint64_t seed = 0;

  // m-estimator
  RhoKind rho = RhoKind::truncated_quadratic;
  double tau = 0.143;
  int max_iters = 50;
  double tol = 1e-6;

  GradMode grad_mode = GradMode::inlier_mean;

  double bin_width() const { return (range_hi - range_lo) / bins; }

  // Checks the fields used by the selected operator; throws config_error
  // naming the violated field.
  void validate() const;
};

// Per-dimension record of what the forward pass selected, enough to replay
// the inlier sets in the backward pass without storing them.
struct PoolSelection {
  PoolOperator op = PoolOperator::max;
  Eigen::Index rows = 0;
  Eigen::VectorXi winner;      // primary selected row per dimension; -1 when n/a (mean)
  Eigen::VectorXi winner_alt;  // second median row for even N; -1 otherwise
  Eigen::VectorXi mode_bin;    // histogram: index of the winning bin
  Eigen::VectorXd estimate;    // m_estimator: converged location per dimension
  Eigen::Array<bool, Eigen::Dynamic, 1> converged;  // m_estimator
};

struct PoolResult {
  Eigen::VectorXd output;
  PoolSelection selection;
};

// Result of the single-dimension operators.
struct Pool1d {
  double value = 0.0;
  int winner_row = -1;
  int mode_bin = -1;
  std::vector<int> inlier_rows;
};

// Partitions [range_lo, range_hi] into `bins` uniform bins (out-of-range
// values clamp into the edge bins), picks the bin with the highest count
// (lowest index on ties) and reports the mean of its members.
Pool1d histogram_pool_1d(const Eigen::Ref<const Eigen::VectorXd>& column, int bins,
                         double range_lo, double range_hi,
                         HistogramValue value_kind = HistogramValue::member_mean);

// Evaluates ceil(fraction * N) hypotheses drawn without replacement from the
// column rows (all rows when fraction == 1) and returns the hypothesis with
// the most inliers |x_i - x_m| <= epsilon; count ties break toward the
// smallest hypothesis value, then the lowest row index.
Pool1d ransac_pool_1d(const Eigen::Ref<const Eigen::VectorXd>& column, double epsilon,
                      double hypothesis_fraction, std::uint64_t seed,
                      RansacValue value_kind = RansacValue::hypothesis);

// Reduces features (N x D) to a length-D global feature; output[d] depends
// only on column d.
PoolResult pool_forward(const Eigen::Ref<const Eigen::MatrixXd>& features,
                        const PoolConfig& config);

// Distributes upstream_grad (length D) back onto the rows selected by the
// forward pass; returns an N x D gradient.
Eigen::MatrixXd pool_backward(const Eigen::Ref<const Eigen::MatrixXd>& features,
                              const PoolConfig& config, const PoolSelection& selection,
                              const Eigen::Ref<const Eigen::VectorXd>& upstream_grad);

// Rows the backward pass spreads gradient over for dimension `dim`,
// reconstructed from the selection record.
std::vector<int> selected_inlier_rows(const Eigen::Ref<const Eigen::VectorXd>& column,
                                      const PoolConfig& config,
                                      const PoolSelection& selection, int dim);

struct TimingStats {
  int reps = 0;
  double mean_s = 0.0;
  double median_s = 0.0;
  double min_s = 0.0;
  double max_s = 0.0;
};

// Wall time of pool_forward on synthetic Gaussian feature maps. `batch` maps
// are generated and pooled round-robin; every pooled map counts as one
// repetition and at least `min_reps` repetitions are timed.
TimingStats pool_timing_bench(int n_points, int dims, int batch, const PoolConfig& config,
                              int min_reps = 20, std::uint64_t seed = 0);

}  // namespace modepool
