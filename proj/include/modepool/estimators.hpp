#pragma once

#include <vector>

#include <Eigen/Core>

#include "modepool/common.hpp"
#include "modepool/pooling.hpp"

namespace modepool {

// Robust loss for 1-D location estimation.
//   truncated_quadratic: rho(r) = min(r^2, tau^2),        w(r) = 1 if |r| <= tau else 0
//   welsch:              rho(r) = tau^2 (1 - e^{-r^2/tau^2}), w(r) = e^{-r^2/tau^2}
struct RhoFunction {
  RhoKind kind = RhoKind::truncated_quadratic;
  double tau = 0.143;

  double rho(double r) const {
    double r2 = r * r;
    double t2 = tau * tau;
    if (kind == RhoKind::truncated_quadratic) return r2 < t2 ? r2 : t2;
    return t2 * (1.0 - std::exp(-r2 / t2));
  }

  double weight(double r) const {
    double r2 = r * r;
    double t2 = tau * tau;
    if (kind == RhoKind::truncated_quadratic) return r2 <= t2 ? 1.0 : 0.0;
    return std::exp(-r2 / t2);
  }
};

struct IrlsTrace {
  double estimate = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd weights;  // final weights, evaluated at the estimate
};

double rho_objective(const Eigen::Ref<const Eigen::VectorXd>& column, const RhoFunction& rho,
                     double y);

// IRLS fixed point y <- sum w(x_i - y) x_i / sum w(x_i - y) from the given
// initialization, stopping when |delta y| < tol or after max_iters updates.
// If every weight vanishes (truncated quadratic with no inliers) the estimate
// falls back to the column median and the trace is flagged non-converged.
// When objective_trace is non-null the value of sum rho(x_i - y) after each
// update is appended to it.
IrlsTrace m_estimate_1d(const Eigen::Ref<const Eigen::VectorXd>& column, const RhoFunction& rho,
                        double init, int max_iters, double tol,
                        std::vector<double>* objective_trace = nullptr);

// Same, initialized at the column median.
IrlsTrace m_estimate_1d(const Eigen::Ref<const Eigen::VectorXd>& column, const RhoFunction& rho,
                        int max_iters = 50, double tol = 1e-6,
                        std::vector<double>* objective_trace = nullptr);

// Gradient of the converged estimate with the weights frozen at the solution:
// d y / d x_i = w_i / sum_j w_j, scaled by upstream_grad. Requires a
// converged trace.
Eigen::VectorXd m_pool_backward(const Eigen::Ref<const Eigen::VectorXd>& column,
                                const RhoFunction& rho, const IrlsTrace& trace,
                                double upstream_grad);

// Median with deterministic row attribution: lower/upper middle rows under
// (value, row index) ordering. For even N the value averages the two middle
// rows.
struct MedianResult {
  double value = 0.0;
  int lower_row = -1;
  int upper_row = -1;  // equal to lower_row for odd N
};
MedianResult column_median(const Eigen::Ref<const Eigen::VectorXd>& column);

}  // namespace modepool
