#include "modepool/estimators.hpp"

#include <algorithm>
#include <numeric>

namespace modepool {

double rho_objective(const Eigen::Ref<const Eigen::VectorXd>& column, const RhoFunction& rho,
                     double y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < column.size(); ++i) s += rho.rho(column[i] - y);
  return s;
}

MedianResult column_median(const Eigen::Ref<const Eigen::VectorXd>& column) {
  const Eigen::Index n = column.size();
  if (n < 1) throw std::invalid_argument("column_median: empty column");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto cmp = [&](int a, int b) {
    return column[a] < column[b] || (column[a] == column[b] && a < b);
  };
  const Eigen::Index lower = (n - 1) / 2;
  const Eigen::Index upper = n / 2;
  std::nth_element(idx.begin(), idx.begin() + lower, idx.end(), cmp);
  MedianResult m;
  m.lower_row = idx[lower];
  if (upper == lower) {
    m.upper_row = m.lower_row;
    m.value = column[m.lower_row];
  } else {
    std::nth_element(idx.begin() + lower + 1, idx.begin() + upper, idx.end(), cmp);
    m.upper_row = idx[upper];
    m.value = 0.5 * (column[m.lower_row] + column[m.upper_row]);
  }
  return m;
}

IrlsTrace m_estimate_1d(const Eigen::Ref<const Eigen::VectorXd>& column, const RhoFunction& rho,
                        double init, int max_iters, double tol,
                        std::vector<double>* objective_trace) {
  const Eigen::Index n = column.size();
  if (n < 1) throw std::invalid_argument("m_estimate_1d: empty column");
  if (!(rho.tau > 0.0)) throw config_error("tau: must be > 0");
  if (max_iters < 1) throw config_error("max_iters: must be >= 1");
  if (!(tol > 0.0)) throw config_error("tol: must be > 0");
  require_finite(column, "column");
  if (!std::isfinite(init)) throw std::invalid_argument("m_estimate_1d: non-finite init");

  if (objective_trace) objective_trace->push_back(rho_objective(column, rho, init));

  IrlsTrace trace;
  double y = init;
  for (int it = 1; it <= max_iters; ++it) {
    trace.iterations = it;
    double wsum = 0.0, wxsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = rho.weight(column[i] - y);
      wsum += w;
      wxsum += w * column[i];
    }
    if (wsum == 0.0) {
      y = column_median(column).value;
      trace.converged = false;
      if (objective_trace) objective_trace->push_back(rho_objective(column, rho, y));
      break;
    }
    const double y_next = wxsum / wsum;
    if (objective_trace) objective_trace->push_back(rho_objective(column, rho, y_next));
    const bool done = std::abs(y_next - y) < tol;
    y = y_next;
    if (done) {
      trace.converged = true;
      break;
    }
  }

  trace.estimate = y;
  trace.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) trace.weights[i] = rho.weight(column[i] - y);
  return trace;
}

IrlsTrace m_estimate_1d(const Eigen::Ref<const Eigen::VectorXd>& column, const RhoFunction& rho,
                        int max_iters, double tol, std::vector<double>* objective_trace) {
  return m_estimate_1d(column, rho, column_median(column).value, max_iters, tol,
                       objective_trace);
}

Eigen::VectorXd m_pool_backward(const Eigen::Ref<const Eigen::VectorXd>& column,
                                const RhoFunction& rho, const IrlsTrace& trace,
                                double upstream_grad) {
  (void)rho;
  if (!trace.converged)
    throw std::logic_error("m_pool_backward: called on a non-converged trace");
  if (trace.weights.size() != column.size())
    throw std::invalid_argument("m_pool_backward: trace/column size mismatch");
  const double wsum = trace.weights.sum();
  if (!(wsum > 0.0))
    throw std::logic_error("m_pool_backward: converged trace has zero total weight");
  return (upstream_grad / wsum) * trace.weights;
}

}  // namespace modepool
