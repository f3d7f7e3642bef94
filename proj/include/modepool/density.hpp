#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "modepool/common.hpp"

namespace modepool {

struct GaussianComponent2D {
  double weight = 1.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
};

struct UniformComponent2D {
  double weight = 0.0;
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(-1.0);
  Eigen::Vector2d hi = Eigen::Vector2d::Constant(1.0);
};

// 2-D Gaussian mixture with an optional axis-aligned uniform component.
struct Mixture2D {
  std::vector<GaussianComponent2D> gaussians;
  std::optional<UniformComponent2D> uniform;

  // weights nonnegative summing to 1, covariances symmetric positive
  // definite, support box nondegenerate
  void validate() const;

  // axis-aligned box covering the uniform support and every mean +- n_sigma
  // standard deviations; grid searches and quadrature run over it
  void support_box(double n_sigma, Eigen::Vector2d& lo, Eigen::Vector2d& hi) const;
};

using Samples2D = Eigen::Matrix<double, Eigen::Dynamic, 2>;

double density_at(const Mixture2D& mix, const Eigen::Vector2d& point);

// exact 1-D marginal along `axis` (0 or 1)
double marginal_density_at(const Mixture2D& mix, int axis, double t);

struct MarginalPeak {
  double location = 0.0;
  double value = 0.0;
};

// grid search over the support refined by golden-section to `resolution`
MarginalPeak marginal_peak(const Mixture2D& mix, int axis, double resolution = 1e-3);

struct JointPeak {
  Eigen::Vector2d location = Eigen::Vector2d::Zero();
  double value = 0.0;
  bool unique = true;  // false when the coarse grid maximum is tied (flat density)
};

JointPeak joint_peak(const Mixture2D& mix, double resolution = 1e-3);

Samples2D sample_mixture(const Mixture2D& mix, int count, Rng& rng);

// per-axis histogram mode of the samples, assembled into a point
Eigen::Vector2d mmap_estimate(const Eigen::Ref<const Samples2D>& samples, int bins_per_axis,
                              double range_lo, double range_hi);

// range taken from the sample extent
Eigen::Vector2d mmap_estimate(const Eigen::Ref<const Samples2D>& samples, int bins_per_axis);

// -sum_i p(x_i) log p(x_i) with the exact mixture pdf
double sample_entropy(const Mixture2D& mix, const Eigen::Ref<const Samples2D>& samples);

// same, with an isotropic Gaussian KDE of the samples in place of the pdf
double sample_entropy_kde(const Eigen::Ref<const Samples2D>& samples, double bandwidth);

// midpoint-rule mass of the density over the support box (diagnostic; 1 up to
// quadrature error for a valid mixture)
double grid_mass(const Mixture2D& mix, int cells_per_axis = 1200, double n_sigma = 6.0);

// named demo mixtures: "fig3" (Gaussian inliers + 80% uniform outliers) and
// "fig4" (four Gaussian components)
Mixture2D preset_mixture(const std::string& name);

}  // namespace modepool
