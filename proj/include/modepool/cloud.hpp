#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "modepool/common.hpp"

namespace modepool {

using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// N points in R^3, unit-cube normalized, with optional unit normals and a
// per-point flag separating original object points from injected outliers.
struct PointCloud {
  Points3 points;
  Points3 normals;  // 0 rows when absent
  int label = -1;
  Eigen::Array<bool, Eigen::Dynamic, 1> inlier_mask;

  Eigen::Index size() const { return points.rows(); }
  bool has_normals() const { return normals.rows() == points.rows() && points.rows() > 0; }
};

enum class ShapeClass { sphere, box, cylinder, cone, torus };

std::string to_string(ShapeClass c);
ShapeClass shape_class_from_string(const std::string& s);

// Uniform surface sample of the canonical shape, constructed inside
// [-0.5, 0.5]^3 (spheres have exact radius 0.5 about the origin, boxes exact
// faces, and so on). Deterministic per seed.
PointCloud generate_shape(ShapeClass shape, int n_points, std::uint64_t seed);

// Recenters to the bounding-box midpoint and scales the largest axis extent
// to 1, so coordinates land in [-0.5, 0.5].
void normalize_to_unit_cube(PointCloud& cloud);

// Appends floor(ratio * N) points uniform in the unit cube, flagged as
// outliers. Original points, label and order are untouched. Normals are
// dropped; re-estimate after augmenting if needed.
PointCloud add_uniform_outliers(const PointCloud& cloud, double ratio, std::uint64_t seed);

// Adds zero-mean isotropic Gaussian noise to every point.
PointCloud add_gaussian_noise(const PointCloud& cloud, double sigma, std::uint64_t seed);

// Keeps ceil((1 - ratio) * N) points, sampled without replacement, original
// order preserved.
PointCloud random_dropout(const PointCloud& cloud, double ratio, std::uint64_t seed);

// Appends `surface_count` planar patches of `points_per_surface` points each,
// placed `offset` beyond a bounding-box face of the object points and
// thickened outward with |N(0, jitter)|.
PointCloud add_clustered_outliers(const PointCloud& cloud, int surface_count,
                                  int points_per_surface, std::uint64_t seed,
                                  double offset = 0.1, double jitter = 0.01);

// Declarative test-time perturbation: dropout, then noise, then uniform
// outliers, then clustered surfaces, each applied only when set.
struct AugmentationSpec {
  double outlier_ratio = 0.0;
  double noise_sigma = 0.0;
  double dropout_ratio = 0.0;
  struct Clustered {
    int surface_count = 2;
    int points_per_surface = 100;
    double offset = 0.1;
    double jitter = 0.01;
  };
  std::optional<Clustered> clustered;
  std::uint64_t seed = 0;

  void validate() const;
};

PointCloud apply_augmentation(const PointCloud& cloud, const AugmentationSpec& spec);

// Normal per point from the smallest eigenvector of the covariance of its k
// nearest neighbors (self included), oriented away from the cloud centroid.
PointCloud estimate_normals(const PointCloud& cloud, int k = 20);

// rotation about the z axis, applied to points and normals
PointCloud rotate_z(const PointCloud& cloud, double angle);

}  // namespace modepool
