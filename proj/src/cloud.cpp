#include "modepool/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace modepool {

std::string to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::sphere: return "sphere";
    case ShapeClass::box: return "box";
    case ShapeClass::cylinder: return "cylinder";
    case ShapeClass::cone: return "cone";
    case ShapeClass::torus: return "torus";
  }
  return "?";
}

ShapeClass shape_class_from_string(const std::string& s) {
  if (s == "sphere") return ShapeClass::sphere;
  if (s == "box") return ShapeClass::box;
  if (s == "cylinder") return ShapeClass::cylinder;
  if (s == "cone") return ShapeClass::cone;
  if (s == "torus") return ShapeClass::torus;
  throw config_error("classes: unknown shape '" + s + "'");
}

namespace {

Eigen::Vector3d sphere_point(Rng& rng) {
  Eigen::Vector3d v;
  double norm2 = 0.0;
  do {
    v << rng.gaussian(), rng.gaussian(), rng.gaussian();
    norm2 = v.squaredNorm();
  } while (norm2 < 1e-12);
  return 0.5 * v / std::sqrt(norm2);
}

// cuboid with half-extents (0.5, 0.35, 0.25); faces sampled by area
Eigen::Vector3d box_point(Rng& rng) {
  constexpr double hx = 0.5, hy = 0.35, hz = 0.25;
  const double ax = hy * hz, ay = hx * hz, az = hx * hy;
  const double pick = rng.uniform() * (ax + ay + az);
  const double s = rng.index(2) == 0 ? -1.0 : 1.0;
  if (pick < ax) {
    return {s * hx, rng.uniform(-hy, hy), rng.uniform(-hz, hz)};
  }
  if (pick < ax + ay) {
    return {rng.uniform(-hx, hx), s * hy, rng.uniform(-hz, hz)};
  }
  return {rng.uniform(-hx, hx), rng.uniform(-hy, hy), s * hz};
}

Eigen::Vector3d cylinder_point(Rng& rng) {
  // radius 0.5, height 1; side and caps sampled proportionally to area
  const double side_area = 2.0 * M_PI * 0.5 * 1.0;
  const double cap_area = M_PI * 0.25;
  const double u = rng.uniform() * (side_area + 2.0 * cap_area);
  const double theta = rng.uniform(0.0, 2.0 * M_PI);
  if (u < side_area) {
    return {0.5 * std::cos(theta), 0.5 * std::sin(theta), rng.uniform(-0.5, 0.5)};
  }
  const double r = 0.5 * std::sqrt(rng.uniform());
  const double z = u < side_area + cap_area ? -0.5 : 0.5;
  return {r * std::cos(theta), r * std::sin(theta), z};
}

Eigen::Vector3d cone_point(Rng& rng) {
  // apex (0,0,0.5), base disk radius 0.5 at z = -0.5
  const double slant = std::sqrt(0.25 + 1.0);
  const double side_area = M_PI * 0.5 * slant;
  const double base_area = M_PI * 0.25;
  const double theta = rng.uniform(0.0, 2.0 * M_PI);
  const double r = 0.5 * std::sqrt(rng.uniform());
  if (rng.uniform() * (side_area + base_area) < base_area) {
    return {r * std::cos(theta), r * std::sin(theta), -0.5};
  }
  return {r * std::cos(theta), r * std::sin(theta), 0.5 - 2.0 * r};
}

Eigen::Vector3d torus_point(Rng& rng) {
  const double R = 0.35, r = 0.15;
  double phi = 0.0, psi = 0.0;
  do {
    phi = rng.uniform(0.0, 2.0 * M_PI);
    psi = rng.uniform(0.0, 2.0 * M_PI);
  } while (rng.uniform() * (R + r) >= R + r * std::cos(psi));
  const double w = R + r * std::cos(psi);
  return {w * std::cos(phi), w * std::sin(phi), r * std::sin(psi)};
}

}  // namespace

PointCloud generate_shape(ShapeClass shape, int n_points, std::uint64_t seed) {
  if (n_points < 8) throw std::invalid_argument("generate_shape: n_points must be >= 8");
  Rng rng(seed);
  PointCloud cloud;
  cloud.points.resize(n_points, 3);
  for (int i = 0; i < n_points; ++i) {
    Eigen::Vector3d p;
    switch (shape) {
      case ShapeClass::sphere: p = sphere_point(rng); break;
      case ShapeClass::box: p = box_point(rng); break;
      case ShapeClass::cylinder: p = cylinder_point(rng); break;
      case ShapeClass::cone: p = cone_point(rng); break;
      case ShapeClass::torus: p = torus_point(rng); break;
    }
    cloud.points.row(i) = p.transpose();
  }
  cloud.label = static_cast<int>(shape);
  cloud.inlier_mask = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n_points, true);
  return cloud;
}

void normalize_to_unit_cube(PointCloud& cloud) {
  if (cloud.size() == 0) return;
  const Eigen::RowVector3d lo = cloud.points.colwise().minCoeff();
  const Eigen::RowVector3d hi = cloud.points.colwise().maxCoeff();
  const Eigen::RowVector3d center = 0.5 * (lo + hi);
  const double extent = (hi - lo).maxCoeff();
  cloud.points.rowwise() -= center;
  if (extent > 0.0) cloud.points /= extent;
}

namespace {

PointCloud base_copy(const PointCloud& cloud, Eigen::Index extra) {
  PointCloud out;
  const Eigen::Index n = cloud.size();
  out.points.resize(n + extra, 3);
  out.points.topRows(n) = cloud.points;
  out.label = cloud.label;
  out.inlier_mask.resize(n + extra);
  out.inlier_mask.head(n) = cloud.inlier_mask.size() == n
                                ? cloud.inlier_mask
                                : Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, true);
  out.inlier_mask.tail(extra).setConstant(false);
  return out;
}

}  // namespace

PointCloud add_uniform_outliers(const PointCloud& cloud, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw config_error("outlier_ratio: must be in [0, 1]");
  const Eigen::Index k = static_cast<Eigen::Index>(std::floor(ratio * cloud.size()));
  PointCloud out = base_copy(cloud, k);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.points.row(cloud.size() + i) << rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
        rng.uniform(-0.5, 0.5);
  }
  return out;
}

PointCloud add_gaussian_noise(const PointCloud& cloud, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw config_error("noise_sigma: must be >= 0");
  PointCloud out = base_copy(cloud, 0);
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    for (int a = 0; a < 3; ++a) out.points(i, a) += sigma * rng.gaussian();
  return out;
}

PointCloud random_dropout(const PointCloud& cloud, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio >= 1.0) throw config_error("dropout_ratio: must be in [0, 1)");
  const Eigen::Index n = cloud.size();
  const Eigen::Index keep =
      static_cast<Eigen::Index>(std::ceil((1.0 - ratio) * static_cast<double>(n)));
  if (keep == n) return base_copy(cloud, 0);
  Rng rng(seed);
  const auto kept = sample_without_replacement(rng, static_cast<int>(n), static_cast<int>(keep));
  PointCloud out;
  out.points.resize(keep, 3);
  out.inlier_mask.resize(keep);
  const bool masked = cloud.inlier_mask.size() == n;
  for (Eigen::Index i = 0; i < keep; ++i) {
    out.points.row(i) = cloud.points.row(kept[i]);
    out.inlier_mask[i] = masked ? cloud.inlier_mask[kept[i]] : true;
  }
  out.label = cloud.label;
  return out;
}

PointCloud add_clustered_outliers(const PointCloud& cloud, int surface_count,
                                  int points_per_surface, std::uint64_t seed, double offset,
                                  double jitter) {
  if (surface_count < 1) throw config_error("surface_count: must be >= 1");
  if (points_per_surface < 1) throw config_error("points_per_surface: must be >= 1");
  if (!(offset > 0.0)) throw config_error("offset: must be > 0");

  // bounding box of the object points only
  Eigen::RowVector3d lo = Eigen::RowVector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::RowVector3d hi = -lo;
  const bool masked = cloud.inlier_mask.size() == cloud.size();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    if (masked && !cloud.inlier_mask[i]) continue;
    lo = lo.cwiseMin(cloud.points.row(i));
    hi = hi.cwiseMax(cloud.points.row(i));
  }
  if (!(lo[0] <= hi[0])) {  // no object points flagged; fall back to the full cloud
    lo = cloud.points.colwise().minCoeff();
    hi = cloud.points.colwise().maxCoeff();
  }

  const Eigen::Index extra = static_cast<Eigen::Index>(surface_count) * points_per_surface;
  PointCloud out = base_copy(cloud, extra);
  Rng rng(seed);
  Eigen::Index w = cloud.size();
  for (int s = 0; s < surface_count; ++s) {
    const int axis = static_cast<int>(rng.index(3));
    const bool positive = rng.index(2) == 1;
    const int u_axis = (axis + 1) % 3;
    const int v_axis = (axis + 2) % 3;
    const double base = positive ? hi[axis] + offset : lo[axis] - offset;
    for (int p = 0; p < points_per_surface; ++p, ++w) {
      Eigen::RowVector3d q;
      q[u_axis] = rng.uniform(lo[u_axis], hi[u_axis]);
      q[v_axis] = rng.uniform(lo[v_axis], hi[v_axis]);
      const double thick = std::abs(rng.gaussian()) * jitter;
      q[axis] = positive ? base + thick : base - thick;
      out.points.row(w) = q;
    }
  }
  return out;
}

void AugmentationSpec::validate() const {
  if (outlier_ratio < 0.0 || outlier_ratio > 1.0)
    throw config_error("outlier_ratio: must be in [0, 1]");
  if (noise_sigma < 0.0) throw config_error("noise_sigma: must be >= 0");
  if (dropout_ratio < 0.0 || dropout_ratio >= 1.0)
    throw config_error("dropout_ratio: must be in [0, 1)");
  if (clustered) {
    if (clustered->surface_count < 1) throw config_error("surface_count: must be >= 1");
    if (clustered->points_per_surface < 1)
      throw config_error("points_per_surface: must be >= 1");
  }
}

PointCloud apply_augmentation(const PointCloud& cloud, const AugmentationSpec& spec) {
  spec.validate();
  PointCloud out = cloud;
  if (spec.dropout_ratio > 0.0) out = random_dropout(out, spec.dropout_ratio, mix_seed(spec.seed, 1));
  if (spec.noise_sigma > 0.0) out = add_gaussian_noise(out, spec.noise_sigma, mix_seed(spec.seed, 2));
  if (spec.outlier_ratio > 0.0)
    out = add_uniform_outliers(out, spec.outlier_ratio, mix_seed(spec.seed, 3));
  if (spec.clustered) {
    out = add_clustered_outliers(out, spec.clustered->surface_count,
                                 spec.clustered->points_per_surface, mix_seed(spec.seed, 4),
                                 spec.clustered->offset, spec.clustered->jitter);
  }
  return out;
}

PointCloud estimate_normals(const PointCloud& cloud, int k) {
  const Eigen::Index n = cloud.size();
  if (k < 3) throw std::invalid_argument("estimate_normals: k must be >= 3");
  if (k >= n)
    throw std::invalid_argument("estimate_normals: k exceeds the available neighbors");

  PointCloud out = cloud;
  out.normals.resize(n, 3);
  const Eigen::RowVector3d centroid = cloud.points.colwise().mean();

  std::vector<int> idx(n);
  std::vector<double> dist2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      dist2[j] = (cloud.points.row(j) - cloud.points.row(i)).squaredNorm();
    std::iota(idx.begin(), idx.end(), 0);
    std::nth_element(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
      return dist2[a] < dist2[b] || (dist2[a] == dist2[b] && a < b);
    });

    // covariance over the point and its k nearest neighbors
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (int t = 0; t <= k; ++t) mean += cloud.points.row(idx[t]);
    mean /= (k + 1);
    for (int t = 0; t <= k; ++t) {
      const Eigen::RowVector3d d = cloud.points.row(idx[t]) - mean;
      cov += d.transpose() * d;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d normal = eig.eigenvectors().col(0);
    if (normal.dot((cloud.points.row(i) - centroid).transpose()) < 0.0) normal = -normal;
    out.normals.row(i) = normal.normalized().transpose();
  }
  return out;
}

PointCloud rotate_z(const PointCloud& cloud, double angle) {
  Eigen::Matrix3d rot;
  const double c = std::cos(angle), s = std::sin(angle);
  rot << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  PointCloud out = cloud;
  out.points = cloud.points * rot.transpose();
  if (cloud.has_normals()) out.normals = cloud.normals * rot.transpose();
  return out;
}

}  // namespace modepool
