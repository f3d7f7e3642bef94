#include "modepool/density.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Cholesky>

#include "modepool/pooling.hpp"

namespace modepool {

namespace {

constexpr double kGoldenRatio = 0.6180339887498949;

struct GaussianCache {
  Eigen::Matrix2d inv;
  double norm;  // 1 / (2 pi sqrt(det))
};

GaussianCache cache_of(const GaussianComponent2D& g) {
  const double det = g.cov(0, 0) * g.cov(1, 1) - g.cov(0, 1) * g.cov(1, 0);
  GaussianCache c;
  c.inv << g.cov(1, 1), -g.cov(0, 1), -g.cov(1, 0), g.cov(0, 0);
  c.inv /= det;
  c.norm = 1.0 / (2.0 * M_PI * std::sqrt(det));
  return c;
}

double gaussian_pdf(const GaussianComponent2D& g, const GaussianCache& c,
                    const Eigen::Vector2d& x) {
  const Eigen::Vector2d d = x - g.mean;
  const double q = d.dot(c.inv * d);
  return c.norm * std::exp(-0.5 * q);
}

double gaussian1_pdf(double t, double mean, double var) {
  const double d = t - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
}

// golden-section maximization on [a, b], assuming a locally unimodal bracket
double golden_max(const std::function<double(double)>& f, double a, double b,
                  double resolution) {
  double x1 = b - kGoldenRatio * (b - a);
  double x2 = a + kGoldenRatio * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > resolution) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGoldenRatio * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGoldenRatio * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

void Mixture2D::validate() const {
  double total = 0.0;
  for (const auto& g : gaussians) {
    if (g.weight < 0.0) throw config_error("mixture: component weight must be >= 0");
    total += g.weight;
    if (std::abs(g.cov(0, 1) - g.cov(1, 0)) > 1e-12)
      throw config_error("mixture: covariance must be symmetric");
    const double det = g.cov(0, 0) * g.cov(1, 1) - g.cov(0, 1) * g.cov(1, 0);
    if (!(g.cov(0, 0) > 0.0) || !(det > 0.0))
      throw config_error("mixture: covariance must be positive definite");
  }
  if (uniform) {
    if (uniform->weight < 0.0) throw config_error("mixture: uniform weight must be >= 0");
    total += uniform->weight;
    if (!(uniform->lo[0] < uniform->hi[0]) || !(uniform->lo[1] < uniform->hi[1]))
      throw config_error("mixture: uniform support box is degenerate");
  }
  if (gaussians.empty() && !uniform) throw config_error("mixture: no components");
  if (std::abs(total - 1.0) > 1e-9)
    throw config_error("mixture: weights must sum to 1");
}

void Mixture2D::support_box(double n_sigma, Eigen::Vector2d& lo, Eigen::Vector2d& hi) const {
  lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  hi = -lo;
  for (const auto& g : gaussians) {
    for (int a = 0; a < 2; ++a) {
      const double s = std::sqrt(g.cov(a, a));
      lo[a] = std::min(lo[a], g.mean[a] - n_sigma * s);
      hi[a] = std::max(hi[a], g.mean[a] + n_sigma * s);
    }
  }
  if (uniform) {
    lo = lo.cwiseMin(uniform->lo);
    hi = hi.cwiseMax(uniform->hi);
  }
}

double density_at(const Mixture2D& mix, const Eigen::Vector2d& point) {
  double p = 0.0;
  for (const auto& g : mix.gaussians) p += g.weight * gaussian_pdf(g, cache_of(g), point);
  if (mix.uniform) {
    const auto& u = *mix.uniform;
    if (point[0] >= u.lo[0] && point[0] <= u.hi[0] && point[1] >= u.lo[1] &&
        point[1] <= u.hi[1]) {
      p += u.weight / ((u.hi[0] - u.lo[0]) * (u.hi[1] - u.lo[1]));
    }
  }
  return p;
}

double marginal_density_at(const Mixture2D& mix, int axis, double t) {
  if (axis != 0 && axis != 1) throw std::invalid_argument("axis must be 0 or 1");
  double p = 0.0;
  for (const auto& g : mix.gaussians)
    p += g.weight * gaussian1_pdf(t, g.mean[axis], g.cov(axis, axis));
  if (mix.uniform) {
    const auto& u = *mix.uniform;
    if (t >= u.lo[axis] && t <= u.hi[axis]) p += u.weight / (u.hi[axis] - u.lo[axis]);
  }
  return p;
}

MarginalPeak marginal_peak(const Mixture2D& mix, int axis, double resolution) {
  mix.validate();
  Eigen::Vector2d lo, hi;
  mix.support_box(6.0, lo, hi);
  const int grid = 2000;
  const double step = (hi[axis] - lo[axis]) / grid;
  double best_t = lo[axis];
  double best_p = -1.0;
  for (int i = 0; i <= grid; ++i) {
    const double t = lo[axis] + i * step;
    const double p = marginal_density_at(mix, axis, t);
    if (p > best_p) {
      best_p = p;
      best_t = t;
    }
  }
  auto f = [&](double t) { return marginal_density_at(mix, axis, t); };
  MarginalPeak peak;
  peak.location = golden_max(f, std::max(lo[axis], best_t - step),
                             std::min(hi[axis], best_t + step), resolution);
  peak.value = f(peak.location);
  return peak;
}

JointPeak joint_peak(const Mixture2D& mix, double resolution) {
  mix.validate();
  Eigen::Vector2d lo, hi;
  mix.support_box(6.0, lo, hi);
  const int grid = 400;
  const Eigen::Vector2d step = (hi - lo) / grid;

  JointPeak peak;
  double best = -1.0;
  int ties = 0;
  for (int i = 0; i <= grid; ++i) {
    for (int j = 0; j <= grid; ++j) {
      const Eigen::Vector2d x(lo[0] + i * step[0], lo[1] + j * step[1]);
      const double p = density_at(mix, x);
      if (p > best * (1.0 + 1e-12)) {
        best = p;
        peak.location = x;
        ties = 1;
      } else if (p > best * (1.0 - 1e-12)) {
        ++ties;
      }
    }
  }
  peak.unique = ties <= 1;

  // coordinate-wise golden-section refinement around the winning cell,
  // brackets clamped to the support
  Eigen::Vector2d x = peak.location;
  Eigen::Vector2d h = step;
  while (h.maxCoeff() > resolution) {
    for (int a = 0; a < 2; ++a) {
      auto f = [&](double t) {
        Eigen::Vector2d y = x;
        y[a] = t;
        return density_at(mix, y);
      };
      x[a] = golden_max(f, std::max(lo[a], x[a] - h[a]), std::min(hi[a], x[a] + h[a]),
                        std::max(resolution * 0.5, h[a] * 1e-3));
    }
    h *= 0.5;
  }
  peak.location = x;
  peak.value = density_at(mix, x);
  return peak;
}

Samples2D sample_mixture(const Mixture2D& mix, int count, Rng& rng) {
  mix.validate();
  if (count < 1) throw std::invalid_argument("sample_mixture: count must be >= 1");

  std::vector<double> cumulative;
  std::vector<Eigen::Matrix2d> chol;
  for (const auto& g : mix.gaussians) {
    cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + g.weight);
    chol.push_back(Eigen::LLT<Eigen::Matrix2d>(g.cov).matrixL());
  }

  Samples2D out(count, 2);
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform();
    std::size_t k = 0;
    while (k < cumulative.size() && u >= cumulative[k]) ++k;
    if (k < mix.gaussians.size()) {
      const Eigen::Vector2d z(rng.gaussian(), rng.gaussian());
      out.row(i) = (mix.gaussians[k].mean + chol[k] * z).transpose();
    } else {
      const auto& un = *mix.uniform;
      out(i, 0) = rng.uniform(un.lo[0], un.hi[0]);
      out(i, 1) = rng.uniform(un.lo[1], un.hi[1]);
    }
  }
  return out;
}

Eigen::Vector2d mmap_estimate(const Eigen::Ref<const Samples2D>& samples, int bins_per_axis,
                              double range_lo, double range_hi) {
  Eigen::Vector2d out;
  for (int a = 0; a < 2; ++a) {
    out[a] = histogram_pool_1d(samples.col(a), bins_per_axis, range_lo, range_hi).value;
  }
  return out;
}

Eigen::Vector2d mmap_estimate(const Eigen::Ref<const Samples2D>& samples, int bins_per_axis) {
  const double lo = samples.minCoeff();
  const double hi = samples.maxCoeff();
  return mmap_estimate(samples, bins_per_axis, lo, hi == lo ? lo + 1.0 : hi);
}

double sample_entropy(const Mixture2D& mix, const Eigen::Ref<const Samples2D>& samples) {
  mix.validate();
  double e = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    const double p = density_at(mix, samples.row(i).transpose());
    if (p > 0.0) e -= p * std::log(p);
  }
  return e;
}

double sample_entropy_kde(const Eigen::Ref<const Samples2D>& samples, double bandwidth) {
  if (!(bandwidth > 0.0)) throw config_error("bandwidth: must be > 0");
  const Eigen::Index n = samples.rows();
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  const double norm = 1.0 / (static_cast<double>(n) * 2.0 * M_PI * bandwidth * bandwidth);
  const Eigen::ArrayXd x = samples.col(0).array();
  const Eigen::ArrayXd y = samples.col(1).array();
  double e = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p =
        norm * (-((x - x[i]).square() + (y - y[i]).square()) * inv2h2).exp().sum();
    if (p > 0.0) e -= p * std::log(p);
  }
  return e;
}

double grid_mass(const Mixture2D& mix, int cells_per_axis, double n_sigma) {
  mix.validate();
  Eigen::Vector2d lo, hi;
  mix.support_box(n_sigma, lo, hi);
  const double hx = (hi[0] - lo[0]) / cells_per_axis;
  const double hy = (hi[1] - lo[1]) / cells_per_axis;
  double mass = 0.0;
  for (int i = 0; i < cells_per_axis; ++i) {
    const double cx = lo[0] + (i + 0.5) * hx;
    double row = 0.0;
    for (int j = 0; j < cells_per_axis; ++j) {
      row += density_at(mix, Eigen::Vector2d(cx, lo[1] + (j + 0.5) * hy));
    }
    mass += row * hx * hy;
  }
  return mass;
}

Mixture2D preset_mixture(const std::string& name) {
  Mixture2D mix;
  if (name == "fig3") {
    GaussianComponent2D g;
    g.weight = 0.2;
    g.mean << 0.0, 0.0;
    g.cov << 1.0, 0.5, 0.5, 1.0;
    mix.gaussians.push_back(g);
    UniformComponent2D u;
    u.weight = 0.8;
    u.lo << -5.0, -5.0;
    u.hi << 5.0, 5.0;
    mix.uniform = u;
  } else if (name == "fig4") {
    GaussianComponent2D g;
    g.weight = 0.25;
    g.mean << 0.0, 0.0;
    g.cov << 1.0, 0.5, 0.5, 1.0;
    mix.gaussians.push_back(g);
    Eigen::Matrix2d wide;
    wide << 5.0, 0.5, 0.5, 5.0;
    for (auto mean : {Eigen::Vector2d(5.0, 4.0), Eigen::Vector2d(-3.0, 5.0),
                      Eigen::Vector2d(-4.0, 7.0)}) {
      GaussianComponent2D c;
      c.weight = 0.25;
      c.mean = mean;
      c.cov = wide;
      mix.gaussians.push_back(c);
    }
  } else {
    throw config_error("preset: unknown mixture preset '" + name + "'");
  }
  return mix;
}

}  // namespace modepool
