#include "cocylab/grassmann.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cocylab/errors.hpp"
#include "cocylab/format.hpp"

namespace cocylab {
namespace {

void require_same_ambient(const Subspace& a, const Subspace& b) {
  if (a.ambient() != b.ambient()) {
    throw DimensionError("ambient dimensions differ: " + std::to_string(a.ambient()) + " vs " +
                         std::to_string(b.ambient()));
  }
}

// Largest principal angle between equal-dimensional subspaces, using the
// sine formula for small angles where the cosine loses precision.
double largest_principal_angle(const Subspace& v, const Subspace& w) {
  Eigen::JacobiSVD<Eigen::MatrixXd> cosines(v.basis().transpose() * w.basis());
  const double c = std::clamp(cosines.singularValues().minCoeff(), 0.0, 1.0);
  if (c < std::numbers::sqrt2 / 2) return std::acos(c);
  const Eigen::MatrixXd residual = v.basis() - w.basis() * (w.basis().transpose() * v.basis());
  Eigen::JacobiSVD<Eigen::MatrixXd> sines(residual);
  return std::asin(std::clamp(sines.singularValues()(0), 0.0, 1.0));
}

double euclidean_hausdorff(const Subspace& v, const Subspace& w) {
  if (v.dim() == 0 && w.dim() == 0) return 0.0;
  if (v.dim() == 0 || w.dim() == 0) return 1.0;
  // A larger subspace contains a unit vector orthogonal to the smaller one.
  if (v.dim() != w.dim()) return std::numbers::sqrt2;
  return 2.0 * std::sin(largest_principal_angle(v, w) / 2.0);
}

// Points of the unit sphere {u in V : ||u|| = 1} under `norm`, from a grid
// over coefficient directions; {0} for the zero subspace.
std::vector<Eigen::VectorXd> sphere_grid(const Subspace& v, NormKind norm, std::size_t resolution) {
  const std::size_t p = v.dim();
  std::vector<Eigen::VectorXd> coeffs;
  if (p == 0) return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(v.ambient()))};
  if (p == 1) {
    coeffs = {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, -1.0)};
  } else if (p == 2) {
    for (std::size_t j = 0; j < resolution; ++j) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(resolution);
      coeffs.push_back(Eigen::Vector2d(std::cos(t), std::sin(t)));
    }
  } else if (p == 3) {
    const std::size_t rings = std::max<std::size_t>(resolution / 2, 2);
    for (std::size_t i = 0; i <= rings; ++i) {
      const double polar = std::numbers::pi * static_cast<double>(i) / static_cast<double>(rings);
      const std::size_t around = (i == 0 || i == rings) ? 1 : resolution;
      for (std::size_t j = 0; j < around; ++j) {
        const double az = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(resolution);
        coeffs.push_back(Eigen::Vector3d(std::sin(polar) * std::cos(az),
                                         std::sin(polar) * std::sin(az), std::cos(polar)));
      }
    }
  } else {
    throw DimensionError("grid Hausdorff distance supports subspaces of dimension <= 3");
  }
  std::vector<Eigen::VectorXd> points;
  points.reserve(coeffs.size());
  for (const auto& c : coeffs) {
    Eigen::VectorXd u = v.basis() * c;
    points.push_back(u / vector_norm(u, norm));
  }
  return points;
}

double directed_grid(const std::vector<Eigen::VectorXd>& from, const std::vector<Eigen::VectorXd>& to,
                     NormKind norm) {
  double worst = 0.0;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) best = std::min(best, vector_norm(a - b, norm));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

Subspace Subspace::span(const Eigen::MatrixXd& spanning, double rank_tol) {
  const Eigen::Index d = spanning.rows();
  if (spanning.cols() == 0) return Subspace(Eigen::MatrixXd(d, 0));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(spanning, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    while (rank < s.size() && s(rank) > rank_tol * s(0)) ++rank;
  }
  return Subspace(svd.matrixU().leftCols(rank));
}

Subspace Subspace::from_orthonormal(Eigen::MatrixXd basis) {
  const Eigen::Index p = basis.cols();
  if (p > basis.rows()) throw ValidationError("more basis columns than ambient dimension");
  const double err =
      p == 0 ? 0.0
             : (basis.transpose() * basis - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff();
  if (!(err <= 1e-10)) {
    throw ValidationError("basis is not orthonormal (error " + format_real(err) + ")");
  }
  return Subspace(std::move(basis));
}

Subspace Subspace::zero(std::size_t ambient) {
  return Subspace(Eigen::MatrixXd(static_cast<Eigen::Index>(ambient), 0));
}

Subspace Subspace::full(std::size_t ambient) {
  const auto d = static_cast<Eigen::Index>(ambient);
  return Subspace(Eigen::MatrixXd::Identity(d, d));
}

Subspace Subspace::axis(std::size_t ambient, std::size_t index) {
  if (index >= ambient) throw DimensionError("axis index outside ambient space");
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ambient), 1);
  e(static_cast<Eigen::Index>(index), 0) = 1.0;
  return Subspace(std::move(e));
}

double Subspace::distance(const Eigen::VectorXd& v) const {
  if (dim() == 0) return v.norm();
  return (v - basis_ * (basis_.transpose() * v)).norm();
}

double hausdorff_distance(const Subspace& v, const Subspace& w, NormKind norm,
                          std::size_t resolution) {
  require_same_ambient(v, w);
  if (norm == NormKind::Euclidean) return euclidean_hausdorff(v, w);
  if (resolution < 32) throw ValidationError("grid resolution must be at least 32");
  const auto a = sphere_grid(v, norm, resolution);
  const auto b = sphere_grid(w, norm, resolution);
  return std::max(directed_grid(a, b, norm), directed_grid(b, a, norm));
}

Containment subspace_contains(const Subspace& v, const Subspace& w, double tol) {
  require_same_ambient(v, w);
  Containment out;
  for (Eigen::Index j = 0; j < w.basis().cols(); ++j) {
    out.residual = std::max(out.residual, v.distance(w.basis().col(j)));
  }
  out.contained = out.residual <= tol;
  return out;
}

Subspace intersect_with_complement(const Subspace& v, const Subspace& u) {
  require_same_ambient(v, u);
  const auto inside = subspace_contains(v, u, kContainmentTol);
  if (!inside.contained) {
    throw ContainmentError("U is not contained in V (residual " + format_real(inside.residual) + ")");
  }
  const Eigen::Index keep = static_cast<Eigen::Index>(v.dim() - u.dim());
  const Eigen::Index d = static_cast<Eigen::Index>(v.ambient());
  if (keep == 0) return Subspace::zero(v.ambient());
  Eigen::MatrixXd projected = v.basis();
  if (u.dim() > 0) projected -= u.basis() * (u.basis().transpose() * v.basis());
  // The dim V - dim U leading left singular vectors span V ∩ U^⊥; the
  // remaining singular values are bounded by the containment residual.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(projected, Eigen::ComputeThinU);
  Eigen::MatrixXd basis = svd.matrixU().leftCols(keep);
  if (u.dim() > 0) {
    // One re-projection pass keeps the result orthogonal to U at 1e-16.
    basis -= u.basis() * (u.basis().transpose() * basis);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
    basis = qr.householderQ() * Eigen::MatrixXd::Identity(d, keep);
  }
  return Subspace::from_orthonormal(std::move(basis));
}

Subspace image_subspace(const Eigen::MatrixXd& m, const Subspace& v) {
  if (static_cast<std::size_t>(m.cols()) != v.ambient()) {
    throw DimensionError("matrix columns do not match subspace ambient dimension");
  }
  return Subspace::span(m * v.basis());
}

Subspace orthogonal_complement(const Subspace& v) {
  return intersect_with_complement(Subspace::full(v.ambient()), v);
}

Flag::Flag(std::vector<Subspace> levels, std::vector<double> labels, double tol)
    : levels_(std::move(levels)), labels_(std::move(labels)) {
  if (levels_.empty()) throw ValidationError("flag needs at least one level");
  ambient_ = levels_.front().ambient();
  if (!labels_.empty() && labels_.size() != levels_.size()) {
    throw ValidationError("flag labels must match the number of levels");
  }
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i].ambient() != ambient_) throw DimensionError("flag levels differ in ambient dimension");
    if (i == 0) continue;
    if (levels_[i].dim() <= levels_[i - 1].dim()) {
      throw ValidationError("flag dimensions must strictly increase (level " + std::to_string(i + 1) +
                            ")");
    }
    const auto nested = subspace_contains(levels_[i], levels_[i - 1], tol);
    if (!nested.contained) {
      throw ValidationError("flag level " + std::to_string(i) + " is not contained in level " +
                            std::to_string(i + 1) + " (residual " + format_real(nested.residual) + ")");
    }
  }
}

Subspace Flag::level(std::size_t i) const {
  if (i == 0) return Subspace::zero(ambient_);
  if (i > levels_.size()) throw RangeError("flag level " + std::to_string(i) + " out of range");
  return levels_[i - 1];
}

Subspace Flag::block(std::size_t i) const {
  if (i == 0 || i > levels_.size()) throw RangeError("flag block " + std::to_string(i) + " out of range");
  return intersect_with_complement(level(i), level(i - 1));
}

std::vector<std::size_t> Flag::dims() const {
  std::vector<std::size_t> out;
  for (const auto& l : levels_) out.push_back(l.dim());
  return out;
}

Flag Flag::transformed(const Eigen::MatrixXd& m, double tol) const {
  std::vector<Subspace> images;
  for (const auto& l : levels_) images.push_back(image_subspace(m, l));
  return Flag(std::move(images), labels_, tol);
}

}  // namespace cocylab
