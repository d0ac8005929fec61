#pragma once

// Subspaces of R^d stored as orthonormal bases, with the Hausdorff distance
// between unit spheres and the set operations needed to check invariance of
// filtrations.

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cocylab/cocycle.hpp"

namespace cocylab {

inline constexpr double kContainmentTol = 1e-8;

class Subspace {
 public:
  // Orthonormal basis of the column span of `spanning`; columns whose
  // singular value falls below rank_tol * largest are dropped.
  static Subspace span(const Eigen::MatrixXd& spanning, double rank_tol = 1e-10);
  // Adopts `basis` as is. Throws ValidationError unless its columns are
  // orthonormal within 1e-10.
  static Subspace from_orthonormal(Eigen::MatrixXd basis);
  static Subspace zero(std::size_t ambient);
  static Subspace full(std::size_t ambient);
  static Subspace axis(std::size_t ambient, std::size_t index);

  std::size_t ambient() const { return static_cast<std::size_t>(basis_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(basis_.cols()); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  Eigen::MatrixXd projector() const { return basis_ * basis_.transpose(); }
  // Euclidean distance from v to the subspace.
  double distance(const Eigen::VectorXd& v) const;

 private:
  explicit Subspace(Eigen::MatrixXd basis) : basis_(std::move(basis)) {}
  Eigen::MatrixXd basis_;
};

struct Containment {
  bool contained = false;
  double residual = 0.0;  // max ||(I - P_V) w|| over basis columns w of W
};

// Hausdorff distance between the unit spheres of V and W, with the zero
// subspace's sphere taken as {0}. The Euclidean norm uses principal angles;
// other norms use a grid over the unit spheres (subspace dims up to 3).
// Throws DimensionError on ambient mismatch.
double hausdorff_distance(const Subspace& v, const Subspace& w,
                          NormKind norm = NormKind::Euclidean, std::size_t resolution = 256);

// Is W contained in V?
Containment subspace_contains(const Subspace& v, const Subspace& w, double tol = kContainmentTol);

// V ∩ U^⊥. Throws ContainmentError unless U ⊆ V within kContainmentTol.
Subspace intersect_with_complement(const Subspace& v, const Subspace& u);

// span(M V); its dimension drops when M is not injective on V.
Subspace image_subspace(const Eigen::MatrixXd& m, const Subspace& v);

// Orthogonal complement within R^d.
Subspace orthogonal_complement(const Subspace& v);

class Flag {
 public:
  // Levels V^(1) ⊂ ... ⊂ V^(s) with optional exponent labels (one per level).
  // Throws ValidationError unless dims strictly increase and each level is
  // contained in the next within `tol`.
  Flag(std::vector<Subspace> levels, std::vector<double> labels = {}, double tol = kContainmentTol);

  std::size_t ambient() const { return ambient_; }
  std::size_t size() const { return levels_.size(); }
  const std::vector<Subspace>& levels() const { return levels_; }
  const std::vector<double>& labels() const { return labels_; }
  // level(0) is the zero subspace; level(i) for 1 <= i <= size().
  Subspace level(std::size_t i) const;
  // V^(i) ∩ V^(i-1)^⊥.
  Subspace block(std::size_t i) const;
  std::vector<std::size_t> dims() const;
  bool is_complete() const { return !levels_.empty() && levels_.back().dim() == ambient_; }

  // Images of each level under M; re-validated.
  Flag transformed(const Eigen::MatrixXd& m, double tol = kContainmentTol) const;

 private:
  std::size_t ambient_ = 0;
  std::vector<Subspace> levels_;
  std::vector<double> labels_;
};

}  // namespace cocylab
