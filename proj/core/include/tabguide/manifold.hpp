#pragma once

// Analytic manifolds used as ground truth by the geometric diagnostics.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "tabguide/grad_engine.hpp"

namespace tabguide {

class SyntheticManifold {
 public:
  enum class Kind { Sphere, Affine };

  /// Centered sphere of dimension `intrinsic` in the first intrinsic + 1 coordinates.
  static SyntheticManifold sphere(double radius, std::size_t intrinsic, std::size_t ambient);
  static SyntheticManifold circle(double radius, std::size_t ambient);
  /// `basis` rows must be orthonormal (n × d); `offset` is 1 × d. n = 0 is a point.
  static SyntheticManifold affine(const Matrix& basis, const Matrix& offset);
  /// Span of the first `intrinsic` coordinate axes, shifted by `offset`.
  static SyntheticManifold coordinate_subspace(std::size_t intrinsic, std::size_t ambient,
                                               const Matrix& offset);
  static SyntheticManifold point(const Matrix& at);

  Kind kind() const { return kind_; }
  std::size_t ambient_dim() const { return ambient_; }
  std::size_t intrinsic_dim() const { return intrinsic_; }
  double radius() const { return radius_; }
  /// Flat manifolds only: orthonormal rows (n × d) and the 1 × d offset.
  const Matrix& basis() const { return basis_; }
  const Matrix& offset() const { return offset_; }

  /// Sphere: uniform. Affine: offset + N(0, scale² I_n) coordinates in the basis.
  Matrix sample(std::size_t n, std::uint64_t seed, double scale = 1.0) const;
  /// Row-wise nearest point on the manifold.
  Matrix project(const Matrix& x) const;
  /// Orthonormal rows spanning the tangent space at on-manifold point `p` (n × d).
  Matrix tangent_basis(const Matrix& p) const;
  /// Orthonormal rows spanning the normal space at `p` ((d − n) × d).
  Matrix normal_basis(const Matrix& p) const;
  /// Unit normal per row at p = π(x): outward radial for spheres; the normal
  /// component of x − p for flat manifolds, or the first normal axis when zero.
  Matrix reference_normal(const Matrix& x, const Matrix& p) const;

  nlohmann::json to_json() const;

 private:
  Kind kind_ = Kind::Affine;
  std::size_t ambient_ = 0;
  std::size_t intrinsic_ = 0;
  double radius_ = 0.0;
  Matrix basis_;   // affine only, n × d
  Matrix normal_;  // affine only, (d − n) × d
  Matrix offset_;  // affine only, 1 × d
};

}  // namespace tabguide
