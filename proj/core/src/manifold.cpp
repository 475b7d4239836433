#include "tabguide/manifold.hpp"

#include <cmath>

#include <Eigen/QR>

#include "tabguide/errors.hpp"
#include "tabguide/rng.hpp"

namespace tabguide {

namespace {

/// Orthonormal completion: the columns of Q beyond rank(a) for a d × k input.
Matrix complement(const Matrix& a_cols, std::size_t d) {
  const auto k = a_cols.cols();
  const auto dd = static_cast<Eigen::Index>(d);
  if (k == 0) return Matrix::Identity(dd, dd);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a_cols);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dd, dd);
  return q.rightCols(dd - k).transpose();
}

}  // namespace

SyntheticManifold SyntheticManifold::sphere(double radius, std::size_t intrinsic,
                                            std::size_t ambient) {
  if (!(radius > 0.0)) throw ConfigError("sphere radius must be positive");
  if (intrinsic < 1 || intrinsic + 1 > ambient) {
    throw DimensionError("sphere needs 1 <= n and n + 1 <= d");
  }
  SyntheticManifold m;
  m.kind_ = Kind::Sphere;
  m.radius_ = radius;
  m.intrinsic_ = intrinsic;
  m.ambient_ = ambient;
  return m;
}

SyntheticManifold SyntheticManifold::circle(double radius, std::size_t ambient) {
  return sphere(radius, 1, ambient);
}

SyntheticManifold SyntheticManifold::affine(const Matrix& basis, const Matrix& offset) {
  if (offset.rows() != 1) throw DimensionError("affine offset must be a single row");
  const auto d = offset.cols();
  if (basis.rows() > 0 && basis.cols() != d) {
    throw DimensionError("affine basis width " + std::to_string(basis.cols()) +
                         " differs from offset width " + std::to_string(d));
  }
  if (basis.rows() >= d) throw DimensionError("affine basis must have fewer rows than d");
  if (basis.rows() > 0) {
    const Matrix gram = basis * basis.transpose();
    if ((gram - Matrix::Identity(basis.rows(), basis.rows())).cwiseAbs().maxCoeff() > 1e-10) {
      throw ConfigError("affine basis rows must be orthonormal");
    }
  }
  SyntheticManifold m;
  m.kind_ = Kind::Affine;
  m.ambient_ = static_cast<std::size_t>(d);
  m.intrinsic_ = static_cast<std::size_t>(basis.rows());
  m.basis_ = basis.rows() > 0 ? basis : Matrix(0, d);
  m.offset_ = offset;
  m.normal_ = complement(m.basis_.transpose(), m.ambient_);
  return m;
}

SyntheticManifold SyntheticManifold::coordinate_subspace(std::size_t intrinsic,
                                                         std::size_t ambient,
                                                         const Matrix& offset) {
  Matrix basis = Matrix::Zero(static_cast<Eigen::Index>(intrinsic), static_cast<Eigen::Index>(ambient));
  for (std::size_t i = 0; i < intrinsic; ++i) {
    basis(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
  }
  return affine(basis, offset);
}

SyntheticManifold SyntheticManifold::point(const Matrix& at) {
  return affine(Matrix(0, at.cols()), at);
}

Matrix SyntheticManifold::sample(std::size_t n, std::uint64_t seed, double scale) const {
  Rng rng(seed);
  const auto rows = static_cast<Eigen::Index>(n);
  const auto d = static_cast<Eigen::Index>(ambient_);
  if (kind_ == Kind::Sphere) {
    const auto k = static_cast<Eigen::Index>(intrinsic_ + 1);
    Matrix out = Matrix::Zero(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Matrix g = standard_normal(rng, 1, k);
      double norm = g.norm();
      while (norm < 1e-12) {
        g = standard_normal(rng, 1, k);
        norm = g.norm();
      }
      out.row(r).head(k) = g * (radius_ / norm);
    }
    return out;
  }
  const Matrix coeff = standard_normal(rng, rows, static_cast<Eigen::Index>(intrinsic_)) * scale;
  Matrix out = coeff * basis_;
  out.rowwise() += offset_.row(0);
  return out;
}

Matrix SyntheticManifold::project(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != ambient_) {
    throw DimensionError("projection input has " + std::to_string(x.cols()) + " columns; manifold lives in R^" +
                         std::to_string(ambient_));
  }
  if (kind_ == Kind::Sphere) {
    const auto k = static_cast<Eigen::Index>(intrinsic_ + 1);
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double norm = x.row(r).head(k).norm();
      if (norm > 0.0) {
        out.row(r).head(k) = x.row(r).head(k) * (radius_ / norm);
      } else {
        out(r, 0) = radius_;
      }
    }
    return out;
  }
  Matrix centered = x.rowwise() - offset_.row(0);
  Matrix out = (centered * basis_.transpose()) * basis_;
  out.rowwise() += offset_.row(0);
  return out;
}

Matrix SyntheticManifold::tangent_basis(const Matrix& p) const {
  if (kind_ == Kind::Affine) return basis_;
  const auto d = static_cast<Eigen::Index>(ambient_);
  const auto k = static_cast<Eigen::Index>(intrinsic_ + 1);
  Matrix radial = p.row(0).head(k).transpose();
  radial /= radial.norm();
  const Matrix sub = complement(radial, static_cast<std::size_t>(k));  // n × k
  Matrix out = Matrix::Zero(sub.rows(), d);
  out.leftCols(k) = sub;
  return out;
}

Matrix SyntheticManifold::normal_basis(const Matrix& p) const {
  if (kind_ == Kind::Affine) return normal_;
  const auto d = static_cast<Eigen::Index>(ambient_);
  const auto k = static_cast<Eigen::Index>(intrinsic_ + 1);
  Matrix out = Matrix::Zero(d - k + 1, d);
  out.row(0).head(k) = p.row(0).head(k) / p.row(0).head(k).norm();
  for (Eigen::Index i = 0; i < d - k; ++i) out(i + 1, k + i) = 1.0;
  return out;
}

Matrix SyntheticManifold::reference_normal(const Matrix& x, const Matrix& p) const {
  Matrix out(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    if (kind_ == Kind::Sphere) {
      const auto k = static_cast<Eigen::Index>(intrinsic_ + 1);
      out.row(r).setZero();
      out.row(r).head(k) = p.row(r).head(k) / p.row(r).head(k).norm();
      continue;
    }
    Matrix v = x.row(r) - p.row(r);
    v = (v * normal_.transpose()) * normal_;
    const double norm = v.norm();
    if (norm > 1e-12) {
      out.row(r) = v / norm;
    } else {
      out.row(r) = normal_.row(0);
    }
  }
  return out;
}

nlohmann::json SyntheticManifold::to_json() const {
  nlohmann::json j{{"ambient_dim", ambient_}, {"intrinsic_dim", intrinsic_}};
  if (kind_ == Kind::Sphere) {
    j["kind"] = intrinsic_ == 1 ? "circle" : "sphere";
    j["radius"] = radius_;
    j["embedding"] = "first n+1 coordinates, centered at the origin";
    return j;
  }
  j["kind"] = intrinsic_ == 0 ? "point" : "subspace";
  std::vector<std::vector<double>> basis;
  for (Eigen::Index r = 0; r < basis_.rows(); ++r) {
    basis.emplace_back(basis_.row(r).data(), basis_.row(r).data() + basis_.cols());
  }
  j["basis"] = basis;
  j["offset"] = std::vector<double>(offset_.data(), offset_.data() + offset_.cols());
  return j;
}

}  // namespace tabguide
