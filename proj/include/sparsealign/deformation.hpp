#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sparsealign/types.hpp"

namespace sparsealign {

/// One basis term x^a y^b z^c t^k of the time-dependent polynomial field.
struct Monomial {
  std::array<int, 3> spatial{0, 0, 0};
  int time = 1;

  int spatial_degree() const { return spatial[0] + spatial[1] + spatial[2]; }
  bool operator==(const Monomial &) const = default;
};

struct DeformationJacobians {
  /// 3 x parameter_count(); column p holds dD/dP_p.
  Eigen::MatrixXd wrt_parameters;
  /// dD/dr in sample coordinates.
  Eigen::Matrix3d wrt_location;
};

/// Polynomial sample deformation D_t(P, r) with no time-constant term.
///
/// Each output component k listed in `components` is
///   sum over monomials m of coeff(m, k) * xh^a yh^b zh^c t^k,
/// where xh = x / coordinate_scale.x() etc. Only axes flagged in
/// `spatial_axes` enter the monomials. Components that are not active stay
/// identically zero and are not exposed as parameters.
class DeformationModel {
 public:
  DeformationModel() = default;
  DeformationModel(int dim, int spatial_degree, int temporal_degree,
                   AxisMask spatial_axes, AxisMask components,
                   Point coordinate_scale = Point::Ones());

  /// Defaults used throughout: 2D fields depend on (x, z); 3D fields are
  /// constant along depth. Both displace along z only.
  static DeformationModel for_dimension(int dim, int spatial_degree,
                                        int temporal_degree = 1,
                                        Point coordinate_scale = Point::Ones());

  int dim() const { return dim_; }
  int spatial_degree() const { return spatial_degree_; }
  int temporal_degree() const { return temporal_degree_; }
  const AxisMask &spatial_axes() const { return spatial_axes_; }
  const AxisMask &components() const { return components_; }
  const Point &coordinate_scale() const { return coordinate_scale_; }
  const std::vector<Monomial> &monomials() const { return monomials_; }

  /// Index of a monomial, or -1 when it is not part of the basis.
  int find_monomial(const Monomial &m) const;

  double coefficient(int monomial, int component) const;
  void set_coefficient(int monomial, int component, double value);
  void set_coefficient(const Monomial &m, int component, double value);

  /// Active coefficients flattened component-major (component, monomial).
  int parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd &p);
  /// Human readable name of parameter p, e.g. "Dz[x^2 t]".
  std::string parameter_name(int p) const;
  bool is_zero() const;

  Point displacement(const Point &r, double t) const;
  DeformationJacobians jacobians(const Point &r, double t) const;

  /// Same basis and scaling, all coefficients zero.
  DeformationModel zeroed() const;

 private:
  double monomial_value(const Monomial &m, const Point &scaled, double t) const;

  int dim_ = 2;
  int spatial_degree_ = 0;
  int temporal_degree_ = 1;
  AxisMask spatial_axes_{true, false, true};
  AxisMask components_{false, false, true};
  Point coordinate_scale_ = Point::Ones();
  std::vector<Monomial> monomials_;
  std::vector<int> active_components_;
  Eigen::MatrixXd coeffs_;  // monomials x 3
};

}  // namespace sparsealign
