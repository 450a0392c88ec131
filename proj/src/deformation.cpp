#include "sparsealign/deformation.hpp"

#include <cmath>
#include <sstream>

namespace sparsealign {

namespace {

double ipow(double base, int exponent) {
  double result = 1.0;
  for (int i = 0; i < exponent; ++i) result *= base;
  return result;
}

const char *kAxisNames[3] = {"x", "y", "z"};

}  // namespace

DeformationModel::DeformationModel(int dim, int spatial_degree, int temporal_degree,
                                   AxisMask spatial_axes, AxisMask components,
                                   Point coordinate_scale)
    : dim_(dim),
      spatial_degree_(spatial_degree),
      temporal_degree_(temporal_degree),
      spatial_axes_(spatial_axes),
      components_(components),
      coordinate_scale_(std::move(coordinate_scale)) {
  if (dim != 2 && dim != 3) throw ConfigError("deformation dimension must be 2 or 3");
  if (spatial_degree < 0) throw ConfigError("spatial degree must be >= 0");
  if (temporal_degree < 1) {
    throw ConfigError("temporal degree must be >= 1: a time-constant deformation is not recoverable");
  }
  if (dim == 2 && (spatial_axes_[kY] || components_[kY])) {
    throw ConfigError("2D deformation cannot depend on or displace along y");
  }
  if ((coordinate_scale_.array() <= 0.0).any() || !coordinate_scale_.allFinite()) {
    throw ConfigError("coordinate scale must be positive");
  }

  std::vector<int> axes;
  for (int a = 0; a < 3; ++a)
    if (spatial_axes_[a]) axes.push_back(a);
  for (int a = 0; a < 3; ++a)
    if (components_[a]) active_components_.push_back(a);

  // Graded ordering; within a degree, higher powers of earlier axes first.
  for (int g = 0; g <= spatial_degree; ++g) {
    std::vector<std::array<int, 3>> terms;
    std::array<int, 3> e{0, 0, 0};
    const int n = static_cast<int>(axes.size());
    auto recurse = [&](auto &&self, int i, int remaining) -> void {
      if (i == n - 1 || n == 0) {
        if (n == 0) {
          if (remaining == 0) terms.push_back(e);
          return;
        }
        e[axes[i]] = remaining;
        terms.push_back(e);
        e[axes[i]] = 0;
        return;
      }
      for (int k = remaining; k >= 0; --k) {
        e[axes[i]] = k;
        self(self, i + 1, remaining - k);
      }
      e[axes[i]] = 0;
    };
    recurse(recurse, 0, g);
    for (const auto &term : terms) {
      for (int k = 1; k <= temporal_degree; ++k) monomials_.push_back({term, k});
    }
  }
  coeffs_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(monomials_.size()), 3);
}

DeformationModel DeformationModel::for_dimension(int dim, int spatial_degree,
                                                 int temporal_degree, Point coordinate_scale) {
  const AxisMask axes = dim == 2 ? AxisMask{true, false, true} : AxisMask{true, true, false};
  return DeformationModel(dim, spatial_degree, temporal_degree, axes,
                          AxisMask{false, false, true}, std::move(coordinate_scale));
}

int DeformationModel::find_monomial(const Monomial &m) const {
  for (std::size_t i = 0; i < monomials_.size(); ++i)
    if (monomials_[i] == m) return static_cast<int>(i);
  return -1;
}

double DeformationModel::coefficient(int monomial, int component) const {
  return coeffs_(monomial, component);
}

void DeformationModel::set_coefficient(int monomial, int component, double value) {
  if (monomial < 0 || monomial >= static_cast<int>(monomials_.size())) {
    throw ConfigError("monomial index out of range");
  }
  if (component < 0 || component > 2 || !components_[component]) {
    throw ConfigError(std::string("deformation component D") +
                      (component >= 0 && component < 3 ? kAxisNames[component] : "?") +
                      " is not active in this model");
  }
  coeffs_(monomial, component) = value;
}

void DeformationModel::set_coefficient(const Monomial &m, int component, double value) {
  const int idx = find_monomial(m);
  if (idx < 0) throw ConfigError("monomial is not part of the deformation basis");
  set_coefficient(idx, component, value);
}

int DeformationModel::parameter_count() const {
  return static_cast<int>(monomials_.size() * active_components_.size());
}

Eigen::VectorXd DeformationModel::parameters() const {
  Eigen::VectorXd p(parameter_count());
  const auto n = static_cast<Eigen::Index>(monomials_.size());
  for (std::size_t c = 0; c < active_components_.size(); ++c)
    p.segment(static_cast<Eigen::Index>(c) * n, n) = coeffs_.col(active_components_[c]);
  return p;
}

void DeformationModel::set_parameters(const Eigen::VectorXd &p) {
  if (p.size() != parameter_count()) {
    throw ConfigError("expected " + std::to_string(parameter_count()) +
                      " deformation parameters, got " + std::to_string(p.size()));
  }
  const auto n = static_cast<Eigen::Index>(monomials_.size());
  for (std::size_t c = 0; c < active_components_.size(); ++c)
    coeffs_.col(active_components_[c]) = p.segment(static_cast<Eigen::Index>(c) * n, n);
}

std::string DeformationModel::parameter_name(int p) const {
  const int n = static_cast<int>(monomials_.size());
  const Monomial &m = monomials_[static_cast<std::size_t>(p % n)];
  std::ostringstream os;
  os << "D" << kAxisNames[active_components_[static_cast<std::size_t>(p / n)]] << "[";
  for (int a = 0; a < 3; ++a) {
    if (m.spatial[a] == 0) continue;
    os << kAxisNames[a];
    if (m.spatial[a] > 1) os << "^" << m.spatial[a];
    os << " ";
  }
  os << "t";
  if (m.time > 1) os << "^" << m.time;
  os << "]";
  return os.str();
}

bool DeformationModel::is_zero() const { return (coeffs_.array() == 0.0).all(); }

double DeformationModel::monomial_value(const Monomial &m, const Point &scaled,
                                        double t) const {
  return ipow(scaled[0], m.spatial[0]) * ipow(scaled[1], m.spatial[1]) *
         ipow(scaled[2], m.spatial[2]) * ipow(t, m.time);
}

Point DeformationModel::displacement(const Point &r, double t) const {
  const Point scaled = r.cwiseQuotient(coordinate_scale_);
  Point d = Point::Zero();
  for (std::size_t i = 0; i < monomials_.size(); ++i) {
    const double v = monomial_value(monomials_[i], scaled, t);
    if (v == 0.0) continue;
    for (int c : active_components_) d[c] += coeffs_(static_cast<Eigen::Index>(i), c) * v;
  }
  return d;
}

DeformationJacobians DeformationModel::jacobians(const Point &r, double t) const {
  const Point scaled = r.cwiseQuotient(coordinate_scale_);
  const auto n = static_cast<Eigen::Index>(monomials_.size());
  DeformationJacobians jac;
  jac.wrt_parameters = Eigen::MatrixXd::Zero(3, parameter_count());
  jac.wrt_location = Eigen::Matrix3d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Monomial &m = monomials_[static_cast<std::size_t>(i)];
    const double v = monomial_value(m, scaled, t);
    for (std::size_t c = 0; c < active_components_.size(); ++c)
      jac.wrt_parameters(active_components_[c], static_cast<Eigen::Index>(c) * n + i) = v;

    for (int a = 0; a < 3; ++a) {
      if (m.spatial[a] == 0) continue;
      Monomial dm = m;
      dm.spatial[a] -= 1;
      const double dv =
          m.spatial[a] * monomial_value(dm, scaled, t) / coordinate_scale_[a];
      if (dv == 0.0) continue;
      for (int c : active_components_) jac.wrt_location(c, a) += coeffs_(i, c) * dv;
    }
  }
  return jac;
}

DeformationModel DeformationModel::zeroed() const {
  DeformationModel out = *this;
  out.coeffs_.setZero();
  return out;
}

}  // namespace sparsealign
