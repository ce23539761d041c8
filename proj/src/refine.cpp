#include "colcal/refine.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace colcal {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

// Residual of one correspondence with its derivatives w.r.t. the shared and
// the view-local parameter blocks.
struct PointTerm {
  Vec2 residual;
  Eigen::Matrix<double, 2, Eigen::Dynamic> shared;
  Eigen::Matrix<double, 2, Eigen::Dynamic> local;
};

Vec3 camera_point(const ParameterVector& theta, int view, const Vec3& model, Mat3& rc) {
  rc = theta.camera_rotation(view);
  if (theta.mode == PoseMode::Spherical) return rc * (model - theta.offset.center());
  return rc * model + theta.translations[static_cast<std::size_t>(view)];
}

Vec2 distort_and_scale(const ParameterVector& theta, const Vec3& xc) {
  if (!(xc.z() > 1e-12)) {
    throw Error(ErrorCode::BehindCamera, "point projects behind the camera");
  }
  const double u = xc.x() / xc.z();
  const double v = xc.y() / xc.z();
  const double q = u * u + v * v;
  const auto& k = theta.distortion;
  const double d = 1.0 + k.k1 * q + k.k2 * q * q;
  const auto& in = theta.intrinsics;
  return {in.fx * d * u + in.cx, in.fy * d * v + in.cy};
}

PointTerm evaluate_point(const ParameterVector& theta, const Correspondence& c,
                         bool with_jacobian) {
  Mat3 rc;
  const Vec3 xc = camera_point(theta, c.view, c.model, rc);
  PointTerm out;
  out.residual = distort_and_scale(theta, xc) - Vec2(c.image.u, c.image.v);
  if (!with_jacobian) return out;

  const auto& in = theta.intrinsics;
  const auto& k = theta.distortion;
  const double z = xc.z();
  const double u = xc.x() / z;
  const double v = xc.y() / z;
  const double q = u * u + v * v;
  const double d = 1.0 + k.k1 * q + k.k2 * q * q;
  const double dd_dq = k.k1 + 2.0 * k.k2 * q;

  Eigen::Matrix2d dp_duv;
  dp_duv << in.fx * (d + 2.0 * u * u * dd_dq), in.fx * 2.0 * u * v * dd_dq,
      in.fy * 2.0 * u * v * dd_dq, in.fy * (d + 2.0 * v * v * dd_dq);
  Mat23 duv_dxc;
  duv_dxc << 1.0 / z, 0.0, -u / z, 0.0, 1.0 / z, -v / z;
  const Mat23 dp_dxc = dp_duv * duv_dxc;

  out.shared.resize(2, theta.shared_size());
  out.shared.col(0) << d * u, 0.0;
  out.shared.col(1) << 0.0, d * v;
  out.shared.col(2) << 1.0, 0.0;
  out.shared.col(3) << 0.0, 1.0;
  out.shared.col(4) << in.fx * u * q, in.fy * v * q;
  out.shared.col(5) << in.fx * u * q * q, in.fy * v * q * q;

  out.local.resize(2, theta.view_block_size());
  if (theta.mode == PoseMode::Spherical) {
    // X_c = R_cam (X - [x, y, -r]).
    out.shared.col(6) = -dp_dxc * rc.col(0);
    out.shared.col(7) = -dp_dxc * rc.col(1);
    out.shared.col(8) = dp_dxc * rc.col(2);
    out.local = -dp_dxc * skew(xc);
  } else {
    const Vec3 rotated = rc * c.model;
    out.local.leftCols<3>() = -dp_dxc * skew(rotated);
    out.local.rightCols<3>() = dp_dxc;
  }
  return out;
}

double huber_weight(double e, double delta) {
  return e <= delta ? 1.0 : delta / e;
}

std::vector<std::vector<std::size_t>> group_by_view(std::span<const Correspondence> pairs,
                                                    int num_views) {
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(num_views));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int v = pairs[i].view;
    if (v < 0 || v >= num_views) {
      throw Error(ErrorCode::Validation, "correspondence references view " + std::to_string(v) +
                                             " but parameters hold " + std::to_string(num_views));
    }
    groups[static_cast<std::size_t>(v)].push_back(i);
  }
  return groups;
}

// Robust cost evaluated view by view, then summed in view order so the
// result does not depend on the order of the input list.
double grouped_cost(const ParameterVector& theta, std::span<const Correspondence> pairs,
                    const std::vector<std::vector<std::size_t>>& groups, double delta) {
  double total = 0.0;
  for (const auto& group : groups) {
    double view_sum = 0.0;
    for (std::size_t i : group) {
      view_sum += huber(evaluate_point(theta, pairs[i], false).residual.norm(), delta);
    }
    total += view_sum;
  }
  return total;
}

struct NormalEquations {
  MatX u;                  // shared x shared
  VecX gs;                 // shared part of J^T W r
  std::vector<MatX> v;     // per view, block x block
  std::vector<MatX> w;     // per view, shared x block
  std::vector<VecX> gv;    // per view part of J^T W r
};

NormalEquations build_normal_equations(const ParameterVector& theta,
                                       std::span<const Correspondence> pairs,
                                       const std::vector<std::vector<std::size_t>>& groups,
                                       double delta) {
  const int ns = theta.shared_size();
  const int nb = theta.view_block_size();
  NormalEquations ne;
  ne.u = MatX::Zero(ns, ns);
  ne.gs = VecX::Zero(ns);
  for (const auto& group : groups) {
    MatX v = MatX::Zero(nb, nb);
    MatX w = MatX::Zero(ns, nb);
    VecX gv = VecX::Zero(nb);
    MatX u = MatX::Zero(ns, ns);
    VecX gs = VecX::Zero(ns);
    for (std::size_t i : group) {
      const PointTerm t = evaluate_point(theta, pairs[i], true);
      const double wt = huber_weight(t.residual.norm(), delta);
      u.noalias() += wt * t.shared.transpose() * t.shared;
      gs.noalias() += wt * t.shared.transpose() * t.residual;
      v.noalias() += wt * t.local.transpose() * t.local;
      w.noalias() += wt * t.shared.transpose() * t.local;
      gv.noalias() += wt * t.local.transpose() * t.residual;
    }
    ne.u += u;
    ne.gs += gs;
    ne.v.push_back(std::move(v));
    ne.w.push_back(std::move(w));
    ne.gv.push_back(std::move(gv));
  }
  return ne;
}

MatX damped(const MatX& m, double lambda) {
  MatX out = m;
  const double floor = 1e-12 * std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out(i, i) += lambda * std::max(m(i, i), floor);
  }
  return out;
}

// Solves the damped normal equations through the Schur complement on the
// shared block. Returns false if a factorization fails.
bool solve_step(const NormalEquations& ne, double lambda, VecX& step) {
  const auto ns = ne.u.rows();
  const auto nviews = ne.v.size();
  const auto nb = nviews > 0 ? ne.v.front().rows() : 0;
  MatX s = damped(ne.u, lambda);
  VecX rhs = -ne.gs;
  std::vector<MatX> vinv(nviews);
  for (std::size_t i = 0; i < nviews; ++i) {
    Eigen::LDLT<MatX> ldlt(damped(ne.v[i], lambda));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    vinv[i] = ldlt.solve(MatX::Identity(nb, nb));
    const MatX wv = ne.w[i] * vinv[i];
    s.noalias() -= wv * ne.w[i].transpose();
    rhs.noalias() += wv * ne.gv[i];
  }
  Eigen::LDLT<MatX> ldlt(s);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  const VecX ds = ldlt.solve(rhs);
  if (!ds.allFinite()) return false;
  step.resize(ns + static_cast<Eigen::Index>(nviews) * nb);
  step.head(ns) = ds;
  for (std::size_t i = 0; i < nviews; ++i) {
    const VecX dv = vinv[i] * (-ne.gv[i] - ne.w[i].transpose() * ds);
    step.segment(ns + static_cast<Eigen::Index>(i) * nb, nb) = dv;
  }
  return step.allFinite();
}

// Reduction of sum w ||r + J d||^2 predicted by the linear model.
double predicted_reduction(const NormalEquations& ne, const VecX& step) {
  const auto ns = ne.u.rows();
  const VecX ds = step.head(ns);
  double quad = ds.dot(ne.u * ds);
  double lin = ds.dot(ne.gs);
  for (std::size_t i = 0; i < ne.v.size(); ++i) {
    const auto nb = ne.v[i].rows();
    const VecX dv = step.segment(ns + static_cast<Eigen::Index>(i) * nb, nb);
    quad += dv.dot(ne.v[i] * dv) + 2.0 * ds.dot(ne.w[i] * dv);
    lin += dv.dot(ne.gv[i]);
  }
  return -2.0 * lin - quad;
}

double parameter_norm(const ParameterVector& theta) {
  const auto& in = theta.intrinsics;
  double sq = in.fx * in.fx + in.fy * in.fy + in.cx * in.cx + in.cy * in.cy;
  if (theta.mode == PoseMode::Spherical) {
    sq += theta.offset.center().squaredNorm();
  } else {
    for (const auto& t : theta.translations) sq += t.squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace

PoseMode parse_pose_mode(std::string_view name) {
  if (name == "spherical") return PoseMode::Spherical;
  if (name == "free6dof") return PoseMode::Free6Dof;
  throw Error(ErrorCode::Validation, "unknown calibration mode '" + std::string(name) + "'");
}

std::string_view to_string(PoseMode mode) {
  return mode == PoseMode::Spherical ? "spherical" : "free6dof";
}

Mat3 ParameterVector::camera_rotation(int view) const {
  const Mat3 r = rotation_from_axis_angle(rotations[static_cast<std::size_t>(view)]);
  return mode == PoseMode::Spherical ? Mat3(r.transpose()) : r;
}

Vec3 ParameterVector::to_camera(int view, const Vec3& model) const {
  Mat3 rc;
  return camera_point(*this, view, model, rc);
}

ParameterVector ParameterVector::retract(const Eigen::VectorXd& delta) const {
  if (delta.size() != size()) {
    throw Error(ErrorCode::Validation, "increment size does not match parameter layout");
  }
  ParameterVector out = *this;
  out.intrinsics.fx += delta(0);
  out.intrinsics.fy += delta(1);
  out.intrinsics.cx += delta(2);
  out.intrinsics.cy += delta(3);
  out.distortion.k1 += delta(4);
  out.distortion.k2 += delta(5);
  if (mode == PoseMode::Spherical) {
    out.offset.x += delta(6);
    out.offset.y += delta(7);
    out.offset.r += delta(8);
  }
  const int ns = shared_size();
  const int nb = view_block_size();
  for (int i = 0; i < num_views(); ++i) {
    const Vec3 w = delta.segment<3>(ns + i * nb);
    const Mat3 rc = rotation_from_axis_angle(w) * camera_rotation(i);
    // Stored axis-angle is re-extracted, so its magnitude stays in [0, pi].
    out.rotations[static_cast<std::size_t>(i)] = axis_angle_from_rotation(
        mode == PoseMode::Spherical ? Mat3(rc.transpose()) : rc);
    if (mode == PoseMode::Free6Dof) {
      out.translations[static_cast<std::size_t>(i)] += delta.segment<3>(ns + i * nb + 3);
    }
  }
  return out;
}

void ParameterVector::validate() const {
  intrinsics.validate();
  if (rotations.empty()) throw Error(ErrorCode::Validation, "parameters hold no views");
  if (mode == PoseMode::Free6Dof && translations.size() != rotations.size()) {
    throw Error(ErrorCode::Validation, "free6dof parameters need one translation per view");
  }
  if (mode == PoseMode::Spherical && !(offset.r > 0.0)) {
    throw Error(ErrorCode::Validation, "spherical radius must be positive");
  }
}

ParameterVector make_spherical_parameters(const SphericalInit& init) {
  ParameterVector p;
  p.mode = PoseMode::Spherical;
  p.intrinsics = init.intrinsics;
  p.offset = init.offset.offset;
  for (const auto& r : init.rotations) p.rotations.push_back(axis_angle_from_rotation(r));
  return p;
}

ParameterVector make_free_parameters(const FreeInit& init) {
  ParameterVector p;
  p.mode = PoseMode::Free6Dof;
  p.intrinsics = init.intrinsics;
  for (const auto& r : init.rotations) p.rotations.push_back(axis_angle_from_rotation(r));
  p.translations = init.translations;
  return p;
}

Vec2 project(const ParameterVector& theta, int view, const Vec3& model) {
  Mat3 rc;
  return distort_and_scale(theta, camera_point(theta, view, model, rc));
}

double huber(double residual_norm, double delta) {
  const double a = std::abs(residual_norm);
  if (a <= delta) return a * a;
  return 2.0 * delta * a - delta * delta;
}

double huber_derivative(double residual_norm, double delta) {
  const double a = std::abs(residual_norm);
  const double sign = residual_norm < 0.0 ? -1.0 : 1.0;
  if (a <= delta) return 2.0 * residual_norm;
  return 2.0 * delta * sign;
}

double Residual::norm() const { return std::hypot(du, dv); }

std::vector<Residual> compute_residuals(const ParameterVector& theta,
                                        std::span<const Correspondence> pairs) {
  std::vector<Residual> out;
  out.reserve(pairs.size());
  for (const auto& c : pairs) {
    const Vec2 r = project(theta, c.view, c.model) - Vec2(c.image.u, c.image.v);
    out.push_back({c.view, c.model_index, r.x(), r.y()});
  }
  return out;
}

double robust_cost(const ParameterVector& theta, std::span<const Correspondence> pairs,
                   double delta) {
  return grouped_cost(theta, pairs, group_by_view(pairs, theta.num_views()), delta);
}

Eigen::MatrixXd jacobian(const ParameterVector& theta, std::span<const Correspondence> pairs) {
  const int ns = theta.shared_size();
  const int nb = theta.view_block_size();
  MatX j = MatX::Zero(2 * static_cast<Eigen::Index>(pairs.size()), theta.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PointTerm t = evaluate_point(theta, pairs[i], true);
    const auto row = 2 * static_cast<Eigen::Index>(i);
    j.block(row, 0, 2, ns) = t.shared;
    j.block(row, ns + pairs[i].view * nb, 2, nb) = t.local;
  }
  return j;
}

void summarize(CalibrationReport& report, std::span<const Correspondence> pairs) {
  report.residuals = compute_residuals(report.parameters, pairs);
  double sq = 0.0;
  double sum = 0.0;
  for (const auto& r : report.residuals) {
    const double e = r.norm();
    sq += e * e;
    sum += e;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(1, report.residuals.size()));
  report.rms_error = std::sqrt(sq / n);
  report.mean_error = sum / n;
}

CalibrationReport optimize(const ParameterVector& init, std::span<const Correspondence> pairs,
                           const LmOptions& options) {
  init.validate();
  if (init.num_views() < 2) {
    throw Error(ErrorCode::InsufficientViews,
                "refinement needs at least 2 views (a minimum of two images is sufficient)");
  }
  if (2 * pairs.size() < static_cast<std::size_t>(init.size())) {
    throw Error(ErrorCode::InsufficientData,
                "refinement needs at least as many residuals as parameters");
  }
  const double delta = options.huber_delta;
  if (!(delta > 0.0)) throw Error(ErrorCode::Validation, "Huber delta must be positive");
  const auto groups = group_by_view(pairs, init.num_views());

  for (std::size_t v = 0; v < groups.size(); ++v) {
    if (groups[v].empty()) {
      throw Error(ErrorCode::InsufficientData, "view " + std::to_string(v) + " has no points");
    }
    bool any_front = false;
    bool all_front = true;
    for (std::size_t i : groups[v]) {
      const double z = init.to_camera(static_cast<int>(v), pairs[i].model).z();
      any_front = any_front || z > 1e-12;
      all_front = all_front && z > 1e-12;
    }
    if (!any_front) {
      throw Error(ErrorCode::Divergence,
                  "view " + std::to_string(v) + " has every point behind the camera");
    }
    if (!all_front) {
      throw Error(ErrorCode::BehindCamera,
                  "view " + std::to_string(v) + " has points behind the camera");
    }
  }

  CalibrationReport report;
  ParameterVector theta = init;
  double cost = grouped_cost(theta, pairs, groups, delta);
  report.initial_cost = cost;
  report.cost_trace.push_back(cost);
  double lambda = options.initial_damping;
  const double cost_floor = 1e-24 * static_cast<double>(pairs.size());

  auto finish = [&](bool converged, const char* why) {
    report.parameters = theta;
    report.final_cost = cost;
    report.final_damping = lambda;
    report.converged = converged;
    report.termination = why;
    summarize(report, pairs);
    return report;
  };

  if (cost <= cost_floor) return finish(true, "cost below floor");

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    report.iterations = iter + 1;
    const NormalEquations ne = build_normal_equations(theta, pairs, groups, delta);
    for (;;) {
      VecX step;
      if (!solve_step(ne, lambda, step)) {
        lambda *= 10.0;
        if (lambda > options.max_damping) {
          finish(false, "singular normal equations");
          throw NonConvergenceError(
              "normal equations stayed singular up to the maximum damping", report);
        }
        continue;
      }
      const double predicted = predicted_reduction(ne, step);
      if (step.norm() <= options.step_tolerance * (parameter_norm(theta) + 1.0) ||
          predicted <= options.relative_cost_tolerance * 1e-3 * cost) {
        return finish(true, "step below tolerance");
      }
      ParameterVector trial = theta.retract(step);
      double trial_cost = std::numeric_limits<double>::infinity();
      try {
        trial_cost = grouped_cost(trial, pairs, groups, delta);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::BehindCamera) throw;
      }
      if (trial_cost < cost) {
        const double decrease = (cost - trial_cost) / cost;
        theta = std::move(trial);
        cost = trial_cost;
        report.cost_trace.push_back(cost);
        lambda = std::max(options.min_damping, lambda / 10.0);
        if (decrease < options.relative_cost_tolerance) {
          return finish(true, "relative cost decrease below tolerance");
        }
        if (cost <= cost_floor) return finish(true, "cost below floor");
        break;
      }
      lambda *= 10.0;
      if (lambda > options.max_damping) {
        finish(false, "damping exceeded maximum");
        throw NonConvergenceError("no cost-reducing step up to the maximum damping", report);
      }
    }
  }
  return finish(false, "maximum iterations");
}

}  // namespace colcal
