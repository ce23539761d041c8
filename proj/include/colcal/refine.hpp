#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "colcal/collimator_init.hpp"
#include "colcal/error.hpp"
#include "colcal/features.hpp"
#include "colcal/geometry.hpp"

namespace colcal {

struct Distortion {
  double k1 = 0.0;
  double k2 = 0.0;
};

enum class PoseMode { Spherical, Free6Dof };

PoseMode parse_pose_mode(std::string_view name);
std::string_view to_string(PoseMode mode);

/// All calibration unknowns.
///
/// Spherical mode: `rotations[i]` is the axis-angle of R_ep (camera to
/// target) and the camera centre (x, y, -r) is shared by every view, so a
/// target point maps to the camera frame as R_ep^T (X - [x, y, -r]).
/// Free mode: `rotations[i]` is the target-to-camera rotation R_i and
/// X_c = R_i X + t_i with an independent t_i per view.
///
/// The flat layout used by the Jacobian is the shared block
/// [fx fy cx cy k1 k2 (x y r)] followed by one block per view
/// [w (t)], where w is a local rotation increment applied as
/// R_cam <- exp(w) R_cam on the target-to-camera rotation.
struct ParameterVector {
  PoseMode mode = PoseMode::Spherical;
  Intrinsics intrinsics;
  Distortion distortion;
  SphericalOffset offset;
  std::vector<Vec3> rotations;
  std::vector<Vec3> translations;

  int num_views() const { return static_cast<int>(rotations.size()); }
  int shared_size() const { return mode == PoseMode::Spherical ? 9 : 6; }
  int view_block_size() const { return mode == PoseMode::Spherical ? 3 : 6; }
  int size() const { return shared_size() + num_views() * view_block_size(); }

  /// Target-to-camera rotation of a view.
  Mat3 camera_rotation(int view) const;
  Vec3 to_camera(int view, const Vec3& model) const;

  /// Applies a flat increment (same layout as the Jacobian columns).
  ParameterVector retract(const Eigen::VectorXd& delta) const;

  void validate() const;
};

ParameterVector make_spherical_parameters(const SphericalInit& init);
ParameterVector make_free_parameters(const FreeInit& init);

/// Pixel projection of a model point. Throws BehindCamera when the point's
/// depth is <= 1e-12.
Vec2 project(const ParameterVector& theta, int view, const Vec3& model);

/// Huber penalty of a residual norm; quadratic up to delta, linear beyond.
/// delta = +inf gives the plain quadratic.
double huber(double residual_norm, double delta);

/// d rho / d x.
double huber_derivative(double residual_norm, double delta);

struct Residual {
  int view = 0;
  int point = 0;
  double du = 0.0;
  double dv = 0.0;

  double norm() const;
};

/// Residuals (projection minus observation) in input order.
std::vector<Residual> compute_residuals(const ParameterVector& theta,
                                        std::span<const Correspondence> pairs);

/// Robust cost sum_ij rho(||r_ij||).
double robust_cost(const ParameterVector& theta, std::span<const Correspondence> pairs,
                   double delta);

/// Dense analytic Jacobian, rows (du, dv) per correspondence in input order.
Eigen::MatrixXd jacobian(const ParameterVector& theta, std::span<const Correspondence> pairs);

struct LmOptions {
  int max_iterations = 100;
  double relative_cost_tolerance = 1e-10;
  double huber_delta = 1.0;
  double initial_damping = 1e-3;
  double min_damping = 1e-12;
  double max_damping = 1e8;
  // Converged when the step is below this fraction of the parameter norm.
  double step_tolerance = 1e-15;
};

struct CalibrationReport {
  ParameterVector parameters;
  std::vector<Residual> residuals;
  double rms_error = 0.0;
  double mean_error = 0.0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  double final_damping = 0.0;
  bool converged = false;
  std::string termination;
  std::vector<double> cost_trace;  // cost after every accepted step, starting with the initial
};

/// Thrown when damping escalation cannot produce a usable step; carries the
/// best parameters and the report reached so far.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, CalibrationReport best)
      : Error(ErrorCode::NonConvergence, what), report_(std::move(best)) {}

  const CalibrationReport& report() const noexcept { return report_; }

 private:
  CalibrationReport report_;
};

/// Levenberg-Marquardt on the Huber-robustified reprojection error, with
/// IRLS weights and a Schur complement over the per-view pose blocks.
CalibrationReport optimize(const ParameterVector& init, std::span<const Correspondence> pairs,
                           const LmOptions& options = {});

/// Fills residuals and error statistics of a report from parameters.
void summarize(CalibrationReport& report, std::span<const Correspondence> pairs);

}  // namespace colcal
