#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>
#include <string>
#include <vector>

#include "colcal/collimator_init.hpp"
#include "colcal/error.hpp"
#include "colcal/homography.hpp"
#include "colcal/pipeline.hpp"
#include "colcal/refine.hpp"
#include "colcal/serialization.hpp"
#include "colcal/simulator.hpp"

namespace py = pybind11;
using namespace colcal;

namespace {

using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<Vec2> to_points(const Rows& m, const char* name) {
  if (m.cols() != 2) throw Error(ErrorCode::Validation, std::string(name) + " must be N x 2");
  std::vector<Vec2> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m(i, 0), m(i, 1));
  return out;
}

// Correspondences travel as N x 6 rows: view, X, Y, Z, u, v.
std::vector<Correspondence> to_pairs(const Rows& m) {
  if (m.cols() != 6) {
    throw Error(ErrorCode::Validation, "correspondences must be N x 6 (view, X, Y, Z, u, v)");
  }
  std::vector<Correspondence> out;
  std::vector<int> next_index;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Correspondence c;
    c.view = static_cast<int>(m(i, 0));
    if (c.view < 0 || c.view != m(i, 0)) {
      throw Error(ErrorCode::Validation, "view ids must be non-negative integers");
    }
    if (static_cast<std::size_t>(c.view) >= next_index.size()) next_index.resize(c.view + 1, 0);
    c.model_index = next_index[static_cast<std::size_t>(c.view)]++;
    c.model = Vec3(m(i, 1), m(i, 2), m(i, 3));
    c.image.u = m(i, 4);
    c.image.v = m(i, 5);
    out.push_back(c);
  }
  return out;
}

Rows from_pairs(const std::vector<Correspondence>& pairs) {
  Rows m(static_cast<Eigen::Index>(pairs.size()), 6);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& c = pairs[i];
    m.row(static_cast<Eigen::Index>(i)) << c.view, c.model.x(), c.model.y(), c.model.z(),
        c.image.u, c.image.v;
  }
  return m;
}

std::vector<Homography> to_homographies(const std::vector<Mat3>& hs) {
  std::vector<Homography> out;
  for (const auto& h : hs) out.push_back(Homography::normalized(h));
  return out;
}

py::dict intrinsics_dict(const Intrinsics& k) {
  py::dict d;
  d["fx"] = k.fx;
  d["fy"] = k.fy;
  d["cx"] = k.cx;
  d["cy"] = k.cy;
  return d;
}

}  // namespace

PYBIND11_MODULE(_colcal, m) {
  m.doc() = "Event-camera calibration through a collimator";

  static py::exception<Error> error(m, "ColcalError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("huber", &huber, py::arg("residual_norm"), py::arg("delta"),
        "Huber penalty of a residual norm");

  m.def(
      "estimate_homography",
      [](const Rows& model, const Rows& image) {
        return estimate_homography(to_points(model, "model"), to_points(image, "image")).H;
      },
      py::arg("model"), py::arg("image"), "Normalized DLT homography from N x 2 point arrays");

  m.def(
      "apply_homography",
      [](const Mat3& h, const Vec2& p) { return apply_homography(Homography::normalized(h), p); },
      py::arg("h"), py::arg("point"));

  m.def(
      "solve_iac", [](const std::vector<Mat3>& hs) { return solve_iac(to_homographies(hs)).omega; },
      py::arg("homographies"), "Zero-skew image of the absolute conic from >= 2 homographies");

  m.def(
      "intrinsics_from_iac",
      [](const Mat3& omega) { return intrinsics_dict(intrinsics_from_iac({omega})); },
      py::arg("omega"));

  m.def(
      "spherical_offset",
      [](const std::vector<Mat3>& hs, double fx, double fy, double cx, double cy) {
        const auto est =
            spherical_offset_from_views(to_homographies(hs), Intrinsics{fx, fy, cx, cy});
        return py::make_tuple(est.offset.x, est.offset.y, est.offset.r);
      },
      py::arg("homographies"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"));

  m.def(
      "random_spherical_poses",
      [](int n, double max_angle_deg, std::uint64_t seed) {
        return random_spherical_poses(n, max_angle_deg, seed);
      },
      py::arg("n"), py::arg("max_angle_deg"), py::arg("seed"));

  m.def(
      "default_ground_truth_json",
      [](int views, std::uint64_t seed) {
        return to_json(default_ground_truth(views, seed)).dump();
      },
      py::arg("views") = 3, py::arg("seed") = 1);

  m.def(
      "simulate_views",
      [](const std::string& ground_truth, const std::string& noise, std::uint64_t seed) {
        const auto gt = ground_truth_from_json(json::parse(ground_truth));
        const NoiseModel n = noise.empty() ? NoiseModel{} : noise_from_json(json::parse(noise));
        return from_pairs(simulate_views(gt, n, seed));
      },
      py::arg("ground_truth"), py::arg("noise") = "", py::arg("seed") = 0,
      "Projected markers as N x 6 rows (view, X, Y, Z, u, v)");

  m.def(
      "calibrate_json",
      [](const Rows& pairs, const std::string& mode, double huber_delta, int max_iterations) {
        PipelineConfig c;
        c.mode = parse_pose_mode(mode);
        c.lm.huber_delta = huber_delta;
        c.lm.max_iterations = max_iterations;
        const auto run = calibrate_correspondences(to_pairs(pairs), c);
        json out = to_json(run.report);
        out["initialization"] = run.initialization;
        return out.dump();
      },
      py::arg("pairs"), py::arg("mode") = "spherical", py::arg("huber_delta") = 1.0,
      py::arg("max_iterations") = 100);
}
