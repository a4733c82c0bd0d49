#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ren/data.hpp"
#include "ren/error.hpp"
#include "ren/eval.hpp"
#include "ren/synthetic.hpp"
#include "ren/train.hpp"
#include "ren_cli.hpp"

namespace py = pybind11;
using namespace ren;

namespace {

using PoseArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using DepthArray = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;

// (F, J, 3) array <-> poses.
std::vector<Pose> to_poses(const PoseArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("poses must have shape (frames, joints, 3)");
  const auto r = a.unchecked<3>();
  std::vector<Pose> out(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t f = 0; f < a.shape(0); ++f) {
    out[f].joints.resize(static_cast<std::size_t>(a.shape(1)));
    for (py::ssize_t j = 0; j < a.shape(1); ++j) out[f].joints[j] = {r(f, j, 0), r(f, j, 1), r(f, j, 2)};
  }
  return out;
}

PoseArray from_poses(const std::vector<Pose>& poses) {
  const py::ssize_t J = poses.empty() ? 0 : static_cast<py::ssize_t>(poses.front().size());
  PoseArray a({static_cast<py::ssize_t>(poses.size()), J, py::ssize_t{3}});
  auto w = a.mutable_unchecked<3>();
  for (py::ssize_t f = 0; f < a.shape(0); ++f) {
    for (py::ssize_t j = 0; j < J; ++j) {
      const Vec3& v = poses[f].joints[j];
      w(f, j, 0) = v.x;
      w(f, j, 1) = v.y;
      w(f, j, 2) = v.z;
    }
  }
  return a;
}

DepthArray from_frame(const DepthFrame& f) {
  DepthArray a({f.height, f.width});
  std::copy(f.depth.begin(), f.depth.end(), a.mutable_data());
  return a;
}

DepthFrame to_frame(const DepthArray& a, const CameraIntrinsics& k) {
  if (a.ndim() != 2) throw ShapeError("depth image must be 2-D (height, width)");
  DepthFrame f(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), k);
  std::copy(a.data(), a.data() + a.size(), f.depth.begin());
  return f;
}

CameraIntrinsics intrinsics_of(const std::vector<double>& v) {
  if (v.size() != 4) throw InputError("intrinsics must be (fx, fy, cx, cy)");
  CameraIntrinsics k{v[0], v[1], v[2], v[3]};
  k.validate();
  return k;
}

py::tuple dataset_tuple(const Dataset& ds) {
  py::list frames;
  for (const auto& f : ds.frames) frames.append(from_frame(f));
  const auto& k = ds.config.intrinsics;
  return py::make_tuple(frames, from_poses(ds.poses), py::make_tuple(k.fx, k.fy, k.cx, k.cy));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Region ensemble network core";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

  m.def("smooth_l1", &smooth_l1_value, py::arg("x"));
  m.def(
      "lr_at",
      [](int epoch, const std::map<std::string, std::string>& config) {
        return lr_at(epoch, TrainConfig::from_map(config));
      },
      py::arg("epoch"), py::arg("config") = std::map<std::string, std::string>{});

  m.def(
      "read_depth",
      [](const std::filesystem::path& path) { return from_frame(read_depth_file(path)); }, py::arg("path"));
  m.def(
      "write_depth",
      [](const std::filesystem::path& path, const DepthArray& depth) {
        write_depth_file(path, to_frame(depth, {1, 1, 0, 0}));
      },
      py::arg("path"), py::arg("depth"));

  m.def(
      "load_dataset", [](const std::filesystem::path& manifest) { return dataset_tuple(load_dataset(manifest)); },
      py::arg("manifest"), "Returns (frames, poses[F, J, 3], intrinsics).");
  m.def(
      "generate_synthetic",
      [](int n, std::uint64_t seed, const std::map<std::string, std::string>& spec) {
        return dataset_tuple(generate_synthetic(SyntheticHandSpec::from_map(spec), n, RngStream(seed)));
      },
      py::arg("n"), py::arg("seed") = 0, py::arg("spec") = std::map<std::string, std::string>{});

  m.def(
      "mean_3d_error",
      [](const PoseArray& preds, const PoseArray& gts) {
        const JointErrors e = mean_3d_error(to_poses(preds), to_poses(gts));
        return py::make_tuple(e.overall, e.per_joint);
      },
      py::arg("preds"), py::arg("gts"), "Returns (overall, per_joint) in mm.");
  m.def(
      "success_curve",
      [](const PoseArray& preds, const PoseArray& gts, std::vector<double> thresholds) {
        if (thresholds.empty()) thresholds = default_thresholds();
        std::vector<std::pair<double, double>> out;
        for (const auto& p : success_frame_curve(to_poses(preds), to_poses(gts), thresholds)) {
          out.emplace_back(p.threshold_mm, p.fraction);
        }
        return out;
      },
      py::arg("preds"), py::arg("gts"), py::arg("thresholds") = std::vector<double>{});
  m.def(
      "mean_precision",
      [](const PoseArray& preds, const PoseArray& gts, const std::vector<int>& fingertips, double threshold) {
        return mean_precision_fingertips(to_poses(preds), to_poses(gts), fingertips, threshold);
      },
      py::arg("preds"), py::arg("gts"), py::arg("fingertips"), py::arg("threshold_mm") = 15.0);
  m.def(
      "mean_average_precision",
      [](const PoseArray& preds, const PoseArray& gts, double threshold) {
        const DetectionRates r = mean_average_precision(to_poses(preds), to_poses(gts), threshold);
        return py::make_tuple(r.mean, r.per_joint);
      },
      py::arg("preds"), py::arg("gts"), py::arg("threshold_mm") = 100.0);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_static(
          "load", [](const std::filesystem::path& path) { return load_checkpoint(path); }, py::arg("path"))
      .def_property_readonly("config", [](const Checkpoint& c) { return c.model.config().to_map(); })
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.model.parameter_count(); })
      .def(
          "predict",
          [](const Checkpoint& c, const DepthArray& depth, const std::vector<double>& intrinsics) {
            const std::vector<DepthFrame> frames{to_frame(depth, intrinsics_of(intrinsics))};
            return from_poses(predict_frames(c.model, frames, c.crop));
          },
          py::arg("depth"), py::arg("intrinsics"), "Pose of one depth image as a (1, J, 3) array in mm.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the ren command line in-process; returns (exit code, stdout, stderr).");
}
