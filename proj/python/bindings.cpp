// Thin numpy-facing layer over the C++ core. Images cross the boundary as float64
// arrays of shape (H, W) or (H, W, C) in [-1, 1].
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "advbiom/attacks/grad_attacks.hpp"
#include "advbiom/cli/commands.hpp"
#include "advbiom/core/image_io.hpp"
#include "advbiom/eval/metrics.hpp"
#include "advbiom/eval/report.hpp"
#include "advbiom/fingerprint/tps.hpp"
#include "advbiom/matcher/matcher.hpp"

namespace py = pybind11;
using namespace advbiom;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

NormalizedImage to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("image must be (H, W) or (H, W, C)");
  const ImageShape shape{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                         a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1};
  return NormalizedImage(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const FloatImage& im) {
  std::vector<py::ssize_t> shape{im.height(), im.width()};
  if (im.channels() != 1) shape.push_back(im.channels());
  Array out(shape);
  std::copy(im.values().begin(), im.values().end(), out.mutable_data());
  return out;
}

attacks::AttackGoal goal_for(const std::string& mode, const std::optional<Array>& target,
                             std::optional<NormalizedImage>& holder) {
  attacks::AttackGoal g{attacks::parse_attack_mode(mode), nullptr};
  if (target) {
    holder = to_image(*target);
    g.target = &*holder;
  }
  return g;
}

py::dict result_dict(const attacks::AttackResult& r) {
  py::dict d;
  d["x_adv"] = to_array(r.x_adv);
  d["score_before"] = r.score_before;
  d["score_after"] = r.score_after;
  d["iterations"] = r.iterations;
  d["linf"] = r.linf;
  d["l2"] = r.l2;
  d["zero_gradient"] = r.zero_gradient;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adversarial biometrics core";

  m.def("load_image", [](const std::filesystem::path& p) { return to_array(load_normalized(p)); },
        "PNG/JPEG file as a normalized float64 array.");
  m.def("save_image", [](const std::filesystem::path& p, const Array& a) { save_normalized_png(p, to_image(a)); });

  m.def("threshold_at_far", [](const std::vector<double>& imposter, double far) {
    const auto t = eval::threshold_at_far(imposter, far);
    return py::make_tuple(t.tau, t.achieved_far);
  });
  m.def("tar_at_far", [](const std::vector<double>& genuine, const std::vector<double>& imposter, double far) {
    eval::ScoreSet s;
    s.genuine = genuine;
    s.imposter = imposter;
    return eval::tar_at_far(s, far);
  });
  m.def("success_rate_obfuscation", [](const std::vector<double>& s, double tau) {
    return eval::success_rate_obfuscation(s, tau);
  });
  m.def("success_rate_impersonation", [](const std::vector<double>& s, double tau) {
    return eval::success_rate_impersonation(s, tau);
  });
  m.def("ssim", [](const Array& a, const Array& b) { return eval::ssim(to_image(a), to_image(b)); });
  m.def("cosine_similarity",
        [](const std::vector<double>& a, const std::vector<double>& b) { return cosine_similarity(a, b); });

  py::class_<matcher::ToyEmbedder>(m, "ToyEmbedder")
      .def_static("load", [](const std::filesystem::path& p) { return matcher::load_toy_embedder(p); })
      .def_property_readonly("name", &matcher::ToyEmbedder::name)
      .def_property_readonly("embedding_dim", &matcher::ToyEmbedder::embedding_dim)
      .def("embed",
           [](const matcher::ToyEmbedder& self, const Array& x) {
             const Embedding e = matcher::embed(self, to_image(x));
             return std::vector<double>(e.values().begin(), e.values().end());
           })
      .def("score", [](const matcher::ToyEmbedder& self, const Array& a, const Array& b) {
        return cosine_similarity(matcher::embed(self, to_image(a)), matcher::embed(self, to_image(b)));
      });

  m.def(
      "fgsm",
      [](const matcher::ToyEmbedder& net, const Array& x, double epsilon, std::uint64_t seed, const std::string& mode,
         const std::optional<Array>& target) {
        attacks::FgsmConfig cfg;
        cfg.epsilon = epsilon;
        cfg.seed = seed;
        std::optional<NormalizedImage> holder;
        return result_dict(attacks::fgsm_attack(net, to_image(x), cfg, goal_for(mode, target, holder)));
      },
      py::arg("matcher"), py::arg("x"), py::arg("epsilon") = 0.06, py::arg("seed") = 0,
      py::arg("mode") = "obfuscation", py::arg("target") = py::none());
  m.def(
      "pgd",
      [](const matcher::ToyEmbedder& net, const Array& x, double epsilon, double step_size, int max_iters,
         std::uint64_t seed, const std::string& mode, const std::optional<Array>& target) {
        attacks::PgdConfig cfg;
        cfg.epsilon = epsilon;
        cfg.step_size = step_size;
        cfg.max_iters = max_iters;
        cfg.seed = seed;
        std::optional<NormalizedImage> holder;
        return result_dict(attacks::pgd_attack(net, to_image(x), cfg, goal_for(mode, target, holder)));
      },
      py::arg("matcher"), py::arg("x"), py::arg("epsilon") = 0.06, py::arg("step_size") = 0.01,
      py::arg("max_iters") = 20, py::arg("seed") = 0, py::arg("mode") = "obfuscation",
      py::arg("target") = py::none());

  m.def(
      "tps_displacement_field",
      [](const std::vector<std::array<double, 2>>& points, const std::vector<std::array<double, 2>>& displacements,
         int height, int width) {
        const auto f = fingerprint::tps_displacement_field(points, displacements, height, width);
        Array out({height, width, 2});
        double* o = out.mutable_data();
        for (const auto& v : f) *o++ = v[0], *o++ = v[1];
        return out;
      },
      "(di, dj) at every pixel of the thin plate spline through the control points.");

  m.def("parse_config", [](const std::string& text, const std::filesystem::path& base) {
    return cli::to_toml(cli::parse_run_config(text, base));
  }, py::arg("text"), py::arg("base_dir") = std::filesystem::path(),
     "Validates a TOML run configuration and returns its canonical form.");
  m.def("read_report", [](const std::filesystem::path& p) {
    return eval::to_json(eval::read_report(p)).dump();
  }, "Report JSON (schema v1) re-serialized after validation by the C++ reader.");
  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "advbiom");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    py::gil_scoped_release release;
    return cli::run_cli(static_cast<int>(argv.size()), argv.data());
  }, "Runs the command line tool in-process and returns its exit code.");

  py::register_exception<cli::ConfigError>(m, "ConfigError", PyExc_ValueError);
}
