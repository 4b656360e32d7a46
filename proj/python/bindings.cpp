#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "embryolab/analysis.hpp"
#include "embryolab/embryo.hpp"
#include "embryolab/pipeline.hpp"
#include "embryolab/render.hpp"
#include "embryolab/report.hpp"
#include "embryolab/session.hpp"
#include "embryolab/ssim.hpp"
#include "embryolab/stats.hpp"
#include "embryolab/trial_log.hpp"

namespace py = pybind11;
using namespace embryolab;

namespace {

py::array_t<std::uint8_t> to_array(const RgbImage& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, 3});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

RgbImage from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an (H, W, 3) uint8 array");
  RgbImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

ChanceRule parse_rule(const std::string& name) {
  if (name == "clopper-pearson") return ChanceRule::ClopperPearson;
  if (name == "binomial-quantile") return ChanceRule::BinomialQuantile;
  throw py::value_error("rule must be 'clopper-pearson' or 'binomial-quantile'");
}

LearningCurves make_curves(std::vector<double> train, std::vector<double> test) {
  if (train.size() != test.size() || train.empty()) throw py::value_error("train and test curves need equal, nonzero length");
  LearningCurves c;
  c.acc_train = std::move(train);
  c.acc_test = std::move(test);
  c.best_epoch = best_epoch(c.acc_test);
  return c;
}

py::dict lag_dict(const GeneralisationLag& lag) {
  py::dict d;
  d["delta_g"] = lag.computable() ? py::cast(lag.delta_g) : py::none();
  d["epochs"] = lag.epochs ? py::cast(lag.epochs->label()) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_embryolab, m) {
  m.doc() = "Synthetic-object category learning: stimuli, learner and analysis";
  m.attr("PROTOCOL_VERSION") = kProtocolVersion;

  // Bad inputs surface as ValueError, everything else keeps RuntimeError.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const AnalysisError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const LogError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const RenderError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("clopper_pearson", [](int k, int n, double alpha) {
    const auto iv = clopper_pearson(k, n, alpha);
    return std::make_pair(iv.lower, iv.upper);
  }, py::arg("k"), py::arg("n"), py::arg("alpha") = 0.05);
  m.def("chance_upper", [](int n, const std::string& rule, double alpha) { return chance_upper(n, parse_rule(rule), alpha); },
        py::arg("n"), py::arg("rule") = "clopper-pearson", py::arg("alpha") = 0.05);
  m.def("moving_average", [](const std::vector<double>& v, std::size_t w) { return moving_average(v, w); },
        py::arg("values"), py::arg("window"));
  m.def("generalisation_lag", [](std::vector<double> train, std::vector<double> test, const std::string& rule) {
    return lag_dict(generalisation_lag(make_curves(std::move(train), std::move(test)), parse_rule(rule)));
  }, py::arg("acc_train"), py::arg("acc_test"), py::arg("rule") = "clopper-pearson");
  m.def("data_efficiency", [](std::vector<double> train, std::vector<double> test) {
    return data_efficiency(make_curves(std::move(train), std::move(test))).gain;
  }, py::arg("acc_train"), py::arg("acc_test"));

  m.def("analyze_logs", [](const std::vector<std::filesystem::path>& files, const std::string& rule) {
    std::vector<SessionLog> logs;
    for (const auto& f : files)
      for (auto& l : read_session_logs(f).logs) logs.push_back(std::move(l));
    AnalyzeOptions opt;
    opt.rule = parse_rule(rule);
    py::list out;
    for (const auto& o : analyze_logs(logs, nullptr, opt).observers) {
      py::dict d = lag_dict(o.lag);
      d["observer"] = o.name;
      d["runs"] = o.logs;
      d["acc_train"] = o.curves.acc_train;
      d["acc_test"] = o.curves.acc_test;
      d["efficiency"] = o.efficiency.gain;
      out.append(d);
    }
    return out;
  }, py::arg("files"), py::arg("rule") = "clopper-pearson");

  m.def("pink_noise_mask", [](std::uint64_t seed, int size) { return to_array(pink_noise_mask(seed, size, size).pixels); },
        py::arg("seed"), py::arg("size") = kStimulusSize);
  m.def("render_child", [](std::uint64_t master, int category, int child, int pitch, int yaw) {
    if (category < 0 || category > 2) throw py::value_error("category must be 0, 1 or 2");
    RgbImage img;
    {
      py::gil_scoped_release release;
      const auto parent = grow(icosahedron(), kParentGenerationParams, parent_seed(master, category));
      const auto mesh = grow(parent, kSecondGenerationParams, child_seed(master, category, child));
      img = render(mesh, ViewSpec::normalized(pitch, yaw)).pixels;
    }
    return to_array(img);
  }, py::arg("master_seed"), py::arg("category"), py::arg("child"), py::arg("pitch") = 0, py::arg("yaw") = 0);
  m.def("ssim", [](const py::array_t<std::uint8_t>& a, const py::array_t<std::uint8_t>& b) {
    return ssim(from_array(a), from_array(b));
  });

  m.def("stage_seeds", [](std::uint64_t master) {
    const auto s = stage_seeds(master);
    return py::dict(py::arg("gen") = s.gen, py::arg("dataset") = s.dataset, py::arg("train") = s.train,
                    py::arg("masks") = s.masks);
  });
  m.def("run_gen", [](std::uint64_t seed, const std::filesystem::path& out, int masks, unsigned threads) {
    GenOptions opt;
    opt.masks = masks;
    opt.threads = threads;
    GenSummary s;
    {
      py::gil_scoped_release release;
      s = run_gen(seed, out, opt);
    }
    return py::dict(py::arg("meshes") = s.meshes, py::arg("renderings") = s.renderings, py::arg("masks") = s.masks,
                    py::arg("skipped") = s.skipped);
  }, py::arg("seed"), py::arg("out"), py::arg("masks") = 20, py::arg("threads") = 0);
  m.def("run_dataset", [](std::uint64_t seed, const std::filesystem::path& out, unsigned threads) {
    DatasetManifest man;
    {
      py::gil_scoped_release release;
      man = run_dataset(seed, out, threads);
    }
    return py::dict(py::arg("pool") = man.pool.size(), py::arg("training") = man.training_set.size(),
                    py::arg("test_sets") = man.test_sets.size());
  }, py::arg("seed"), py::arg("out"), py::arg("threads") = 0);
}
