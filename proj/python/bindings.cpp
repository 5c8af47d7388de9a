#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "scengen/bundle.hpp"
#include "scengen/dataset.hpp"
#include "scengen/rng.hpp"
#include "scengen/evalkit.hpp"
#include "scengen/gradcheck.hpp"
#include "scengen/oracle.hpp"
#include "scengen/runcmd.hpp"
#include "scengen/sampler.hpp"
#include "scengen/simulator.hpp"

namespace py = pybind11;
using namespace scengen;

namespace {

Mat mat_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::runtime_error("expected a 2-d array");
    Mat m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + m.data.size(), m.data.begin());
    return m;
}

py::array_t<double> numpy_from_mat(const Mat& m) {
    py::array_t<double> a({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), a.mutable_data());
    return a;
}

ScenarioBox box_from_lists(const std::vector<py::object>& lo, const std::vector<py::object>& hi) {
    ScenarioBox box = ScenarioBox::unbounded(7);
    if (lo.size() != 7 || hi.size() != 7)
        throw std::runtime_error("box bounds need 7 entries (None for an open side)");
    for (int i = 0; i < 7; ++i) {
        if (!lo[i].is_none()) box.lo[i] = lo[i].cast<double>();
        if (!hi[i].is_none()) box.hi[i] = hi[i].cast<double>();
    }
    box.validate();
    return box;
}

}  // namespace

PYBIND11_MODULE(_scengen, m) {
    m.doc() = "adversarial generation and scenario-conditioned simulation of tabular "
              "financial transitions";

    m.def("ks_score",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> real,
             py::array_t<double, py::array::c_style | py::array::forcecast> gen) {
              KsReport r = ks_score(mat_from_numpy(real), mat_from_numpy(gen));
              return py::make_tuple(r.score, r.one_minus_d);
          },
          py::arg("real"), py::arg("generated"),
          "mean over features of one minus the two-sample KS distance");

    m.def("pca_score",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> real,
             py::array_t<double, py::array::c_style | py::array::forcecast> gen) {
              PcaReport r = pca_score(mat_from_numpy(real), mat_from_numpy(gen));
              return py::make_tuple(r.score, r.retained, r.real_eigenvalues, r.gen_eigenvalues);
          },
          py::arg("real"), py::arg("generated"),
          "one minus the mean clipped relative eigenvalue error of the feature correlation "
          "matrices");

    m.def("ks_distance", &ks_distance, py::arg("a"), py::arg("b"),
          "two-sample Kolmogorov-Smirnov D statistic");

    m.def("apply_star",
          [](const std::vector<double>& levels, const std::vector<double>& deltas) {
              return apply_star(levels, deltas, default_eqv_features());
          },
          py::arg("levels"), py::arg("deltas"),
          "apply instrument transitions to the 11 levels (relative kinds multiply, absolute "
          "kinds add)");

    m.def("compute_transition",
          [](double v0, double v1, const std::string& kind) {
              return compute_transition(v0, v1,
                                        kind == "relative" ? TransitionKind::Relative
                                                           : TransitionKind::Absolute);
          },
          py::arg("v_t"), py::arg("v_next"), py::arg("kind"));

    m.def("synth_series",
          [](int instruments, int dates, std::uint64_t seed, const std::string& out_dir) {
              RawSeries raw = synth_generate(default_oracle(), instruments, dates, seed);
              std::filesystem::create_directories(out_dir);
              write_raw_series(raw, out_dir + "/instruments.csv", out_dir + "/state.csv");
              return out_dir;
          },
          py::arg("instruments"), py::arg("dates"), py::arg("seed"), py::arg("out_dir"),
          "write synthetic market feeds to a directory");

    m.def("grad_check",
          [](const std::string& network, int max_per_tensor, std::uint64_t seed) {
              Network net = build_network(spec_by_id(network), seed + 17);
              std::vector<Tensor> inputs;
              Rng rng(seed);
              for (const auto& sh : net.spec().input_shapes) {
                  Tensor t({3, sh[0] * sh[1]});
                  for (int i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
                  inputs.push_back(std::move(t));
              }
              FdOptions fd;
              fd.max_per_tensor = max_per_tensor;
              fd.seed = seed;
              FdReport rep = finite_difference_check(net, inputs, fd);
              return py::make_tuple(rep.passed, rep.max_rel_err, rep.checked);
          },
          py::arg("network"), py::arg("max_per_tensor") = 16, py::arg("seed") = 7,
          "finite-difference audit of one reference network");

    py::class_<ModelBundle>(m, "ModelBundle")
        .def_static("load", &load_bundle, py::arg("path"))
        .def("save", [](const ModelBundle& b, const std::string& path) { save_bundle(b, path); },
             py::arg("path"))
        .def("parts",
             [](const ModelBundle& b) {
                 std::vector<std::string> ids;
                 for (const auto& [id, net] : b.nets) ids.push_back(id);
                 return ids;
             })
        .def("sample_state_transitions",
             [](const ModelBundle& b, int n, std::uint64_t seed,
                const std::vector<py::object>& lo, const std::vector<py::object>& hi) {
                 NetworkStateGenerator gen(&b.net("gen_S"), b.state_affine);
                 NetworkLatentEncoder enc(&b.net("enc_Z"), b.state_affine);
                 ChainConfig cfg;
                 cfg.seed = seed;
                 cfg.proposal_sigma = 0.5;
                 McmcResult r =
                     mh_sample_conditioned(gen, box_from_lists(lo, hi), n, cfg, &enc, nullptr);
                 return numpy_from_mat(r.samples);
             },
             py::arg("n"), py::arg("seed"), py::arg("lo"), py::arg("hi"),
             "scenario-conditioned state-transition draws");

    m.def("run_command",
          [](const std::string& command, const py::dict& kwargs) {
              CliOptions opts;
              opts.command = command;
              auto gets = [&](const char* key, std::string& dst) {
                  if (kwargs.contains(key)) dst = kwargs[key].cast<std::string>();
              };
              gets("config", opts.config_path);
              gets("out", opts.out_dir);
              gets("bundle", opts.bundle_path);
              gets("data", opts.data_path);
              gets("input", opts.input_dir);
              gets("real", opts.real_path);
              gets("generated", opts.generated_path);
              gets("network", opts.network);
              if (kwargs.contains("seed")) opts.seed = kwargs["seed"].cast<long long>();
              if (kwargs.contains("steps")) opts.steps = kwargs["steps"].cast<int>();
              if (kwargs.contains("boxes"))
                  opts.box_flags = kwargs["boxes"].cast<std::vector<std::string>>();
              return run_command(opts);
          },
          py::arg("command"), py::arg("kwargs") = py::dict(),
          "run a pipeline command; returns the exit status");

    m.attr("__version__") = "0.1.0";
}
