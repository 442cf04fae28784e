#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "skel/certify.hpp"
#include "skel/cli.hpp"
#include "skel/error.hpp"

namespace py = pybind11;

namespace skel {
namespace {

Trajectory make_trajectory(Matrix states, std::vector<double> times, std::string source_id) {
  Trajectory t;
  t.states = std::move(states);
  t.times = std::move(times);
  t.source_id = std::move(source_id);
  validate(t);
  return t;
}

}  // namespace
}  // namespace skel

PYBIND11_MODULE(_skel, m) {
  using namespace skel;
  m.doc() = "Stable Koopman embeddings (C++ core)";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_IOError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_ValueError);
  py::register_exception<SingularityError>(m, "SingularityError", PyExc_ArithmeticError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_ArithmeticError);

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init(&make_trajectory), py::arg("states"), py::arg("times") = std::vector<double>{},
           py::arg("source_id") = "")
      .def_readwrite("states", &Trajectory::states)
      .def_readwrite("times", &Trajectory::times)
      .def_readwrite("source_id", &Trajectory::source_id)
      .def_property_readonly("dim", &Trajectory::dim)
      .def_property_readonly("length", &Trajectory::length);

  m.def("load_csv", &load_csv, py::arg("path"));
  m.def("save_csv", &save_csv, py::arg("path"), py::arg("data"));
  m.def("resample_uniform", &resample_uniform, py::arg("traj"), py::arg("dt"));
  m.def("augment_velocity", &augment_velocity, py::arg("traj"));
  m.def(
      "gen_synthetic",
      [](const std::string& kind, int n_traj, int steps, double dt, double noise_std, std::uint64_t seed, int dim) {
        SyntheticSpec s;
        s.kind = parse_synthetic_kind(kind);
        s.n_traj = n_traj;
        s.steps = steps;
        s.dt = dt;
        s.noise_std = noise_std;
        s.seed = seed;
        s.dim = dim;
        return gen_synthetic(s);
      },
      py::arg("kind") = "tanh_contraction", py::arg("n_traj") = 5, py::arg("steps") = 200, py::arg("dt") = 0.01,
      py::arg("noise_std") = 0.0, py::arg("seed") = 1, py::arg("dim") = 2);

  m.def("spectral_radius", &spectral_radius, py::arg("a"));
  m.def("spectral_abscissa", &spectral_abscissa, py::arg("a"));
  m.def("solve_dlyap", &solve_dlyap, py::arg("a"), py::arg("q"));
  m.def("expm", &expm_value, py::arg("a"));
  m.def("stable_dt_operator", &stable_dt_operator, py::arg("l"), py::arg("r"),
        py::arg("epsilon") = kDefaultStabilityEpsilon);
  m.def("stable_ct_operator", &stable_ct_operator, py::arg("wn"), py::arg("wq"), py::arg("wr"),
        py::arg("epsilon") = kDefaultStabilityEpsilon);
  m.def(
      "recover_stable_dt",
      [](const Matrix& a, double epsilon) {
        StableDTParams p = recover_stable_dt(a, epsilon);
        return py::make_tuple(p.l.value, p.r.value);
      },
      py::arg("a"), py::arg("epsilon") = kDefaultStabilityEpsilon);
  m.def("dmd_operator", &dmd_operator, py::arg("y1"), py::arg("y2"), py::arg("ridge") = 0.0);
  m.def("nse", &nse, py::arg("sim"), py::arg("truth"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("epsilon", &TrainConfig::epsilon)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("embedding_dim", &TrainConfig::embedding_dim)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("ridge", &TrainConfig::ridge)
      .def_readwrite("init_bound", &TrainConfig::init_bound)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("sim_in_state_space", &TrainConfig::sim_in_state_space)
      .def_property(
          "method", [](const TrainConfig& c) { return to_string(c.method); },
          [](TrainConfig& c, const std::string& s) { c.method = parse_method(s); })
      .def_property(
          "time_mode", [](const TrainConfig& c) { return to_string(c.time_mode); },
          [](TrainConfig& c, const std::string& s) { c.time_mode = parse_time_mode(s); })
      .def_property(
          "left_inverse", [](const TrainConfig& c) { return to_string(c.left_inverse); },
          [](TrainConfig& c, const std::string& s) { c.left_inverse = parse_left_inverse(s); });

  py::class_<LogRow>(m, "LogRow")
      .def_readonly("epoch", &LogRow::epoch)
      .def_readonly("j_se", &LogRow::j_se)
      .def_readonly("j_rec", &LogRow::j_rec)
      .def_readonly("total", &LogRow::total)
      .def_readonly("spectral_radius", &LogRow::spectral_radius)
      .def_readonly("wall_ms", &LogRow::wall_ms);

  py::class_<TrainingLog>(m, "TrainingLog")
      .def_readonly("rows", &TrainingLog::rows)
      .def_readonly("aborted", &TrainingLog::aborted)
      .def_readonly("abort_reason", &TrainingLog::abort_reason)
      .def_readonly("best_epoch", &TrainingLog::best_epoch)
      .def_readonly("best_loss", &TrainingLog::best_loss);

  py::class_<KoopmanModel>(m, "KoopmanModel")
      .def_readonly("n", &KoopmanModel::n)
      .def_readonly("embedding_dim", &KoopmanModel::embedding_dim)
      .def_property_readonly("method", [](const KoopmanModel& k) { return to_string(k.method); })
      .def_property_readonly("time_mode", [](const KoopmanModel& k) { return to_string(k.time_mode); })
      .def_property_readonly("operator", &operator_value)
      .def(
          "embed", [](const KoopmanModel& k, const Matrix& x) { return phi_value(k, k.scaler.apply(x)); },
          py::arg("states"), "phi of raw states given as columns")
      .def(
          "simulate",
          [](const KoopmanModel& k, const Vector& x0, int horizon, double dt) {
            return simulate(k, x0, horizon, dt).states;
          },
          py::arg("x0"), py::arg("horizon"), py::arg("dt") = 1.0)
      .def("predict", [](const KoopmanModel& k, const Trajectory& t) { return predict(k, t); }, py::arg("traj"))
      .def("save", [](const KoopmanModel& k, const std::string& path) { save_model(path, k); }, py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  m.def(
      "fit",
      [](const Dataset& data, const TrainConfig& cfg) {
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(data, cfg);
        }
        return py::make_tuple(r.model, r.log);
      },
      py::arg("data"), py::arg("config"));

  m.def(
      "_certify_json",
      [](const KoopmanModel& k, const Dataset& data, std::size_t max_samples, std::uint64_t seed) {
        CertifyOptions opts;
        opts.max_samples = max_samples;
        opts.seed = seed;
        return to_json(certify(k, data, opts)).dump();
      },
      py::arg("model"), py::arg("data"), py::arg("max_samples") = 500, py::arg("seed") = 0);
  m.def(
      "_evaluate_json", [](const KoopmanModel& k, const Dataset& data) { return to_json(evaluate_model(k, data)).dump(); },
      py::arg("model"), py::arg("data"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "skel");
        py::gil_scoped_release release;
        return run_cli(args);
      },
      py::arg("args"), "Runs the command-line tool in-process and returns its exit code.");
}
