#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>

#include "stlsgd/dataset.hpp"
#include "stlsgd/engine.hpp"
#include "stlsgd/errors.hpp"
#include "stlsgd/experiment.hpp"
#include "stlsgd/metrics.hpp"
#include "stlsgd/objective.hpp"
#include "stlsgd/partition.hpp"
#include "stlsgd/schedules.hpp"

namespace py = pybind11;
using namespace stlsgd;

namespace {

py::dict constants_dict(const ObjectiveConstants& c) {
  py::dict d;
  d["L"] = c.L;
  d["mu"] = c.mu ? py::object(py::float_(*c.mu)) : py::none();
  d["rho"] = c.rho ? py::object(py::float_(*c.rho)) : py::none();
  d["sigma2"] = c.sigma2;
  d["zeta_star"] = c.zeta_star ? py::object(py::float_(*c.zeta_star)) : py::none();
  return d;
}

py::list trace_rows(const RunTrace& trace) {
  py::list rows;
  for (const auto& r : trace.rows) {
    py::dict d;
    d["t"] = r.t;
    d["comm_rounds"] = r.comm_rounds;
    d["gap"] = r.gap ? py::object(py::float_(*r.gap)) : py::none();
    d["grad_norm_sq"] =
        r.grad_norm_sq ? py::object(py::float_(*r.grad_norm_sq)) : py::none();
    d["divergence"] = r.divergence ? py::object(py::float_(*r.divergence)) : py::none();
    d["eta"] = r.eta;
    d["k"] = r.k;
    d["stage"] = r.stage;
    rows.append(d);
  }
  return rows;
}

py::dict summary_dict(const SummaryRecord& s) {
  py::dict d;
  d["algorithm"] = s.algorithm;
  d["comm_rounds_total"] = s.comm_rounds_total;
  d["comm_rounds_to_target"] = s.comm_rounds_to_target
                                   ? py::object(py::int_(*s.comm_rounds_to_target))
                                   : py::none();
  d["iterations_total"] = s.iterations_total;
  d["final_gap"] = s.final_gap ? py::object(py::float_(*s.final_gap)) : py::none();
  d["final_grad_norm_sq"] = s.final_grad_norm_sq;
  d["wall_time_s"] = s.wall_time_s;
  return d;
}

ReturnMode mode_from(const std::string& mode) {
  if (mode == "random") return ReturnMode::random_iterate;
  if (mode == "last") return ReturnMode::last_iterate;
  throw std::invalid_argument("return_mode must be 'last' or 'random'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distributed local-SGD simulator core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseFailure", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::class_<Dataset, std::shared_ptr<Dataset>>(m, "Dataset")
      .def_property_readonly("num_features", [](const Dataset& d) { return d.num_features; })
      .def_property_readonly("labels", [](const Dataset& d) { return d.labels; })
      .def("__len__", &Dataset::size)
      .def("content_hash", &Dataset::content_hash);

  m.def(
      "parse_libsvm",
      [](const std::string& text, std::optional<double> positive_class,
         std::optional<double> negative_class, std::optional<std::size_t> num_features) {
        ParseOptions opts{positive_class, negative_class, num_features};
        return std::make_shared<Dataset>(parse_libsvm(text, opts));
      },
      py::arg("text"), py::arg("positive_class") = py::none(),
      py::arg("negative_class") = py::none(), py::arg("num_features") = py::none());
  m.def(
      "load_libsvm_file",
      [](const std::string& path, std::optional<double> positive_class,
         std::optional<double> negative_class, std::optional<std::size_t> num_features) {
        ParseOptions opts{positive_class, negative_class, num_features};
        return std::make_shared<Dataset>(load_libsvm_file(path, opts));
      },
      py::arg("path"), py::arg("positive_class") = py::none(),
      py::arg("negative_class") = py::none(), py::arg("num_features") = py::none());
  m.def(
      "synthetic_two_class",
      [](std::size_t n, std::size_t dim, std::uint64_t seed) {
        return std::make_shared<Dataset>(synthetic_two_class(n, dim, seed));
      },
      py::arg("n"), py::arg("dim"), py::arg("seed"));
  m.def(
      "partition",
      [](const std::shared_ptr<Dataset>& data, std::size_t num_clients, double iid_fraction,
         std::uint64_t seed) { return partition(*data, {num_clients, iid_fraction, seed}); },
      py::arg("dataset"), py::arg("num_clients"), py::arg("iid_fraction") = 100.0,
      py::arg("seed") = 0);

  py::class_<Objective, ObjectivePtr>(m, "Objective")
      .def_property_readonly("dim", &Objective::dim)
      .def_property_readonly("num_clients", &Objective::num_clients)
      .def("value", &Objective::value, py::arg("x"))
      .def("client_value", &Objective::client_value, py::arg("client"), py::arg("x"))
      .def("full_gradient",
           [](const Objective& o, const Vec& x) { return o.full_gradient(x); })
      .def("client_gradient",
           [](const Objective& o, std::size_t c, const Vec& x) {
             return o.client_gradient(c, x);
           })
      .def(
          "stochastic_gradient",
          [](const Objective& o, const Vec& x, std::size_t client, std::uint64_t seed,
             std::uint64_t t, std::size_t batch) {
            RngStream rng(seed, client, t);
            return o.stochastic_gradient(x, client, rng, batch);
          },
          py::arg("x"), py::arg("client"), py::arg("seed"), py::arg("t"),
          py::arg("batch") = 1)
      .def("constants", [](const Objective& o) { return constants_dict(o.constants()); })
      .def("optimum", [](const Objective& o) -> py::object {
        if (!o.optimum()) return py::none();
        py::dict d;
        d["x"] = o.optimum()->x;
        d["value"] = o.optimum()->value;
        return d;
      });

  m.def("logistic_objective", &logistic_objective, py::arg("dataset"), py::arg("lambda_"),
        py::arg("shards") = Shards{});
  m.def("quadratic_objective", &quadratic_objective, py::arg("centers"), py::arg("sigma2"));
  m.def("pl_objective", &pl_objective, py::arg("sigma2") = 0.0, py::arg("num_clients") = 1);
  m.def(
      "prox_wrap",
      [](const ObjectivePtr& inner, const Vec& center, double gamma) -> ObjectivePtr {
        return prox_wrap(inner, center, gamma);
      },
      py::arg("inner"), py::arg("center"), py::arg("gamma"));
  m.def("estimate_sigma2",
        [](const ObjectivePtr& obj, const Vec& x0, std::uint64_t seed, std::size_t draws) {
          return estimate_sigma2(*obj, x0, seed, draws);
        },
        py::arg("objective"), py::arg("x0"), py::arg("seed"), py::arg("draws") = 1000);
  m.attr("PL_MU") = kPlMu;

  py::class_<Stage>(m, "Stage")
      .def_readonly("eta", &Stage::eta)
      .def_readonly("T", &Stage::T)
      .def_readonly("k_real", &Stage::k_real)
      .def_readonly("k", &Stage::k);
  py::class_<StagePlan>(m, "StagePlan")
      .def_readonly("stages", &StagePlan::stages)
      .def_readonly("iid", &StagePlan::iid)
      .def_readonly("provenance", &StagePlan::provenance)
      .def_readonly("warnings", &StagePlan::warnings)
      .def_property_readonly("regime",
                             [](const StagePlan& p) { return regime_name(p.regime); });

  m.def("initial_k", &initial_k, py::arg("iid"), py::arg("eta1"), py::arg("L"), py::arg("N"),
        py::arg("sigma2"), py::arg("zeta_star"));
  m.def("plan_stl_sc", &plan_stl_sc, py::arg("eta1"), py::arg("T1"), py::arg("k1"),
        py::arg("S"), py::arg("iid"), py::arg("mu") = py::none());
  m.def("plan_stl_nc", &plan_stl_nc, py::arg("eta1"), py::arg("T1"), py::arg("k1"),
        py::arg("S"), py::arg("iid"), py::arg("option"), py::arg("rho") = py::none());
  m.def("min_stage_count", &min_stage_count, py::arg("N"), py::arg("gap0"), py::arg("eta1"),
        py::arg("sigma2"));
  m.def("total_iterations", &total_iterations, py::arg("plan"));
  m.def("comm_rounds", &comm_rounds, py::arg("plan"));

  m.def("average_models", py::overload_cast<const std::vector<Vec>&>(&average_models),
        py::arg("models"));
  m.def("divergence", py::overload_cast<const std::vector<Vec>&>(&divergence),
        py::arg("models"));
  m.def(
      "zeta_at", [](const ObjectivePtr& obj, const Vec& x) { return zeta_at(*obj, x); },
      py::arg("objective"), py::arg("x"));
  m.def(
      "objective_gap",
      [](const ObjectivePtr& obj, const Vec& x) { return objective_gap(*obj, x); },
      py::arg("objective"), py::arg("x"));
  m.def(
      "bregman_divergence",
      [](const ObjectivePtr& obj, const Vec& x, const Vec& y) {
        return bregman_divergence(*obj, x, y);
      },
      py::arg("objective"), py::arg("x"), py::arg("y"));
  m.def("theorem1_bound",
        py::overload_cast<double, double, std::int64_t, double, std::size_t>(&theorem1_bound),
        py::arg("dist0_sq"), py::arg("eta"), py::arg("T"), py::arg("sigma2"), py::arg("N"));
  m.def("theorem2_bound",
        py::overload_cast<double, double, std::size_t, std::size_t>(&theorem2_bound),
        py::arg("eta1"), py::arg("sigma2"), py::arg("N"), py::arg("S"));
  m.def(
      "solve_optimum",
      [](const ObjectivePtr& obj, const Vec& x0, std::int64_t max_iters, double grad_tol) {
        Optimum opt = solve_optimum(*obj, x0, max_iters, grad_tol);
        py::dict d;
        d["x"] = opt.x;
        d["value"] = opt.value;
        return d;
      },
      py::arg("objective"), py::arg("x0"), py::arg("max_iters") = 100000,
      py::arg("grad_tol") = 1e-10);

  m.def(
      "local_sgd",
      [](const ObjectivePtr& obj, const Vec& x0, double eta, std::int64_t T, std::int64_t k,
         std::uint64_t seed, Shards shards, std::size_t batch_size,
         const std::string& return_mode, std::optional<std::int64_t> return_index,
         std::int64_t eval_every, int threads) {
        ClientFleet fleet = make_fleet(obj->num_clients(), seed, std::move(shards));
        LocalSgdConfig cfg;
        cfg.eta = eta;
        cfg.T = T;
        cfg.k = k;
        cfg.batch_size = batch_size;
        cfg.return_mode = mode_from(return_mode);
        cfg.return_index = return_index;
        cfg.eval_every = eval_every;
        cfg.threads = threads;
        LocalSgdResult res = local_sgd(*obj, x0, cfg, fleet);
        py::dict d;
        d["x"] = res.x;
        d["comm_rounds"] = res.comm_rounds;
        d["return_index"] = res.return_index;
        d["trace"] = trace_rows(res.trace);
        return d;
      },
      py::arg("objective"), py::arg("x0"), py::arg("eta"), py::arg("T"), py::arg("k"),
      py::arg("seed"), py::arg("shards") = Shards{}, py::arg("batch_size") = 1,
      py::arg("return_mode") = "random", py::arg("return_index") = py::none(),
      py::arg("eval_every") = 1, py::arg("threads") = 1);

  m.def(
      "run_stagewise",
      [](const ObjectivePtr& obj, const Vec& x1, const StagePlan& plan, std::uint64_t seed,
         Shards shards, std::optional<double> prox_gamma, std::size_t batch_size,
         const std::string& return_mode, std::int64_t eval_every, int threads) {
        ClientFleet fleet = make_fleet(obj->num_clients(), seed, std::move(shards));
        StagewiseOptions opts;
        opts.batch_size = batch_size;
        opts.return_mode = mode_from(return_mode);
        opts.eval_every = eval_every;
        opts.threads = threads;
        StagewiseResult res = run_stagewise(obj, x1, plan, fleet, prox_gamma, opts);
        py::dict d;
        d["x_final"] = res.x_final;
        d["stage_iterates"] = res.stage_iterates;
        d["comm_rounds"] = res.comm_rounds;
        d["iterations"] = res.iterations;
        d["trace"] = trace_rows(res.trace);
        return d;
      },
      py::arg("objective"), py::arg("x1"), py::arg("plan"), py::arg("seed"),
      py::arg("shards") = Shards{}, py::arg("prox_gamma") = py::none(),
      py::arg("batch_size") = 1, py::arg("return_mode") = "random",
      py::arg("eval_every") = 1, py::arg("threads") = 1);

  m.def(
      "sample_stage_index",
      [](std::size_t S, std::uint64_t seed) {
        RngStream rng(seed, kMetaStream + 3, 0);
        return sample_stage_index(S, rng);
      },
      py::arg("S"), py::arg("seed"));

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& name) {
        ExperimentConfig cfg = parse_config(config_text, name);
        ExperimentResult res = run_experiment(cfg);
        py::dict d;
        d["summary"] = summary_dict(res.summary);
        d["trace"] = trace_rows(res.trace);
        d["trace_csv"] = res.trace_csv;
        d["x_final"] = res.x_final;
        d["x_report"] = res.x_report;
        d["sampled_stage"] = res.sampled_stage;
        d["plan_provenance"] = res.plan.provenance;
        return d;
      },
      py::arg("config_text"), py::arg("name") = "config");
}
