#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mfcq/harness.hpp"
#include "mfcq/lqinf.hpp"

namespace py = pybind11;
using namespace mfcq;

PYBIND11_MODULE(_mfcq, m) {
    m.doc() = "Continuous-time q-learning for mean-field control with common noise";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

    py::enum_<Example>(m, "Example").value("LqFinite", Example::LqFinite).value("NlqFinite", Example::NlqFinite);
    py::enum_<FormulaVariant>(m, "FormulaVariant")
        .value("Audited", FormulaVariant::Audited)
        .value("PaperLiteral", FormulaVariant::PaperLiteral);

    py::class_<ModelConstants>(m, "ModelConstants")
        .def(py::init<>())
        .def_readwrite("example", &ModelConstants::example)
        .def_readwrite("b", &ModelConstants::b)
        .def_readwrite("sigma", &ModelConstants::sigma)
        .def_readwrite("sigma_o", &ModelConstants::sigma_o)
        .def_readwrite("lambda_", &ModelConstants::lambda)
        .def_readwrite("beta", &ModelConstants::beta)
        .def_readwrite("gamma", &ModelConstants::gamma)
        .def_readwrite("T", &ModelConstants::T)
        .def("validate", &ModelConstants::validate)
        .def_static("lq_paper", &ModelConstants::lq_paper)
        .def_static("nlq_paper", &ModelConstants::nlq_paper);

    py::class_<GaussianSummary>(m, "GaussianSummary")
        .def(py::init<double, double>(), py::arg("mean"), py::arg("var"))
        .def_readwrite("mean", &GaussianSummary::mean)
        .def_readwrite("var", &GaussianSummary::var);
    py::class_<LogMeanSummary>(m, "LogMeanSummary")
        .def(py::init<double>(), py::arg("logmean"))
        .def_readwrite("logmean", &LogMeanSummary::logmean);

    py::class_<TrueParams>(m, "TrueParams")
        .def_readonly("theta", &TrueParams::theta)
        .def_readonly("psi", &TrueParams::psi)
        .def_readonly("phi", &TrueParams::phi);
    m.def("true_params", &true_params, py::arg("model"), py::arg("variant") = FormulaVariant::Audited);
    m.def("value", &value, py::arg("model"), py::arg("theta"), py::arg("t"), py::arg("summary"),
          py::arg("variant") = FormulaVariant::Audited);
    m.def("optimal_value", &optimal_value, py::arg("model"), py::arg("t"), py::arg("summary"));

    py::class_<AuditReport>(m, "AuditReport")
        .def_readonly("residuals", &AuditReport::residuals)
        .def_readonly("max_abs", &AuditReport::max_abs)
        .def_readonly("spread", &AuditReport::spread);
    m.def(
        "dpp_audit",
        [](const ModelConstants& c, FormulaVariant v, int nt, int ns) {
            const auto tp = true_params(c, v);
            return dpp_audit(c, tp.theta, tp.psi, v, audit_grid(c, nt, ns));
        },
        py::arg("model"), py::arg("variant") = FormulaVariant::Audited, py::arg("nt") = 10, py::arg("ns") = 10,
        "Residual audit of the dynamic programming identity at the true parameters.");

    py::class_<RunConfig>(m, "RunConfig")
        .def_readwrite("model", &RunConfig::model)
        .def_property(
            "episodes", [](const RunConfig& c) { return c.algo.episodes; },
            [](RunConfig& c, long n) { c.algo.episodes = n; })
        .def_property(
            "threads", [](const RunConfig& c) { return c.algo.threads; },
            [](RunConfig& c, int n) { c.algo.threads = n; })
        .def_property(
            "eval_every", [](const RunConfig& c) { return c.output.eval_every; },
            [](RunConfig& c, long n) { c.output.eval_every = n; })
        .def("validate", &RunConfig::validate);
    m.def("load_config", &load_config, py::arg("path"));
    m.def(
        "parse_config", [](const std::string& text) { return parse_config(nlohmann::json::parse(text)); },
        py::arg("json_text"));

    py::class_<ParamRow>(m, "ParamRow")
        .def_readonly("n", &ParamRow::n)
        .def_readonly("theta", &ParamRow::theta)
        .def_readonly("psi", &ParamRow::psi)
        .def_readonly("phi", &ParamRow::phi);
    py::class_<ValueErrorRow>(m, "ValueErrorRow")
        .def_readonly("n", &ValueErrorRow::n)
        .def_readonly("l1_error", &ValueErrorRow::l1_error)
        .def_readonly("stderr", &ValueErrorRow::stderr_);
    py::class_<RunLog>(m, "RunLog")
        .def_readonly("params", &RunLog::params)
        .def_readonly("value_errors", &RunLog::value_errors)
        .def_readonly("diverged", &RunLog::diverged)
        .def_readonly("diverged_at", &RunLog::diverged_at)
        .def_readonly("diagnostic", &RunLog::diagnostic);
    m.def("run_alg1", &run_alg1, py::arg("config"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
    m.def("run_alg2", &run_alg2, py::arg("config"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
    m.def("write_params_csv", &write_params_csv, py::arg("path"), py::arg("log"), py::arg("example"));
    m.def("write_value_error_csv", &write_value_error_csv, py::arg("path"), py::arg("log"));

    py::class_<DefectRow>(m, "DefectRow")
        .def_readonly("dt", &DefectRow::dt)
        .def_readonly("defect", &DefectRow::defect)
        .def_readonly("stderr", &DefectRow::stderr_);
    m.def("grid_study", &grid_study, py::arg("config"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
    m.def("defect_slope", &defect_slope, py::arg("rows"));

    py::class_<lqinf::RiccatiSolution>(m, "RiccatiSolution")
        .def_readonly("Lambda", &lqinf::RiccatiSolution::Lambda)
        .def_readonly("Gamma", &lqinf::RiccatiSolution::Gamma)
        .def_readonly("chi", &lqinf::RiccatiSolution::chi)
        .def_readonly("iterations", &lqinf::RiccatiSolution::iterations);
    m.def(
        "riccati_scalar_example",
        [](double gamma) { return lqinf::riccati_solve(lqinf::LqInfModel::scalar_example(gamma)); },
        py::arg("gamma") = 0.5);

    m.def("format_double", &format_double);
}
