#include <optional>
#include <sstream>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "radp/errors.hpp"
#include "radp/harness.hpp"

namespace py = pybind11;
using namespace radp;

namespace {

py::dict approximant_dict(const Approximant& a) {
    py::dict d;
    py::list labels;
    for (int j = 0; j < a.basis().size(); ++j) labels.append(a.basis().label(j));
    d["labels"] = labels;
    d["weights"] = Vector(a.weights());
    return d;
}

py::dict record_dict(const SimulationRecord& r) {
    py::dict d;
    d["time"] = r.observed.time;
    d["x"] = Matrix(r.observed.x);
    d["u"] = r.observed.u;
    d["w"] = Matrix(r.hidden_w);
    if (!r.observed.z.empty()) d["z"] = r.observed.z;
    return d;
}

py::dict summarize(const LearningRun& run) {
    py::dict d;
    d["name"] = run.config.name;
    d["log"] = run.log;
    d["stage"] = run.stage;
    d["stage_residuals"] = run.stage_residuals;
    d["omega"] = py::make_tuple(Vector(run.invariant.omega.lo), Vector(run.invariant.omega.hi));
    d["containment_violations"] = run.audit.violations;
    if (run.online) {
        const OnlineRun& o = *run.online;
        d["converged"] = o.converged;
        d["converged_at"] = o.converged_at;
        d["iterations"] = o.iterations.size();
        d["residual_rms"] = o.residual_rms();
        d["value"] = approximant_dict(run.value());
        d["policy"] = approximant_dict(run.policy());
        d["initial_value"] = approximant_dict(run.initial_value());
        py::list levels;
        for (const auto& it : o.iterations) levels.append(it.step.pe_ratio);
        d["excitation_levels"] = levels;
    }
    if (run.robust) {
        const RobustOutcome& r = *run.robust;
        py::dict rd;
        rd["rho_c0"] = r.rho.c0();
        rd["rho_c1"] = r.rho.c1();
        rd["margin"] = r.gain.margin;
        rd["relative_margin"] = r.gain.relative_margin;
        rd["level"] = r.level.d;
        py::list finals, descent;
        for (const auto& t : r.trajectories) {
            finals.append(t.final_norm);
            descent.append(t.descent.holds);
        }
        rd["final_norms"] = finals;
        rd["descent_holds"] = descent;
        d["robust"] = rd;
    }
    if (run.cascade) {
        py::dict cd;
        cd["f_rel_err"] = run.cascade->f_rel_err;
        cd["g_rel_err"] = run.cascade->g_rel_err;
        cd["residual_rms"] = run.cascade->phase_two.residual_rms;
        cd["f_hat"] = approximant_dict(run.cascade->phase_two.f_hat);
        cd["g_hat"] = approximant_dict(run.cascade->phase_two.g_hat);
        d["cascade"] = cd;
    }
    if (run.final_record) {
        d["final_policy"] = run.final_policy_name;
        d["final_trajectory"] = record_dict(*run.final_record);
    }
    return d;
}

std::string config_text(const RunConfig& c) {
    std::ostringstream os;
    write_config(os, c);
    return os.str();
}

RunConfig config_from_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Robust adaptive dynamic programming: config, learning runs, oracle and gain checks";

    static py::exception<Error> error(m, "RadpError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object inst = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
            inst.attr("category") = std::string(category_name(e.category()));
            inst.attr("exit_code") = exit_code(e.category());
            PyErr_SetObject(error.ptr(), inst.ptr());
        }
    });

    py::class_<RunConfig>(m, "Config")
        .def(py::init(&config_from_text), py::arg("text"))
        .def_readwrite("name", &RunConfig::name)
        .def_readonly("kind", &RunConfig::kind)
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("amplitude", &RunConfig::amplitude)
        .def_readwrite("robust", &RunConfig::robust)
        .def_readwrite("max_iter", &RunConfig::max_iter)
        .def_readwrite("tol", &RunConfig::tol)
        .def_readwrite("step", &RunConfig::step)
        .def_readwrite("horizon", &RunConfig::horizon)
        .def_readwrite("epsilon", &RunConfig::epsilon)
        .def_readwrite("ic_count", &RunConfig::ic_count)
        .def_readwrite("output_dir", &RunConfig::output_dir)
        .def("validate", &RunConfig::validate)
        .def("to_text", &config_text)
        .def("__repr__", [](const RunConfig& c) { return "<radp.Config " + c.name + " (" + c.kind + ")>"; });

    m.def("load_config", &load_config, py::arg("path"));
    m.def("parse_config", &config_from_text, py::arg("text"));

    m.def(
        "run",
        [](const RunConfig& c) {
            LearningRun run;
            {
                py::gil_scoped_release release;
                run_algorithm_1(c, run);
            }
            return summarize(run);
        },
        py::arg("config"), "Learn, redesign and apply; returns a summary dict.");
    m.def(
        "execute",
        [](const RunConfig& c, const std::filesystem::path& dir) {
            std::optional<LearningRun> run;
            {
                py::gil_scoped_release release;
                run = execute(c, dir);
            }
            return summarize(*run);
        },
        py::arg("config"), py::arg("directory"), "Like run, and writes the run directory.");
    m.def(
        "replay",
        [](const std::filesystem::path& dir) {
            py::gil_scoped_release release;
            replay(dir);
        },
        py::arg("directory"));
    m.def(
        "oracle",
        [](const RunConfig& c) {
            const Problem p = build_problem(c);
            const auto states = run_oracle(c, p, p.x_region);
            py::list out;
            for (const auto& s : states) {
                py::dict d;
                d["iteration"] = s.iteration;
                d["value"] = approximant_dict(s.value);
                d["next_policy"] = approximant_dict(s.next_policy);
                d["collocation_residual"] = s.collocation_residual;
                d["hjb_residual"] = s.hjb_residual;
                d["value_change"] = s.value_change;
                out.append(d);
            }
            return out;
        },
        py::arg("config"), "Model-based policy iteration from u0.");
    m.def(
        "check_gains",
        [](const RunConfig& c) {
            std::optional<Rho> rho;
            const SmallGainReport r = check_gains(c, &rho);
            py::dict d;
            d["holds"] = r.holds;
            d["margin"] = r.margin;
            d["relative_margin"] = r.relative_margin;
            d["rho_c0"] = rho ? py::cast(rho->c0()) : py::none();
            std::ostringstream os;
            r.write(os, "small-gain ladder");
            d["table"] = os.str();
            return d;
        },
        py::arg("config"));
}
