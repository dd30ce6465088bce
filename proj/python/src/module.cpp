#include "morsedef/cli.hpp"
#include "morsedef/flow.hpp"
#include "morsedef/io.hpp"
#include "morsedef/reduction.hpp"
#include "morsedef/topology.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace morsedef;

namespace {

py::dict trajectory_dict(const FlowTrajectory& traj) {
    const std::size_t n = traj.samples.size();
    const std::size_t d = n ? traj.samples.front().x.size() : 0;
    py::array_t<double> t(n), f(n), x({n, d});
    auto tv = t.mutable_unchecked<1>();
    auto fv = f.mutable_unchecked<1>();
    auto xv = x.mutable_unchecked<2>();
    for (std::size_t i = 0; i < n; ++i) {
        tv(i) = traj.samples[i].t;
        fv(i) = traj.samples[i].f;
        for (std::size_t j = 0; j < d; ++j) xv(i, j) = traj.samples[i].x[j];
    }
    py::dict out;
    out["t"] = t;
    out["x"] = x;
    out["f"] = f;
    out["terminated"] = std::string(to_string(traj.terminated));
    out["rejected_steps"] = traj.rejected_steps;
    return out;
}

py::object json_to_python(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

FlowConfig make_flow_config(double rel_tol, double abs_tol, std::size_t max_steps, double sigma_stop, double alpha,
                            const std::string& precision) {
    FlowConfig c;
    c.rel_tol = rel_tol;
    c.abs_tol = abs_tol;
    c.max_steps = max_steps;
    c.sigma_stop = sigma_stop;
    c.alpha = alpha;
    if (precision == "double") {
        c.precision = Precision::standard;
    } else if (precision == "extended") {
        c.precision = Precision::extended;
    } else {
        throw PreconditionViolation("precision must be 'double' or 'extended'");
    }
    c.validate();
    return c;
}

BettiReport betti_of_array(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> mask) {
    // NumPy index order (z, y, x) maps onto axis 0 fastest.
    std::vector<std::uint8_t> flat(mask.data(), mask.data() + mask.size());
    if (mask.ndim() == 2) return betti_2d(flat, mask.shape(1), mask.shape(0));
    if (mask.ndim() == 3) return betti_3d(flat, mask.shape(2), mask.shape(1), mask.shape(0));
    throw DimensionMismatch("mask must be 2D or 3D");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Fast-decreasing checks, normalized gradient-flow retractions and sublevel-set homology.";

    auto base_error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<OnSingularSet>(m, "OnSingularSet", base_error.ptr());
    py::register_exception<InvalidProfile>(m, "InvalidProfile", base_error.ptr());
    py::register_exception<OutOfRange>(m, "OutOfRange", base_error.ptr());
    py::register_exception<GradientTooSmall>(m, "GradientTooSmall", base_error.ptr());
    py::register_exception<StepLimit>(m, "StepLimit", base_error.ptr());
    py::register_exception<PreconditionViolation>(m, "PreconditionViolation", base_error.ptr());
    py::register_exception<GridTooSmall>(m, "GridTooSmall", base_error.ptr());
    py::register_exception<ResolutionTooCoarse>(m, "ResolutionTooCoarse", base_error.ptr());
    py::register_exception<EmptyRegion>(m, "EmptyRegion", base_error.ptr());
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base_error.ptr());

    // ------------------------------------------------------------ fields
    py::class_<ScalarField, std::shared_ptr<ScalarField>>(m, "ScalarField")
        .def_property_readonly("dimension", &ScalarField::dimension)
        .def_property_readonly("name", &ScalarField::name)
        .def_property_readonly("domain_note", &ScalarField::domain_note)
        .def_property_readonly("level_cap", &ScalarField::level_cap)
        .def("value", [](const ScalarField& f, const Point& x) { return f.value(x); }, py::arg("x"))
        .def("gradient", [](const ScalarField& f, const Point& x) { return f.gradient(x); }, py::arg("x"))
        .def("distance_to_sigma", [](const ScalarField& f, const Point& x) { return f.singular_set().distance_to(x); },
             py::arg("x"))
        .def("sigma_polylines", [](const ScalarField& f, double spacing) { return f.singular_set().polylines(spacing); },
             py::arg("spacing") = 0.01)
        .def("__repr__", [](const ScalarField& f) { return "<ScalarField " + f.name() + ">"; });

    auto cast = [](FieldPtr p) { return std::const_pointer_cast<ScalarField>(std::move(p)); };
    m.def("radial_field", [cast](const Point& center, const std::string& form) {
              if (form != "norm" && form != "neg_inverse_norm") {
                  throw PreconditionViolation("form must be 'norm' or 'neg_inverse_norm'");
              }
              return cast(make_radial_field(center, form == "norm" ? RadialForm::norm : RadialForm::neg_inverse_norm));
          },
          py::arg("center"), py::arg("form") = "neg_inverse_norm");
    m.def("quadrifolium_field", [cast]() { return cast(make_quadrifolium_field()); });
    m.def("knot_energy_field",
          [cast](const std::string& curve, std::size_t nodes, const Point& center, double radius, double scale) {
              if (curve == "circle") return cast(make_knot_energy_field(CurveEmbedding::circle(center, radius), nodes));
              if (curve == "trefoil") return cast(make_knot_energy_field(CurveEmbedding::trefoil(scale), nodes));
              throw PreconditionViolation("curve must be 'circle' or 'trefoil'");
          },
          py::arg("curve") = "circle", py::arg("quadrature_nodes") = kDefaultQuadratureNodes,
          py::arg("center") = Point{0.0, 0.0, 0.0}, py::arg("radius") = 1.0, py::arg("scale") = 1.0);
    m.def("gradient_check", [](const ScalarField& f, const Point& x, double h) { return gradient_check(f, x, h); },
          py::arg("field"), py::arg("x"), py::arg("h") = 1e-5);

    // ------------------------------------------------------------ reduction
    py::class_<DecayProfile>(m, "DecayProfile")
        .def_static("power", &DecayProfile::power, py::arg("level_b"), py::arg("q"))
        .def_static("exponential", &DecayProfile::exponential, py::arg("level_b"))
        .def_static("custom", &DecayProfile::custom, py::arg("level_b"), py::arg("table"))
        .def_property_readonly("kind", [](const DecayProfile& p) { return std::string(to_string(p.kind())); })
        .def_property_readonly("level_b", &DecayProfile::level_b)
        .def_property_readonly("level_cap", &DecayProfile::level_cap)
        .def("rate", py::overload_cast<double>(&DecayProfile::rate, py::const_), py::arg("y"))
        .def("primitive", py::overload_cast<double>(&DecayProfile::primitive, py::const_), py::arg("y"));

    m.def("transform", [cast](const std::shared_ptr<ScalarField>& g, const DecayProfile& p) {
              return cast(transform(g, p));
          },
          py::arg("field"), py::arg("profile"));
    m.def("check_fast_decreasing",
          [](const ScalarField& g, const DecayProfile& p, const Point& lower, const Point& upper,
             std::size_t grid_samples, std::size_t ring_samples, double ring_radius, std::uint64_t seed,
             unsigned workers) {
              SamplingPlan plan{lower, upper, grid_samples, ring_samples, ring_radius, seed, workers};
              ConditionReport report;
              {
                  py::gil_scoped_release release;
                  report = check_fast_decreasing(g, p, plan);
              }
              return json_to_python(to_json(report));
          },
          py::arg("field"), py::arg("profile"), py::arg("lower"), py::arg("upper"), py::arg("grid_samples") = 100000,
          py::arg("ring_samples") = 0, py::arg("ring_radius") = 0.05, py::arg("seed") = 0, py::arg("workers") = 0);

    // ------------------------------------------------------------ flow
    py::class_<FlowConfig>(m, "FlowConfig")
        .def(py::init(&make_flow_config), py::arg("rel_tol") = 1e-8, py::arg("abs_tol") = 1e-10,
             py::arg("max_steps") = 1000000, py::arg("sigma_stop") = 1e-6, py::arg("alpha") = 1.0,
             py::arg("precision") = "extended")
        .def_readwrite("rel_tol", &FlowConfig::rel_tol)
        .def_readwrite("abs_tol", &FlowConfig::abs_tol)
        .def_readwrite("max_steps", &FlowConfig::max_steps)
        .def_readwrite("sigma_stop", &FlowConfig::sigma_stop)
        .def_readwrite("alpha", &FlowConfig::alpha)
        .def("descent_tolerance", &FlowConfig::descent_tolerance, py::arg("f_start"));

    m.def("descend",
          [](const ScalarField& f, const Point& x, double duration, const FlowConfig& cfg) {
              return trajectory_dict(descend(f, x, duration, cfg));
          },
          py::arg("field"), py::arg("x"), py::arg("duration"), py::arg("config") = FlowConfig{});
    m.def("retract", [](const ScalarField& f, const Point& x, double s, const FlowConfig& cfg) {
              return retract(f, x, s, cfg);
          },
          py::arg("field"), py::arg("x"), py::arg("s"), py::arg("config") = FlowConfig{});
    m.def("retract_detailed",
          [](const ScalarField& f, const Point& x, double s, const FlowConfig& cfg) {
              const auto r = retract_detailed(f, x, s, cfg);
              py::dict out;
              out["endpoint"] = r.endpoint;
              out["f_end"] = r.f_end;
              out["sigma_distance"] = r.sigma_distance;
              out["trajectory"] = trajectory_dict(r.trajectory);
              return out;
          },
          py::arg("field"), py::arg("x"), py::arg("s"), py::arg("config") = FlowConfig{});
    m.def("ascend_to_level", [](const ScalarField& f, const Point& x, double a, const FlowConfig& cfg) {
              return ascend_to_level(f, x, a, cfg);
          },
          py::arg("field"), py::arg("x"), py::arg("a"), py::arg("config") = FlowConfig{});
    m.def("verify_lipschitz",
          [](const ScalarField& f, const Point& x, const std::vector<std::pair<double, double>>& times,
             const FlowConfig& cfg, double slack) {
              return json_to_python(to_json(verify_lipschitz(f, x, times, cfg, slack)));
          },
          py::arg("field"), py::arg("x"), py::arg("times"), py::arg("config") = FlowConfig{},
          py::arg("slack") = 1e-6);
    m.def("retract_batch",
          [](const ScalarField& f, const std::vector<Point>& seeds, double s, const FlowConfig& cfg,
             unsigned workers) {
              std::vector<BatchEntry> entries;
              {
                  py::gil_scoped_release release;
                  entries = retract_batch(f, seeds, s, cfg, workers);
              }
              py::list out;
              for (const auto& e : entries) {
                  py::dict d;
                  d["seed"] = e.seed;
                  d["endpoint"] = e.result ? py::cast(e.result->endpoint) : py::none();
                  d["f_end"] = e.result ? py::cast(e.result->f_end) : py::none();
                  d["sigma_distance"] = e.result ? py::cast(e.result->sigma_distance) : py::none();
                  d["terminated"] = std::string(to_string(e.terminated));
                  d["gradient_too_small"] = e.gradient_too_small;
                  d["failure"] = e.failure;
                  out.append(d);
              }
              return out;
          },
          py::arg("field"), py::arg("seeds"), py::arg("s") = 1.0, py::arg("config") = FlowConfig{},
          py::arg("workers") = 0);

    // ------------------------------------------------------------ topology
    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init([](Point lower, Point upper, std::vector<std::size_t> resolution) {
                 GridSpec g{std::move(lower), std::move(upper), std::move(resolution)};
                 g.validate();
                 return g;
             }),
             py::arg("lower"), py::arg("upper"), py::arg("resolution"))
        .def_static("cube", &GridSpec::cube, py::arg("dim"), py::arg("lo"), py::arg("hi"), py::arg("res"))
        .def_readonly("lower", &GridSpec::lower)
        .def_readonly("upper", &GridSpec::upper)
        .def_readonly("resolution", &GridSpec::resolution)
        .def_property_readonly("cell_diagonal", &GridSpec::cell_diagonal);

    py::class_<GridRegion>(m, "GridRegion")
        .def_property_readonly("spec", &GridRegion::spec)
        .def_property_readonly("level_b", &GridRegion::level_b)
        .def_property_readonly("inside_count", &GridRegion::inside_count)
        .def_property_readonly("flags", [](const GridRegion& r) {
            // Shape in NumPy order: (z, y, x) / (y, x).
            std::vector<py::ssize_t> shape(r.spec().resolution.rbegin(), r.spec().resolution.rend());
            py::array_t<std::uint8_t> a(shape);
            std::copy(r.flags().begin(), r.flags().end(), a.mutable_data());
            return a;
        });

    py::class_<BettiReport>(m, "BettiReport")
        .def_readonly("dimension", &BettiReport::dimension)
        .def_readonly("b0", &BettiReport::b0)
        .def_readonly("b1", &BettiReport::b1)
        .def_readonly("b2", &BettiReport::b2)
        .def_readonly("euler", &BettiReport::euler)
        .def_readonly("method_note", &BettiReport::method_note)
        .def("__repr__", [](const BettiReport& b) {
            std::ostringstream os;
            os << "BettiReport(b0=" << b.b0 << ", b1=" << b.b1 << ", b2=" << b.b2 << ", euler=" << b.euler << ")";
            return os.str();
        });

    m.def("voxelize",
          [](const ScalarField& f, double level_b, const GridSpec& spec, double sigma_inflation, unsigned workers) {
              py::gil_scoped_release release;
              return voxelize(f, level_b, spec, sigma_inflation, workers);
          },
          py::arg("field"), py::arg("level_b"), py::arg("spec"), py::arg("sigma_inflation") = 1.0,
          py::arg("workers") = 0);
    m.def("betti", py::overload_cast<const GridRegion&>(&betti), py::arg("region"));
    m.def("betti_mask", &betti_of_array, py::arg("mask"),
          "Betti numbers of a 2D (y, x) or 3D (z, y, x) boolean mask of closed cells.");
    m.def("calibrate_level_along_ray", &calibrate_level_along_ray, py::arg("field"), py::arg("origin"),
          py::arg("direction"), py::arg("radius"));
    m.def("verify_retraction_consistency",
          [](const ScalarField& f, const GridRegion& region, const FlowConfig& cfg, std::size_t n_seeds,
             std::uint64_t seed, unsigned workers) {
              ConsistencyReport r;
              {
                  py::gil_scoped_release release;
                  r = verify_retraction_consistency(f, region, cfg, n_seeds, seed, workers);
              }
              return json_to_python(to_json(r));
          },
          py::arg("field"), py::arg("region"), py::arg("config") = FlowConfig{}, py::arg("n_seeds") = 100,
          py::arg("seed") = 0, py::arg("workers") = 0);

    // ------------------------------------------------------------ cli
    m.def("run_cli",
          [](const std::vector<std::string>& args) {
              std::vector<const char*> argv{"morsedef"};
              for (const auto& a : args) argv.push_back(a.c_str());
              std::ostringstream out, err;
              const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
              return py::make_tuple(code, out.str(), err.str());
          },
          py::arg("args"), "Run the command-line front end; returns (exit_code, stdout, stderr).");
}
