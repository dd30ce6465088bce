#include "morsedef/cli.hpp"

#include "morsedef/io.hpp"
#include "morsedef/parallel.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace morsedef::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ------------------------------------------------------------ json helpers

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.count(key)) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

Point get_point(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing '") + key + "'");
    return get_or<Point>(j, key, {});
}

std::optional<Point> get_opt_point(const json& j, const char* key) {
    if (!j.contains(key)) return std::nullopt;
    return get_point(j, key);
}

// Accepts a JSON number or a "n/d" fraction string.
double get_real(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        const auto slash = s.find('/');
        try {
            if (slash == std::string::npos) return std::stod(s);
            return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
        } catch (const std::exception&) {
        }
    }
    throw ConfigError(std::string("'") + key + "' must be a number or an n/d fraction");
}

// ------------------------------------------------------------ sections

FieldSpec parse_field(const json& j) {
    reject_unknown(j, {"type", "center", "form", "curve", "quadrature_nodes", "sigma_tol"}, "field");
    FieldSpec f;
    f.type = get_or<std::string>(j, "type", "");
    f.sigma_tol = get_real(j, "sigma_tol", kSigmaTol);
    if (f.type == "radial") {
        f.center = j.contains("center") ? get_point(j, "center") : Point{0.0, 0.0};
        const std::string form = get_or<std::string>(j, "form", "neg_inverse_norm");
        if (form == "norm") {
            f.form = RadialForm::norm;
        } else if (form == "neg_inverse_norm") {
            f.form = RadialForm::neg_inverse_norm;
        } else {
            throw ConfigError("radial form must be 'norm' or 'neg_inverse_norm'");
        }
    } else if (f.type == "knot_energy") {
        f.quadrature_nodes = get_or<std::size_t>(j, "quadrature_nodes", kDefaultQuadratureNodes);
        if (j.contains("curve")) {
            const json& c = j.at("curve");
            reject_unknown(c, {"type", "center", "radius", "scale"}, "field.curve");
            f.curve.type = get_or<std::string>(c, "type", "circle");
            if (c.contains("center")) f.curve.center = get_point(c, "center");
            f.curve.radius = get_real(c, "radius", 1.0);
            f.curve.scale = get_real(c, "scale", 1.0);
            if (f.curve.type != "circle" && f.curve.type != "trefoil") {
                throw ConfigError("curve type must be 'circle' or 'trefoil'");
            }
        }
    } else if (f.type != "quadrifolium") {
        throw ConfigError("field type must be 'radial', 'quadrifolium' or 'knot_energy'");
    }
    return f;
}

json field_to_json(const FieldSpec& f) {
    json j = {{"type", f.type}, {"sigma_tol", f.sigma_tol}};
    if (f.type == "radial") {
        j["center"] = f.center;
        j["form"] = f.form == RadialForm::norm ? "norm" : "neg_inverse_norm";
    } else if (f.type == "knot_energy") {
        j["quadrature_nodes"] = f.quadrature_nodes;
        j["curve"] = {{"type", f.curve.type}, {"center", f.curve.center},
                      {"radius", f.curve.radius}, {"scale", f.curve.scale}};
    }
    return j;
}

ProfileSpec parse_profile(const json& j) {
    reject_unknown(j, {"kind", "level_b", "q", "table"}, "profile");
    ProfileSpec p;
    const std::string kind = get_or<std::string>(j, "kind", "power");
    if (kind == "power") {
        p.kind = ProfileKind::power;
    } else if (kind == "exponential") {
        p.kind = ProfileKind::exponential;
    } else if (kind == "custom") {
        p.kind = ProfileKind::custom;
    } else {
        throw ConfigError("profile kind must be 'power', 'exponential' or 'custom'");
    }
    if (!j.contains("level_b")) throw ConfigError("profile needs 'level_b'");
    p.level_b = get_real(j, "level_b", 0.0);
    p.q = get_real(j, "q", 2.0);
    if (j.contains("table")) {
        for (const auto& row : j.at("table")) {
            if (!row.is_array() || row.size() != 2) throw ConfigError("profile table rows must be [y, phi]");
            p.table.emplace_back(row[0].get<double>(), row[1].get<double>());
        }
    }
    return p;
}

json profile_to_json(const ProfileSpec& p) {
    json j = {{"kind", std::string(to_string(p.kind))}, {"level_b", p.level_b}};
    if (p.kind == ProfileKind::power) j["q"] = p.q;
    if (p.kind == ProfileKind::custom) {
        json t = json::array();
        for (const auto& [y, r] : p.table) t.push_back({y, r});
        j["table"] = t;
    }
    return j;
}

FlowConfig parse_flow(const json& j) {
    reject_unknown(j, {"rel_tol", "abs_tol", "max_steps", "sigma_stop", "alpha", "precision"}, "flow");
    FlowConfig c;
    c.rel_tol = get_real(j, "rel_tol", c.rel_tol);
    c.abs_tol = get_real(j, "abs_tol", c.abs_tol);
    c.max_steps = get_or<std::size_t>(j, "max_steps", c.max_steps);
    c.sigma_stop = get_real(j, "sigma_stop", c.sigma_stop);
    c.alpha = get_real(j, "alpha", c.alpha);
    const std::string prec = get_or<std::string>(j, "precision", "extended");
    if (prec == "double") {
        c.precision = Precision::standard;
    } else if (prec == "extended") {
        c.precision = Precision::extended;
    } else {
        throw ConfigError("flow precision must be 'double' or 'extended'");
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return c;
}

GridSpec parse_grid(const json& j) {
    reject_unknown(j, {"lower", "upper", "resolution"}, "grid");
    GridSpec g;
    g.lower = get_point(j, "lower");
    g.upper = get_point(j, "upper");
    if (!j.contains("resolution")) throw ConfigError("grid needs 'resolution'");
    const json& r = j.at("resolution");
    if (r.is_number_unsigned() || r.is_number_integer()) {
        g.resolution.assign(g.lower.size(), r.get<std::size_t>());
    } else {
        g.resolution = r.get<std::vector<std::size_t>>();
    }
    try {
        g.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return g;
}

CheckSpec parse_check(const json& j) {
    reject_unknown(j, {"lower", "upper", "grid_samples", "ring_samples", "ring_radius"}, "check");
    CheckSpec c;
    c.lower = get_opt_point(j, "lower");
    c.upper = get_opt_point(j, "upper");
    c.grid_samples = get_or<std::size_t>(j, "grid_samples", c.grid_samples);
    c.ring_samples = get_or<std::size_t>(j, "ring_samples", c.ring_samples);
    c.ring_radius = get_real(j, "ring_radius", c.ring_radius);
    return c;
}

RetractSpec parse_retract(const json& j) {
    reject_unknown(j, {"count", "seed_points", "lower", "upper", "s", "duration", "write_trajectories"},
                   "retract");
    RetractSpec r;
    r.count = get_or<std::size_t>(j, "count", r.count);
    r.seed_points = get_or<std::vector<Point>>(j, "seed_points", {});
    r.lower = get_opt_point(j, "lower");
    r.upper = get_opt_point(j, "upper");
    r.s = get_real(j, "s", r.s);
    if (j.contains("duration")) r.duration = get_real(j, "duration", 0.0);
    r.write_trajectories = get_or<bool>(j, "write_trajectories", true);
    if (!(r.s >= 0.0 && r.s <= 1.0)) throw ConfigError("retract.s must lie in [0, 1]");
    return r;
}

HomologySpec parse_homology(const json& j) {
    reject_unknown(j, {"level_b", "sigma_inflation", "expected", "calibrate"}, "homology");
    HomologySpec h;
    if (j.contains("level_b")) h.level_b = get_real(j, "level_b", 0.0);
    h.sigma_inflation = get_real(j, "sigma_inflation", 1.0);
    if (j.contains("expected")) {
        const json& e = j.at("expected");
        reject_unknown(e, {"b0", "b1", "b2"}, "homology.expected");
        ExpectedBetti x;
        x.b0 = get_or<long>(e, "b0", 0);
        x.b1 = get_or<long>(e, "b1", 0);
        if (e.contains("b2")) x.b2 = get_or<long>(e, "b2", 0);
        h.expected = x;
    }
    if (j.contains("calibrate")) {
        const json& c = j.at("calibrate");
        reject_unknown(c, {"origin", "direction", "radius"}, "homology.calibrate");
        h.calibrate = Calibration{get_point(c, "origin"), get_point(c, "direction"), get_real(c, "radius", 0.2)};
    }
    return h;
}

RenderSpec parse_render(const json& j) {
    reject_unknown(j, {"pixels", "trajectories"}, "render");
    RenderSpec r;
    r.pixels = get_or<std::size_t>(j, "pixels", r.pixels);
    r.trajectories = get_or<std::size_t>(j, "trajectories", r.trajectories);
    if (r.pixels < 8) throw ConfigError("render.pixels must be >= 8");
    return r;
}

// ------------------------------------------------------------ run helpers

struct Box {
    Point lower;
    Point upper;
};

Box box_or_grid(const std::optional<Point>& lo, const std::optional<Point>& hi, const GridSpec& grid,
                std::size_t dim) {
    Box b{lo.value_or(grid.lower), hi.value_or(grid.upper)};
    if (b.lower.size() != dim || b.upper.size() != dim) {
        throw ConfigError("box dimension does not match the field dimension");
    }
    return b;
}

std::vector<Point> draw_seeds(const ScalarField& field, const Box& box, std::size_t count, double floor,
                              std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> axes;
    for (std::size_t i = 0; i < box.lower.size(); ++i) axes.emplace_back(box.lower[i], box.upper[i]);
    std::vector<Point> seeds;
    const std::size_t budget = 1'000'000 * std::max<std::size_t>(count, 1);
    for (std::size_t attempt = 0; seeds.size() < count && attempt < budget; ++attempt) {
        Point x(box.lower.size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = axes[i](rng);
        try {
            if (field.value(x) > floor) {
                field.gradient(x);
                seeds.push_back(std::move(x));
            }
        } catch (const Error&) {
        }
    }
    if (seeds.size() < count) throw Error("could not draw enough seeds inside the flow domain");
    return seeds;
}

std::string seed_file(std::size_t i) {
    std::ostringstream os;
    os << "traj_" << std::setw(5) << std::setfill('0') << i << ".csv";
    return os.str();
}

template <class Fn>
int guarded(std::ostream& log, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const json::exception& e) {
        log << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const InvalidProfile& e) {
        log << "invalid profile: " << e.what() << '\n';
        return kInvalidProfile;
    } catch (const GradientTooSmall& e) {
        log << "gradient too small: " << e.what() << '\n';
        return kGradientTooSmall;
    } catch (const GridTooSmall& e) {
        log << "grid too small: " << e.what() << '\n';
        return kGridError;
    } catch (const ResolutionTooCoarse& e) {
        log << "resolution too coarse: " << e.what() << '\n';
        return kGridError;
    } catch (const EmptyRegion& e) {
        log << "empty region: " << e.what() << '\n';
        return kGridError;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kVerificationFailed;
    }
}

fs::path prepare_output(const RunConfig& cfg) {
    fs::path out(cfg.output_dir);
    fs::create_directories(out);
    return out;
}

}  // namespace

// ------------------------------------------------------------ public API

RunConfig parse_config(const json& j) {
    reject_unknown(j, {"field", "profile", "flow", "grid", "check", "retract", "homology", "render",
                       "output_dir", "seed", "workers"},
                   "config");
    RunConfig c;
    if (!j.contains("field")) throw ConfigError("config needs a 'field' section");
    c.field = parse_field(j.at("field"));
    if (j.contains("profile")) c.profile = parse_profile(j.at("profile"));
    if (j.contains("flow")) c.flow = parse_flow(j.at("flow"));
    const std::size_t dim = c.field.type == "knot_energy" ? 3 : c.field.type == "radial" ? c.field.center.size() : 2;
    c.grid = j.contains("grid") ? parse_grid(j.at("grid")) : GridSpec::cube(dim, -1.3, 1.3, dim == 3 ? 64 : 512);
    if (c.grid.dimension() != dim) throw ConfigError("grid dimension does not match the field");
    if (j.contains("check")) c.check = parse_check(j.at("check"));
    if (j.contains("retract")) c.retract = parse_retract(j.at("retract"));
    if (j.contains("homology")) c.homology = parse_homology(j.at("homology"));
    if (j.contains("render")) c.render = parse_render(j.at("render"));
    c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.workers = get_or<unsigned>(j, "workers", c.workers);
    return c;
}

json to_json(const RunConfig& c) {
    json j;
    j["field"] = field_to_json(c.field);
    if (c.profile) j["profile"] = profile_to_json(*c.profile);
    json flow = morsedef::to_json(c.flow);
    j["flow"] = flow;
    j["grid"] = morsedef::to_json(c.grid);
    json check = {{"grid_samples", c.check.grid_samples},
                  {"ring_samples", c.check.ring_samples},
                  {"ring_radius", c.check.ring_radius}};
    if (c.check.lower) check["lower"] = *c.check.lower;
    if (c.check.upper) check["upper"] = *c.check.upper;
    j["check"] = check;
    json retract = {{"count", c.retract.count}, {"s", c.retract.s},
                    {"write_trajectories", c.retract.write_trajectories}};
    if (!c.retract.seed_points.empty()) retract["seed_points"] = c.retract.seed_points;
    if (c.retract.lower) retract["lower"] = *c.retract.lower;
    if (c.retract.upper) retract["upper"] = *c.retract.upper;
    if (c.retract.duration) retract["duration"] = *c.retract.duration;
    j["retract"] = retract;
    json hom = {{"sigma_inflation", c.homology.sigma_inflation}};
    if (c.homology.level_b) hom["level_b"] = *c.homology.level_b;
    if (c.homology.expected) {
        json e = {{"b0", c.homology.expected->b0}, {"b1", c.homology.expected->b1}};
        if (c.homology.expected->b2) e["b2"] = *c.homology.expected->b2;
        hom["expected"] = e;
    }
    if (c.homology.calibrate) {
        hom["calibrate"] = {{"origin", c.homology.calibrate->origin},
                            {"direction", c.homology.calibrate->direction},
                            {"radius", c.homology.calibrate->radius}};
    }
    j["homology"] = hom;
    j["render"] = {{"pixels", c.render.pixels}, {"trajectories", c.render.trajectories}};
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    return j;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("cannot parse ") + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

FieldPtr build_field(const FieldSpec& spec) {
    if (spec.type == "radial") return make_radial_field(spec.center, spec.form, spec.sigma_tol);
    if (spec.type == "quadrifolium") return make_quadrifolium_field(spec.sigma_tol);
    if (spec.type == "knot_energy") {
        const CurveEmbedding curve = spec.curve.type == "trefoil"
                                         ? CurveEmbedding::trefoil(spec.curve.scale)
                                         : CurveEmbedding::circle(spec.curve.center, spec.curve.radius);
        return make_knot_energy_field(curve, spec.quadrature_nodes, spec.sigma_tol);
    }
    throw ConfigError("unknown field type '" + spec.type + "'");
}

DecayProfile build_profile(const ProfileSpec& spec) {
    switch (spec.kind) {
        case ProfileKind::power: return DecayProfile::power(spec.level_b, spec.q);
        case ProfileKind::exponential: return DecayProfile::exponential(spec.level_b);
        case ProfileKind::custom: return DecayProfile::custom(spec.level_b, spec.table);
    }
    throw ConfigError("unknown profile kind");
}

FieldPtr build_flow_field(const RunConfig& cfg) {
    FieldPtr base = build_field(cfg.field);
    if (cfg.profile) return transform(base, build_profile(*cfg.profile));
    if (cfg.field.type == "radial" && cfg.field.form == RadialForm::norm) return base;
    throw ConfigError("flow commands need a profile unless the field is the radial norm");
}

SamplingPlan build_sampling_plan(const RunConfig& cfg, std::size_t dimension) {
    const Box box = box_or_grid(cfg.check.lower, cfg.check.upper, cfg.grid, dimension);
    SamplingPlan plan;
    plan.lower = box.lower;
    plan.upper = box.upper;
    plan.grid_samples = cfg.check.grid_samples;
    plan.ring_samples = cfg.check.ring_samples;
    plan.ring_radius = cfg.check.ring_radius;
    plan.seed = cfg.seed;
    plan.workers = cfg.workers;
    return plan;
}

int cmd_check(const RunConfig& cfg, std::ostream& log) {
    return guarded(log, [&] {
        if (!cfg.profile) throw ConfigError("check needs a 'profile' section");
        const DecayProfile profile = build_profile(*cfg.profile);
        const FieldPtr field = build_field(cfg.field);
        const SamplingPlan plan = build_sampling_plan(cfg, field->dimension());
        const ConditionReport report = check_fast_decreasing(*field, profile, plan);
        const fs::path out = prepare_output(cfg);
        write_json(morsedef::to_json(report), out / "check_report.json");
        log << "check: " << report.sample_count << " samples below b, worst margin "
            << format_number(report.worst_margin) << (report.holds ? " (holds)" : " (fails)") << '\n';
        return report.holds ? kOk : kVerificationFailed;
    });
}

int cmd_retract(const RunConfig& cfg, bool force, std::ostream& log) {
    return guarded(log, [&]() -> int {
        if (!force && cfg.profile) {
            const FieldPtr base = build_field(cfg.field);
            const ConditionReport report =
                check_fast_decreasing(*base, build_profile(*cfg.profile), build_sampling_plan(cfg, base->dimension()));
            if (!report.holds) {
                log << "retract: fast-decreasing check fails (worst margin "
                    << format_number(report.worst_margin) << "); rerun with --force to flow anyway\n";
                return kVerificationFailed;
            }
        }
        const FieldPtr field = build_flow_field(cfg);
        std::vector<Point> seeds = cfg.retract.seed_points;
        if (seeds.empty()) {
            const Box box = box_or_grid(cfg.retract.lower, cfg.retract.upper, cfg.grid, field->dimension());
            seeds = draw_seeds(*field, box, cfg.retract.count, cfg.flow.sigma_stop, cfg.seed);
        }

        std::vector<BatchEntry> entries;
        if (cfg.retract.duration) {
            entries.resize(seeds.size());
            const double duration = *cfg.retract.duration;
            parallel_for(seeds.size(), cfg.workers, [&](std::size_t i) {
                BatchEntry& e = entries[i];
                e.seed = seeds[i];
                try {
                    Retraction r;
                    r.trajectory = descend(*field, seeds[i], duration, cfg.flow);
                    r.endpoint = r.trajectory.endpoint();
                    r.f_end = r.trajectory.back().f;
                    r.sigma_distance = field->singular_set().distance_to(r.endpoint);
                    e.terminated = r.trajectory.terminated;
                    e.result = std::move(r);
                } catch (const GradientTooSmall& err) {
                    e.gradient_too_small = true;
                    e.failure = err.what();
                } catch (const StepLimit& err) {
                    e.failure = err.what();
                } catch (const Error& err) {
                    e.failure = err.what();
                }
            });
        } else {
            entries = retract_batch(*field, seeds, cfg.retract.s, cfg.flow, cfg.workers);
        }

        const fs::path out = prepare_output(cfg);
        write_batch_csv(entries, field->dimension(), out / "endpoints.csv");
        bool all_ok = true, gradient_failure = false;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            if (e.result && cfg.retract.write_trajectories) {
                write_trajectory_csv(e.result->trajectory, out / seed_file(i));
            }
            gradient_failure |= e.gradient_too_small;
            if (!e.result) {
                all_ok = false;
                log << "seed " << i << ": " << e.failure << '\n';
            } else if (e.terminated == Termination::step_limit) {
                all_ok = false;
            }
        }
        log << "retract: " << entries.size() << " seeds, " << (all_ok ? "all terminated" : "failures") << '\n';
        if (gradient_failure) return kGradientTooSmall;
        return all_ok ? kOk : kVerificationFailed;
    });
}

int cmd_homology(const RunConfig& cfg, std::ostream& log) {
    return guarded(log, [&]() -> int {
        const FieldPtr field = build_field(cfg.field);
        double level = 0.0;
        if (cfg.homology.level_b) {
            level = *cfg.homology.level_b;
        } else if (cfg.homology.calibrate) {
            const auto& c = *cfg.homology.calibrate;
            level = calibrate_level_along_ray(*field, c.origin, c.direction, c.radius);
        } else if (cfg.profile) {
            level = cfg.profile->level_b;
        } else {
            throw ConfigError("homology needs homology.level_b, homology.calibrate or a profile");
        }
        const GridRegion region = voxelize(*field, level, cfg.grid, cfg.homology.sigma_inflation, cfg.workers);
        const BettiReport report = betti(region);

        json doc = morsedef::to_json(report);
        doc["level_b"] = level;
        doc["grid"] = morsedef::to_json(cfg.grid);
        doc["inside_cells"] = region.inside_count();
        bool match = true;
        if (cfg.homology.expected) {
            const auto& e = *cfg.homology.expected;
            match = report.b0 == e.b0 && report.b1 == e.b1 && (!e.b2 || report.b2 == *e.b2);
            json ex = {{"b0", e.b0}, {"b1", e.b1}};
            if (e.b2) ex["b2"] = *e.b2;
            doc["expected"] = ex;
            doc["matches_expected"] = match;
        }
        const fs::path out = prepare_output(cfg);
        write_json(doc, out / "betti.json");
        if (region.dimension() == 2) {
            write_pgm(region, out / "mask.pgm");
        } else {
            write_mask3d(region, out / "mask.bin", out / "mask.json");
        }
        log << "homology: b0=" << report.b0 << " b1=" << report.b1;
        if (report.dimension == 3) log << " b2=" << report.b2;
        log << " euler=" << report.euler << " at level " << format_number(level) << '\n';
        return match ? kOk : kVerificationFailed;
    });
}

int cmd_render(const RunConfig& cfg, std::ostream& log) {
    return guarded(log, [&]() -> int {
        const FieldPtr field = build_field(cfg.field);
        if (field->dimension() != 2) {
            log << "render: only 2D fields can be rendered\n";
            return kNotTwoDimensional;
        }
        const Point& lo = cfg.grid.lower;
        const Point& hi = cfg.grid.upper;
        const std::size_t nx = cfg.render.pixels;
        const std::size_t ny = std::max<std::size_t>(
            8, static_cast<std::size_t>(std::lround(nx * (hi[1] - lo[1]) / (hi[0] - lo[0]))));
        const double px = (hi[0] - lo[0]) / nx, py = (hi[1] - lo[1]) / ny;
        const bool clover = cfg.field.type == "quadrifolium";

        // Bands of log10(1 + |g|) in quarter decades; band edges draw the contours.
        std::vector<int> band(nx * ny, 0);
        std::vector<std::uint8_t> shade(nx * ny, 0);
        parallel_for(ny, cfg.workers, [&](std::size_t j) {
            for (std::size_t i = 0; i < nx; ++i) {
                const Point x = {lo[0] + (i + 0.5) * px, lo[1] + (j + 0.5) * py};
                const std::size_t k = j * nx + i;
                try {
                    const double g = field->value(x);
                    band[k] = static_cast<int>(std::floor(4.0 * std::log10(1.0 + std::abs(g))));
                    const bool negative_side = clover ? quadrifolium_polynomial(x[0], x[1]) < 0.0 : g < 0.0;
                    shade[k] = static_cast<std::uint8_t>((negative_side ? 176 : 112) + 16 * (band[k] & 3));
                } catch (const Error&) {
                    band[k] = -1;
                    shade[k] = 0;
                }
            }
        });
        std::vector<std::uint8_t> image = shade;
        for (std::size_t j = 0; j + 1 < ny; ++j) {
            for (std::size_t i = 0; i + 1 < nx; ++i) {
                const std::size_t k = j * nx + i;
                if (band[k] >= 0 && (band[k] != band[k + 1] || band[k] != band[k + nx])) image[k] = 48;
            }
        }
        for (const auto& line : field->singular_set().polylines(0.25 * std::min(px, py))) {
            for (const auto& p : line) {
                const double u = (p[0] - lo[0]) / px, v = (p[1] - lo[1]) / py;
                if (u < 0 || v < 0 || u >= nx || v >= ny) continue;
                image[static_cast<std::size_t>(v) * nx + static_cast<std::size_t>(u)] = 0;
            }
        }

        const fs::path out = prepare_output(cfg);
        {
            std::ofstream pgm(out / "render.pgm", std::ios::binary);
            if (!pgm) throw Error("cannot write render.pgm");
            pgm << "P5\n" << nx << ' ' << ny << "\n255\n";
            for (std::size_t j = ny; j-- > 0;) {
                pgm.write(reinterpret_cast<const char*>(image.data() + j * nx), static_cast<std::streamsize>(nx));
            }
        }

        auto sx = [&](double x) { return format_number((x - lo[0]) / px); };
        auto sy = [&](double y) { return format_number((hi[1] - y) / py); };
        std::ostringstream svg;
        svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << nx << "\" height=\"" << ny
            << "\" viewBox=\"0 0 " << nx << ' ' << ny << "\">\n";
        svg << "<rect width=\"" << nx << "\" height=\"" << ny << "\" fill=\"white\" stroke=\"black\"/>\n";
        for (const auto& line : field->singular_set().polylines(2.0 * std::min(px, py))) {
            if (line.size() == 1) {
                svg << "<circle cx=\"" << sx(line[0][0]) << "\" cy=\"" << sy(line[0][1])
                    << "\" r=\"3\" fill=\"crimson\"/>\n";
                continue;
            }
            svg << "<polyline fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\" points=\"";
            for (const auto& p : line) svg << sx(p[0]) << ',' << sy(p[1]) << ' ';
            svg << "\"/>\n";
        }
        std::size_t drawn = 0;
        if (cfg.render.trajectories > 0) {
            const FieldPtr flow_field = build_flow_field(cfg);
            const Box box{lo, hi};
            const auto seeds = draw_seeds(*flow_field, box, cfg.render.trajectories, cfg.flow.sigma_stop, cfg.seed);
            const auto entries = retract_batch(*flow_field, seeds, 1.0, cfg.flow, cfg.workers);
            for (const auto& e : entries) {
                if (!e.result) continue;
                ++drawn;
                svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"";
                for (const auto& s : e.result->trajectory.samples) svg << sx(s.x[0]) << ',' << sy(s.x[1]) << ' ';
                svg << "\"/>\n";
                svg << "<circle cx=\"" << sx(e.seed[0]) << "\" cy=\"" << sy(e.seed[1])
                    << "\" r=\"2\" fill=\"steelblue\"/>\n";
            }
        }
        svg << "</svg>\n";
        write_text(svg.str(), out / "render.svg");
        log << "render: " << nx << "x" << ny << " raster, " << drawn << " trajectories\n";
        return kOk;
    });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{
        "morsedef: fast-decreasing checks, normalized gradient-flow retractions and sublevel-set "
        "homology.\n\nExit codes: 0 ok, 1 verification failed, 2 invalid profile, 3 config error, "
        "4 gradient too small, 5 grid too small / too coarse / empty, 6 render of a non-2D field."};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> out_dir;
    bool force = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config,--config", config_path, "Run configuration (JSON)")->required();
        sub->add_option("--seed", seed, "Override the random seed");
        sub->add_option("--workers", workers, "Worker threads (default: available cores)");
        sub->add_option("--out", out_dir, "Override the output directory");
    };
    CLI::App* check = app.add_subcommand("check", "Sample the fast-decreasing condition");
    CLI::App* retract = app.add_subcommand("retract", "Flow seeds along the normalized gradient flow");
    CLI::App* homology = app.add_subcommand("homology", "Voxelize the sublevel set and compute Betti numbers");
    CLI::App* render = app.add_subcommand("render", "Raster and vector rendering of a 2D field");
    for (CLI::App* sub : {check, retract, homology, render}) add_common(sub);
    retract->add_flag("--force", force, "Skip the fast-decreasing pre-check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    RunConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const InvalidProfile& e) {
        err << "invalid profile: " << e.what() << '\n';
        return kInvalidProfile;
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (out_dir) cfg.output_dir = *out_dir;

    if (check->parsed()) return cmd_check(cfg, err);
    if (retract->parsed()) return cmd_retract(cfg, force, err);
    if (homology->parsed()) return cmd_homology(cfg, err);
    return cmd_render(cfg, err);
}

}  // namespace morsedef::cli
