#include "morsedef/flow.hpp"

#include "morsedef/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace morsedef {

std::string_view to_string(Precision p) {
    return p == Precision::standard ? "double" : "extended";
}

std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::reached_target_time: return "reached_target_time";
        case Termination::reached_sigma_stop: return "reached_sigma_stop";
        case Termination::step_limit: return "step_limit";
    }
    return "unknown";
}

void FlowConfig::validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw PreconditionViolation("flow tolerances must be positive");
    if (!(sigma_stop > 0.0)) throw PreconditionViolation("sigma_stop must be positive");
    if (!(alpha > 0.0)) throw PreconditionViolation("alpha must be positive");
    if (max_steps == 0) throw PreconditionViolation("max_steps must be positive");
}

namespace {

// Relative slack on α before a small gradient counts as a critical point.
constexpr double kAlphaSlack = 0.01;

// Dormand–Prince 5(4) tableau.
template <class Real>
struct Tableau {
    static Real q(int n, int d) { return Real(n) / Real(d); }
    Real c[7] = {0, q(1, 5), q(3, 10), q(4, 5), q(8, 9), 1, 1};
    Real a[7][6] = {
        {},
        {q(1, 5)},
        {q(3, 40), q(9, 40)},
        {q(44, 45), q(-56, 15), q(32, 9)},
        {q(19372, 6561), q(-25360, 2187), q(64448, 6561), q(-212, 729)},
        {q(9017, 3168), q(-355, 33), q(46732, 5247), q(49, 176), q(-5103, 18656)},
        {q(35, 384), 0, q(500, 1113), q(125, 192), q(-2187, 6784), q(11, 84)},
    };
    // b − b* (fifth minus embedded fourth order weights).
    Real e[7] = {q(71, 57600), 0, q(-71, 16695), q(71, 1920), q(-17253, 339200), q(22, 525), q(-1, 40)};
};

template <class Real>
using Vec = std::vector<Real>;

template <class Real>
Real vec_norm(const Vec<Real>& v) {
    return norm(std::span<const Real>(v));
}

// Normalized gradient flow x′ = direction·∇f/‖∇f‖² over one precision.
template <class Real>
class Integrator {
  public:
    Integrator(const ScalarField& field, const FlowConfig& cfg, int direction)
        : field_(field), cfg_(cfg), dir_(direction), n_(field.dimension()) {}

    struct State {
        Real f;
        Real grad_norm;
    };

    // False when x is outside the field's domain (on Σ, or above the cap).
    bool velocity(const Vec<Real>& x, Vec<Real>& k, State& st) const {
        try {
            st.f = field_.value_and_gradient(std::span<const Real>(x), std::span<Real>(k));
        } catch (const OnSingularSet&) {
            return false;
        } catch (const OutOfRange&) {
            return false;
        }
        Real g2 = 0;
        for (const Real& c : k) g2 += c * c;
        using std::sqrt;
        st.grad_norm = sqrt(g2);
        if (!(g2 > 0)) return false;
        for (Real& c : k) c = Real(dir_) * c / g2;
        return true;
    }

    Real value(const Vec<Real>& x) const { return field_.value(std::span<const Real>(x)); }

    void check_gradient(const Vec<Real>& x, const Real& grad_norm) const {
        const double g = static_cast<double>(grad_norm);
        if (g < cfg_.alpha * (1.0 - kAlphaSlack)) {
            std::ostringstream os;
            os << "|grad f| = " << g << " below alpha = " << cfg_.alpha
               << "; the band is not regular";
            throw GradientTooSmall(os.str(), to_double(std::span<const Real>(x)), g);
        }
    }

    void record(FlowTrajectory& traj, double t, const Vec<Real>& x, const Real& f) const {
        traj.samples.push_back({t, to_double(std::span<const Real>(x)), static_cast<double>(f)});
    }

    // One leg of integration for flow time `duration`. The caller has already
    // recorded the starting sample. On return x and f hold the final state.
    Termination run(Vec<Real>& x, Real& f, double duration, std::optional<double> stop_below,
                    double t_offset, FlowTrajectory& traj, std::size_t& steps) const {
        if (duration <= 0.0) return Termination::reached_target_time;
        const Tableau<Real> tab;
        const double f_leg = static_cast<double>(f);
        const double eps = static_cast<double>(std::numeric_limits<Real>::epsilon());

        Vec<Real> k[7];
        for (auto& v : k) v.assign(n_, Real(0));
        State st[7];
        if (!velocity(x, k[0], st[0])) throw PreconditionViolation("flow started outside the field's domain");
        check_gradient(x, st[0].grad_norm);

        Vec<Real> stage(n_), x_new(n_), err(n_);
        double t = 0.0;
        double h = std::min(duration, 0.05 * std::max(f_leg, duration));
        while (t < duration) {
            if (steps >= cfg_.max_steps) return Termination::step_limit;
            bool last = false;
            if (h >= duration - t) {
                h = duration - t;
                last = true;
            }
            if (h <= 64.0 * eps * std::max(1.0, t + t_offset)) return Termination::step_limit;
            const Real hr = h;

            bool ok = true;
            for (int s = 1; s < 7 && ok; ++s) {
                for (std::size_t i = 0; i < n_; ++i) {
                    Real acc = 0;
                    for (int j = 0; j < s; ++j) acc += tab.a[s][j] * k[j][i];
                    stage[i] = x[i] + hr * acc;
                }
                ok = velocity(stage, k[s], st[s]);
                if (s == 6) x_new = stage;
            }
            ++steps;
            if (!ok) {
                ++traj.rejected_steps;
                h *= 0.25;
                continue;
            }

            for (std::size_t i = 0; i < n_; ++i) {
                Real acc = 0;
                for (int j = 0; j < 7; ++j) acc += tab.e[j] * k[j][i];
                err[i] = hr * acc;
            }
            const double err_len = static_cast<double>(vec_norm(err));
            const double scale_x = cfg_.abs_tol + cfg_.rel_tol * std::max(static_cast<double>(vec_norm(x)),
                                                                           static_cast<double>(vec_norm(x_new)));
            // Projected onto ∇f the position error is a drift off the
            // unit-rate identity; bound it relative to the expected value.
            const double f_expected = std::max(f_leg + dir_ * (t + h), 0.0);
            const double drift = static_cast<double>(st[6].grad_norm) * err_len;
            const double scale_f = cfg_.rel_tol * f_expected + cfg_.rel_tol * cfg_.abs_tol;
            const double error = std::max(err_len / scale_x, drift / scale_f);

            if (!(error <= 1.0)) {
                ++traj.rejected_steps;
                h *= std::clamp(0.9 * std::pow(std::isfinite(error) ? error : 1e10, -0.25), 0.1, 0.5);
                continue;
            }

            for (int s = 0; s < 7; ++s) check_gradient(s == 0 ? x : x_new, st[s].grad_norm);

            const Real f_new = st[6].f;
            if (stop_below && static_cast<double>(f_new) < *stop_below) {
                const double theta = localize(x, x_new, *stop_below, f);
                t += theta * h;
                record(traj, t + t_offset, x, f);
                return Termination::reached_sigma_stop;
            }

            t = last ? duration : t + h;
            x.swap(x_new);
            f = f_new;
            k[0] = k[6];
            st[0] = st[6];
            record(traj, t + t_offset, x, f);

            const double grow = error == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(error, -0.2), 0.2, 5.0);
            h *= grow;
        }
        return Termination::reached_target_time;
    }

  private:
    // Bisection on f along the chord of an accepted step for the crossing of
    // `level`. Leaves the located point in `from` and its value in `f`.
    double localize(Vec<Real>& from, const Vec<Real>& to, double level, Real& f) const {
        double lo = 0.0, hi = 1.0;
        Vec<Real> probe(n_);
        Vec<Real> best = to;
        Real best_f = 0;
        bool have_best = false;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            for (std::size_t i = 0; i < n_; ++i) probe[i] = from[i] + Real(mid) * (to[i] - from[i]);
            Real fm;
            try {
                fm = value(probe);
            } catch (const Error&) {
                fm = 0;
            }
            if (static_cast<double>(fm) < level) {
                hi = mid;
                best = probe;
                best_f = fm;
                have_best = true;
                if (level - static_cast<double>(fm) <= cfg_.abs_tol) break;
            } else {
                lo = mid;
            }
        }
        if (!have_best) {
            best_f = value(to);
        }
        from = best;
        f = best_f;
        return hi;
    }

    const ScalarField& field_;
    const FlowConfig& cfg_;
    int dir_;
    std::size_t n_;
};

template <class Real>
Vec<Real> to_real(const Point& x) {
    return Vec<Real>(x.begin(), x.end());
}

double start_value(const ScalarField& field, const Point& x) {
    require_dimension(x.size(), field.dimension(), "flow start point");
    const double f = field.value(x);
    if (f < 0.0) throw PreconditionViolation("normalized flow expects a nonnegative field");
    return f;
}

template <class Real>
FlowTrajectory descend_impl(const ScalarField& field, const Point& x, double duration,
                            const FlowConfig& cfg) {
    Integrator<Real> integ(field, cfg, -1);
    Vec<Real> state = to_real<Real>(x);
    Real f = integ.value(state);
    FlowTrajectory traj;
    integ.record(traj, 0.0, state, f);
    std::size_t steps = 0;
    traj.terminated = integ.run(state, f, duration, std::nullopt, 0.0, traj, steps);
    return traj;
}

template <class Real>
Retraction retract_impl(const ScalarField& field, const Point& x, double s, const FlowConfig& cfg,
                        double f0) {
    Integrator<Real> integ(field, cfg, -1);
    Vec<Real> state = to_real<Real>(x);
    Real f = integ.value(state);
    Retraction r;
    integ.record(r.trajectory, 0.0, state, f);

    if (f0 <= cfg.sigma_stop) {
        r.trajectory.terminated = Termination::reached_sigma_stop;
    } else if (s < 1.0) {
        std::size_t steps = 0;
        r.trajectory.terminated = integ.run(state, f, s * f0, std::nullopt, 0.0, r.trajectory, steps);
    } else {
        // ψ(x, 1) as the limit: aim for σ/2 and re-aim from the attained value
        // if round-off left f above σ.
        const double target = 0.5 * cfg.sigma_stop;
        std::size_t steps = 0;
        double t_offset = 0.0;
        Termination term = Termination::reached_target_time;
        for (int leg = 0; leg < 16 && static_cast<double>(f) >= cfg.sigma_stop; ++leg) {
            const double fl = static_cast<double>(f);
            term = integ.run(state, f, fl - target, target, t_offset, r.trajectory, steps);
            if (term == Termination::step_limit) break;
            t_offset = r.trajectory.back().t;
        }
        if (term != Termination::step_limit) {
            term = static_cast<double>(f) < cfg.sigma_stop ? Termination::reached_sigma_stop
                                                           : Termination::step_limit;
        }
        r.trajectory.terminated = term;
    }
    r.endpoint = to_double(std::span<const Real>(state));
    r.f_end = static_cast<double>(f);
    r.sigma_distance = static_cast<double>(field.singular_set().distance_to(std::span<const Real>(state)));
    return r;
}

template <class Real>
FlowTrajectory ascend_impl(const ScalarField& field, const Point& x, double duration,
                           const FlowConfig& cfg) {
    Integrator<Real> integ(field, cfg, +1);
    Vec<Real> state = to_real<Real>(x);
    Real f = integ.value(state);
    FlowTrajectory traj;
    integ.record(traj, 0.0, state, f);
    std::size_t steps = 0;
    traj.terminated = integ.run(state, f, duration, std::nullopt, 0.0, traj, steps);
    return traj;
}

void raise_on_step_limit(const FlowTrajectory& traj) {
    if (traj.terminated == Termination::step_limit) {
        std::ostringstream os;
        os << "flow exceeded its step budget after " << traj.samples.size() << " accepted steps";
        throw StepLimit(os.str());
    }
}

}  // namespace

FlowTrajectory descend(const ScalarField& field, const Point& x, double duration,
                       const FlowConfig& cfg) {
    cfg.validate();
    const double f0 = start_value(field, x);
    if (!(f0 > 0.0)) throw PreconditionViolation("descend needs f(x) > 0");
    if (!(duration >= 0.0) || !(duration < f0)) {
        throw PreconditionViolation("descend needs 0 <= duration < f(x)");
    }
    FlowTrajectory traj = cfg.precision == Precision::extended
                              ? descend_impl<Extended>(field, x, duration, cfg)
                              : descend_impl<double>(field, x, duration, cfg);
    raise_on_step_limit(traj);
    return traj;
}

Retraction retract_detailed(const ScalarField& field, const Point& x, double s,
                            const FlowConfig& cfg) {
    cfg.validate();
    if (!(s >= 0.0 && s <= 1.0)) throw PreconditionViolation("retract needs s in [0, 1]");
    const double f0 = start_value(field, x);
    Retraction r = cfg.precision == Precision::extended ? retract_impl<Extended>(field, x, s, cfg, f0)
                                                        : retract_impl<double>(field, x, s, cfg, f0);
    raise_on_step_limit(r.trajectory);
    return r;
}

Point retract(const ScalarField& field, const Point& x, double s, const FlowConfig& cfg) {
    return retract_detailed(field, x, s, cfg).endpoint;
}

FlowTrajectory ascend(const ScalarField& field, const Point& x, double a, const FlowConfig& cfg) {
    cfg.validate();
    const double f0 = start_value(field, x);
    if (f0 >= a) {
        FlowTrajectory traj;
        traj.samples.push_back({0.0, x, f0});
        return traj;
    }
    if (!(f0 > 0.0)) throw PreconditionViolation("ascend needs f(x) > 0");
    if (auto cap = field.level_cap(); cap && a > *cap) {
        throw PreconditionViolation("ascent target lies above the field's level cap");
    }
    FlowTrajectory traj = cfg.precision == Precision::extended
                              ? ascend_impl<Extended>(field, x, a - f0, cfg)
                              : ascend_impl<double>(field, x, a - f0, cfg);
    raise_on_step_limit(traj);
    return traj;
}

Point ascend_to_level(const ScalarField& field, const Point& x, double a, const FlowConfig& cfg) {
    return ascend(field, x, a, cfg).endpoint();
}

double LipschitzReport::worst_margin() const {
    double w = std::numeric_limits<double>::infinity();
    for (const auto& p : pairs) w = std::min(w, p.margin);
    return w;
}

LipschitzReport verify_lipschitz(const ScalarField& field, const Point& x,
                                 std::span<const std::pair<double, double>> times,
                                 const FlowConfig& cfg, double slack) {
    const double f0 = start_value(field, x);
    if (!(f0 > 0.0)) throw PreconditionViolation("verify_lipschitz needs f(x) > 0");
    LipschitzReport report;
    report.x = x;
    report.f_start = f0;
    report.alpha = cfg.alpha;
    report.slack = slack;

    std::map<double, Point> cache;
    auto psi = [&](double s) -> const Point& {
        auto it = cache.find(s);
        if (it == cache.end()) it = cache.emplace(s, retract(field, x, s, cfg)).first;
        return it->second;
    };
    for (const auto& [s1, s2] : times) {
        LipschitzPair p;
        p.s1 = s1;
        p.s2 = s2;
        p.distance = s1 == s2 ? 0.0 : distance(psi(s1), psi(s2));
        p.bound = f0 * std::abs(s2 - s1) / cfg.alpha;
        p.margin = p.bound * (1.0 + slack) - p.distance;
        report.pairs.push_back(p);
    }
    return report;
}

std::vector<BatchEntry> retract_batch(const ScalarField& field, const std::vector<Point>& seeds,
                                      double s, const FlowConfig& cfg, unsigned workers) {
    std::vector<BatchEntry> out(seeds.size());
    parallel_for(seeds.size(), workers, [&](std::size_t i) {
        BatchEntry& e = out[i];
        e.seed = seeds[i];
        try {
            e.result = retract_detailed(field, seeds[i], s, cfg);
            e.terminated = e.result->trajectory.terminated;
        } catch (const GradientTooSmall& err) {
            e.gradient_too_small = true;
            e.failure = err.what();
        } catch (const StepLimit& err) {
            e.terminated = Termination::step_limit;
            e.failure = err.what();
        } catch (const Error& err) {
            e.failure = err.what();
        }
    });
    return out;
}

}  // namespace morsedef
