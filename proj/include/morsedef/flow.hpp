#pragma once

#include "morsedef/fields.hpp"

#include <optional>
#include <utility>

namespace morsedef {

enum class Precision { standard, extended };

std::string_view to_string(Precision p);

struct FlowConfig {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    std::size_t max_steps = 1'000'000;
    double sigma_stop = 1e-6;
    /// Lower bound α on ‖∇f‖ in the regular band.
    double alpha = 1.0;
    /// Extended precision lets trajectories get within ~1e-45 of Σ, which
    /// fields like Φ∘g with Φ(y) ~ (−y)^(−1/12) need before f drops to sigma_stop.
    Precision precision = Precision::extended;

    void validate() const;
    /// Allowed drift from the unit-rate identity f(φ(x, t)) = f(x) − t.
    double descent_tolerance(double f_start) const { return 100.0 * rel_tol * f_start; }
};

enum class Termination { reached_target_time, reached_sigma_stop, step_limit };

std::string_view to_string(Termination t);

struct TrajectorySample {
    double t;
    Point x;
    double f;
};

struct FlowTrajectory {
    std::vector<TrajectorySample> samples;
    Termination terminated = Termination::reached_target_time;
    std::size_t rejected_steps = 0;

    const TrajectorySample& back() const { return samples.back(); }
    const Point& endpoint() const { return samples.back().x; }
};

/// Integrates x′ = −∇f/‖∇f‖² for flow time `duration` ∈ [0, f(x)).
/// Throws GradientTooSmall, StepLimit, PreconditionViolation.
FlowTrajectory descend(const ScalarField& field, const Point& x, double duration,
                       const FlowConfig& cfg);

struct Retraction {
    Point endpoint;
    double f_end = 0.0;
    /// Distance from the endpoint to Σ, computed before rounding the endpoint
    /// to double (meaningful below 1e-16 in extended precision).
    double sigma_distance = 0.0;
    FlowTrajectory trajectory;
};

/// ψ(x, s) = φ(x, s·f(x)). For s = 1 descends until f < sigma_stop. Points
/// with f(x) ≤ sigma_stop are returned unchanged.
Retraction retract_detailed(const ScalarField& field, const Point& x, double s,
                            const FlowConfig& cfg);
Point retract(const ScalarField& field, const Point& x, double s, const FlowConfig& cfg);

/// Flows x′ = +∇f/‖∇f‖² until f = a. Points with f(x) ≥ a are unchanged.
FlowTrajectory ascend(const ScalarField& field, const Point& x, double a, const FlowConfig& cfg);
Point ascend_to_level(const ScalarField& field, const Point& x, double a, const FlowConfig& cfg);

struct LipschitzPair {
    double s1 = 0.0;
    double s2 = 0.0;
    double distance = 0.0;  // ‖ψ(x, s₂) − ψ(x, s₁)‖
    double bound = 0.0;     // α⁻¹ f(x) |s₂ − s₁|
    double margin = 0.0;    // bound·(1 + slack) − distance
};

struct LipschitzReport {
    Point x;
    double f_start = 0.0;
    double alpha = 1.0;
    double slack = 1e-6;
    std::vector<LipschitzPair> pairs;

    double worst_margin() const;
    bool holds() const { return worst_margin() >= 0.0; }
};

LipschitzReport verify_lipschitz(const ScalarField& field, const Point& x,
                                 std::span<const std::pair<double, double>> times,
                                 const FlowConfig& cfg, double slack = 1e-6);

struct BatchEntry {
    Point seed;
    std::optional<Retraction> result;
    Termination terminated = Termination::step_limit;
    bool gradient_too_small = false;
    std::string failure;  // empty on success
};

/// retract(·, s) over many seeds; entries keep the seed order.
std::vector<BatchEntry> retract_batch(const ScalarField& field, const std::vector<Point>& seeds,
                                      double s, const FlowConfig& cfg, unsigned workers = 0);

}  // namespace morsedef
