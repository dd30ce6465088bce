#pragma once

#include "morsedef/common.hpp"

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace morsedef {

/// Compact set Σ on which a field blows down to −∞.
class SingularSet {
  public:
    enum class Kind { point_list, implicit_zero_set, parametric_curve };

    virtual ~SingularSet() = default;

    virtual Kind kind() const = 0;
    virtual std::size_t dimension() const = 0;

    /// Euclidean distance from z to the set.
    virtual double distance_to(std::span<const double> z) const = 0;
    virtual Extended distance_to(std::span<const Extended> z) const = 0;

    /// Ordered samples on the set, consecutive points at most `spacing` apart.
    /// Each inner vector is one polyline (closed curves repeat their first point).
    virtual std::vector<std::vector<Point>> polylines(double spacing) const = 0;

    /// Upper bound on the Euclidean norm of any point of the set.
    virtual double radius_bound() const = 0;

    bool contains(std::span<const double> z, double tol = kSigmaTol) const {
        return distance_to(z) <= tol;
    }
};

std::string_view to_string(SingularSet::Kind kind);

/// C¹ closed curve Γ: [0, 2π) → ℝ³.
struct CurveEmbedding {
    std::function<Point(double)> position;
    std::function<Point(double)> velocity;
    std::string name;
    bool closed = true;

    static CurveEmbedding circle(Point center = {0.0, 0.0, 0.0}, double radius = 1.0);
    /// (2,3) torus knot on a torus with radii (2, 1), scaled by `scale`.
    static CurveEmbedding trefoil(double scale = 1.0);

    /// Applies x ↦ R·x + shift to the curve.
    CurveEmbedding rigidly_moved(const std::array<std::array<double, 3>, 3>& rotation,
                                 const Point& shift) const;
};

/// A function g: ℝⁿ∖Σ → ℝ with its exact gradient.
///
/// Evaluation is pure and reentrant. Both a double and an extended-precision
/// path are exposed; built-in fields implement the extended path natively,
/// while user fields may fall back to rounding through double.
class ScalarField {
  public:
    virtual ~ScalarField() = default;

    virtual std::size_t dimension() const = 0;
    virtual std::string name() const = 0;
    virtual std::string domain_note() const = 0;
    virtual const SingularSet& singular_set() const = 0;

    virtual double value(std::span<const double> x) const = 0;
    virtual double value_and_gradient(std::span<const double> x, std::span<double> grad) const = 0;

    virtual Extended value(std::span<const Extended> x) const;
    virtual Extended value_and_gradient(std::span<const Extended> x,
                                        std::span<Extended> grad) const;

    /// Upper value bound of the region where the field is defined, if any.
    virtual std::optional<double> level_cap() const { return std::nullopt; }

    Point gradient(std::span<const double> x) const;
};

using FieldPtr = std::shared_ptr<const ScalarField>;

enum class RadialForm { norm, neg_inverse_norm };

/// norm: f(x) = ‖x − c‖ (‖∇f‖ ≡ 1). neg_inverse_norm: g(x) = −1/‖x − c‖.
/// Σ = {c} in both cases.
FieldPtr make_radial_field(Point center, RadialForm form, double sigma_tol = kSigmaTol);

/// g = −p⁻² with p(x, y) = (x² + y²)³ − 4x²y²; Σ is the four-leaved clover.
FieldPtr make_quadrifolium_field(double sigma_tol = kSigmaTol);

inline constexpr std::size_t kDefaultQuadratureNodes = 256;

/// G(x) = −∫ ‖Γ′(t)‖ / ‖x − Γ(t)‖ dt over [0, 2π), periodic trapezoid rule.
FieldPtr make_knot_energy_field(const CurveEmbedding& curve,
                                std::size_t quadrature_nodes = kDefaultQuadratureNodes,
                                double sigma_tol = kSigmaTol);

/// Extension point: a field from user callables. The extended path rounds
/// through double.
struct FunctionFieldSpec {
    std::string name;
    std::size_t dimension = 2;
    std::function<double(std::span<const double>, std::span<double>)> value_and_gradient;
    std::shared_ptr<const SingularSet> singular_set;
};
FieldPtr make_function_field(FunctionFieldSpec spec);

std::shared_ptr<const SingularSet> make_point_set(std::vector<Point> points);

/// Relative discrepancy ‖∇f − ∇_h f‖ / ‖∇f‖ against central differences.
/// Throws OnSingularSet if x is within 10h of Σ.
double gradient_check(const ScalarField& field, std::span<const double> x, double h);

/// Signed polynomial of the quadrifolium, exposed for tests and rendering.
double quadrifolium_polynomial(double x, double y);

}  // namespace morsedef
