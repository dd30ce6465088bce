#pragma once

#include "morsedef/fields.hpp"

#include <cstdint>
#include <memory>
#include <utility>

namespace morsedef {

enum class ProfileKind { power, exponential, custom };

std::string_view to_string(ProfileKind kind);

/// Decay profile (φ, Φ): a positive rate on (−∞, b] and its bounded
/// primitive normalized so that Φ(y) → 0 as y → −∞.
class DecayProfile {
  public:
    /// φ(y) = (−y)^−q, Φ(y) = (−y)^(1−q) / (q − 1). Requires b < 0, q > 1.
    static DecayProfile power(double level_b, double q);
    /// φ(y) = Φ(y) = e^y.
    static DecayProfile exponential(double level_b);
    /// Tabulated φ (piecewise linear in y). The table must cover [10b, b];
    /// the tail below 10b is extrapolated with a fitted power law.
    static DecayProfile custom(double level_b, std::vector<std::pair<double, double>> table);

    ProfileKind kind() const { return kind_; }
    double level_b() const { return level_b_; }
    /// Power exponent q (power profiles only).
    double exponent() const { return q_; }
    const std::vector<std::pair<double, double>>& table() const;

    /// φ(y). Throws OutOfRange for y > b.
    double rate(double y) const { return rate_impl<double>(y); }
    Extended rate(const Extended& y) const { return rate_impl<Extended>(y); }
    /// Φ(y). Throws OutOfRange for y > b.
    double primitive(double y) const { return primitive_impl<double>(y); }
    Extended primitive(const Extended& y) const { return primitive_impl<Extended>(y); }

    /// Φ(b), the upper end of the transformed field's range.
    double level_cap() const { return primitive(level_b_); }

  private:
    struct Table;

    DecayProfile() = default;
    template <class Real> Real rate_impl(const Real& y) const;
    template <class Real> Real primitive_impl(const Real& y) const;
    void check_range(double y) const;

    ProfileKind kind_ = ProfileKind::power;
    double level_b_ = -1.0;
    double q_ = 2.0;
    std::shared_ptr<const Table> table_;
};

/// Where check_fast_decreasing looks. Uniform grid over the box plus optional
/// ring samples scattered within ring_radius of the singular set.
struct SamplingPlan {
    Point lower;
    Point upper;
    std::size_t grid_samples = 100000;
    std::size_t ring_samples = 0;
    double ring_radius = 0.05;
    std::uint64_t seed = 0;
    unsigned workers = 0;

    std::vector<Point> points(const ScalarField& field) const;
};

struct ConditionReport {
    std::string field_name;
    DecayProfile profile = DecayProfile::exponential(0.0);
    SamplingPlan plan;
    std::size_t sample_count = 0;   // samples with g(x) ≤ b
    std::size_t skipped_count = 0;  // above b or on Σ
    double worst_margin = 0.0;      // min of φ(g)·‖∇g‖ − 1
    Point worst_point;
    bool holds = false;             // worst_margin > 0
};

/// Sampled check of ‖∇g(x)‖ > 1/φ(g(x)) wherever g(x) ≤ b.
ConditionReport check_fast_decreasing(const ScalarField& field, const DecayProfile& profile,
                                      const SamplingPlan& plan);

/// f = Φ∘g on {g ≤ b}, extended by 0 on Σ. Gradient by the chain rule
/// φ(g)·∇g. Evaluating above b throws OutOfRange.
class TransformedField final : public ScalarField {
  public:
    TransformedField(FieldPtr base, DecayProfile profile);

    std::size_t dimension() const override { return base_->dimension(); }
    std::string name() const override;
    std::string domain_note() const override;
    const SingularSet& singular_set() const override { return base_->singular_set(); }

    double value(std::span<const double> x) const override;
    double value_and_gradient(std::span<const double> x, std::span<double> grad) const override;
    Extended value(std::span<const Extended> x) const override;
    Extended value_and_gradient(std::span<const Extended> x, std::span<Extended> grad) const override;

    std::optional<double> level_cap() const override { return level_cap_; }

    const ScalarField& base() const { return *base_; }
    const FieldPtr& base_ptr() const { return base_; }
    const DecayProfile& profile() const { return profile_; }

  private:
    template <class Real> Real evaluate(std::span<const Real> x, std::span<Real> grad) const;

    FieldPtr base_;
    DecayProfile profile_;
    double level_cap_;
};

std::shared_ptr<const TransformedField> transform(FieldPtr field, const DecayProfile& profile);

}  // namespace morsedef
