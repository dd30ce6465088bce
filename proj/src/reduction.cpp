#include "morsedef/reduction.hpp"

#include "morsedef/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace morsedef {

std::string_view to_string(ProfileKind kind) {
    switch (kind) {
        case ProfileKind::power: return "power";
        case ProfileKind::exponential: return "exponential";
        case ProfileKind::custom: return "custom";
    }
    return "unknown";
}

struct DecayProfile::Table {
    std::vector<std::pair<double, double>> points;  // (y, φ), y ascending
    std::vector<double> cumulative;                 // ∫ from anchor to points[i].y
    double anchor = 0.0;                            // y₀ = 10b
    double anchor_rate = 0.0;
    std::size_t anchor_index = 0;                   // first point with y ≥ anchor
    double tail = 0.0;                              // ∫_{−∞}^{y₀} φ
    double fit_scale = 0.0;                         // φ ≈ A (−y)^−k below y₀
    double fit_exponent = 0.0;

    double interpolate(double y) const {
        auto it = std::lower_bound(points.begin(), points.end(), y,
                                   [](const auto& p, double v) { return p.first < v; });
        if (it == points.begin()) return it->second;
        if (it == points.end()) return points.back().second;
        const auto& [y1, r1] = *it;
        const auto& [y0, r0] = *(it - 1);
        const double w = (y - y0) / (y1 - y0);
        return r0 + w * (r1 - r0);
    }

    double rate(double y) const {
        if (y < anchor) return fit_scale * std::pow(-y, -fit_exponent);
        return interpolate(y);
    }

    double primitive(double y) const {
        if (y < anchor) return fit_scale * std::pow(-y, 1.0 - fit_exponent) / (fit_exponent - 1.0);
        // Piecewise-linear φ integrates exactly with the trapezoid rule.
        double acc = tail;
        double prev_y = anchor;
        double prev_r = anchor_rate;
        std::size_t i = anchor_index;
        for (; i < points.size() && points[i].first <= y; ++i) {
            prev_y = points[i].first;
            prev_r = points[i].second;
        }
        acc += i == anchor_index ? 0.0 : cumulative[i - 1];
        const double r = interpolate(y);
        return acc + 0.5 * (prev_r + r) * (y - prev_y);
    }
};

DecayProfile DecayProfile::power(double level_b, double q) {
    if (!(q > 1.0)) {
        throw InvalidProfile("power profile needs q > 1 (the primitive of (-y)^-q diverges otherwise)");
    }
    if (!(level_b < 0.0)) throw InvalidProfile("power profile needs level_b < 0");
    DecayProfile p;
    p.kind_ = ProfileKind::power;
    p.level_b_ = level_b;
    p.q_ = q;
    return p;
}

DecayProfile DecayProfile::exponential(double level_b) {
    if (!std::isfinite(level_b)) throw InvalidProfile("level_b must be finite");
    DecayProfile p;
    p.kind_ = ProfileKind::exponential;
    p.level_b_ = level_b;
    p.q_ = 0.0;
    return p;
}

DecayProfile DecayProfile::custom(double level_b, std::vector<std::pair<double, double>> points) {
    if (!(level_b < 0.0)) throw InvalidProfile("custom profile needs level_b < 0");
    std::sort(points.begin(), points.end());
    if (points.size() < 4) throw InvalidProfile("custom profile needs at least 4 table points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].second > 0.0) || !std::isfinite(points[i].second)) {
            throw InvalidProfile("custom profile rate must be strictly positive");
        }
        if (i > 0 && points[i].first == points[i - 1].first) {
            throw InvalidProfile("custom profile has duplicate abscissae");
        }
    }
    const double anchor = 10.0 * level_b;
    if (points.front().first > anchor || points.back().first < level_b) {
        throw InvalidProfile("custom profile table must cover [10*level_b, level_b]");
    }

    auto table = std::make_shared<Table>();
    table->points = std::move(points);
    table->anchor = anchor;
    table->anchor_rate = table->interpolate(anchor);

    // Least-squares power law on the far half of the anchored range.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (const auto& [y, r] : table->points) {
        if (y > 5.0 * level_b) break;
        const double lx = std::log(-y), ly = std::log(r);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) throw InvalidProfile("custom profile needs two table points below 5*level_b for the tail fit");
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    if (denom == 0.0) throw InvalidProfile("degenerate tail fit");
    const double slope = (static_cast<double>(n) * sxy - sx * sy) / denom;
    const double k = -slope;
    if (!(k > 1.0)) throw InvalidProfile("custom profile tail decays too slowly; primitive unbounded");
    const double intercept = (sy - slope * sx) / static_cast<double>(n);
    table->fit_exponent = k;
    table->fit_scale = std::exp(intercept);
    table->tail = table->fit_scale * std::pow(-anchor, 1.0 - k) / (k - 1.0);

    table->anchor_index = static_cast<std::size_t>(
        std::lower_bound(table->points.begin(), table->points.end(), anchor,
                         [](const auto& p, double v) { return p.first < v; }) -
        table->points.begin());
    table->cumulative.assign(table->points.size(), 0.0);
    double acc = 0.0, prev_y = anchor, prev_r = table->anchor_rate;
    for (std::size_t i = table->anchor_index; i < table->points.size(); ++i) {
        acc += 0.5 * (prev_r + table->points[i].second) * (table->points[i].first - prev_y);
        table->cumulative[i] = acc;
        prev_y = table->points[i].first;
        prev_r = table->points[i].second;
    }

    DecayProfile p;
    p.kind_ = ProfileKind::custom;
    p.level_b_ = level_b;
    p.q_ = k;
    p.table_ = table;
    const double cap = p.primitive(level_b);
    if (table->tail > 0.1 * cap) {
        std::ostringstream os;
        os << "custom profile tail estimate " << table->tail << " exceeds 10% of Phi(b) = " << cap;
        throw InvalidProfile(os.str());
    }
    return p;
}

const std::vector<std::pair<double, double>>& DecayProfile::table() const {
    static const std::vector<std::pair<double, double>> empty;
    return table_ ? table_->points : empty;
}

void DecayProfile::check_range(double y) const {
    if (std::isnan(y) || y > level_b_) {
        throw OutOfRange("profile evaluated above level b");
    }
}

template <class Real>
Real DecayProfile::rate_impl(const Real& y) const {
    using std::exp;
    using std::pow;
    check_range(static_cast<double>(y));
    switch (kind_) {
        case ProfileKind::power: return pow(Real(-y), Real(-q_));
        case ProfileKind::exponential: return exp(y);
        case ProfileKind::custom: return Real(table_->rate(static_cast<double>(y)));
    }
    return Real(0);
}

template <class Real>
Real DecayProfile::primitive_impl(const Real& y) const {
    using std::exp;
    using std::pow;
    check_range(static_cast<double>(y));
    switch (kind_) {
        case ProfileKind::power: return pow(Real(-y), Real(1.0 - q_)) / Real(q_ - 1.0);
        case ProfileKind::exponential: return exp(y);
        case ProfileKind::custom: return Real(table_->primitive(static_cast<double>(y)));
    }
    return Real(0);
}

// ------------------------------------------------------------------ sampling

std::vector<Point> SamplingPlan::points(const ScalarField& field) const {
    const std::size_t n = field.dimension();
    require_dimension(lower.size(), n, "sampling box lower");
    require_dimension(upper.size(), n, "sampling box upper");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(lower[i] < upper[i])) throw Error("sampling box must satisfy lower < upper");
    }

    std::vector<Point> out;
    if (grid_samples > 0) {
        auto per_axis = static_cast<std::size_t>(
            std::ceil(std::pow(static_cast<double>(grid_samples), 1.0 / static_cast<double>(n)) - 1e-9));
        per_axis = std::max<std::size_t>(per_axis, 1);
        std::size_t total = 1;
        for (std::size_t i = 0; i < n; ++i) total *= per_axis;
        out.reserve(total + ring_samples);
        std::vector<std::size_t> idx(n, 0);
        for (std::size_t k = 0; k < total; ++k) {
            Point p(n);
            std::size_t rem = k;
            for (std::size_t i = 0; i < n; ++i) {
                idx[i] = rem % per_axis;
                rem /= per_axis;
                p[i] = lower[i] + (upper[i] - lower[i]) * (static_cast<double>(idx[i]) + 0.5) /
                                      static_cast<double>(per_axis);
            }
            out.push_back(std::move(p));
        }
    }

    if (ring_samples > 0) {
        std::vector<Point> anchors;
        for (auto& line : field.singular_set().polylines(ring_radius > 0 ? ring_radius / 4 : 1e-3)) {
            for (auto& p : line) anchors.push_back(std::move(p));
        }
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, anchors.size() - 1);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t k = 0; k < ring_samples; ++k) {
            Point p = anchors[pick(rng)];
            Point dir(n);
            double len = 0.0;
            do {
                for (auto& d : dir) d = gauss(rng);
                len = norm(dir);
            } while (len == 0.0);
            const double radius = ring_radius * std::pow(unit(rng), 1.0 / static_cast<double>(n));
            for (std::size_t i = 0; i < n; ++i) p[i] += radius * dir[i] / len;
            out.push_back(std::move(p));
        }
    }
    return out;
}

ConditionReport check_fast_decreasing(const ScalarField& field, const DecayProfile& profile,
                                      const SamplingPlan& plan) {
    const std::vector<Point> samples = plan.points(field);
    constexpr double kSkipped = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> margins(samples.size(), kSkipped);
    const double b = profile.level_b();

    parallel_for(samples.size(), plan.workers, [&](std::size_t i) {
        Point grad(field.dimension());
        double g = 0.0;
        try {
            g = field.value_and_gradient(samples[i], grad);
        } catch (const OnSingularSet&) {
            return;
        }
        if (!(g <= b)) return;
        margins[i] = profile.rate(g) * norm(grad) - 1.0;
    });

    ConditionReport r;
    r.field_name = field.name();
    r.profile = profile;
    r.plan = plan;
    r.worst_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (std::isnan(margins[i])) {
            ++r.skipped_count;
            continue;
        }
        ++r.sample_count;
        if (margins[i] < r.worst_margin) {
            r.worst_margin = margins[i];
            r.worst_point = samples[i];
        }
    }
    if (r.sample_count == 0) r.worst_margin = std::numeric_limits<double>::quiet_NaN();
    r.holds = r.sample_count > 0 && r.worst_margin > 0.0;
    return r;
}

// ---------------------------------------------------------- transformed field

TransformedField::TransformedField(FieldPtr base, DecayProfile profile)
    : base_(std::move(base)), profile_(std::move(profile)), level_cap_(profile_.level_cap()) {
    if (!base_) throw Error("transform needs a base field");
}

std::string TransformedField::name() const { return "Phi o " + base_->name(); }

std::string TransformedField::domain_note() const {
    std::ostringstream os;
    os << "f = Phi(g) on {g <= " << profile_.level_b() << "}, 0 on the singular set, range (0, "
       << level_cap_ << "]; base: " << base_->domain_note();
    return os.str();
}

template <class Real>
Real TransformedField::evaluate(std::span<const Real> x, std::span<Real> grad) const {
    Real g;
    try {
        g = grad.empty() ? base_->value(x) : base_->value_and_gradient(x, grad);
    } catch (const OnSingularSet&) {
        if (grad.empty()) return Real(0);
        throw;
    }
    if (static_cast<double>(g) > profile_.level_b()) {
        throw OutOfRange("transformed field evaluated where g > b");
    }
    if (!grad.empty()) {
        const Real scale = profile_.rate(g);
        for (auto& c : grad) c *= scale;
    }
    return profile_.primitive(g);
}

double TransformedField::value(std::span<const double> x) const {
    return evaluate<double>(x, {});
}
double TransformedField::value_and_gradient(std::span<const double> x, std::span<double> grad) const {
    return evaluate<double>(x, grad);
}
Extended TransformedField::value(std::span<const Extended> x) const {
    return evaluate<Extended>(x, {});
}
Extended TransformedField::value_and_gradient(std::span<const Extended> x,
                                              std::span<Extended> grad) const {
    return evaluate<Extended>(x, grad);
}

std::shared_ptr<const TransformedField> transform(FieldPtr field, const DecayProfile& profile) {
    return std::make_shared<TransformedField>(std::move(field), profile);
}

}  // namespace morsedef
