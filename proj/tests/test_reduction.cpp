#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "morsedef/reduction.hpp"

#include <cmath>
#include <random>

using namespace morsedef;

namespace {

// φ(y) = 2y⁻² tabulated on [−12, −1].
DecayProfile two_over_y_squared() {
    std::vector<std::pair<double, double>> table;
    for (int i = 0; i <= 2200; ++i) {
        const double y = -12.0 + 11.0 * i / 2200.0;
        table.emplace_back(y, 2.0 / (y * y));
    }
    return DecayProfile::custom(-1.0, table);
}

std::vector<DecayProfile> all_profiles() {
    return {DecayProfile::power(-1.0, 13.0 / 12.0), DecayProfile::power(-1e4, 13.0 / 12.0),
            DecayProfile::power(-1.0, 2.0), DecayProfile::exponential(-1.0), DecayProfile::exponential(2.0),
            two_over_y_squared()};
}

double relative_error(const Point& a, const Point& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("power profile reference values") {
    const auto p = DecayProfile::power(-1.0, 13.0 / 12.0);
    CHECK(p.primitive(-1.0) == doctest::Approx(12.0).epsilon(1e-14));
    CHECK(p.level_cap() == doctest::Approx(12.0).epsilon(1e-14));
    CHECK(p.primitive(-4096.0) == doctest::Approx(12.0 / 2.0).epsilon(1e-12));  // 4096^{1/12} = 2

    const auto q2 = DecayProfile::power(-1.0, 2.0);
    CHECK(q2.rate(-2.0) == doctest::Approx(0.25));
    CHECK(q2.primitive(-2.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(q2.rate(-0.5), OutOfRange);
    CHECK_THROWS_AS(q2.primitive(0.0), OutOfRange);
}

TEST_CASE("invalid profiles are rejected") {
    CHECK_THROWS_AS(DecayProfile::power(-1.0, 1.0), InvalidProfile);
    CHECK_THROWS_AS(DecayProfile::power(-1.0, 0.5), InvalidProfile);
    CHECK_THROWS_AS(DecayProfile::power(0.0, 2.0), InvalidProfile);
    CHECK_THROWS_AS(DecayProfile::power(1.0, 2.0), InvalidProfile);

    // Table too short to cover [10b, b].
    CHECK_THROWS_AS(DecayProfile::custom(-1.0, {{-5.0, 0.1}, {-3.0, 0.2}, {-2.0, 0.5}, {-1.0, 1.0}}),
                    InvalidProfile);
    // φ = (−y)^{−1/2}: the tail fit finds an unbounded primitive.
    std::vector<std::pair<double, double>> slow;
    for (int i = 0; i <= 100; ++i) {
        const double y = -10.0 + 9.0 * i / 100.0;
        slow.emplace_back(y, 1.0 / std::sqrt(-y));
    }
    CHECK_THROWS_AS(DecayProfile::custom(-1.0, slow), InvalidProfile);
    // φ = (−y)^{−1.05}: bounded, but the tail dominates Φ(b).
    std::vector<std::pair<double, double>> heavy;
    for (int i = 0; i <= 100; ++i) {
        const double y = -10.0 + 9.0 * i / 100.0;
        heavy.emplace_back(y, std::pow(-y, -1.05));
    }
    CHECK_THROWS_AS(DecayProfile::custom(-1.0, heavy), InvalidProfile);
    // Nonpositive rate.
    CHECK_THROWS_AS(DecayProfile::custom(-1.0, {{-10.0, 0.1}, {-6.0, 0.0}, {-3.0, 0.2}, {-1.0, 1.0}}),
                    InvalidProfile);
}

TEST_CASE("primitive differentiates to the rate") {
    for (const auto& p : all_profiles()) {
        const double b = p.level_b();
        const double lo = b < 0 ? 10.0 * b : b - 10.0;
        for (int i = 0; i < 100; ++i) {
            const double y = lo + (b - lo) * (i + 0.5) / 100.0;
            // Small step: the custom table is piecewise linear with kinks at its nodes.
            const double h = 1e-7 * std::max(1.0, std::abs(y));
            const double fd = (p.primitive(y + h) - p.primitive(y - h)) / (2.0 * h);
            CAPTURE(to_string(p.kind()));
            CAPTURE(y);
            CHECK(std::abs(fd - p.rate(y)) / p.rate(y) < 1e-6);
        }
    }
}

TEST_CASE("primitive is increasing, positive and bounded") {
    for (const auto& p : all_profiles()) {
        const double b = p.level_b();
        // e^y underflows long before 1000·b.
        const double lo = p.kind() == ProfileKind::exponential ? b - 200.0 : 1000.0 * b;
        double prev = 0.0;
        for (int i = 0; i <= 2000; ++i) {
            const double y = lo + (b - lo) * i / 2000.0;
            const double v = p.primitive(y);
            CHECK(v > prev);
            CHECK(v <= p.level_cap());
            CHECK(p.rate(y) > 0.0);
            prev = v;
        }
    }
}

TEST_CASE("custom profile tracks the analytic primitive") {
    const auto p = two_over_y_squared();
    CHECK(p.kind() == ProfileKind::custom);
    CHECK(p.exponent() == doctest::Approx(2.0).epsilon(1e-6));
    for (double y : {-11.0, -5.0, -2.0, -1.0, -50.0}) {
        CHECK(p.primitive(y) == doctest::Approx(-2.0 / y).epsilon(1e-5));
    }
}

TEST_CASE("extended precision agrees with double") {
    for (const auto& p : all_profiles()) {
        const double y = p.level_b() < 0 ? 3.0 * p.level_b() : p.level_b() - 3.0;
        CHECK(static_cast<double>(p.primitive(Extended(y))) == doctest::Approx(p.primitive(y)).epsilon(1e-13));
        CHECK(static_cast<double>(p.rate(Extended(y))) == doctest::Approx(p.rate(y)).epsilon(1e-13));
    }
}

TEST_CASE("radial field has constant margin one under phi = 2/y^2") {
    auto g = make_radial_field({0.0, 0.0}, RadialForm::neg_inverse_norm);
    SamplingPlan plan;
    plan.lower = {-1.0, -1.0};
    plan.upper = {1.0, 1.0};
    plan.grid_samples = 20000;
    const auto report = check_fast_decreasing(*g, two_over_y_squared(), plan);
    CHECK(report.holds);
    CHECK(report.sample_count > 10000);
    CHECK(report.skipped_count > 0);
    CHECK(report.sample_count + report.skipped_count == plan.points(*g).size());
    CHECK(report.worst_margin == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("zero margin counts as failure") {
    // φ = y⁻² gives φ(g)·‖∇g‖ − 1 = 0 identically for g = −1/‖x‖.
    auto g = make_radial_field({0.0, 0.0}, RadialForm::neg_inverse_norm);
    SamplingPlan plan;
    plan.lower = {-1.0, -1.0};
    plan.upper = {1.0, 1.0};
    plan.grid_samples = 4000;
    const auto report = check_fast_decreasing(*g, DecayProfile::power(-1.0, 2.0), plan);
    CHECK(std::abs(report.worst_margin) < 1e-12);
    CHECK(report.holds == (report.worst_margin > 0.0));
}

TEST_CASE("quadrifolium satisfies the condition at b = -1e4") {
    auto g = make_quadrifolium_field();
    SamplingPlan plan;
    plan.lower = {-1.3, -1.3};
    plan.upper = {1.3, 1.3};
    plan.grid_samples = 40000;
    plan.ring_samples = 20000;
    plan.ring_radius = 0.02;
    const auto report = check_fast_decreasing(*g, DecayProfile::power(-1e4, 13.0 / 12.0), plan);
    CHECK(report.sample_count > 10000);
    CHECK(report.holds);
    CHECK(report.worst_margin > 0.0);
    CHECK(report.worst_point.size() == 2);
}

TEST_CASE("sampling plan is deterministic in the seed") {
    auto g = make_quadrifolium_field();
    SamplingPlan plan;
    plan.lower = {-1.3, -1.3};
    plan.upper = {1.3, 1.3};
    plan.grid_samples = 100;
    plan.ring_samples = 500;
    plan.seed = 42;
    CHECK(plan.points(*g) == plan.points(*g));
    plan.workers = 1;
    const auto a = check_fast_decreasing(*g, DecayProfile::power(-1e4, 13.0 / 12.0), plan);
    plan.workers = 3;
    const auto b = check_fast_decreasing(*g, DecayProfile::power(-1e4, 13.0 / 12.0), plan);
    CHECK(a.worst_margin == b.worst_margin);
    CHECK(a.worst_point == b.worst_point);
    SamplingPlan other = plan;
    other.seed = 43;
    CHECK(other.points(*g) != plan.points(*g));
}

TEST_CASE("transformed radial field is the norm") {
    auto g = make_radial_field({0.0, 0.0}, RadialForm::neg_inverse_norm);
    auto f = transform(g, DecayProfile::power(-1.0, 2.0));
    CHECK(f->level_cap().value() == doctest::Approx(1.0));
    CHECK(f->value(Point{0.3, 0.4}) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(f->value(Point{1.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-14));  // g = b
    CHECK(f->value(Point{0.0, 0.0}) == 0.0);
    CHECK_THROWS_AS(f->value(Point{2.0, 0.0}), OutOfRange);
    const Point grad = f->gradient(Point{0.3, 0.4});
    CHECK(grad[0] == doctest::Approx(0.6));
    CHECK(grad[1] == doctest::Approx(0.8));
}

TEST_CASE("transformed field is out of range above b") {
    auto f = transform(make_quadrifolium_field(), DecayProfile::power(-1e4, 13.0 / 12.0));
    CHECK_THROWS_AS(f->value(Point{1.0, 0.0}), OutOfRange);
    CHECK(f->level_cap().value() == doctest::Approx(12.0 * std::pow(1e4, -1.0 / 12.0)));
}

TEST_CASE("chain rule matches finite differences and keeps the gradient above one") {
    auto g = make_quadrifolium_field();
    const auto profile = DecayProfile::power(-1e4, 13.0 / 12.0);
    auto f = transform(g, profile);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> theta(0.0, 6.283185307179586), off(-0.05, 0.05);
    std::size_t checked = 0;
    while (checked < 300) {
        const double t = theta(rng), r = std::sin(2 * t);
        const Point x = {r * std::cos(t) + 0.1 * off(rng), r * std::sin(t) + 0.1 * off(rng)};
        double gv;
        try {
            gv = g->value(x);
        } catch (const OnSingularSet&) {
            continue;
        }
        if (gv > profile.level_b() - 1.0) continue;
        const Point grad_f = f->gradient(x);
        const Point grad_g = g->gradient(x);
        Point expected(2);
        for (int i = 0; i < 2; ++i) expected[i] = profile.rate(gv) * grad_g[i];
        CHECK(relative_error(grad_f, expected) < 1e-12);

        const double h = 1e-6 * g->singular_set().distance_to(x);
        Point fd(2);
        for (int i = 0; i < 2; ++i) {
            Point xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (f->value(xp) - f->value(xm)) / (2 * h);
        }
        CHECK(relative_error(grad_f, fd) < 1e-4);
        const double margin = profile.rate(gv) * norm(grad_g) - 1.0;
        if (margin > 0) CHECK(norm(grad_f) >= 1.0);
        ++checked;
    }
}

TEST_CASE("transformed field tends to zero on approach to the clover") {
    auto f = transform(make_quadrifolium_field(), DecayProfile::power(-1e4, 13.0 / 12.0));
    using boost::multiprecision::cos;
    using boost::multiprecision::sin;
    const Extended t = 0.7, r = sin(2 * t);
    const ExtPoint z = {r * cos(t), r * sin(t)};
    const ExtPoint dir = {Extended(0.6), Extended(0.8)};
    bool below_1e3 = false, below_1e6 = false;
    for (int k = 3; k <= 45; k += 3) {
        ExtPoint x = z;
        const Extended eps = boost::multiprecision::pow(Extended(10), -k);
        for (int i = 0; i < 2; ++i) x[i] += eps * dir[i];
        Extended v;
        try {
            v = f->value(std::span<const Extended>(x));
        } catch (const OutOfRange&) {
            continue;
        }
        below_1e3 |= v < 1e-3;
        below_1e6 |= v < 1e-6;
    }
    CHECK(below_1e3);
    CHECK(below_1e6);
}
