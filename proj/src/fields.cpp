#include "morsedef/fields.hpp"

#include "kernel_field.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <limits>
#include <numbers>

namespace morsedef {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Number of parameter samples used to bracket the closest point on a curve.
constexpr std::size_t kDistanceSamples = 4096;

// Minimizes |z − c(θ)|² over a periodic parameter: dense samples bracket the
// best few local minima, Brent polishes each.
template <class Curve>
std::pair<double, double> closest_parameter(const Curve& curve, std::span<const double> z) {
    const double step = kTwoPi / static_cast<double>(kDistanceSamples);
    auto sq = [&](double theta) {
        const Point c = curve(theta);
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) s += (c[i] - z[i]) * (c[i] - z[i]);
        return s;
    };
    std::vector<double> d(kDistanceSamples);
    for (std::size_t k = 0; k < kDistanceSamples; ++k) d[k] = sq(step * static_cast<double>(k));

    std::vector<std::size_t> minima;
    for (std::size_t k = 0; k < kDistanceSamples; ++k) {
        const double prev = d[(k + kDistanceSamples - 1) % kDistanceSamples];
        const double next = d[(k + 1) % kDistanceSamples];
        if (d[k] <= prev && d[k] <= next) minima.push_back(k);
    }
    std::sort(minima.begin(), minima.end(), [&](auto a, auto b) { return d[a] < d[b]; });
    if (minima.size() > 4) minima.resize(4);

    double best_theta = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k : minima) {
        const double centre = step * static_cast<double>(k);
        auto [theta, value] = boost::math::tools::brent_find_minima(
            sq, centre - step, centre + step, std::numeric_limits<double>::digits / 2 + 4);
        if (d[k] < value) {
            theta = centre;
            value = d[k];
        }
        if (value < best) {
            best = value;
            best_theta = theta;
        }
    }
    return {best_theta, std::sqrt(std::max(best, 0.0))};
}

// ---------------------------------------------------------------- point set

class PointSet final : public SingularSet {
  public:
    explicit PointSet(std::vector<Point> points) : points_(std::move(points)) {
        if (points_.empty()) throw Error("point-list singular set needs at least one point");
        for (const auto& p : points_) require_dimension(p.size(), points_.front().size(), "point set");
    }
    Kind kind() const override { return Kind::point_list; }
    std::size_t dimension() const override { return points_.front().size(); }

    double distance_to(std::span<const double> z) const override {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : points_) best = std::min(best, distance(z, p));
        return best;
    }
    Extended distance_to(std::span<const Extended> z) const override {
        using std::sqrt;
        Extended best = std::numeric_limits<double>::infinity();
        for (const auto& p : points_) {
            Extended s = 0;
            for (std::size_t i = 0; i < z.size(); ++i) s += (z[i] - p[i]) * (z[i] - p[i]);
            best = std::min(best, Extended(sqrt(s)));
        }
        return best;
    }
    std::vector<std::vector<Point>> polylines(double) const override {
        std::vector<std::vector<Point>> out;
        for (const auto& p : points_) out.push_back({p});
        return out;
    }
    double radius_bound() const override {
        double r = 0.0;
        for (const auto& p : points_) r = std::max(r, norm(p));
        return r;
    }

  private:
    std::vector<Point> points_;
};

// --------------------------------------------------------- quadrifolium set

// Zero set of p, traced once by c(θ) = sin 2θ · (cos θ, sin θ) on [0, 2π).
template <class Real>
void clover_point(const Real& theta, Real out[2], Real d1[2], Real d2[2]) {
    using std::cos;
    using std::sin;
    const Real s2 = sin(2 * theta), c2 = cos(2 * theta);
    const Real s = sin(theta), c = cos(theta);
    out[0] = s2 * c;
    out[1] = s2 * s;
    d1[0] = 2 * c2 * c - s2 * s;
    d1[1] = 2 * c2 * s + s2 * c;
    d2[0] = -4 * s2 * c - 4 * c2 * s - s2 * c;
    d2[1] = -4 * s2 * s + 4 * c2 * c - s2 * s;
}

class CloverSet final : public SingularSet {
  public:
    Kind kind() const override { return Kind::implicit_zero_set; }
    std::size_t dimension() const override { return 2; }

    double distance_to(std::span<const double> z) const override {
        require_dimension(z.size(), 2, "distance_to");
        const auto [theta, coarse] = closest_parameter(curve, z);
        return std::min(coarse, polished<double>(theta, z, 1e-17));
    }

    Extended distance_to(std::span<const Extended> z) const override {
        require_dimension(z.size(), 2, "distance_to");
        const Point zd = to_double(z);
        return polished<Extended>(closest_parameter(curve, zd).first, z, 1e-48);
    }

    std::vector<std::vector<Point>> polylines(double spacing) const override {
        // |c′(θ)| ≤ √5 on the clover.
        const auto n = static_cast<std::size_t>(std::ceil(kTwoPi * std::sqrt(5.0) / spacing)) + 1;
        std::vector<Point> line;
        line.reserve(n + 1);
        for (std::size_t k = 0; k <= n; ++k) line.push_back(curve(kTwoPi * static_cast<double>(k) / n));
        return {std::move(line)};
    }
    double radius_bound() const override { return 1.0; }

    static Point curve(double theta) {
        return {std::sin(2 * theta) * std::cos(theta), std::sin(2 * theta) * std::sin(theta)};
    }

  private:
    // Newton on (c(θ) − z)·c′(θ) = 0 from the sampled bracket.
    template <class Real>
    static Real polished(double start, std::span<const Real> z, double step_tol) {
        using std::abs;
        using std::sqrt;
        Real theta = start;
        Real c[2], d1[2], d2[2];
        for (int it = 0; it < 40; ++it) {
            clover_point(theta, c, d1, d2);
            const Real ex = c[0] - z[0], ey = c[1] - z[1];
            const Real h = ex * d1[0] + ey * d1[1];
            const Real dh = d1[0] * d1[0] + d1[1] * d1[1] + ex * d2[0] + ey * d2[1];
            if (dh <= 0) break;
            const Real delta = h / dh;
            theta -= delta;
            if (abs(delta) < step_tol) break;
        }
        clover_point(theta, c, d1, d2);
        const Real ex = c[0] - z[0], ey = c[1] - z[1];
        return sqrt(ex * ex + ey * ey);
    }
};

// ------------------------------------------------------------ curve set

class CurveSet final : public SingularSet {
  public:
    explicit CurveSet(CurveEmbedding curve) : curve_(std::move(curve)) {
        const std::size_t n = 4096;
        for (std::size_t k = 0; k < n; ++k) {
            const double t = kTwoPi * static_cast<double>(k) / n;
            radius_ = std::max(radius_, norm(curve_.position(t)));
            max_speed_ = std::max(max_speed_, norm(curve_.velocity(t)));
        }
    }
    Kind kind() const override { return Kind::parametric_curve; }
    std::size_t dimension() const override { return 3; }
    double distance_to(std::span<const double> z) const override {
        require_dimension(z.size(), 3, "distance_to");
        return closest_parameter(curve_.position, z).second;
    }
    Extended distance_to(std::span<const Extended> z) const override {
        return Extended(distance_to(to_double(z)));
    }
    std::vector<std::vector<Point>> polylines(double spacing) const override {
        const auto n = static_cast<std::size_t>(std::ceil(kTwoPi * max_speed_ * 1.05 / spacing)) + 1;
        std::vector<Point> line;
        line.reserve(n + 1);
        for (std::size_t k = 0; k <= n; ++k) line.push_back(curve_.position(kTwoPi * static_cast<double>(k) / n));
        return {std::move(line)};
    }
    double radius_bound() const override { return radius_; }

  private:
    CurveEmbedding curve_;
    double radius_ = 0.0;
    double max_speed_ = 0.0;
};

// ------------------------------------------------------------------ kernels

struct RadialKernel {
    Point center;
    RadialForm form;
    double sigma_tol;

    std::size_t dimension() const { return center.size(); }

    template <class Real>
    Real evaluate(std::span<const Real> x, std::span<Real> grad) const {
        using std::sqrt;
        Real r2 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - center[i]) * (x[i] - center[i]);
        const Real r = sqrt(r2);
        const bool on_sigma = r <= sigma_tolerance<Real>(sigma_tol);
        if (form == RadialForm::norm) {
            if (!grad.empty()) {
                if (on_sigma) throw OnSingularSet("gradient of ‖x − c‖ is undefined at the centre");
                for (std::size_t i = 0; i < x.size(); ++i) grad[i] = (x[i] - center[i]) / r;
            }
            return r;
        }
        if (on_sigma) throw OnSingularSet("−1/‖x − c‖ evaluated at the centre");
        if (!grad.empty()) {
            const Real r3 = r2 * r;
            for (std::size_t i = 0; i < x.size(); ++i) grad[i] = (x[i] - center[i]) / r3;
        }
        return -1 / r;
    }
};

struct QuadrifoliumKernel {
    double sigma_tol;

    std::size_t dimension() const { return 2; }

    template <class Real>
    Real evaluate(std::span<const Real> X, std::span<Real> grad) const {
        using std::abs;
        using std::sqrt;
        const Real& x = X[0];
        const Real& y = X[1];
        const Real x2 = x * x, y2 = y * y;
        const Real r2 = x2 + y2;
        const Real p = r2 * r2 * r2 - 4 * x2 * y2;
        const Real px = 6 * r2 * r2 * x - 8 * x * y2;
        const Real py = 6 * r2 * r2 * y - 8 * x2 * y;
        // First-order distance estimate |p| / ‖∇p‖.
        const Real gp = sqrt(px * px + py * py);
        if (p == 0 || abs(p) <= sigma_tolerance<Real>(sigma_tol) * gp) {
            throw OnSingularSet("quadrifolium evaluated on its singular set");
        }
        const Real p2 = p * p;
        if (!grad.empty()) {
            const Real scale = 2 / (p2 * p);
            grad[0] = scale * px;
            grad[1] = scale * py;
        }
        return -1 / p2;
    }
};

struct KnotKernel {
    std::vector<std::array<double, 3>> nodes;
    std::vector<double> weights;
    double node_spacing = 0.0;
    double sigma_tol = kSigmaTol;
    std::shared_ptr<const SingularSet> sigma;

    std::size_t dimension() const { return 3; }

    template <class Real>
    Real evaluate(std::span<const Real> x, std::span<Real> grad) const {
        using std::sqrt;
        Real value = 0;
        Real g[3] = {0, 0, 0};
        Real nearest = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const Real dx = x[0] - nodes[i][0];
            const Real dy = x[1] - nodes[i][1];
            const Real dz = x[2] - nodes[i][2];
            const Real d2 = dx * dx + dy * dy + dz * dz;
            const Real d = sqrt(d2);
            if (d < nearest) nearest = d;
            if (d == 0) throw OnSingularSet("knot energy evaluated on the curve");
            value -= weights[i] / d;
            if (!grad.empty()) {
                const Real w = weights[i] / (d2 * d);
                g[0] += w * dx;
                g[1] += w * dy;
                g[2] += w * dz;
            }
        }
        // Only points closer than a node spacing can be within tolerance of Γ.
        if (nearest < node_spacing) {
            const Real dist = sigma->distance_to(x);
            if (dist < sigma_tolerance<Real>(sigma_tol)) {
                throw OnSingularSet("knot energy evaluated on the curve");
            }
        }
        if (!grad.empty()) {
            for (int k = 0; k < 3; ++k) grad[k] = g[k];
        }
        return value;
    }
};

class FunctionField final : public ScalarField {
  public:
    explicit FunctionField(FunctionFieldSpec spec) : spec_(std::move(spec)) {
        if (!spec_.value_and_gradient) throw Error("function field needs a value_and_gradient callable");
        if (!spec_.singular_set) throw Error("function field needs a singular set");
    }
    std::size_t dimension() const override { return spec_.dimension; }
    std::string name() const override { return spec_.name; }
    std::string domain_note() const override { return "user-supplied field"; }
    const SingularSet& singular_set() const override { return *spec_.singular_set; }
    double value(std::span<const double> x) const override {
        require_dimension(x.size(), dimension(), "value");
        Point scratch(dimension());
        return spec_.value_and_gradient(x, scratch);
    }
    double value_and_gradient(std::span<const double> x, std::span<double> grad) const override {
        require_dimension(x.size(), dimension(), "value_and_gradient");
        return spec_.value_and_gradient(x, grad);
    }

  private:
    FunctionFieldSpec spec_;
};

}  // namespace

std::string_view to_string(SingularSet::Kind kind) {
    switch (kind) {
        case SingularSet::Kind::point_list: return "point-list";
        case SingularSet::Kind::implicit_zero_set: return "implicit-zero-set";
        case SingularSet::Kind::parametric_curve: return "parametric-curve";
    }
    return "unknown";
}

// ----------------------------------------------------------- CurveEmbedding

CurveEmbedding CurveEmbedding::circle(Point center, double radius) {
    require_dimension(center.size(), 3, "circle centre");
    if (!(radius > 0.0)) throw PreconditionViolation("circle radius must be positive");
    CurveEmbedding c;
    c.position = [center, radius](double t) {
        return Point{center[0] + radius * std::cos(t), center[1] + radius * std::sin(t), center[2]};
    };
    c.velocity = [radius](double t) { return Point{-radius * std::sin(t), radius * std::cos(t), 0.0}; };
    c.name = "circle";
    return c;
}

CurveEmbedding CurveEmbedding::trefoil(double scale) {
    CurveEmbedding c;
    c.position = [scale](double t) {
        const double r = 2.0 + std::cos(3 * t);
        return Point{scale * r * std::cos(2 * t), scale * r * std::sin(2 * t), scale * std::sin(3 * t)};
    };
    c.velocity = [scale](double t) {
        const double r = 2.0 + std::cos(3 * t);
        const double dr = -3.0 * std::sin(3 * t);
        return Point{scale * (dr * std::cos(2 * t) - 2 * r * std::sin(2 * t)),
                     scale * (dr * std::sin(2 * t) + 2 * r * std::cos(2 * t)),
                     scale * 3.0 * std::cos(3 * t)};
    };
    c.name = "trefoil";
    return c;
}

CurveEmbedding CurveEmbedding::rigidly_moved(const std::array<std::array<double, 3>, 3>& rotation,
                                             const Point& shift) const {
    require_dimension(shift.size(), 3, "shift");
    auto apply = [rotation](const Point& v) {
        Point out(3, 0.0);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) out[i] += rotation[i][j] * v[j];
        return out;
    };
    CurveEmbedding moved;
    moved.position = [apply, shift, pos = position](double t) {
        Point p = apply(pos(t));
        for (int i = 0; i < 3; ++i) p[i] += shift[i];
        return p;
    };
    moved.velocity = [apply, vel = velocity](double t) { return apply(vel(t)); };
    moved.name = name + " (moved)";
    moved.closed = closed;
    return moved;
}

// -------------------------------------------------------------- ScalarField

Extended ScalarField::value(std::span<const Extended> x) const {
    return Extended(value(to_double(x)));
}

Extended ScalarField::value_and_gradient(std::span<const Extended> x,
                                         std::span<Extended> grad) const {
    const Point xd = to_double(x);
    Point g(xd.size());
    const double v = value_and_gradient(xd, g);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] = g[i];
    return Extended(v);
}

Point ScalarField::gradient(std::span<const double> x) const {
    Point g(dimension());
    value_and_gradient(x, g);
    return g;
}

// ---------------------------------------------------------------- factories

std::shared_ptr<const SingularSet> make_point_set(std::vector<Point> points) {
    return std::make_shared<PointSet>(std::move(points));
}

FieldPtr make_radial_field(Point center, RadialForm form, double sigma_tol) {
    if (center.empty()) throw PreconditionViolation("radial field needs a centre");
    auto sigma = make_point_set({center});
    const std::string name = form == RadialForm::norm ? "radial_norm" : "radial_neg_inverse_norm";
    const std::string note = form == RadialForm::norm
                                 ? "f(x) = |x - c|, nonnegative, |grad f| = 1"
                                 : "g(x) = -1/|x - c|, g -> -inf at c";
    return std::make_shared<detail::KernelField<RadialKernel>>(
        RadialKernel{std::move(center), form, sigma_tol}, std::move(sigma), name, note);
}

FieldPtr make_quadrifolium_field(double sigma_tol) {
    return std::make_shared<detail::KernelField<QuadrifoliumKernel>>(
        QuadrifoliumKernel{sigma_tol}, std::make_shared<CloverSet>(), "quadrifolium",
        "g = -p^-2, p = (x^2+y^2)^3 - 4x^2y^2; singular on the four-leaved clover p = 0");
}

FieldPtr make_knot_energy_field(const CurveEmbedding& curve, std::size_t quadrature_nodes,
                                double sigma_tol) {
    if (quadrature_nodes < 16) throw PreconditionViolation("knot energy needs at least 16 quadrature nodes");
    if (!curve.position || !curve.velocity) throw Error("curve needs position and velocity");
    KnotKernel k;
    k.sigma_tol = sigma_tol;
    k.sigma = std::make_shared<CurveSet>(curve);
    const double dt = kTwoPi / static_cast<double>(quadrature_nodes);
    for (std::size_t i = 0; i < quadrature_nodes; ++i) {
        const double t = dt * static_cast<double>(i);
        const Point p = curve.position(t);
        const double speed = norm(curve.velocity(t));
        if (!(speed > 0.0)) throw PreconditionViolation("curve velocity vanishes; not a C1 embedding");
        k.nodes.push_back({p[0], p[1], p[2]});
        k.weights.push_back(speed * dt);
    }
    for (std::size_t i = 0; i < quadrature_nodes; ++i) {
        const auto& a = k.nodes[i];
        const auto& b = k.nodes[(i + 1) % quadrature_nodes];
        k.node_spacing = std::max(k.node_spacing, distance(a, b));
    }
    auto sigma = k.sigma;
    return std::make_shared<detail::KernelField<KnotKernel>>(
        std::move(k), std::move(sigma), "knot_energy",
        "G(x) = -int |Gamma'(t)| / |x - Gamma(t)| dt, periodic trapezoid rule (" + curve.name + ")");
}

FieldPtr make_function_field(FunctionFieldSpec spec) {
    return std::make_shared<FunctionField>(std::move(spec));
}

double quadrifolium_polynomial(double x, double y) {
    const double r2 = x * x + y * y;
    return r2 * r2 * r2 - 4 * x * x * y * y;
}

double gradient_check(const ScalarField& field, std::span<const double> x, double h) {
    require_dimension(x.size(), field.dimension(), "gradient_check");
    if (!(h > 0.0)) throw PreconditionViolation("gradient_check step must be positive");
    if (field.singular_set().distance_to(x) < 10.0 * h) {
        throw OnSingularSet("finite-difference stencil touches the singular set");
    }
    const Point analytic = field.gradient(x);
    Point probe(x.begin(), x.end());
    double diff2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = field.value(probe);
        probe[i] = x[i] - h;
        const double down = field.value(probe);
        probe[i] = x[i];
        const double fd = (up - down) / (2.0 * h);
        diff2 += (fd - analytic[i]) * (fd - analytic[i]);
    }
    const double scale = norm(analytic);
    return scale > 0.0 ? std::sqrt(diff2) / scale : std::sqrt(diff2);
}

}  // namespace morsedef
