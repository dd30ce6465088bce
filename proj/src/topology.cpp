#include "morsedef/topology.hpp"

#include "morsedef/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace morsedef {

// ------------------------------------------------------------------ GridSpec

std::size_t GridSpec::cell_count() const {
    std::size_t n = 1;
    for (auto r : resolution) n *= r;
    return n;
}

double GridSpec::cell_diagonal() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dimension(); ++i) s += cell_size(i) * cell_size(i);
    return std::sqrt(s);
}

void GridSpec::validate() const {
    if (lower.size() != upper.size() || lower.size() != resolution.size() || lower.empty()) {
        throw PreconditionViolation("grid spec: lower, upper and resolution must have the same length");
    }
    for (std::size_t i = 0; i < dimension(); ++i) {
        if (!(lower[i] < upper[i])) throw PreconditionViolation("grid spec: lower must be < upper on every axis");
        if (resolution[i] < 8) throw PreconditionViolation("grid spec: resolution must be >= 8 per axis");
    }
}

GridSpec GridSpec::cube(std::size_t dim, double lo, double hi, std::size_t res) {
    return GridSpec{Point(dim, lo), Point(dim, hi), std::vector<std::size_t>(dim, res)};
}

// ---------------------------------------------------------------- GridRegion

GridRegion::GridRegion(GridSpec spec, std::vector<std::uint8_t> flags, double level_b,
                       double sigma_inflation)
    : spec_(std::move(spec)), flags_(std::move(flags)), level_b_(level_b),
      sigma_inflation_(sigma_inflation) {
    spec_.validate();
    if (flags_.size() != spec_.cell_count()) throw Error("grid region: flag count does not match grid");
}

std::size_t GridRegion::inside_count() const {
    return static_cast<std::size_t>(std::count_if(flags_.begin(), flags_.end(), [](auto f) { return f != 0; }));
}

std::vector<std::uint8_t> GridRegion::mask() const {
    std::vector<std::uint8_t> m(flags_.size());
    std::transform(flags_.begin(), flags_.end(), m.begin(), [](auto f) { return f != 0 ? 1 : 0; });
    return m;
}

Point GridRegion::center(std::size_t cell) const {
    Point c(dimension());
    for (std::size_t i = 0; i < dimension(); ++i) {
        const std::size_t k = cell % spec_.resolution[i];
        cell /= spec_.resolution[i];
        c[i] = spec_.lower[i] + (static_cast<double>(k) + 0.5) * spec_.cell_size(i);
    }
    return c;
}

std::optional<std::size_t> GridRegion::cell_of(std::span<const double> x) const {
    require_dimension(x.size(), dimension(), "cell_of");
    std::size_t idx = 0, stride = 1;
    for (std::size_t i = 0; i < dimension(); ++i) {
        const double u = (x[i] - spec_.lower[i]) / spec_.cell_size(i);
        if (!(u >= 0.0) || u >= static_cast<double>(spec_.resolution[i])) return std::nullopt;
        idx += static_cast<std::size_t>(u) * stride;
        stride *= spec_.resolution[i];
    }
    return idx;
}

// ---------------------------------------------------------------- voxelize

namespace {

double point_segment_distance(std::span<const double> p, const Point& a, const Point& b) {
    double ab2 = 0.0, t = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        ab2 += (b[i] - a[i]) * (b[i] - a[i]);
        t += (p[i] - a[i]) * (b[i] - a[i]);
    }
    t = ab2 > 0.0 ? std::clamp(t / ab2, 0.0, 1.0) : 0.0;
    double d2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double c = a[i] + t * (b[i] - a[i]) - p[i];
        d2 += c * c;
    }
    return std::sqrt(d2);
}

// Visits every cell index whose center lies in the box [lo, hi].
template <class Visit>
void for_cells_in_box(const GridSpec& spec, const Point& lo, const Point& hi, Visit&& visit) {
    const std::size_t n = spec.dimension();
    std::vector<std::size_t> first(n), last(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double h = spec.cell_size(i);
        const double a = std::ceil((lo[i] - spec.lower[i]) / h - 0.5);
        const double b = std::floor((hi[i] - spec.lower[i]) / h - 0.5);
        const double maxk = static_cast<double>(spec.resolution[i] - 1);
        if (b < 0.0 || a > maxk || a > b) return;
        first[i] = static_cast<std::size_t>(std::max(a, 0.0));
        last[i] = static_cast<std::size_t>(std::min(b, maxk));
    }
    std::vector<std::size_t> k = first;
    while (true) {
        std::size_t idx = 0, stride = 1;
        for (std::size_t i = 0; i < n; ++i) {
            idx += k[i] * stride;
            stride *= spec.resolution[i];
        }
        visit(idx);
        std::size_t axis = 0;
        while (axis < n) {
            if (k[axis] < last[axis]) {
                ++k[axis];
                break;
            }
            k[axis] = first[axis];
            ++axis;
        }
        if (axis == n) return;
    }
}

std::vector<std::size_t> unravel(std::size_t cell, const std::vector<std::size_t>& res) {
    std::vector<std::size_t> k(res.size());
    for (std::size_t i = 0; i < res.size(); ++i) {
        k[i] = cell % res[i];
        cell /= res[i];
    }
    return k;
}

bool has_inside_neighbor(const std::vector<std::uint8_t>& flags, const std::vector<std::size_t>& res,
                         std::size_t cell) {
    const auto k = unravel(cell, res);
    const std::size_t n = res.size();
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    for (std::size_t c = 0; c < combos; ++c) {
        std::size_t rem = c, idx = 0, stride = 1;
        bool self = true, valid = true;
        for (std::size_t i = 0; i < n; ++i) {
            const int off = static_cast<int>(rem % 3) - 1;
            rem /= 3;
            if (off != 0) self = false;
            const long v = static_cast<long>(k[i]) + off;
            if (v < 0 || v >= static_cast<long>(res[i])) {
                valid = false;
                break;
            }
            idx += static_cast<std::size_t>(v) * stride;
            stride *= res[i];
        }
        if (valid && !self && flags[idx] != 0) return true;
    }
    return false;
}

}  // namespace

GridRegion voxelize(const ScalarField& field, double level_b, const GridSpec& spec,
                    double sigma_inflation, unsigned workers) {
    spec.validate();
    require_dimension(spec.dimension(), field.dimension(), "grid dimension");
    if (!(sigma_inflation >= 0.0)) throw Error("sigma_inflation must be nonnegative");
    const std::size_t n = spec.dimension();
    const std::size_t cells = spec.cell_count();
    std::vector<std::uint8_t> flags(cells, 0);

    // Scratch region only used for center() before the real one exists.
    const GridRegion layout(spec, std::vector<std::uint8_t>(cells, 0), level_b, sigma_inflation);
    parallel_for(cells, workers, [&](std::size_t c) {
        const Point x = layout.center(c);
        try {
            if (field.value(x) <= level_b) flags[c] = GridRegion::kSublevel;
        } catch (const OnSingularSet&) {
            flags[c] = GridRegion::kSigma;
        } catch (const OutOfRange&) {
        }
    });

    // Σ cells: polyline distances first, exact distance_to in a thin band
    // around the inflation radius.
    const double radius = sigma_inflation * spec.cell_diagonal();
    double min_cell = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) min_cell = std::min(min_cell, spec.cell_size(i));
    const double spacing = 0.25 * min_cell;
    const double band = 0.05 * min_cell;
    std::vector<double> near(cells, std::numeric_limits<double>::infinity());
    const auto& sigma = field.singular_set();
    for (const auto& line : sigma.polylines(spacing)) {
        const std::size_t segs = line.size() == 1 ? 1 : line.size() - 1;
        for (std::size_t s = 0; s < segs; ++s) {
            const Point& a = line[s];
            const Point& b = line.size() == 1 ? line[s] : line[s + 1];
            Point lo(n), hi(n);
            for (std::size_t i = 0; i < n; ++i) {
                lo[i] = std::min(a[i], b[i]) - radius - band;
                hi[i] = std::max(a[i], b[i]) + radius + band;
            }
            for_cells_in_box(spec, lo, hi, [&](std::size_t c) {
                const double d = point_segment_distance(layout.center(c), a, b);
                near[c] = std::min(near[c], d);
            });
        }
    }
    std::vector<std::size_t> borderline;
    for (std::size_t c = 0; c < cells; ++c) {
        if (near[c] <= radius - band) {
            flags[c] |= GridRegion::kSigma;
        } else if (near[c] <= radius + band) {
            borderline.push_back(c);
        }
    }
    std::vector<std::uint8_t> exact(borderline.size(), 0);
    parallel_for(borderline.size(), workers, [&](std::size_t i) {
        exact[i] = sigma.distance_to(layout.center(borderline[i])) <= radius ? 1 : 0;
    });
    for (std::size_t i = 0; i < borderline.size(); ++i) {
        if (exact[i]) flags[borderline[i]] |= GridRegion::kSigma;
    }

    std::size_t inside = 0;
    for (std::size_t c = 0; c < cells; ++c) {
        if (flags[c] == 0) continue;
        ++inside;
        const auto k = unravel(c, spec.resolution);
        for (std::size_t i = 0; i < n; ++i) {
            if (k[i] == 0 || k[i] + 1 == spec.resolution[i]) {
                std::ostringstream os;
                os << "region touches the grid boundary at cell " << c << "; enlarge the grid";
                throw GridTooSmall(os.str());
            }
        }
    }
    if (inside == 0) throw EmptyRegion("sublevel set and singular set are both empty on this grid");

    for (std::size_t c = 0; c < cells; ++c) {
        if (flags[c] == GridRegion::kSigma && !has_inside_neighbor(flags, spec.resolution, c)) {
            std::ostringstream os;
            os << "singular-set cell " << c << " is isolated; refine the grid or raise sigma_inflation";
            throw ResolutionTooCoarse(os.str());
        }
    }
    return GridRegion(spec, std::move(flags), level_b, sigma_inflation);
}

// -------------------------------------------------------------------- Betti

namespace {

// Components of the mask under the full (3^n − 1) neighborhood, matching the
// connectivity of the closed cells.
long count_components_full(std::span<const std::uint8_t> mask, const std::vector<std::size_t>& res) {
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<std::size_t> stack;
    const std::size_t n = res.size();
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    long count = 0;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || seen[start]) continue;
        ++count;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t cell = stack.back();
            stack.pop_back();
            const auto k = unravel(cell, res);
            for (std::size_t c = 0; c < combos; ++c) {
                std::size_t rem = c, idx = 0, stride = 1;
                bool valid = true;
                for (std::size_t i = 0; i < n; ++i) {
                    const long v = static_cast<long>(k[i]) + static_cast<long>(rem % 3) - 1;
                    rem /= 3;
                    if (v < 0 || v >= static_cast<long>(res[i])) {
                        valid = false;
                        break;
                    }
                    idx += static_cast<std::size_t>(v) * stride;
                    stride *= res[i];
                }
                if (valid && mask[idx] && !seen[idx]) {
                    seen[idx] = 1;
                    stack.push_back(idx);
                }
            }
        }
    }
    return count;
}

// Bounded components of the complement under face (2n) adjacency, with the
// grid padded by one empty layer so the exterior is a single component.
long count_bounded_complement(std::span<const std::uint8_t> mask, const std::vector<std::size_t>& res) {
    const std::size_t n = res.size();
    std::vector<std::size_t> pres(n);
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) {
        pres[i] = res[i] + 2;
        total *= pres[i];
    }
    std::vector<std::uint8_t> solid(total, 0);
    for (std::size_t cell = 0; cell < mask.size(); ++cell) {
        if (!mask[cell]) continue;
        const auto k = unravel(cell, res);
        std::size_t idx = 0, stride = 1;
        for (std::size_t i = 0; i < n; ++i) {
            idx += (k[i] + 1) * stride;
            stride *= pres[i];
        }
        solid[idx] = 1;
    }
    std::vector<std::size_t> strides(n);
    std::size_t s = 1;
    for (std::size_t i = 0; i < n; ++i) {
        strides[i] = s;
        s *= pres[i];
    }
    std::vector<std::uint8_t> seen(total, 0);
    std::vector<std::size_t> stack;
    long components = 0;
    for (std::size_t start = 0; start < total; ++start) {
        if (solid[start] || seen[start]) continue;
        ++components;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t cell = stack.back();
            stack.pop_back();
            std::size_t rem = cell;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t k = rem % pres[i];
                rem /= pres[i];
                if (k > 0) {
                    const std::size_t nb = cell - strides[i];
                    if (!solid[nb] && !seen[nb]) {
                        seen[nb] = 1;
                        stack.push_back(nb);
                    }
                }
                if (k + 1 < pres[i]) {
                    const std::size_t nb = cell + strides[i];
                    if (!solid[nb] && !seen[nb]) {
                        seen[nb] = 1;
                        stack.push_back(nb);
                    }
                }
            }
        }
    }
    // Cell 0 is padding, so the first component found is the exterior.
    return components - 1;
}

}  // namespace

BettiReport betti_2d(std::span<const std::uint8_t> mask, std::size_t nx, std::size_t ny) {
    if (mask.size() != nx * ny) throw DimensionMismatch("betti_2d: mask size does not match nx*ny");
    auto at = [&](long i, long j) {
        return i >= 0 && j >= 0 && i < static_cast<long>(nx) && j < static_cast<long>(ny) &&
               mask[static_cast<std::size_t>(j) * nx + static_cast<std::size_t>(i)] != 0;
    };
    // Cells of the closed complex in doubled coordinates (a, b) ∈ [0, 2n]²;
    // the dimension of a cell is its number of odd coordinates.
    long counts[3] = {0, 0, 0};
    for (long b = 0; b <= 2 * static_cast<long>(ny); ++b) {
        for (long a = 0; a <= 2 * static_cast<long>(nx); ++a) {
            const long i0 = a % 2 ? (a - 1) / 2 : a / 2 - 1, i1 = a % 2 ? i0 : a / 2;
            const long j0 = b % 2 ? (b - 1) / 2 : b / 2 - 1, j1 = b % 2 ? j0 : b / 2;
            if (at(i0, j0) || at(i0, j1) || at(i1, j0) || at(i1, j1)) ++counts[(a % 2) + (b % 2)];
        }
    }
    BettiReport r;
    r.dimension = 2;
    r.euler = counts[0] - counts[1] + counts[2];
    r.b0 = count_components_full(mask, {nx, ny});
    r.b1 = r.b0 - r.euler;
    r.b2 = 0;
    r.method_note = "closed-cell cubical complex; b0 by 8-connected components; euler = V - E + F; b1 = b0 - euler";
    return r;
}

BettiReport betti_3d(std::span<const std::uint8_t> mask, std::size_t nx, std::size_t ny, std::size_t nz) {
    if (mask.size() != nx * ny * nz) throw DimensionMismatch("betti_3d: mask size does not match nx*ny*nz");
    auto at = [&](long i, long j, long k) {
        return i >= 0 && j >= 0 && k >= 0 && i < static_cast<long>(nx) && j < static_cast<long>(ny) &&
               k < static_cast<long>(nz) &&
               mask[(static_cast<std::size_t>(k) * ny + static_cast<std::size_t>(j)) * nx +
                    static_cast<std::size_t>(i)] != 0;
    };
    long counts[4] = {0, 0, 0, 0};
    for (long c = 0; c <= 2 * static_cast<long>(nz); ++c) {
        const long k0 = c % 2 ? (c - 1) / 2 : c / 2 - 1, k1 = c % 2 ? k0 : c / 2;
        for (long b = 0; b <= 2 * static_cast<long>(ny); ++b) {
            const long j0 = b % 2 ? (b - 1) / 2 : b / 2 - 1, j1 = b % 2 ? j0 : b / 2;
            for (long a = 0; a <= 2 * static_cast<long>(nx); ++a) {
                const long i0 = a % 2 ? (a - 1) / 2 : a / 2 - 1, i1 = a % 2 ? i0 : a / 2;
                if (at(i0, j0, k0) || at(i1, j0, k0) || at(i0, j1, k0) || at(i1, j1, k0) ||
                    at(i0, j0, k1) || at(i1, j0, k1) || at(i0, j1, k1) || at(i1, j1, k1)) {
                    ++counts[(a % 2) + (b % 2) + (c % 2)];
                }
            }
        }
    }
    BettiReport r;
    r.dimension = 3;
    r.euler = counts[0] - counts[1] + counts[2] - counts[3];
    r.b0 = count_components_full(mask, {nx, ny, nz});
    r.b2 = count_bounded_complement(mask, {nx, ny, nz});
    r.b1 = r.b0 + r.b2 - r.euler;
    r.method_note =
        "closed-cell cubical complex; b0 by 26-connected components; b2 = bounded 6-connected "
        "complement components; euler = V - E + F - C; b1 = b0 + b2 - euler";
    return r;
}

BettiReport betti_2d(const GridRegion& region) {
    if (region.dimension() != 2) throw DimensionMismatch("betti_2d needs a 2D region");
    const auto m = region.mask();
    return betti_2d(m, region.spec().resolution[0], region.spec().resolution[1]);
}

BettiReport betti_3d(const GridRegion& region) {
    if (region.dimension() != 3) throw DimensionMismatch("betti_3d needs a 3D region");
    const auto m = region.mask();
    const auto& r = region.spec().resolution;
    return betti_3d(m, r[0], r[1], r[2]);
}

BettiReport betti(const GridRegion& region) {
    switch (region.dimension()) {
        case 2: return betti_2d(region);
        case 3: return betti_3d(region);
        default: throw DimensionMismatch("Betti numbers are implemented for 2D and 3D regions");
    }
}

// ---------------------------------------------------------- consistency

ConsistencyReport verify_retraction_consistency(const ScalarField& field, const GridRegion& region,
                                                const FlowConfig& cfg, std::size_t n_seeds,
                                                std::uint64_t seed, unsigned workers) {
    require_dimension(region.dimension(), field.dimension(), "region dimension");
    std::vector<std::size_t> candidates;
    for (std::size_t c = 0; c < region.flags().size(); ++c) {
        if (region.flags()[c] & GridRegion::kSublevel) candidates.push_back(c);
    }
    std::mt19937_64 rng(seed);
    std::shuffle(candidates.begin(), candidates.end(), rng);

    std::vector<Point> seeds;
    for (std::size_t c : candidates) {
        if (seeds.size() == n_seeds) break;
        const Point x = region.center(c);
        try {
            if (field.value(x) > cfg.sigma_stop) seeds.push_back(x);
        } catch (const Error&) {
        }
    }

    ConsistencyReport report;
    report.n_seeds = seeds.size();
    report.endpoint_tolerance = 2.0 * cfg.sigma_stop + region.spec().cell_diagonal();
    const auto results = retract_batch(field, seeds, 1.0, cfg, workers);
    for (const auto& e : results) {
        if (!e.result) {
            ++report.flow_failures;
            continue;
        }
        const bool endpoint_ok = e.result->sigma_distance <= report.endpoint_tolerance;
        bool confined = true;
        for (const auto& s : e.result->trajectory.samples) {
            const auto cell = region.cell_of(s.x);
            if (!cell || !region.inside(*cell)) {
                confined = false;
                break;
            }
        }
        if (!endpoint_ok) ++report.endpoint_failures;
        if (!confined) ++report.confinement_failures;
        if (endpoint_ok && confined) ++report.passed;
    }
    return report;
}

// ------------------------------------------------------------- calibration

double calibrate_level_along_ray(const ScalarField& field, const Point& origin, const Point& direction,
                                 double radius) {
    require_dimension(origin.size(), field.dimension(), "ray origin");
    require_dimension(direction.size(), field.dimension(), "ray direction");
    if (!(radius > 0.0)) throw PreconditionViolation("calibration radius must be positive");
    const double len = norm(direction);
    if (!(len > 0.0)) throw PreconditionViolation("ray direction must be nonzero");
    auto along = [&](double rho) {
        Point x(origin);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += rho * direction[i] / len;
        return field.value(x);
    };
    // Extent of {g ≤ b} along the ray, assuming g increases with ρ.
    auto extent = [&](double b) {
        double lo = 1e-3 * radius, hi = 4.0 * radius;
        if (along(lo) > b) return lo;
        if (along(hi) <= b) return hi;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * radius; ++it) {
            const double mid = 0.5 * (lo + hi);
            (along(mid) <= b ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    double b_lo = along(0.5 * radius), b_hi = along(2.0 * radius);
    if (!(b_lo < b_hi)) throw PreconditionViolation("field is not increasing along the calibration ray");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (b_lo + b_hi);
        if (mid == b_lo || mid == b_hi) break;
        (extent(mid) < radius ? b_lo : b_hi) = mid;
    }
    return 0.5 * (b_lo + b_hi);
}

// ----------------------------------------------------------------- exports

void write_pgm(const GridRegion& region, const std::filesystem::path& path) {
    if (region.dimension() != 2) throw DimensionMismatch("PGM export needs a 2D region");
    const std::size_t nx = region.spec().resolution[0], ny = region.spec().resolution[1];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string());
    out << "P5\n" << nx << ' ' << ny << "\n255\n";
    std::vector<char> row(nx);
    for (std::size_t j = ny; j-- > 0;) {
        for (std::size_t i = 0; i < nx; ++i) row[i] = region.inside(j * nx + i) ? char(255) : char(0);
        out.write(row.data(), static_cast<std::streamsize>(nx));
    }
}

void write_mask3d(const GridRegion& region, const std::filesystem::path& bin_path,
                  const std::filesystem::path& header_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw Error("cannot open " + bin_path.string());
    const auto& flags = region.flags();
    bin.write(reinterpret_cast<const char*>(flags.data()), static_cast<std::streamsize>(flags.size()));

    nlohmann::json header = {
        {"format", "morsedef-mask"},
        {"resolution", region.spec().resolution},
        {"lower", region.spec().lower},
        {"upper", region.spec().upper},
        {"order", "axis 0 fastest"},
        {"encoding", "uint8 flags: 1 = g(center) <= level_b, 2 = within inflation of singular set"},
        {"level_b", region.level_b()},
        {"sigma_inflation", region.sigma_inflation()},
        {"data", bin_path.filename().string()},
    };
    std::ofstream hdr(header_path);
    if (!hdr) throw Error("cannot open " + header_path.string());
    hdr << header.dump(2) << '\n';
}

}  // namespace morsedef
