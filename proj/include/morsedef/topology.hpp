#pragma once

#include "morsedef/fields.hpp"
#include "morsedef/flow.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace morsedef {

struct GridSpec {
    Point lower;
    Point upper;
    std::vector<std::size_t> resolution;  // cells per axis

    std::size_t dimension() const { return lower.size(); }
    std::size_t cell_count() const;
    double cell_size(std::size_t axis) const {
        return (upper[axis] - lower[axis]) / static_cast<double>(resolution[axis]);
    }
    double cell_diagonal() const;
    void validate() const;

    static GridSpec cube(std::size_t dim, double lo, double hi, std::size_t res);
};

/// Voxelization of {g ≤ b} ∪ Σ. Cells are indexed with axis 0 fastest.
class GridRegion {
  public:
    static constexpr std::uint8_t kSublevel = 1;  // g(center) ≤ b
    static constexpr std::uint8_t kSigma = 2;     // center within inflation·diagonal of Σ

    GridRegion(GridSpec spec, std::vector<std::uint8_t> flags, double level_b, double sigma_inflation);

    const GridSpec& spec() const { return spec_; }
    std::size_t dimension() const { return spec_.dimension(); }
    double level_b() const { return level_b_; }
    double sigma_inflation() const { return sigma_inflation_; }
    const std::vector<std::uint8_t>& flags() const { return flags_; }

    bool inside(std::size_t cell) const { return flags_[cell] != 0; }
    std::size_t inside_count() const;
    std::vector<std::uint8_t> mask() const;

    Point center(std::size_t cell) const;
    std::optional<std::size_t> cell_of(std::span<const double> x) const;

  private:
    GridSpec spec_;
    std::vector<std::uint8_t> flags_;
    double level_b_;
    double sigma_inflation_;
};

/// Cell membership by center evaluation, plus cells within
/// sigma_inflation·cell-diagonal of Σ. Throws GridTooSmall when an inside cell
/// touches the grid boundary, ResolutionTooCoarse when a Σ cell is isolated,
/// EmptyRegion when nothing is inside.
GridRegion voxelize(const ScalarField& field, double level_b, const GridSpec& spec,
                    double sigma_inflation = 1.0, unsigned workers = 0);

struct BettiReport {
    std::size_t dimension = 2;
    long b0 = 0;
    long b1 = 0;
    long b2 = 0;
    long euler = 0;
    std::string method_note;

    bool operator==(const BettiReport& o) const {
        return b0 == o.b0 && b1 == o.b1 && b2 == o.b2 && euler == o.euler;
    }
};

/// Closed-cell cubical complex of a 2D mask (nx × ny, x fastest).
BettiReport betti_2d(std::span<const std::uint8_t> mask, std::size_t nx, std::size_t ny);
BettiReport betti_2d(const GridRegion& region);

/// Closed-cell cubical complex of a 3D mask (x fastest, then y, then z).
BettiReport betti_3d(std::span<const std::uint8_t> mask, std::size_t nx, std::size_t ny, std::size_t nz);
BettiReport betti_3d(const GridRegion& region);

BettiReport betti(const GridRegion& region);

struct ConsistencyReport {
    std::size_t n_seeds = 0;
    std::size_t passed = 0;
    std::size_t endpoint_failures = 0;
    std::size_t confinement_failures = 0;
    std::size_t flow_failures = 0;
    double endpoint_tolerance = 0.0;
    double fraction() const { return n_seeds == 0 ? 0.0 : static_cast<double>(passed) / n_seeds; }
};

/// Runs retract(·, 1) from n_seeds random sublevel cell centers and checks
/// that endpoints land within 2·sigma_stop + cell-diagonal of Σ and that every
/// trajectory sample stays in inside cells.
ConsistencyReport verify_retraction_consistency(const ScalarField& field, const GridRegion& region,
                                                const FlowConfig& cfg, std::size_t n_seeds,
                                                std::uint64_t seed = 0, unsigned workers = 0);

/// Level b at which {g ≤ b} reaches exactly `radius` along the ray
/// origin + ρ·direction (direction normalized), by bisection.
double calibrate_level_along_ray(const ScalarField& field, const Point& origin, const Point& direction,
                                 double radius);

/// Binary PGM (P5), 255 = inside. Row 0 is the top (largest y).
void write_pgm(const GridRegion& region, const std::filesystem::path& path);
/// Flat byte mask (x fastest) plus a JSON header describing the grid.
void write_mask3d(const GridRegion& region, const std::filesystem::path& bin_path,
                  const std::filesystem::path& header_path);

}  // namespace morsedef
