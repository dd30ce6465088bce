#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "morsedef/reduction.hpp"
#include "morsedef/topology.hpp"

#include "json.hpp"
#include "support/cubical_oracle.hpp"

#include <filesystem>
#include <numbers>
#include <fstream>
#include <random>

using namespace morsedef;

namespace {

std::vector<std::uint8_t> random_mask(std::mt19937_64& rng, std::size_t cells, double density) {
    std::bernoulli_distribution fill(density);
    std::vector<std::uint8_t> m(cells);
    for (auto& v : m) v = fill(rng) ? 1 : 0;
    return m;
}

std::filesystem::path scratch_dir(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "morsedef_tests" / name;
    std::filesystem::create_directories(dir);
    return dir;
}

FieldPtr constant_bowl_far_from_sigma() {
    FunctionFieldSpec spec;
    spec.name = "bowl";
    spec.dimension = 2;
    spec.value_and_gradient = [](std::span<const double> x, std::span<double> g) {
        if (!g.empty()) {
            g[0] = 2 * x[0];
            g[1] = 2 * x[1];
        }
        return x[0] * x[0] + x[1] * x[1];
    };
    spec.singular_set = make_point_set({{10.0, 10.0}});
    return make_function_field(spec);
}

}  // namespace

TEST_CASE("2D reference masks") {
    const std::vector<std::uint8_t> block(12, 1);
    auto r = betti_2d(block, 4, 3);
    CHECK(r.b0 == 1);
    CHECK(r.b1 == 0);
    CHECK(r.euler == 1);

    // One-cell-thick 4x4 square annulus.
    std::vector<std::uint8_t> ring(16, 1);
    ring[1 + 4 * 1] = ring[2 + 4 * 1] = ring[1 + 4 * 2] = ring[2 + 4 * 2] = 0;
    r = betti_2d(ring, 4, 4);
    CHECK(r.b0 == 1);
    CHECK(r.b1 == 1);
    CHECK(r.euler == 0);

    // Two cells meeting at a corner: closed cells share a vertex.
    const std::vector<std::uint8_t> diagonal = {1, 0, 0, 1};
    r = betti_2d(diagonal, 2, 2);
    CHECK(r.b0 == 1);
    CHECK(r.b1 == 0);
    CHECK(r.euler == 1);

    const std::vector<std::uint8_t> empty(9, 0);
    r = betti_2d(empty, 3, 3);
    CHECK(r.b0 == 0);
    CHECK(r.b1 == 0);
}

TEST_CASE("3D reference masks") {
    const std::vector<std::uint8_t> block(27, 1);
    auto r = betti_3d(block, 3, 3, 3);
    CHECK(r.b0 == 1);
    CHECK(r.b1 == 0);
    CHECK(r.b2 == 0);
    CHECK(r.euler == 1);

    std::vector<std::uint8_t> shell(27, 1);
    shell[13] = 0;
    r = betti_3d(shell, 3, 3, 3);
    CHECK(r.b0 == 1);
    CHECK(r.b1 == 0);
    CHECK(r.b2 == 1);
    CHECK(r.euler == 2);

    // Square ring of 8 cells in one layer: a solid torus.
    std::vector<std::uint8_t> torus(27, 0);
    for (std::size_t i = 0; i < 9; ++i) torus[i] = i == 4 ? 0 : 1;
    r = betti_3d(torus, 3, 3, 3);
    CHECK(r.b0 == 1);
    CHECK(r.b1 == 1);
    CHECK(r.b2 == 0);
    CHECK(r.euler == 0);
}

TEST_CASE("oracle agrees on its own reference masks") {
    std::vector<std::uint8_t> shell(27, 1);
    shell[13] = 0;
    const auto o = oracle::cubical_betti(shell, {3, 3, 3});
    CHECK(o.b0 == 1);
    CHECK(o.b1 == 0);
    CHECK(o.b2 == 1);
    CHECK(o.euler == 2);
}

TEST_CASE("2D Betti numbers match the boundary-rank oracle") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t nx = 2 + rng() % 7, ny = 2 + rng() % 7;
        const auto mask = random_mask(rng, nx * ny, 0.3 + 0.4 * (trial % 3) / 2.0);
        const auto r = betti_2d(mask, nx, ny);
        const auto o = oracle::cubical_betti(mask, {nx, ny});
        CAPTURE(trial);
        CHECK(r.b0 == o.b0);
        CHECK(r.b1 == o.b1);
        CHECK(r.euler == o.euler);
        CHECK(r.euler == r.b0 - r.b1);
    }
}

TEST_CASE("3D Betti numbers match the boundary-rank oracle") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t nx = 2 + rng() % 5, ny = 2 + rng() % 5, nz = 2 + rng() % 5;
        const auto mask = random_mask(rng, nx * ny * nz, 0.35 + 0.15 * (trial % 4));
        const auto r = betti_3d(mask, nx, ny, nz);
        const auto o = oracle::cubical_betti(mask, {nx, ny, nz});
        CAPTURE(trial);
        CHECK(r.b0 == o.b0);
        CHECK(r.b1 == o.b1);
        CHECK(r.b2 == o.b2);
        CHECK(r.euler == o.euler);
        CHECK(r.euler == r.b0 - r.b1 + r.b2);
    }
}

TEST_CASE("grid spec validation") {
    CHECK_NOTHROW(GridSpec::cube(2, -1.0, 1.0, 8).validate());
    CHECK_THROWS_AS(GridSpec::cube(2, -1.0, 1.0, 4).validate(), PreconditionViolation);
    CHECK_THROWS_AS(GridSpec::cube(2, 1.0, -1.0, 16).validate(), PreconditionViolation);
    const auto g = GridSpec::cube(3, 0.0, 2.0, 10);
    CHECK(g.cell_count() == 1000);
    CHECK(g.cell_size(1) == doctest::Approx(0.2));
    CHECK(g.cell_diagonal() == doctest::Approx(0.2 * std::sqrt(3.0)));
}

TEST_CASE("radial disk voxelization") {
    auto g = make_radial_field({0.0, 0.0}, RadialForm::neg_inverse_norm);
    const auto spec = GridSpec::cube(2, -1.0, 1.0, 128);
    const auto region = voxelize(*g, -2.0, spec);
    const double cell_area = std::pow(2.0 / 128, 2);
    CHECK(region.inside_count() * cell_area == doctest::Approx(std::numbers::pi / 4.0).epsilon(0.02));
    for (std::size_t c = 0; c < spec.cell_count(); ++c) {
        if (!region.inside(c)) continue;
        CHECK(norm(region.center(c)) <= 0.5 + spec.cell_diagonal());
    }
    const auto b = betti(region);
    CHECK(b.b0 == 1);
    CHECK(b.b1 == 0);
    CHECK(region.cell_of(Point{0.0, 0.0}).has_value());
    CHECK(region.inside(*region.cell_of(Point{0.0, 0.0})));
    CHECK(!region.cell_of(Point{2.0, 0.0}).has_value());
}

TEST_CASE("voxelization errors") {
    auto g = make_radial_field({0.0, 0.0}, RadialForm::neg_inverse_norm);
    CHECK_THROWS_AS(voxelize(*g, -0.5, GridSpec::cube(2, -1.0, 1.0, 32)), GridTooSmall);
    CHECK_THROWS_AS(voxelize(*constant_bowl_far_from_sigma(), -1.0, GridSpec::cube(2, -1.0, 1.0, 32)),
                    EmptyRegion);
    // A point singularity with a deflated marker and an invisible sublevel set.
    auto off_center = make_radial_field({0.01, 0.0}, RadialForm::neg_inverse_norm);
    CHECK_THROWS_AS(voxelize(*off_center, -1e6, GridSpec::cube(2, -1.0, 1.0, 9), 0.1), ResolutionTooCoarse);
    CHECK_THROWS_AS(voxelize(*g, -2.0, GridSpec::cube(3, -1.0, 1.0, 16)), DimensionMismatch);
}

TEST_CASE("quadrifolium region has four independent loops") {
    auto g = make_quadrifolium_field();
    for (double b : {-1e4, -1e6}) {
        const auto region = voxelize(*g, b, GridSpec::cube(2, -1.3, 1.3, 512));
        const auto r = betti(region);
        CAPTURE(b);
        CHECK(r.b0 == 1);
        CHECK(r.b1 == 4);
    }
}

TEST_CASE("knot-energy tube around the unit circle is a solid torus") {
    auto G = make_knot_energy_field(CurveEmbedding::circle(), 64);
    const double b = calibrate_level_along_ray(*G, {1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, 0.25);
    CHECK(G->value(Point{1.25, 0.0, 0.0}) == doctest::Approx(b).epsilon(1e-9));
    const auto region = voxelize(*G, b, GridSpec::cube(3, -1.5, 1.5, 48));
    const auto r = betti(region);
    CHECK(r.b0 == 1);
    CHECK(r.b1 == 1);
    CHECK(r.b2 == 0);
}

TEST_CASE("voxelization is independent of the worker count") {
    auto g = make_quadrifolium_field();
    const auto spec = GridSpec::cube(2, -1.3, 1.3, 128);
    const auto a = voxelize(*g, -1e4, spec, 1.0, 1);
    const auto b = voxelize(*g, -1e4, spec, 1.0, 4);
    CHECK(a.flags() == b.flags());
}

TEST_CASE("retraction consistency on the radial oracle") {
    auto g = make_radial_field({0.0, 0.0}, RadialForm::neg_inverse_norm);
    auto f = transform(g, DecayProfile::power(-1.0, 2.0));
    const auto region = voxelize(*g, -1.0, GridSpec::cube(2, -1.5, 1.5, 64));
    FlowConfig cfg;
    const auto report = verify_retraction_consistency(*f, region, cfg, 100, 1);
    CHECK(report.n_seeds == 100);
    CHECK(report.passed == 100);
    CHECK(report.fraction() == 1.0);
    CHECK(report.endpoint_tolerance == doctest::Approx(2 * cfg.sigma_stop + region.spec().cell_diagonal()));
}

TEST_CASE("region exports") {
    auto g = make_radial_field({0.0, 0.0}, RadialForm::neg_inverse_norm);
    const auto dir = scratch_dir("exports");
    const auto region2 = voxelize(*g, -2.0, GridSpec::cube(2, -1.0, 1.0, 16));
    write_pgm(region2, dir / "mask.pgm");
    std::ifstream pgm(dir / "mask.pgm", std::ios::binary);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    pgm >> magic >> w >> h >> maxval;
    CHECK(magic == "P5");
    CHECK(w == 16);
    CHECK(h == 16);
    CHECK(maxval == 255);
    CHECK(std::filesystem::file_size(dir / "mask.pgm") > 256);

    auto G = make_radial_field({0.0, 0.0, 0.0}, RadialForm::neg_inverse_norm);
    const auto region3 = voxelize(*G, -2.0, GridSpec::cube(3, -1.0, 1.0, 12));
    write_mask3d(region3, dir / "mask.bin", dir / "mask.json");
    CHECK(std::filesystem::file_size(dir / "mask.bin") == 12 * 12 * 12);
    std::ifstream header(dir / "mask.json");
    const auto doc = nlohmann::json::parse(header);
    CHECK(doc.at("resolution") == nlohmann::json({12, 12, 12}));
}
