#pragma once

#include "morsedef/flow.hpp"
#include "morsedef/reduction.hpp"
#include "morsedef/topology.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace morsedef::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
    kOk = 0,
    kVerificationFailed = 1,  // condition fails, flow did not terminate, Betti mismatch
    kInvalidProfile = 2,
    kConfigError = 3,
    kGradientTooSmall = 4,
    kGridError = 5,  // GridTooSmall, ResolutionTooCoarse, EmptyRegion
    kNotTwoDimensional = 6,
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

struct CurveSpec {
    std::string type = "circle";  // circle | trefoil
    Point center = {0.0, 0.0, 0.0};
    double radius = 1.0;
    double scale = 1.0;
};

struct FieldSpec {
    std::string type = "quadrifolium";  // radial | quadrifolium | knot_energy
    Point center;                       // radial
    RadialForm form = RadialForm::neg_inverse_norm;
    CurveSpec curve;                    // knot_energy
    std::size_t quadrature_nodes = kDefaultQuadratureNodes;
    double sigma_tol = kSigmaTol;
};

struct ProfileSpec {
    ProfileKind kind = ProfileKind::power;
    double level_b = -1.0;
    double q = 2.0;
    std::vector<std::pair<double, double>> table;
};

struct CheckSpec {
    std::optional<Point> lower;  // default: grid box
    std::optional<Point> upper;
    std::size_t grid_samples = 100000;
    std::size_t ring_samples = 0;
    double ring_radius = 0.05;
};

struct RetractSpec {
    std::size_t count = 10;
    std::vector<Point> seed_points;  // explicit seeds override random ones
    std::optional<Point> lower;      // seed box, default: grid box
    std::optional<Point> upper;
    double s = 1.0;
    std::optional<double> duration;  // descend for a fixed flow time instead
    bool write_trajectories = true;
};

struct ExpectedBetti {
    long b0 = 0;
    long b1 = 0;
    std::optional<long> b2;
};

struct Calibration {
    Point origin;
    Point direction;
    double radius = 0.2;
};

struct HomologySpec {
    std::optional<double> level_b;  // default: profile level, or calibration
    double sigma_inflation = 1.0;
    std::optional<ExpectedBetti> expected;
    std::optional<Calibration> calibrate;
};

struct RenderSpec {
    std::size_t pixels = 512;
    std::size_t trajectories = 0;
};

struct RunConfig {
    FieldSpec field;
    std::optional<ProfileSpec> profile;
    FlowConfig flow;
    GridSpec grid = GridSpec::cube(2, -1.3, 1.3, 512);
    CheckSpec check;
    RetractSpec retract;
    HomologySpec homology;
    RenderSpec render;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    unsigned workers = 0;
};

RunConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

FieldPtr build_field(const FieldSpec& spec);
DecayProfile build_profile(const ProfileSpec& spec);

/// The field the flow runs on: Φ∘g when a profile is configured, otherwise
/// the base field itself (which must then be nonnegative, e.g. radial norm).
FieldPtr build_flow_field(const RunConfig& cfg);

SamplingPlan build_sampling_plan(const RunConfig& cfg, std::size_t dimension);

/// Subcommands. Each writes its artifacts under cfg.output_dir and returns an
/// exit code; library errors are mapped to the documented codes.
int cmd_check(const RunConfig& cfg, std::ostream& log);
int cmd_retract(const RunConfig& cfg, bool force, std::ostream& log);
int cmd_homology(const RunConfig& cfg, std::ostream& log);
int cmd_render(const RunConfig& cfg, std::ostream& log);

/// Full command-line entry point (argv[0] is the program name).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace morsedef::cli
