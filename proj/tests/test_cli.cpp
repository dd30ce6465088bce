#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "morsedef/cli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace morsedef;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "morsedef_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, json cfg) {
    cfg["output_dir"] = (dir / "out").string();
    const fs::path path = dir / "config.json";
    std::ofstream(path) << cfg.dump(2);
    return path;
}

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "morsedef");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

json radial_check_config() {
    json table = json::array();
    for (int i = 0; i <= 1100; ++i) {
        const double y = -12.0 + 11.0 * i / 1100.0;
        table.push_back({y, 2.0 / (y * y)});
    }
    return {{"field", {{"type", "radial"}, {"center", {0.0, 0.0}}, {"form", "neg_inverse_norm"}}},
            {"profile", {{"kind", "custom"}, {"level_b", -1.0}, {"table", table}}},
            {"grid", {{"lower", {-1.0, -1.0}}, {"upper", {1.0, 1.0}}, {"resolution", 64}}},
            {"check", {{"grid_samples", 10000}}}};
}

json quadrifolium_config() {
    return {{"field", {{"type", "quadrifolium"}}},
            {"profile", {{"kind", "power"}, {"level_b", -1e4}, {"q", "13/12"}}},
            {"grid", {{"lower", {-1.3, -1.3}}, {"upper", {1.3, 1.3}}, {"resolution", 256}}},
            {"check", {{"grid_samples", 20000}}},
            {"retract", {{"count", 3}}},
            {"homology", {{"expected", {{"b0", 1}, {"b1", 4}}}}},
            {"seed", 5}};
}

json radial_norm_config() {
    return {{"field", {{"type", "radial"}, {"center", {0.0, 0.0}}, {"form", "norm"}}},
            {"grid", {{"lower", {-2.0, -2.0}}, {"upper", {2.0, 2.0}}, {"resolution", 32}}},
            {"retract", {{"count", 10}}},
            {"flow", {{"precision", "double"}}}};
}

}  // namespace

TEST_CASE("config round-trips through serialization") {
    const auto cfg = cli::parse_config(quadrifolium_config());
    const json once = cli::to_json(cfg);
    const json twice = cli::to_json(cli::parse_config(once));
    CHECK(once == twice);
    CHECK(cfg.profile->q == doctest::Approx(13.0 / 12.0));
    CHECK(cfg.grid.resolution == std::vector<std::size_t>{256, 256});
    CHECK(cli::to_json(cli::parse_config(radial_check_config())) ==
          cli::to_json(cli::parse_config(cli::to_json(cli::parse_config(radial_check_config())))));
}

TEST_CASE("config errors") {
    json bad = quadrifolium_config();
    bad["field"]["typo"] = 1;
    CHECK_THROWS_AS(cli::parse_config(bad), cli::ConfigError);
    bad = quadrifolium_config();
    bad["field"]["type"] = "banana";
    CHECK_THROWS_AS(cli::parse_config(bad), cli::ConfigError);
    bad = quadrifolium_config();
    bad["profile"]["q"] = "thirteen";
    CHECK_THROWS_AS(cli::parse_config(bad), cli::ConfigError);
    bad = quadrifolium_config();
    bad["grid"]["resolution"] = 4;
    CHECK_THROWS_AS(cli::parse_config(bad), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config(json{{"profile", {{"level_b", -1}}}}), cli::ConfigError);
}

TEST_CASE("help lists every subcommand") {
    const auto r = run_cli({"--help"});
    CHECK(r.code == 0);
    for (const char* sub : {"check", "retract", "homology", "render"}) CHECK(r.out.find(sub) != std::string::npos);
    const auto sub = run_cli({"retract", "--help"});
    CHECK(sub.code == 0);
    for (const char* flag : {"--seed", "--workers", "--force", "--out", "--config"}) {
        CHECK(sub.out.find(flag) != std::string::npos);
    }
    CHECK(run_cli({}).code == cli::kConfigError);
    CHECK(run_cli({"check"}).code == cli::kConfigError);
}

TEST_CASE("check exit codes") {
    const auto dir = scratch("check");
    auto r = run_cli({"check", write_config(dir, radial_check_config()).string()});
    CHECK(r.code == cli::kOk);
    const json report = json::parse(slurp(dir / "out" / "check_report.json"));
    CHECK(report.at("holds") == true);
    CHECK(report.at("worst_margin").get<double>() == doctest::Approx(1.0).epsilon(1e-3));
    for (const char* key : {"field_name", "profile", "sample_count", "worst_margin", "worst_point", "holds",
                            "sampling_plan"}) {
        CHECK(report.contains(key));
    }

    r = run_cli({"check", write_config(dir, quadrifolium_config()).string()});
    CHECK(r.code == cli::kOk);

    json q1 = quadrifolium_config();
    q1["profile"]["q"] = 1;
    r = run_cli({"check", write_config(dir, q1).string()});
    CHECK(r.code == cli::kInvalidProfile);

    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(run_cli({"check", (dir / "broken.json").string()}).code == cli::kConfigError);
    CHECK(run_cli({"check", (dir / "missing.json").string()}).code == cli::kConfigError);

    // Zero margin (φ = y⁻² on −1/‖x‖) fails the strict inequality.
    json zero = radial_check_config();
    zero["profile"] = {{"kind", "power"}, {"level_b", -1.0}, {"q", 2}};
    CHECK(run_cli({"check", write_config(dir, zero).string()}).code == cli::kVerificationFailed);
}

TEST_CASE("retract writes trajectories and endpoints") {
    const auto dir = scratch("retract");
    const auto r = run_cli({"retract", write_config(dir, radial_norm_config()).string()});
    CHECK(r.code == cli::kOk);
    CHECK(fs::exists(dir / "out" / "traj_00009.csv"));
    const std::string endpoints = slurp(dir / "out" / "endpoints.csv");
    CHECK(endpoints.rfind("seed_x1,seed_x2,end_x1,end_x2,f_end,sigma_distance,termination\n", 0) == 0);
    CHECK(line_count(dir / "out" / "endpoints.csv") == 11);
    std::istringstream rows(endpoints);
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
        REQUIRE(cols.size() == 7);
        CHECK(std::stod(cols[5]) <= 2e-6);
        CHECK(cols[6] == "reached_sigma_stop");
    }
    CHECK(slurp(dir / "out" / "traj_00000.csv").rfind("t,x1,x2,f\n", 0) == 0);
}

TEST_CASE("retract with zero duration") {
    const auto dir = scratch("retract_zero");
    json cfg = radial_norm_config();
    cfg["retract"]["duration"] = 0.0;
    CHECK(run_cli({"retract", write_config(dir, cfg).string()}).code == cli::kOk);
    for (int i = 0; i < 10; ++i) {
        std::ostringstream name;
        name << "traj_0000" << i << ".csv";
        CHECK(line_count(dir / "out" / name.str()) == 2);
    }
}

TEST_CASE("retract exit code on a small gradient") {
    const auto dir = scratch("retract_alpha");
    json cfg = radial_norm_config();
    cfg["flow"]["alpha"] = 2.0;
    CHECK(run_cli({"retract", write_config(dir, cfg).string()}).code == cli::kGradientTooSmall);
}

TEST_CASE("retract refuses a failing condition unless forced") {
    const auto dir = scratch("retract_force");
    json cfg = radial_check_config();
    cfg["profile"] = {{"kind", "power"}, {"level_b", -1.0}, {"q", 2}};
    cfg["grid"] = {{"lower", {-0.9, -0.9}}, {"upper", {0.9, 0.9}}, {"resolution", 16}};
    cfg["retract"] = {{"count", 3}};
    const auto path = write_config(dir, cfg);
    CHECK(run_cli({"retract", path.string()}).code == cli::kVerificationFailed);
    // ‖∇f‖ = 1 exactly, so the forced flow runs at the α boundary without tripping the 1% slack.
    CHECK(run_cli({"retract", path.string(), "--force"}).code == cli::kOk);
}

TEST_CASE("homology exit codes") {
    const auto dir = scratch("homology");
    auto r = run_cli({"homology", write_config(dir, quadrifolium_config()).string()});
    CHECK(r.code == cli::kOk);
    const json doc = json::parse(slurp(dir / "out" / "betti.json"));
    CHECK(doc.at("b0") == 1);
    CHECK(doc.at("b1") == 4);
    CHECK(doc.at("matches_expected") == true);
    CHECK(fs::exists(dir / "out" / "mask.pgm"));

    json wrong = quadrifolium_config();
    wrong["homology"]["expected"]["b1"] = 3;
    CHECK(run_cli({"homology", write_config(dir, wrong).string()}).code == cli::kVerificationFailed);

    json small = quadrifolium_config();
    small["grid"] = {{"lower", {-0.5, -0.5}}, {"upper", {0.5, 0.5}}, {"resolution", 64}};
    CHECK(run_cli({"homology", write_config(dir, small).string()}).code == cli::kGridError);

    json knot = {{"field", {{"type", "knot_energy"}, {"curve", {{"type", "circle"}}}, {"quadrature_nodes", 64}}},
                 {"grid", {{"lower", {-1.5, -1.5, -1.5}}, {"upper", {1.5, 1.5, 1.5}}, {"resolution", 40}}},
                 {"homology",
                  {{"calibrate", {{"origin", {1.0, 0.0, 0.0}}, {"direction", {1.0, 0.0, 0.0}}, {"radius", 0.2}}},
                   {"expected", {{"b0", 1}, {"b1", 1}, {"b2", 0}}}}}};
    CHECK(run_cli({"homology", write_config(dir, knot).string()}).code == cli::kOk);
    CHECK(fs::exists(dir / "out" / "mask.bin"));
    CHECK(fs::exists(dir / "out" / "mask.json"));
}

TEST_CASE("render outputs") {
    const auto dir = scratch("render");
    json cfg = quadrifolium_config();
    cfg["render"] = {{"pixels", 96}, {"trajectories", 2}};
    CHECK(run_cli({"render", write_config(dir, cfg).string()}).code == cli::kOk);
    CHECK(slurp(dir / "out" / "render.pgm").rfind("P5\n96 96\n255\n", 0) == 0);
    const std::string svg = slurp(dir / "out" / "render.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 3);

    json radial = radial_norm_config();
    radial["render"] = {{"pixels", 64}};
    CHECK(run_cli({"render", write_config(dir, radial).string()}).code == cli::kOk);

    json knot = {{"field", {{"type", "knot_energy"}}}};
    CHECK(run_cli({"render", write_config(dir, knot).string()}).code == cli::kNotTwoDimensional);
}

TEST_CASE("identical config and seed give identical outputs") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    json cfg = quadrifolium_config();
    cfg["check"]["ring_samples"] = 2000;
    const auto pa = write_config(a, cfg), pb = write_config(b, cfg);
    for (const char* sub : {"check", "retract"}) {
        REQUIRE(run_cli({sub, pa.string(), "--workers", "1"}).code == 0);
        REQUIRE(run_cli({sub, pb.string(), "--workers", "3"}).code == 0);
    }
    for (const char* file : {"check_report.json", "endpoints.csv", "traj_00000.csv", "traj_00002.csv"}) {
        CAPTURE(file);
        CHECK(slurp(a / "out" / file) == slurp(b / "out" / file));
    }
    // A different seed changes the sampled seeds.
    REQUIRE(run_cli({"retract", pb.string(), "--seed", "6"}).code == 0);
    CHECK(slurp(a / "out" / "endpoints.csv") != slurp(b / "out" / "endpoints.csv"));
}

TEST_CASE("--out overrides the output directory") {
    const auto dir = scratch("out_override");
    const auto r = run_cli({"check", write_config(dir, radial_check_config()).string(), "--out",
                            (dir / "elsewhere").string()});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "elsewhere" / "check_report.json"));
    CHECK(!fs::exists(dir / "out"));
}
