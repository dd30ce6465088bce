#include "morsedef/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace morsedef {

namespace {

nlohmann::json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

nlohmann::json to_json(const DecayProfile& profile) {
    nlohmann::json j = {{"kind", std::string(to_string(profile.kind()))},
                        {"level_b", profile.level_b()},
                        {"level_cap", profile.level_cap()}};
    if (profile.kind() == ProfileKind::power) j["q"] = profile.exponent();
    if (profile.kind() == ProfileKind::custom) {
        j["tail_exponent"] = profile.exponent();
        nlohmann::json table = nlohmann::json::array();
        for (const auto& [y, r] : profile.table()) table.push_back({y, r});
        j["table"] = table;
    }
    return j;
}

nlohmann::json to_json(const SamplingPlan& plan) {
    return {{"lower", plan.lower},
            {"upper", plan.upper},
            {"grid_samples", plan.grid_samples},
            {"ring_samples", plan.ring_samples},
            {"ring_radius", plan.ring_radius},
            {"seed", plan.seed}};
}

nlohmann::json to_json(const ConditionReport& report) {
    return {{"field_name", report.field_name},
            {"profile", to_json(report.profile)},
            {"sample_count", report.sample_count},
            {"skipped_count", report.skipped_count},
            {"worst_margin", number_or_null(report.worst_margin)},
            {"worst_point", report.worst_point},
            {"holds", report.holds},
            {"sampling_plan", to_json(report.plan)}};
}

nlohmann::json to_json(const FlowConfig& cfg) {
    return {{"rel_tol", cfg.rel_tol},       {"abs_tol", cfg.abs_tol},
            {"max_steps", cfg.max_steps},   {"sigma_stop", cfg.sigma_stop},
            {"alpha", cfg.alpha},           {"precision", std::string(to_string(cfg.precision))}};
}

nlohmann::json to_json(const GridSpec& spec) {
    return {{"lower", spec.lower}, {"upper", spec.upper}, {"resolution", spec.resolution}};
}

nlohmann::json to_json(const BettiReport& report) {
    nlohmann::json j = {{"dimension", report.dimension},
                        {"b0", report.b0},
                        {"b1", report.b1},
                        {"euler", report.euler},
                        {"method_note", report.method_note}};
    if (report.dimension == 3) j["b2"] = report.b2;
    return j;
}

nlohmann::json to_json(const LipschitzReport& report) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : report.pairs) {
        pairs.push_back({{"s1", p.s1}, {"s2", p.s2}, {"distance", p.distance},
                         {"bound", p.bound}, {"margin", p.margin}});
    }
    return {{"x", report.x},
            {"f_start", report.f_start},
            {"alpha", report.alpha},
            {"slack", report.slack},
            {"worst_margin", number_or_null(report.worst_margin())},
            {"holds", report.holds()},
            {"pairs", pairs}};
}

nlohmann::json to_json(const ConsistencyReport& report) {
    return {{"n_seeds", report.n_seeds},
            {"passed", report.passed},
            {"fraction", report.fraction()},
            {"endpoint_failures", report.endpoint_failures},
            {"confinement_failures", report.confinement_failures},
            {"flow_failures", report.flow_failures},
            {"endpoint_tolerance", report.endpoint_tolerance}};
}

std::string trajectory_csv(const FlowTrajectory& traj) {
    std::ostringstream os;
    const std::size_t n = traj.samples.empty() ? 0 : traj.samples.front().x.size();
    os << 't';
    for (std::size_t i = 1; i <= n; ++i) os << ",x" << i;
    os << ",f\n";
    for (const auto& s : traj.samples) {
        os << format_number(s.t);
        for (double c : s.x) os << ',' << format_number(c);
        os << ',' << format_number(s.f) << '\n';
    }
    return os.str();
}

void write_trajectory_csv(const FlowTrajectory& traj, const std::filesystem::path& path) {
    write_text(trajectory_csv(traj), path);
}

std::string batch_csv(const std::vector<BatchEntry>& entries, std::size_t dimension) {
    std::ostringstream os;
    for (std::size_t i = 1; i <= dimension; ++i) os << "seed_x" << i << ',';
    for (std::size_t i = 1; i <= dimension; ++i) os << "end_x" << i << ',';
    os << "f_end,sigma_distance,termination\n";
    for (const auto& e : entries) {
        for (double c : e.seed) os << format_number(c) << ',';
        if (e.result) {
            for (double c : e.result->endpoint) os << format_number(c) << ',';
            os << format_number(e.result->f_end) << ',' << format_number(e.result->sigma_distance) << ','
               << to_string(e.terminated) << '\n';
        } else {
            for (std::size_t i = 0; i < dimension; ++i) os << "nan,";
            os << "nan,nan," << (e.gradient_too_small ? "gradient_too_small" : to_string(e.terminated))
               << '\n';
        }
    }
    return os.str();
}

void write_batch_csv(const std::vector<BatchEntry>& entries, std::size_t dimension,
                     const std::filesystem::path& path) {
    write_text(batch_csv(entries, dimension), path);
}

void write_json(const nlohmann::json& doc, const std::filesystem::path& path) {
    write_text(doc.dump(2) + "\n", path);
}

void write_text(const std::string& text, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
}

}  // namespace morsedef
