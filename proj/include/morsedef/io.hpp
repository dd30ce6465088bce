#pragma once

#include "morsedef/flow.hpp"
#include "morsedef/reduction.hpp"
#include "morsedef/topology.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace morsedef {

/// Shortest decimal text that round-trips the double.
std::string format_number(double v);

nlohmann::json to_json(const DecayProfile& profile);
nlohmann::json to_json(const SamplingPlan& plan);
nlohmann::json to_json(const ConditionReport& report);
nlohmann::json to_json(const FlowConfig& cfg);
nlohmann::json to_json(const GridSpec& spec);
nlohmann::json to_json(const BettiReport& report);
nlohmann::json to_json(const LipschitzReport& report);
nlohmann::json to_json(const ConsistencyReport& report);

/// Columns: t, x1..xn, f.
void write_trajectory_csv(const FlowTrajectory& traj, const std::filesystem::path& path);
std::string trajectory_csv(const FlowTrajectory& traj);

/// Columns: seed_x1..n, end_x1..n, f_end, sigma_distance, termination.
std::string batch_csv(const std::vector<BatchEntry>& entries, std::size_t dimension);
void write_batch_csv(const std::vector<BatchEntry>& entries, std::size_t dimension,
                     const std::filesystem::path& path);

void write_json(const nlohmann::json& doc, const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace morsedef
