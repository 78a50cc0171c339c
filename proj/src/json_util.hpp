#pragma once

// Internal helpers shared by the modules that read configs; not installed.

#include <cstdint>
#include <string>

#include "json.hpp"
#include "neurodecode/dataset.hpp"
#include "neurodecode/network.hpp"

namespace neurodecode {
namespace jsonutil {

// Reads an integer field as an unsigned count, rejecting negatives and
// non-integers; returns `fallback` when the key is absent.
std::uint64_t get_count(const nlohmann::json& j, const char* key, std::uint64_t fallback);
double get_real(const nlohmann::json& j, const char* key, double fallback);
nlohmann::json parse_json(const std::string& text, const char* what);

// Shortest decimal form that parses back to the identical double.
std::string format_double(double x);

}  // namespace jsonutil

SynthConfig synth_config_from_json_value(const nlohmann::json& j);
nlohmann::json synth_config_to_json_value(const SynthConfig& config);
nlohmann::json train_report_to_json_value(const TrainReport& report);
TrainReport train_report_from_json_value(const nlohmann::json& j);

}  // namespace neurodecode
