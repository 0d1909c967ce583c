#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace rmt::cli {

// Batch experiment runner configuration. Flags override config-file fields,
// which override defaults.
struct ExperimentConfig {
    std::string command;  // spectrum | equivalent | rate | concentration | regression | predict
    std::string model_path;
    nlohmann::json params = nlohmann::json::object();
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output_path = ".";
};

// exit status: 0 success, 1 config/model error, 2 numerical failure
int run(const ExperimentConfig& config);

// Full command-line entry (parses flags, optional --config file, dispatches).
int main_entry(int argc, const char* const* argv);

}  // namespace rmt::cli
