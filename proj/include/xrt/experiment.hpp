#pragma once

#include "xrt/verify.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace xrt {

std::string artifact_version();

struct ExperimentConfig {
    // {"builtin": name, "params": {...}, "mollify": alpha} or {"file": path}
    nlohmann::json metric = {{"builtin", "euclidean"}};
    GridSpec grid{64, 64, 128};
    int rays_boundary = 64;
    int rays_angles = 64;
    std::string basis = "pixel";   // pixel (scalar) or edge (one-form)
    int basis_n = 24;
    std::string target = "bowl";   // one, bowl, bump | dx1, dp, poly
    double lambda = 1e-6;
    double invert_bound = 0.05;
    std::vector<std::string> checks = {"pestov", "commutator", "cancellation", "santalo"};   // or mollify
    std::vector<std::string> conditions = {"B1", "B2", "B3"};
    std::vector<int> alphas = {4, 8, 16, 32};
    std::map<std::string, double> tolerances = {{"pestov", 0.02},  {"commutator", 0.02}, {"cancellation", 0.005},
                                                {"santalo", 0.005}, {"santalo_bump", 0.02}, {"mollify_noise", 0.05}};
    GridSpec b1_grid{32, 32, 64};
    int pairs = 200;
    bool save_matrix = false;
    std::uint64_t seed = 1;
    bool deterministic = false;
    std::string out = "xrt_out";
    std::string golden;
};

// Unknown keys and out-of-range values throw UsageError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);
void validate(const ExperimentConfig& c);
// Hex FNV-1a of the canonical JSON of the config, excluding the output directory.
std::string config_hash(const ExperimentConfig& c);

// "64x64x128" and "64x32"
GridSpec parse_grid(const std::string& s);
std::pair<int, int> parse_rays(const std::string& s);

// A malformed or unreadable metric file is a UsageError.
MetricField make_metric(const nlohmann::json& spec);

bool is_one_form_target(const std::string& name);
ScalarTarget scalar_target(const std::string& name);
OneFormTarget one_form_target(const std::string& name);

enum ExitCode { exit_pass = 0, exit_fail = 1, exit_usage = 2, exit_internal = 3 };

// Each command writes JSON + CSV (and text where useful) under c.out and returns an ExitCode.
int cmd_simplicity(const ExperimentConfig& c, std::ostream& log);
int cmd_verify(const ExperimentConfig& c, std::ostream& log);
int cmd_transform(const ExperimentConfig& c, std::ostream& log);
int cmd_invert(const ExperimentConfig& c, std::ostream& log);
int cmd_mollify_study(const ExperimentConfig& c, std::ostream& log);

// Maps UsageError and JSON errors to exit_usage, any other exception to exit_internal.
int run_guarded(const std::function<int()>& body, std::ostream& err);

} // namespace xrt
