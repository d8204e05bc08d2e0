#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqglab/check.hpp"
#include "sqglab/field_core.hpp"
#include "sqglab/quantities.hpp"

namespace sqg {

struct VerifySettings {
    int levelset_count = 5;
    /// Radii of the local-energy cylinders; centers are fixed fractions of the box.
    std::vector<double> local_radii{0.6, 0.8, 1.0};
    double local_tol = 1e-6;
    double energy_tol = 1e-8;
    double poincare_cap = 1e3;
    double probe_cap = 1e4;
    /// Decay knobs (existence-quantified constants).
    double K = 2.0, eps = 1e-3, delta = 1e-2, mean_tol = 1e-8;
    int j0 = 1;
    double excess_c = 1.0, eps0 = 1.0;
    double tail_rho = 0.5;
};

struct FlowSettings {
    double ball_radius = 0.25;
    double eps1 = 0.05;
    double h_max = 0.01;
    int levels = 2;
};

struct CoverSettings {
    /// Threshold on the normalized ball dissipation.
    double delta0 = 1e-3;
    std::vector<double> scales{0.1, 0.2, 0.4};
    double anisotropy = 1.0;
    /// Extra delta0 values for the sensitivity sweep.
    std::vector<double> sweep_delta0;
};

struct RunConfig {
    std::string name = "custom";
    SimulationConfig sim;
    double q = 20.0;
    double mu = 0.25;
    /// Subset of simulate, extend, quantify, verify, cover, in pipeline order.
    std::vector<std::string> stages{"simulate", "extend", "quantify", "verify", "cover"};
    VerifySettings verify;
    FlowSettings flow;
    CoverSettings cover;
    /// Not part of the hash.
    std::string output_dir;

    Params params() const { return Params::preset(sim.alpha, q, mu); }
    /// Throws std::invalid_argument with every violated constraint.
    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// TOML text to config; unknown keys are errors.
RunConfig parse_config(const std::string& toml_text);
RunConfig load_config(const std::string& path);
std::string config_toml(const RunConfig& c);

/// Sorted-key JSON of everything that affects results (output_dir excluded).
std::string canonical_json(const RunConfig& c);
std::string sha256_hex(const std::string& data);
std::string config_hash(const RunConfig& c);
std::string grid_hash(const Grid& g);

std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

struct RunOptions {
    int threads = 1;
    bool allow_quartic = false;
    /// Progress lines go to stderr.
    bool verbose = true;
};

struct RunOutcome {
    int exit_code = 0;
    std::vector<CheckReport> reports;
    std::vector<std::string> skipped;
};

class StageError : public std::runtime_error {
public:
    StageError(const std::string& stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage(stage) {}
    std::string stage;
};

/// Runs the configured stages into config.output_dir. Writes manifest.json,
/// reports.jsonl, summary.txt and stage artifacts; timings go to timing.json.
/// A lockfile guards the directory; on error a FAILED marker is left next to
/// the partial artifacts and StageError is thrown.
RunOutcome run_pipeline(const RunConfig& config, const RunOptions& opt = {});

/// Runs tasks on up to `threads` workers; results keep declaration order.
std::vector<std::vector<CheckReport>> run_parallel(const std::vector<std::function<std::vector<CheckReport>()>>& tasks,
                                                   int threads);

}  // namespace sqg
