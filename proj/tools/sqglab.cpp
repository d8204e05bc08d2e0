// sqglab command line: simulate, extend, quantify, verify, cover, run, presets.
// Exit codes: 0 all checks pass, 1 an inequality failed, 2 only hypothesis
// failures, 3 bad configuration or usage, 4 a stage raised an error.

#include <CLI11/CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>

#include "sqglab/harness.hpp"

namespace {

struct Common {
    std::string config;
    std::string out;
    std::int64_t seed = -1;
    int threads = 1;
    bool allow_quartic = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "TOML config file or preset name")->required();
    cmd->add_option("--out", c.out, "output directory (default: out)");
    cmd->add_option("--seed", c.seed, "override initial.seed")->check(CLI::NonNegativeNumber);
    cmd->add_option("--threads", c.threads, "worker threads for the verify stage")->check(CLI::PositiveNumber);
    cmd->add_flag("--allow-quartic", c.allow_quartic, "run the O(N^4) Poincare checks above n = 64");
    cmd->add_flag("--quiet", c.quiet, "no progress lines");
}

sqg::RunConfig resolve(const Common& c) {
    sqg::RunConfig cfg;
    if (std::filesystem::exists(c.config)) {
        cfg = sqg::load_config(c.config);
    } else {
        const auto names = sqg::preset_names();
        if (std::find(names.begin(), names.end(), c.config) == names.end())
            throw sqg::ConfigError("no config file or preset named \"" + c.config + "\"");
        cfg = sqg::preset(c.config);
    }
    if (c.seed >= 0) cfg.sim.initial.seed = static_cast<std::uint64_t>(c.seed);
    cfg.output_dir = c.out.empty() ? "out" : c.out;
    cfg.validate();
    return cfg;
}

int execute(const Common& c, const std::vector<std::string>& stages) {
    sqg::RunConfig cfg = resolve(c);
    if (!stages.empty()) cfg.stages = stages;
    sqg::RunOptions opt;
    opt.threads = c.threads;
    opt.allow_quartic = c.allow_quartic;
    opt.verbose = !c.quiet;
    const sqg::RunOutcome o = sqg::run_pipeline(cfg, opt);
    std::cout << "reports: " << o.reports.size() << ", exit code " << o.exit_code << ", artifacts in "
              << cfg.output_dir << "\n";
    return o.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sqglab: SQG simulation and inequality verification"};
    app.require_subcommand(1);

    Common common;
    int code = 0;
    std::vector<std::pair<std::string, std::string>> verbs{
        {"simulate", "integrate the trajectory"},
        {"extend", "extension slab of the final snapshot, identity and DtN checks"},
        {"quantify", "scale-invariant quantities at the configured cylinders"},
        {"verify", "energy inequalities, local energy, flow and decay probes"},
        {"cover", "candidate detection, Vitali cover and content bound"},
        {"run", "the stages listed in the config (default: all)"}};
    for (auto& [name, help] : verbs) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common(cmd, common);
        const std::string verb = name;
        cmd->callback([&, verb] { code = execute(common, verb == "run" ? std::vector<std::string>{} : std::vector<std::string>{verb}); });
    }

    std::string show;
    CLI::App* pre = app.add_subcommand("presets", "list presets, or print one as TOML");
    pre->add_option("--show", show, "preset to print");
    pre->callback([&] {
        if (show.empty()) {
            for (auto& n : sqg::preset_names()) std::cout << n << "\n";
        } else {
            std::cout << sqg::config_toml(sqg::preset(show));
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    } catch (const sqg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const sqg::StageError& e) {
        std::cerr << "stage error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return code;
}
