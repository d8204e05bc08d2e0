#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest/doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "sqglab/harness.hpp"

using namespace sqg;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& p) {
    std::ifstream is(p);
    return nlohmann::json::parse(is);
}

RunOutcome run_preset(const std::string& name, fs::path& out) {
    out = fs::temp_directory_path() / ("sqglab_preset_" + name);
    fs::remove_all(out);
    RunConfig c = preset(name);
    c.output_dir = out.string();
    RunOptions o;
    o.verbose = false;
    return run_pipeline(c, o);
}

const CheckReport& find(const RunOutcome& o, const std::string& name) {
    for (auto& r : o.reports)
        if (r.name == name) return r;
    throw std::runtime_error("no report " + name);
}

}  // namespace

TEST_CASE("trivial-constant passes vacuously") {
    fs::path out;
    RunOutcome o = run_preset("trivial-constant", out);
    CHECK(o.exit_code == 0);
    for (auto& r : o.reports) {
        INFO(r.name << " " << status_name(r.status) << " " << r.note);
        CHECK((r.status == CheckStatus::Pass || r.status == CheckStatus::Degenerate));
    }
    CHECK(read_json(out / "candidates.json")["candidates"].empty());
    CHECK(read_json(out / "cover.json")["content"] == 0.0);
    fs::remove_all(out);
}

TEST_CASE("single-mode-linear follows the closed-form decay") {
    fs::path out;
    RunOutcome o = run_preset("single-mode-linear", out);
    CHECK(o.exit_code != 1);
    RunConfig c = preset("single-mode-linear");
    // Half the L^2 norm of 0.5 cos x decays like exp(-2 |k|^{2a} t) with |k| = 1.
    const double L = c.sim.grid.L;
    const double e0 = 0.5 * 0.25 * L * L / 2.0;
    const CheckReport& g = find(o, "global_energy");
    CHECK(g.pass);
    CHECK(g.value("energy_s") == doctest::Approx(e0).epsilon(1e-12));
    CHECK(g.value("energy_t") == doctest::Approx(e0 * std::exp(-2.0 * c.sim.horizon)).epsilon(1e-8));
    CHECK(std::abs(g.margin) <= 1e-8 * g.rhs);
    for (auto& r : o.reports) CHECK(r.status != CheckStatus::InequalityFailure);
    CHECK(read_json(out / "candidates.json")["candidates"].empty());
    fs::remove_all(out);
}

TEST_CASE("random-seed-42 completes without inequality failures") {
    fs::path out;
    RunOutcome o = run_preset("random-seed-42", out);
    CHECK(o.exit_code != 1);
    std::size_t failures = 0;
    for (auto& r : o.reports) failures += r.status == CheckStatus::InequalityFailure;
    CHECK(failures == 0);
    auto m = read_json(out / "manifest.json");
    CHECK(m["exit_code"] == o.exit_code);
    CHECK(m["config"]["grid"]["n"] == 128);
    fs::remove_all(out);
}
