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

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("sqglab_test_" + name);
    fs::remove_all(p);
    return p;
}

// Small random run that exercises every stage in a few seconds.
RunConfig small_config(const fs::path& out) {
    RunConfig c;
    c.name = "small";
    c.sim.grid.n = 32;
    c.sim.horizon = 0.5;
    c.sim.snapshot_dt = 0.05;
    c.sim.initial.kind = InitialCondition::Kind::Random;
    c.sim.initial.kmax = 3;
    c.sim.initial.amplitude = 0.3;
    c.verify.local_radii = {1.2};
    c.verify.levelset_count = 3;
    c.flow.levels = 0;
    c.cover.scales = {0.4, 0.8};
    c.cover.sweep_delta0 = {1e-2};
    c.stages = {"simulate", "extend", "verify", "cover"};
    c.output_dir = out.string();
    return c;
}

RunOptions quiet() {
    RunOptions o;
    o.verbose = false;
    return o;
}

}  // namespace

TEST_CASE("parameter presets") {
    Params P = preset("random-seed-42").params();
    CHECK(P.p == doctest::Approx(1.45 / 0.45 + 0.05).epsilon(1e-15));
    CHECK(P.p == doctest::Approx(3.2722222222222).epsilon(1e-12));
    CHECK(P.sigma == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(P.gamma == doctest::Approx(0.85 - 2 * 0.2025 / 1.45).epsilon(1e-15));
    CHECK(P.holder_admissible());
    CHECK(P.dimension_admissible());

    RunConfig low = preset("trivial-constant");
    low.sim.alpha = 0.40;
    CHECK_FALSE(low.params().dimension_admissible());
    CHECK_THROWS_WITH_AS(low.validate(), doctest::Contains("cover stage"), std::invalid_argument);
    low.stages = {"simulate", "verify"};
    CHECK_NOTHROW(low.validate());
}

TEST_CASE("config round trip and validation") {
    for (const auto& name : preset_names()) {
        INFO(name);
        RunConfig c = preset(name);
        RunConfig back = parse_config(config_toml(c));
        CHECK(canonical_json(back) == canonical_json(c));
        CHECK(config_hash(back) == config_hash(c));
    }
    SUBCASE("defaults fill missing sections") {
        RunConfig c = parse_config("name = 'x'\n[grid]\nn = 32\n");
        CHECK(c.sim.grid.n == 32);
        CHECK(c.sim.alpha == 0.45);
        CHECK(c.stages.size() == 5);
    }
    SUBCASE("errors") {
        CHECK_THROWS_WITH_AS(parse_config("[grid]\nnn = 3\n"), doctest::Contains("grid.nn"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("bogus = 1\n"), doctest::Contains("unknown key bogus"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("[grid]\nn = 'big'\n"), doctest::Contains("wrong type"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("[initial]\nkind = 'vortex'\n"), doctest::Contains("initial.kind"),
                             ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("[grid\n"), doctest::Contains("line 1"), ConfigError);
        CHECK_THROWS_AS(parse_config("alpha = 0.6\n"), std::invalid_argument);
        CHECK_THROWS_AS(parse_config("stages = ['simulate', 'plot']\n"), std::invalid_argument);
        CHECK_THROWS_AS(preset("nope"), ConfigError);
    }
}

TEST_CASE("hashing") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    RunConfig a = preset("single-mode-linear");
    RunConfig b = a;
    b.output_dir = "/elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    b.sim.initial.seed += 1;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.verify.local_tol = 2e-6;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a).size() == 64);
    auto j = nlohmann::json::parse(canonical_json(a));
    CHECK(j.contains("grid"));
    CHECK_FALSE(j.contains("output_dir"));
    Grid g1{64}, g2{128};
    CHECK(grid_hash(g1) != grid_hash(g2));
    CHECK(grid_hash(g1) == grid_hash(Grid{64}));
}

TEST_CASE("parallel task runner keeps declaration order") {
    std::vector<std::function<std::vector<CheckReport>()>> tasks;
    for (int i = 0; i < 17; ++i)
        tasks.push_back([i] {
            CheckReport r;
            r.name = "t" + std::to_string(i);
            return std::vector<CheckReport>{r};
        });
    for (int threads : {1, 3, 8}) {
        auto out = run_parallel(tasks, threads);
        REQUIRE(out.size() == 17);
        for (int i = 0; i < 17; ++i) CHECK(out[i].front().name == "t" + std::to_string(i));
    }
    tasks[5] = []() -> std::vector<CheckReport> { throw std::runtime_error("task five"); };
    CHECK_THROWS_WITH(run_parallel(tasks, 4), "task five");
}

TEST_CASE("pipeline on a small run") {
    const fs::path out = scratch("small");
    RunConfig c = small_config(out);
    RunOutcome o = run_pipeline(c, quiet());
    CHECK(o.exit_code != 1);
    for (const char* f : {"manifest.json", "reports.jsonl", "summary.txt", "timing.json", "config.toml",
                          "candidates.json", "cover.json", "cover_summary.csv"})
        CHECK_MESSAGE(fs::exists(out / f), f);
    CHECK(fs::exists(out / "trajectory"));
    CHECK(fs::exists(out / "slab_final"));
    CHECK_FALSE(fs::exists(out / ".lock"));
    CHECK_FALSE(fs::exists(out / "FAILED"));

    const std::string hash = config_hash(c), ghash = grid_hash(c.sim.grid);
    std::istringstream lines(slurp(out / "reports.jsonl"));
    std::size_t count = 0;
    for (std::string line; std::getline(lines, line); ++count) {
        auto j = nlohmann::json::parse(line);
        CHECK(j["meta"]["config_hash"] == hash);
        CHECK(j["meta"]["grid_hash"] == ghash);
        CHECK(j["status"] != "inequality-failure");
    }
    CHECK(count == o.reports.size());
    auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(m["config_hash"] == hash);
    CHECK(m["exit_code"] == o.exit_code);
    CHECK(m["config"] == nlohmann::json::parse(canonical_json(c)));
    // The toml next to the artifacts reproduces the run.
    CHECK(config_hash(load_config((out / "config.toml").string())) == hash);

    SUBCASE("identical config gives identical reports") {
        const fs::path out2 = scratch("small_again");
        RunConfig c2 = small_config(out2);
        RunOptions threaded = quiet();
        threaded.threads = 3;
        run_pipeline(c2, threaded);
        CHECK(slurp(out2 / "reports.jsonl") == slurp(out / "reports.jsonl"));
        CHECK(slurp(out2 / "manifest.json") == slurp(out / "manifest.json"));
        fs::remove_all(out2);
    }
    SUBCASE("later stages reuse the saved trajectory") {
        RunConfig v = c;
        v.stages = {"verify"};
        RunOutcome ov = run_pipeline(v, quiet());
        CHECK(ov.reports.size() > 0);
        RunConfig other = c;
        other.stages = {"verify"};
        other.sim.initial.seed = 7;
        CHECK_THROWS_WITH_AS(run_pipeline(other, quiet()), doctest::Contains("different simulation settings"),
                             StageError);
        CHECK(slurp(out / "FAILED").rfind("load: ", 0) == 0);
    }
    SUBCASE("lockfile") {
        std::ofstream(out / ".lock") << "";
        CHECK_THROWS_AS(run_pipeline(c, quiet()), StageError);
        CHECK(fs::exists(out / ".lock"));
        fs::remove(out / ".lock");
    }
    fs::remove_all(out);
}

TEST_CASE("stage errors leave a FAILED marker") {
    const fs::path out = scratch("failing");
    RunConfig c = small_config(out);
    c.stages = {"verify"};
    try {
        run_pipeline(c, quiet());
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage == "load");
        CHECK(std::string(e.what()).find("run simulate first") != std::string::npos);
    }
    CHECK(fs::exists(out / "FAILED"));
    CHECK_FALSE(fs::exists(out / ".lock"));
    auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(m["failed_stage"] == "load");

    // Balls of the finest scale below four cells.
    RunConfig d = small_config(out);
    d.cover.scales = {0.05, 0.4};
    CHECK_THROWS_WITH_AS(run_pipeline(d, quiet()), doctest::Contains("cover"), StageError);
    CHECK(slurp(out / "FAILED").rfind("cover: ", 0) == 0);
    CHECK(fs::exists(out / "reports.jsonl"));
    fs::remove_all(out);
}
