#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "sqglab/covering.hpp"
#include "sqglab/extension.hpp"
#include "sqglab/flow.hpp"
#include "sqglab/geometry.hpp"
#include "sqglab/harness.hpp"
#include "sqglab/quantities.hpp"
#include "sqglab/verify.hpp"

namespace sqg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::vector<std::vector<CheckReport>> run_parallel(const std::vector<std::function<std::vector<CheckReport>()>>& tasks,
                                                   int threads) {
    std::vector<std::vector<CheckReport>> out(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < tasks.size();) {
            try {
                out[i] = tasks[i]();
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int n = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
}

class DirLock {
public:
    explicit DirLock(fs::path p) : path_(std::move(p)) {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw StageError("lock", "output directory is in use (remove " + path_.string() + " if no run is active)");
    }
    ~DirLock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

bool has_stage(const RunConfig& c, const std::string& s) {
    return std::find(c.stages.begin(), c.stages.end(), s) != c.stages.end();
}

// Hash of the settings that determine the trajectory.
std::string simulation_hash(const RunConfig& c) {
    auto j = nlohmann::json::parse(canonical_json(c));
    nlohmann::json s{{"alpha", j["alpha"]}, {"grid", j["grid"]}, {"initial", j["initial"]}, {"time", j["time"]}};
    return sha256_hex(s.dump());
}

// Report for a conditional check whose resolution or horizon preconditions failed.
CheckReport gated_out(const std::string& name, const std::string& why) {
    CheckReport r;
    r.name = name;
    mark_hypothesis_failure(r, why);
    return r;
}

template <class F>
std::vector<CheckReport> gate(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const UnderResolved& e) {
        return {gated_out(name, e.what())};
    } catch (const OutsideHorizon& e) {
        return {gated_out(name, e.what())};
    } catch (const ScaleFloorReached& e) {
        return {gated_out(name, e.what())};
    }
}

void tag(std::vector<CheckReport>& rs, const std::string& key, const std::string& value) {
    for (auto& r : rs) r.meta.emplace_back(key, value);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

struct Cyl {
    Vec2 x;
    double r;
    std::string label;
};

std::vector<Cyl> cylinders(const RunConfig& c) {
    static const double frac[3][2] = {{0.25, 0.25}, {0.5, 0.75}, {0.75, 0.4}};
    const double L = c.sim.grid.L;
    std::vector<Cyl> out;
    for (std::size_t k = 0; k < c.verify.local_radii.size(); ++k) {
        const Vec2 x{frac[k % 3][0] * L, frac[k % 3][1] * L};
        const double r = c.verify.local_radii[k];
        out.push_back({x, r, "x=(" + fmt(x[0]) + "," + fmt(x[1]) + ") r=" + fmt(r)});
    }
    return out;
}

double inner(const Field& a, const Field& b) {
    const auto& u = a.values();
    const auto& v = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    const double dx = a.grid().dx();
    return s * dx * dx;
}

class Pipeline {
public:
    Pipeline(const RunConfig& c, const RunOptions& o) : cfg_(c), opt_(o), P_(c.params()) {
        out_ = c.output_dir.empty() ? fs::path("out") : fs::path(c.output_dir);
        hash_ = config_hash(c);
        ghash_ = grid_hash(c.sim.grid);
    }

    RunOutcome run() {
        fs::create_directories(out_);
        DirLock lock(out_ / ".lock");
        std::error_code ec;
        fs::remove(out_ / "FAILED", ec);
        write_text(out_ / "config.toml", config_toml(cfg_));
        try {
            obtain_trajectory();
            if (has_stage(cfg_, "extend")) stage("extend", [&] { extend_stage(); });
            if (has_stage(cfg_, "quantify")) stage("quantify", [&] { quantify_stage(); });
            if (has_stage(cfg_, "verify")) stage("verify", [&] { verify_stage(); });
            if (has_stage(cfg_, "cover")) stage("cover", [&] { cover_stage(); });
        } catch (const StageError& e) {
            write_text(out_ / "FAILED", e.stage + ": " + std::string(e.what()).substr(e.stage.size() + 2) + "\n");
            outcome_.exit_code = 1;
            finish(e.stage);
            throw;
        }
        outcome_.exit_code = suite_exit_code(outcome_.reports);
        finish("");
        return outcome_;
    }

private:
    template <class F>
    void stage(const std::string& name, F&& f) {
        log(name + ": start");
        const auto t0 = std::chrono::steady_clock::now();
        try {
            f();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            timings_.emplace_back(name, seconds_since(t0));
            throw StageError(name, e.what());
        }
        timings_.emplace_back(name, seconds_since(t0));
        log(name + ": done in " + fmt(timings_.back().second) + " s");
        write_text(out_ / "reports.jsonl", reports_jsonl(outcome_.reports));
    }

    static double seconds_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    void log(const std::string& s) const {
        if (opt_.verbose) std::cerr << "[" << cfg_.name << "] " << s << "\n";
    }

    void add(std::vector<CheckReport> rs, const std::string& stage_name) {
        for (auto& r : rs) {
            r.meta.emplace_back("config_hash", hash_);
            r.meta.emplace_back("grid_hash", ghash_);
            r.meta.emplace_back("stage", stage_name);
            outcome_.reports.push_back(std::move(r));
        }
    }

    void skip(const std::string& what) {
        log("skipped " + what);
        outcome_.skipped.push_back(what);
    }

    void obtain_trajectory() {
        const fs::path dir = out_ / "trajectory";
        const std::string sh = simulation_hash(cfg_);
        if (has_stage(cfg_, "simulate")) {
            stage("simulate", [&] {
                SimulationConfig sc = cfg_.sim;
                sc.config_hash = sh;
                tr_ = std::make_unique<Trajectory>(simulate(sc));
                save_trajectory(*tr_, dir.string());
            });
            return;
        }
        const bool later = has_stage(cfg_, "extend") || has_stage(cfg_, "quantify") || has_stage(cfg_, "verify") ||
                           has_stage(cfg_, "cover");
        if (!later) return;
        stage("load", [&] {
            if (!fs::exists(dir)) throw std::runtime_error("no trajectory in " + dir.string() + "; run simulate first");
            tr_ = std::make_unique<Trajectory>(load_trajectory(dir.string()));
            if (tr_->meta().config_hash != sh)
                throw std::runtime_error("trajectory in " + dir.string() + " was produced by different simulation settings");
        });
    }

    const SlabProvider& provider() {
        if (!sp_) sp_ = std::make_unique<SlabProvider>(*tr_);
        return *sp_;
    }

    const ExtensionSlab& final_slab() {
        if (!slab_) slab_ = std::make_unique<ExtensionSlab>(extend(tr_->snapshots().back(), tr_->alpha(), default_levels(tr_->grid())));
        return *slab_;
    }

    void extend_stage() {
        const ExtensionSlab& slab = final_slab();
        save_slab(slab, (out_ / "slab_final").string());
        const Field theta = tr_->snapshots().back().to_physical();
        const ExtensionCalibration cal = calibrate_constant(tr_->alpha());
        const Field lap = fractional_laplacian(theta, tr_->alpha()).to_physical();
        const double seminorm = inner(theta, lap);
        const double energy = cal.c_measured * weighted_energy(slab);
        CheckReport id = inequality_report("extension_identity", std::abs(seminorm - energy), 0.01 * seminorm, 0.0);
        id.values = {{"seminorm", seminorm}, {"c_times_energy", energy}, {"c_measured", cal.c_measured}};
        if (seminorm == 0.0 && energy == 0.0) id.status = CheckStatus::Degenerate;

        const DtnResult d = dtn_trace(slab, cal);
        const double den = lap.l2_norm();
        {
            auto v = d.value.to_physical().values();
            const auto& w = lap.values();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= w[i];
            double s = 0.0;
            for (double e : v) s += e * e;
            const double dx = theta.grid().dx();
            const double num = std::sqrt(s) * dx;
            CheckReport dt = inequality_report("dtn_consistency", den > 0.0 ? num / den : num, 1e-3, 0.0);
            dt.values = {{"abs_error", num}, {"norm", den}, {"trace_residual", d.trace_residual}};
            if (den == 0.0 && num == 0.0) dt.status = CheckStatus::Degenerate;
            if (d.flagged) dt.note = "trace residual above tolerance";
            add({id, dt}, "extend");
        }
    }

    void quantify_stage() {
        ordered_json arr = ordered_json::array();
        const double t = tr_->end();
        for (const Cyl& c : cylinders(cfg_)) {
            ordered_json row;
            row["x"] = {c.x[0], c.x[1]};
            row["t"] = t;
            row["r"] = c.r;
            try {
                QuantityReport q = quantity_report(*tr_, provider(), Cylinder{c.x, t, c.r}, P_);
                ordered_json vals = ordered_json::object();
                for (auto& [k, v] : q.values) vals[k] = std::isfinite(v) ? ordered_json(v) : ordered_json(fmt(v));
                row["values"] = vals;
            } catch (const UnderResolved& e) {
                row["unavailable"] = e.what();
            } catch (const OutsideHorizon& e) {
                row["unavailable"] = e.what();
            }
            arr.push_back(row);
        }
        ordered_json j;
        j["config_hash"] = hash_;
        j["grid_hash"] = ghash_;
        j["params"] = {{"alpha", P_.alpha}, {"q", P_.q},         {"p", P_.p},
                       {"sigma", P_.sigma}, {"gamma", P_.gamma}, {"holder_beta", P_.holder_beta()},
                       {"mu", P_.mu}};
        j["cylinders"] = arr;
        write_text(out_ / "quantities.json", j.dump(2) + "\n");
    }

    void verify_stage() {
        const Trajectory& tr = *tr_;
        const SlabProvider& sp = provider();
        const VerifySettings& V = cfg_.verify;
        const double s0 = tr.start(), t1 = tr.end();
        using Task = std::function<std::vector<CheckReport>()>;
        std::vector<Task> tasks;

        tasks.push_back([&] {
            return std::vector<CheckReport>{check_global_energy(tr, s0, t1, V.energy_tol),
                                            check_max_principle(tr, V.energy_tol)};
        });
        tasks.push_back([&] {
            std::vector<CheckReport> rs;
            const double sup = tr.sup_abs_grid();
            for (int k = 0; k < V.levelset_count; ++k) {
                const double f = V.levelset_count == 1 ? 0.0 : -0.5 + static_cast<double>(k) / (V.levelset_count - 1);
                rs.push_back(check_levelset_energy(tr, f * sup, s0, t1, V.energy_tol));
                rs.back().meta.emplace_back("lambda_fraction", fmt(f));
            }
            return rs;
        });
        const double M = tr.snapshot(0).mean() - 1.0;
        const std::vector<Cyl> cyl = cylinders(cfg_);
        for (const Cyl& c : cyl) {
            tasks.push_back([&, c] {
                auto rs = gate("local_energy", [&] {
                    TestFunction phi = TestFunction::bump(c.x, t1, c.r, tr.alpha());
                    LocalEnergyOptions lo;
                    lo.rel_tol = V.local_tol;
                    return check_local_energy_orders(sp, phi, {2.0, P_.m()}, 1.0, M, lo);
                });
                tag(rs, "cylinder", c.label);
                return rs;
            });
        }
        tasks.push_back([&] {
            LocalEnergyOptions lo;
            lo.rel_tol = V.local_tol;
            return gate("local_global_comparison", [&] { return std::vector<CheckReport>{local_global_comparison(sp, s0, t1, lo)}; });
        });

        const int n = tr.grid().n;
        if (n <= 64 || opt_.allow_quartic) {
            const ExtensionSlab& slab = final_slab();
            for (const Cyl& c : cyl) {
                const std::size_t cells = ball_cells(tr.grid(), c.x, c.r).size();
                log("poincare at " + c.label + ": estimated " + fmt(0.5 * double(cells) * double(cells)) +
                    " pair evaluations");
                tasks.push_back([&, c] {
                    std::vector<CheckReport> rs;
                    for (double q : {2.0, 2.0 / (1.0 - tr.alpha())}) {
                        auto r = gate("poincare", [&] {
                            return std::vector<CheckReport>{
                                check_poincare(tr.snapshots().back(), slab, c.x, c.r, q, V.poincare_cap)};
                        });
                        tag(r, "cylinder", c.label);
                        tag(r, "q", fmt(q));
                        rs.insert(rs.end(), r.begin(), r.end());
                    }
                    return rs;
                });
            }
        } else {
            double pairs = 0.0;
            for (const Cyl& c : cyl) {
                const double cells = double(ball_cells(tr.grid(), c.x, c.r).size());
                pairs += cells * cells;
            }
            skip("poincare: n = " + std::to_string(n) + " > 64 needs --allow-quartic (estimated " + fmt(pairs) +
                 " pair evaluations)");
        }

        if (!cyl.empty()) {
            const Cyl c0 = cyl.front();
            tasks.push_back([&, c0] {
                auto rs = gate("tail_transfer", [&] {
                    return std::vector<CheckReport>{
                        check_tail_transfer(tr, sp, c0.x, t1, c0.r, V.tail_rho, P_, true)};
                });
                tag(rs, "cylinder", c0.label);
                return rs;
            });
            tasks.push_back([&, c0] { return flow_and_probes(c0.x); });
        }

        auto results = run_parallel(tasks, opt_.threads);
        for (auto& r : results) add(std::move(r), "verify");
    }

    std::vector<CheckReport> flow_and_probes(Vec2 x) {
        const Trajectory& tr = *tr_;
        const VerifySettings& V = cfg_.verify;
        FlowOptions fo;
        fo.ball_radius = cfg_.flow.ball_radius;
        fo.eps1 = cfg_.flow.eps1;
        fo.h_max = cfg_.flow.h_max;
        fo.horizon = std::min(1.0, tr.end() - tr.start());
        const double t = tr.end();
        RescaledFamily fam = build_family(tr, x, t, cfg_.mu, cfg_.flow.levels, fo, P_.m());
        write_text(out_ / "flow_family.json", family_manifest(fam) + "\n");
        if (fam.floor_reached) skip("flow levels beyond j = " + std::to_string(fam.levels.back().j) + ": " + fam.floor_reason);

        std::vector<CheckReport> rs;
        for (const FlowLevel& lv : fam.levels) {
            double worst_mean = 0.0, worst_R = 0.0;
            for (std::size_t i = 0; i < lv.data.size(); ++i) {
                const Vec2 m = level_ball_mean(lv, i, fo.ball_radius);
                worst_mean = std::max(worst_mean, std::hypot(m[0], m[1]));
                const Vec2 R = summed_R(fam, lv.j, i);
                worst_R = std::max(worst_R, std::hypot(R[0] - lv.R[i][0], R[1] - lv.R[i][1]));
            }
            const std::string j = std::to_string(lv.j);
            rs.push_back(inequality_report("flow_ball_mean", worst_mean, 1e-8, 0.0));
            rs.back().meta.emplace_back("level", j);
            rs.push_back(inequality_report("flow_R_identity", worst_R, 1e-8, 0.0));
            rs.back().meta.emplace_back("level", j);
            const double mj = std::pow(cfg_.mu, lv.j);
            rs.push_back(flow_bound_check(fam, K_q(tr, t, mj, P_.q, true), cfg_.mu, lv.j, P_.q));
            rs.back().meta.emplace_back("level", j);
        }

        DecayKnobs k{V.K, V.eps, V.delta, V.mean_tol};
        const Trajectory& d0 = fam.levels.front().data;
        SlabProvider sp0(d0);
        auto add_all = [&](std::vector<CheckReport> v) { rs.insert(rs.end(), v.begin(), v.end()); };
        add_all(gate("probe_interpolation", [&] {
            return std::vector<CheckReport>{
                probe_interpolation(d0, sp0, Cylinder{{0.0, 0.0}, 0.0, 0.25}, P_, V.probe_cap, V.mean_tol)};
        }));
        add_all(gate("probe_energy_decay", [&] {
            return std::vector<CheckReport>{probe_energy_decay(d0, sp0, {0.0, 0.0}, 0.0, 0.5, P_, k)};
        }));
        add_all(gate("probe_iterated_decay",
                     [&] { return std::vector<CheckReport>{probe_iterated_decay(fam, P_, V.j0, k)}; }));
        add_all(gate("probe_excess_decay", [&] {
            return std::vector<CheckReport>{
                probe_excess_decay(d0, Cylinder{{0.0, 0.0}, 0.0, 0.5}, P_, V.excess_c, P_.gamma, V.eps0)};
        }));
        return rs;
    }

    void cover_stage() {
        const Trajectory& tr = *tr_;
        const CoverSettings& C = cfg_.cover;
        const double L = tr.grid().L;
        std::vector<double> thresholds{C.delta0};
        for (double d : C.sweep_delta0)
            if (std::find(thresholds.begin(), thresholds.end(), d) == thresholds.end()) thresholds.push_back(d);
        DetectionOptions dopt;
        dopt.delta0 = *std::min_element(thresholds.begin(), thresholds.end());
        dopt.scales = C.scales;
        dopt.q = P_.q;
        dopt.anisotropy = C.anisotropy;
        const Detection all = detect_candidates(tr, provider(), dopt);

        std::vector<SweepRow> rows;
        std::vector<CheckReport> rs;
        for (double d0 : thresholds) {
            Detection d = all;
            d.candidates.clear();
            for (auto& c : all.candidates)
                if (c.value > d0) d.candidates.push_back(c);
            const CoverResult cover = vitali_cover(candidate_balls(d.candidates, C.anisotropy), L);
            const ContentBound b = hausdorff_content(cover, d.candidates, d.beta, d0, d.total_energy);
            CheckReport chain = inequality_report("hausdorff_content_chain", b.content, b.global_bound, 0.0);
            chain.pass = b.chain_holds;
            chain.status = b.chain_holds ? CheckStatus::Pass : CheckStatus::InequalityFailure;
            chain.values = {{"content", b.content},
                            {"local_bound", b.local_bound},
                            {"global_bound", b.global_bound},
                            {"beta", d.beta},
                            {"candidates", double(d.candidates.size())},
                            {"selected", double(cover.selected.size())}};
            chain.meta.emplace_back("delta0", fmt(d0));
            CheckReport cert = inequality_report("vitali_certificate", cover.max_dilation, 5.0, 0.0);
            cert.pass = cover.certificate_complete;
            cert.status = cert.pass ? CheckStatus::Pass : CheckStatus::InequalityFailure;
            if (d.candidates.empty()) cert.status = CheckStatus::Degenerate;
            cert.meta.emplace_back("delta0", fmt(d0));
            rs.push_back(chain);
            rs.push_back(cert);
            auto sw = covering_sweep(d, d0, L, C.anisotropy);
            rows.insert(rows.end(), sw.begin(), sw.end());
            if (d0 == C.delta0) {
                write_text(out_ / "candidates.json", candidates_json(d) + "\n");
                write_text(out_ / "cover.json", cover_json(cover, d.candidates, b) + "\n");
            }
        }
        write_text(out_ / "cover_summary.csv", sweep_csv(rows));
        add(rs, "cover");
    }

    void finish(const std::string& failed_stage) {
        write_text(out_ / "reports.jsonl", reports_jsonl(outcome_.reports));
        ordered_json m;
        m["name"] = cfg_.name;
        m["config_hash"] = hash_;
        m["grid_hash"] = ghash_;
        m["config"] = nlohmann::json::parse(canonical_json(cfg_));
        m["stages"] = cfg_.stages;
        m["skipped"] = outcome_.skipped;
        m["reports"] = outcome_.reports.size();
        m["exit_code"] = outcome_.exit_code;
        if (!failed_stage.empty()) m["failed_stage"] = failed_stage;
        write_text(out_ / "manifest.json", m.dump(2) + "\n");
        ordered_json t = ordered_json::object();
        for (auto& [k, v] : timings_) t[k] = v;
        write_text(out_ / "timing.json", t.dump(2) + "\n");
        write_text(out_ / "summary.txt", summary(failed_stage));
    }

    std::string summary(const std::string& failed_stage) const {
        std::ostringstream os;
        os << "run " << cfg_.name << "\n";
        os << "config " << hash_ << "\ngrid   " << ghash_ << "\n";
        os << "alpha " << P_.alpha << "  q " << P_.q << "  p " << P_.p << "  sigma " << P_.sigma << "  gamma "
           << P_.gamma << "\n\n";
        std::size_t counts[4] = {0, 0, 0, 0};
        for (auto& r : outcome_.reports) {
            ++counts[static_cast<int>(r.status)];
            os << std::left << std::setw(20) << status_name(r.status) << std::setw(28) << r.name << " lhs "
               << std::setw(14) << r.lhs << " rhs " << std::setw(14) << r.rhs;
            for (auto& [k, v] : r.meta)
                if (k == "cylinder" || k == "level" || k == "delta0" || k == "lambda_fraction" || k == "q")
                    os << " " << k << "=" << v;
            os << "\n";
        }
        os << "\npass " << counts[0] << ", degenerate " << counts[1] << ", inequality failures " << counts[2]
           << ", hypothesis failures " << counts[3] << "\n";
        for (auto& s : outcome_.skipped) os << "skipped: " << s << "\n";
        if (!failed_stage.empty()) os << "FAILED in stage " << failed_stage << "\n";
        os << "exit code " << outcome_.exit_code << "\n";
        return os.str();
    }

    RunConfig cfg_;
    RunOptions opt_;
    Params P_;
    fs::path out_;
    std::string hash_, ghash_;
    std::unique_ptr<Trajectory> tr_;
    std::unique_ptr<SlabProvider> sp_;
    std::unique_ptr<ExtensionSlab> slab_;
    RunOutcome outcome_;
    std::vector<std::pair<std::string, double>> timings_;
};

}  // namespace

RunOutcome run_pipeline(const RunConfig& config, const RunOptions& opt) {
    config.validate();
    Pipeline p(config, opt);
    return p.run();
}

}  // namespace sqg
