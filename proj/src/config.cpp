#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <toml.hpp>

#include "sqglab/covering.hpp"
#include "sqglab/harness.hpp"

namespace sqg {

namespace {

using nlohmann::json;
using Kind = InitialCondition::Kind;

const std::vector<std::string> kStages{"simulate", "extend", "quantify", "verify", "cover"};

std::string kind_name(Kind k) {
    switch (k) {
        case Kind::Constant:
            return "constant";
        case Kind::SingleMode:
            return "single-mode";
        case Kind::Random:
            return "random";
        case Kind::Bump:
            return "bump";
    }
    return "?";
}

Kind kind_from(const std::string& s) {
    if (s == "constant") return Kind::Constant;
    if (s == "single-mode") return Kind::SingleMode;
    if (s == "random") return Kind::Random;
    if (s == "bump") return Kind::Bump;
    throw ConfigError("initial.kind must be one of constant, single-mode, random, bump (got \"" + s + "\")");
}

// Reads typed values out of one TOML table and remembers which keys were used.
class Reader {
public:
    Reader(const toml::table* t, std::string path) : t_(t), path_(std::move(path)) {}

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!t_) return;
        const toml::node* n = t_->get(key);
        if (!n) return;
        if constexpr (std::is_same_v<T, double>) {
            if (auto v = n->value<double>()) {
                out = *v;
                return;
            }
        } else if constexpr (std::is_same_v<T, bool>) {
            if (auto v = n->value<bool>()) {
                out = *v;
                return;
            }
        } else if constexpr (std::is_integral_v<T>) {
            if (auto v = n->value<std::int64_t>()) {
                out = static_cast<T>(*v);
                return;
            }
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (auto v = n->value<std::string>()) {
                out = *v;
                return;
            }
        }
        throw ConfigError(where(key) + " has the wrong type");
    }

    void get_list(const char* key, std::vector<double>& out) {
        seen_.insert(key);
        if (!t_) return;
        const toml::node* n = t_->get(key);
        if (!n) return;
        const toml::array* a = n->as_array();
        if (!a) throw ConfigError(where(key) + " must be an array of numbers");
        out.clear();
        for (auto& e : *a) {
            auto v = e.value<double>();
            if (!v) throw ConfigError(where(key) + " must be an array of numbers");
            out.push_back(*v);
        }
    }

    void get_strings(const char* key, std::vector<std::string>& out) {
        seen_.insert(key);
        if (!t_) return;
        const toml::node* n = t_->get(key);
        if (!n) return;
        const toml::array* a = n->as_array();
        if (!a) throw ConfigError(where(key) + " must be an array of strings");
        out.clear();
        for (auto& e : *a) {
            auto v = e.value<std::string>();
            if (!v) throw ConfigError(where(key) + " must be an array of strings");
            out.push_back(*v);
        }
    }

    const toml::table* sub(const char* key) {
        seen_.insert(key);
        if (!t_) return nullptr;
        const toml::node* n = t_->get(key);
        if (!n) return nullptr;
        if (!n->is_table()) throw ConfigError(where(key) + " must be a table");
        return n->as_table();
    }

    void finish() const {
        if (!t_) return;
        for (auto& [k, v] : *t_)
            if (!seen_.count(std::string(k.str()))) throw ConfigError("unknown key " + where(std::string(k.str())));
    }

private:
    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const toml::table* t_;
    std::string path_;
    std::set<std::string> seen_;
};

toml::array to_array(const std::vector<double>& v) {
    toml::array a;
    for (double x : v) a.push_back(x);
    return a;
}

}  // namespace

void RunConfig::validate() const {
    std::ostringstream os;
    try {
        sim.grid.validate();
    } catch (const std::exception& e) {
        os << e.what() << "; ";
    }
    if (!(sim.alpha > 0.0 && sim.alpha < 0.5)) os << "alpha must lie in (0, 1/2); ";
    if (!(q > 0.0)) os << "q must be positive; ";
    if (!(sim.horizon > 0.0)) os << "horizon must be positive; ";
    if (!(sim.snapshot_dt > 0.0 && sim.snapshot_dt <= sim.horizon)) os << "snapshot_dt must lie in (0, horizon]; ";
    if (!(sim.dt_max > 0.0)) os << "dt_max must be positive; ";
    for (auto& s : stages)
        if (std::find(kStages.begin(), kStages.end(), s) == kStages.end()) os << "unknown stage \"" << s << "\"; ";
    if (verify.levelset_count < 0) os << "verify.levelset_count must be nonnegative; ";
    for (double r : verify.local_radii)
        if (!(r > 0.0)) os << "verify.local_radii must be positive; ";
    if (!(verify.tail_rho > 0.0 && verify.tail_rho < 1.0)) os << "verify.tail_rho must lie in (0, 1); ";
    if (verify.j0 < 1) os << "verify.j0 must be at least 1; ";
    if (flow.levels < 0) os << "flow.levels must be nonnegative; ";
    if (!(cover.delta0 > 0.0)) os << "cover.delta0 must be positive; ";
    for (double d : cover.sweep_delta0)
        if (!(d > 0.0)) os << "cover.sweep_delta0 must be positive; ";
    if (cover.scales.empty()) os << "cover.scales must not be empty; ";
    try {
        params().validate();
        if (std::find(stages.begin(), stages.end(), "cover") != stages.end() && !params().dimension_admissible())
            os << "the cover stage needs alpha in (1/sqrt(6), 1/2) and q >= 20; ";
    } catch (const std::exception& e) {
        os << e.what() << "; ";
    }
    const std::string msg = os.str();
    if (!msg.empty()) throw std::invalid_argument("invalid configuration: " + msg.substr(0, msg.size() - 2));
}

RunConfig parse_config(const std::string& text) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(os.str());
    }
    RunConfig c;
    Reader top(&root, "");
    top.get("name", c.name);
    top.get("alpha", c.sim.alpha);
    top.get("q", c.q);
    top.get("mu", c.mu);
    top.get_strings("stages", c.stages);

    Reader grid(top.sub("grid"), "grid");
    grid.get("n", c.sim.grid.n);
    grid.get("L", c.sim.grid.L);
    grid.get("dealias_fraction", c.sim.grid.dealias_fraction);
    grid.finish();

    Reader ini(top.sub("initial"), "initial");
    std::string kind = kind_name(c.sim.initial.kind);
    ini.get("kind", kind);
    c.sim.initial.kind = kind_from(kind);
    ini.get("amplitude", c.sim.initial.amplitude);
    ini.get("mean", c.sim.initial.mean);
    ini.get("m1", c.sim.initial.m1);
    ini.get("m2", c.sim.initial.m2);
    ini.get("phase", c.sim.initial.phase);
    std::int64_t seed = static_cast<std::int64_t>(c.sim.initial.seed);
    ini.get("seed", seed);
    if (seed < 0) throw ConfigError("initial.seed must be nonnegative");
    c.sim.initial.seed = static_cast<std::uint64_t>(seed);
    ini.get("kmax", c.sim.initial.kmax);
    std::vector<double> center{c.sim.initial.center[0], c.sim.initial.center[1]};
    ini.get_list("center", center);
    if (center.size() != 2) throw ConfigError("initial.center must have two entries");
    c.sim.initial.center = {center[0], center[1]};
    ini.get("width", c.sim.initial.width);
    ini.finish();

    Reader tm(top.sub("time"), "time");
    tm.get("t0", c.sim.t0);
    tm.get("horizon", c.sim.horizon);
    tm.get("snapshot_dt", c.sim.snapshot_dt);
    tm.get("dt_max", c.sim.dt_max);
    tm.get("c_cfl", c.sim.c_cfl);
    tm.get("advect", c.sim.advect);
    tm.get("blowup_factor", c.sim.blowup_factor);
    tm.finish();

    Reader v(top.sub("verify"), "verify");
    v.get("levelset_count", c.verify.levelset_count);
    v.get_list("local_radii", c.verify.local_radii);
    v.get("local_tol", c.verify.local_tol);
    v.get("energy_tol", c.verify.energy_tol);
    v.get("poincare_cap", c.verify.poincare_cap);
    v.get("probe_cap", c.verify.probe_cap);
    v.get("K", c.verify.K);
    v.get("eps", c.verify.eps);
    v.get("delta", c.verify.delta);
    v.get("mean_tol", c.verify.mean_tol);
    v.get("j0", c.verify.j0);
    v.get("excess_c", c.verify.excess_c);
    v.get("eps0", c.verify.eps0);
    v.get("tail_rho", c.verify.tail_rho);
    v.finish();

    Reader f(top.sub("flow"), "flow");
    f.get("ball_radius", c.flow.ball_radius);
    f.get("eps1", c.flow.eps1);
    f.get("h_max", c.flow.h_max);
    f.get("levels", c.flow.levels);
    f.finish();

    Reader cv(top.sub("cover"), "cover");
    cv.get("delta0", c.cover.delta0);
    cv.get_list("scales", c.cover.scales);
    cv.get("anisotropy", c.cover.anisotropy);
    cv.get_list("sweep_delta0", c.cover.sweep_delta0);
    cv.finish();

    top.finish();
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string config_toml(const RunConfig& c) {
    const auto& ic = c.sim.initial;
    toml::table t{
        {"name", c.name},
        {"alpha", c.sim.alpha},
        {"q", c.q},
        {"mu", c.mu},
        {"grid", toml::table{{"n", c.sim.grid.n}, {"L", c.sim.grid.L}, {"dealias_fraction", c.sim.grid.dealias_fraction}}},
        {"initial", toml::table{{"kind", kind_name(ic.kind)},
                                {"amplitude", ic.amplitude},
                                {"mean", ic.mean},
                                {"m1", ic.m1},
                                {"m2", ic.m2},
                                {"phase", ic.phase},
                                {"seed", static_cast<std::int64_t>(ic.seed)},
                                {"kmax", ic.kmax},
                                {"center", toml::array{ic.center[0], ic.center[1]}},
                                {"width", ic.width}}},
        {"time", toml::table{{"t0", c.sim.t0},
                             {"horizon", c.sim.horizon},
                             {"snapshot_dt", c.sim.snapshot_dt},
                             {"dt_max", c.sim.dt_max},
                             {"c_cfl", c.sim.c_cfl},
                             {"advect", c.sim.advect},
                             {"blowup_factor", c.sim.blowup_factor}}},
        {"verify", toml::table{{"levelset_count", c.verify.levelset_count},
                               {"local_radii", to_array(c.verify.local_radii)},
                               {"local_tol", c.verify.local_tol},
                               {"energy_tol", c.verify.energy_tol},
                               {"poincare_cap", c.verify.poincare_cap},
                               {"probe_cap", c.verify.probe_cap},
                               {"K", c.verify.K},
                               {"eps", c.verify.eps},
                               {"delta", c.verify.delta},
                               {"mean_tol", c.verify.mean_tol},
                               {"j0", c.verify.j0},
                               {"excess_c", c.verify.excess_c},
                               {"eps0", c.verify.eps0},
                               {"tail_rho", c.verify.tail_rho}}},
        {"flow", toml::table{{"ball_radius", c.flow.ball_radius},
                             {"eps1", c.flow.eps1},
                             {"h_max", c.flow.h_max},
                             {"levels", c.flow.levels}}},
        {"cover", toml::table{{"delta0", c.cover.delta0},
                              {"scales", to_array(c.cover.scales)},
                              {"anisotropy", c.cover.anisotropy},
                              {"sweep_delta0", to_array(c.cover.sweep_delta0)}}},
    };
    toml::array st;
    for (auto& s : c.stages) st.push_back(s);
    t.insert("stages", st);
    std::ostringstream os;
    os << t << "\n";
    return os.str();
}

std::string canonical_json(const RunConfig& c) {
    const auto& ic = c.sim.initial;
    json j;
    j["name"] = c.name;
    j["alpha"] = c.sim.alpha;
    j["q"] = c.q;
    j["mu"] = c.mu;
    j["stages"] = c.stages;
    j["grid"] = {{"n", c.sim.grid.n}, {"L", c.sim.grid.L}, {"dealias_fraction", c.sim.grid.dealias_fraction}};
    j["initial"] = {{"kind", kind_name(ic.kind)}, {"amplitude", ic.amplitude}, {"mean", ic.mean},
                    {"m1", ic.m1},               {"m2", ic.m2},               {"phase", ic.phase},
                    {"seed", ic.seed},           {"kmax", ic.kmax},           {"center", {ic.center[0], ic.center[1]}},
                    {"width", ic.width}};
    j["time"] = {{"t0", c.sim.t0},         {"horizon", c.sim.horizon}, {"snapshot_dt", c.sim.snapshot_dt},
                 {"dt_max", c.sim.dt_max}, {"c_cfl", c.sim.c_cfl},     {"advect", c.sim.advect},
                 {"blowup_factor", c.sim.blowup_factor}};
    j["verify"] = {{"levelset_count", c.verify.levelset_count},
                   {"local_radii", c.verify.local_radii},
                   {"local_tol", c.verify.local_tol},
                   {"energy_tol", c.verify.energy_tol},
                   {"poincare_cap", c.verify.poincare_cap},
                   {"probe_cap", c.verify.probe_cap},
                   {"K", c.verify.K},
                   {"eps", c.verify.eps},
                   {"delta", c.verify.delta},
                   {"mean_tol", c.verify.mean_tol},
                   {"j0", c.verify.j0},
                   {"excess_c", c.verify.excess_c},
                   {"eps0", c.verify.eps0},
                   {"tail_rho", c.verify.tail_rho}};
    j["flow"] = {{"ball_radius", c.flow.ball_radius}, {"eps1", c.flow.eps1}, {"h_max", c.flow.h_max},
                 {"levels", c.flow.levels}};
    j["cover"] = {{"delta0", c.cover.delta0},
                  {"scales", c.cover.scales},
                  {"anisotropy", c.cover.anisotropy},
                  {"sweep_delta0", c.cover.sweep_delta0}};
    return j.dump();
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

std::string config_hash(const RunConfig& c) { return sha256_hex(canonical_json(c)); }

std::string grid_hash(const Grid& g) {
    json j{{"n", g.n}, {"L", g.L}, {"dealias_fraction", g.dealias_fraction}};
    return sha256_hex(j.dump());
}

std::vector<std::string> preset_names() { return {"trivial-constant", "single-mode-linear", "random-seed-42"}; }

RunConfig preset(const std::string& name) {
    RunConfig c;
    c.name = name;
    c.sim.alpha = 0.45;
    c.sim.horizon = 1.0;
    c.sim.snapshot_dt = 0.02;
    c.sim.dt_max = 0.005;
    if (name == "trivial-constant") {
        c.sim.grid.n = 128;
        c.sim.initial.kind = InitialCondition::Kind::Constant;
        c.sim.initial.mean = 1.0;
        c.sim.initial.amplitude = 0.0;
        c.verify.local_radii = {1.0};
    } else if (name == "single-mode-linear") {
        c.sim.grid.n = 64;
        c.sim.advect = false;
        c.sim.initial.kind = InitialCondition::Kind::SingleMode;
        c.sim.initial.amplitude = 0.5;
        c.sim.initial.m1 = 1;
        c.sim.initial.m2 = 0;
        c.verify.local_radii = {1.0};
        // Above the measured ball densities of this mode (about 1), so no candidates fire.
        c.cover.delta0 = 10.0;
    } else if (name == "random-seed-42") {
        c.sim.grid.n = 128;
        c.sim.initial.kind = InitialCondition::Kind::Random;
        c.sim.initial.seed = 42;
        c.sim.initial.amplitude = 0.5;
        c.sim.initial.kmax = 4;
        c.cover.sweep_delta0 = {1e-2, 1e-1};
    } else {
        std::string known;
        for (auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset \"" + name + "\" (known: " + known + ")");
    }
    c.validate();
    return c;
}

}  // namespace sqg
