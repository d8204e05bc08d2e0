#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sqglab/field_core.hpp"

namespace sqg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
    return r;
}

std::string snap_name(std::size_t i) {
    std::ostringstream os;
    os << "snap_" << std::setw(5) << std::setfill('0') << i << ".bin";
    return os.str();
}

}  // namespace

void write_f64(const std::string& path, const std::vector<double>& v) {
    std::vector<std::uint64_t> buf(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) buf[k] = to_le(std::bit_cast<std::uint64_t>(v[k]));
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
    if (!os) throw std::runtime_error("short write to " + path);
}

std::vector<double> read_f64(const std::string& path, std::size_t expected) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::vector<std::uint64_t> buf(expected);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected * 8));
    if (is.gcount() != static_cast<std::streamsize>(expected * 8) || is.peek() != EOF)
        throw std::runtime_error("size mismatch in " + path);
    std::vector<double> v(expected);
    for (std::size_t k = 0; k < expected; ++k) v[k] = std::bit_cast<double>(to_le(buf[k]));
    return v;
}

void save_trajectory(const Trajectory& tr, const std::string& dir) {
    fs::create_directories(dir);
    const Grid& g = tr.grid();
    json m;
    m["format"] = "sqglab-trajectory";
    m["version"] = 1;
    m["layout"] = "float64 little-endian, row-major, index i*n+j at x=(i*dx, j*dx)";
    m["grid"] = {{"n", g.n}, {"L", g.L}, {"dealias_fraction", g.dealias_fraction}};
    m["alpha"] = tr.alpha();
    m["times"] = tr.times();
    json drift = json::array();
    for (auto& d : tr.drifts()) drift.push_back({d[0], d[1]});
    m["drift"] = drift;
    m["dissipation"] = tr.dissipation();
    m["scheme"] = tr.meta().scheme;
    m["dt_max"] = tr.meta().dt_max;
    m["seed"] = tr.meta().seed;
    m["config_hash"] = tr.meta().config_hash;
    json files = json::array();
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const std::string name = snap_name(i);
        write_f64((fs::path(dir) / name).string(), tr.snapshot(i).values());
        files.push_back(name);
    }
    m["snapshots"] = files;
    std::ofstream os(fs::path(dir) / "manifest.json");
    os << m.dump(2) << "\n";
    if (!os) throw std::runtime_error("cannot write manifest in " + dir);
}

Trajectory load_trajectory(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("no manifest.json in " + dir);
    json m = json::parse(is);
    if (m.value("format", "") != "sqglab-trajectory") throw std::runtime_error("not a trajectory manifest: " + dir);
    Grid g;
    g.n = m["grid"]["n"].get<int>();
    g.L = m["grid"]["L"].get<double>();
    g.dealias_fraction = m["grid"]["dealias_fraction"].get<double>();
    g.validate();
    auto times = m["times"].get<std::vector<double>>();
    std::vector<Field> snaps;
    for (auto& f : m["snapshots"]) snaps.push_back(Field::from_values(g, read_f64((fs::path(dir) / f.get<std::string>()).string(), g.size())));
    std::vector<Vec2> drift;
    for (auto& d : m["drift"]) drift.push_back({d[0].get<double>(), d[1].get<double>()});
    TrajectoryMeta meta;
    meta.scheme = m.value("scheme", "");
    meta.dt_max = m.value("dt_max", 0.0);
    meta.seed = m.value("seed", std::uint64_t{0});
    meta.config_hash = m.value("config_hash", "");
    return Trajectory(g, m["alpha"].get<double>(), std::move(times), std::move(snaps), std::move(drift),
                      m["dissipation"].get<std::vector<double>>(), meta);
}

}  // namespace sqg
