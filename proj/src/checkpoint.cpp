#include "qwave/evolve.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace qw::evolve {

namespace {

constexpr char kMagic[4] = {'Q', 'W', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kEndianTag = 0x01020304u;

template <class T>
void put(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint truncated");
    return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const FieldState& s) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    put(os, kVersion);
    put(os, kEndianTag);
    put(os, s.grid.half_width);
    put(os, static_cast<std::int32_t>(s.grid.n));
    put(os, s.t);
    put(os, static_cast<std::uint32_t>(2));
    os.write(reinterpret_cast<const char*>(s.phi.data()), static_cast<std::streamsize>(s.phi.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(s.pi.data()), static_cast<std::streamsize>(s.pi.size() * sizeof(double)));
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

FieldState read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a checkpoint file: " + path);
    if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported checkpoint version");
    if (get<std::uint32_t>(is) != kEndianTag) throw std::runtime_error("checkpoint written with foreign byte order");
    FieldState s;
    s.grid.half_width = get<double>(is);
    s.grid.n = get<std::int32_t>(is);
    s.t = get<double>(is);
    if (get<std::uint32_t>(is) != 2) throw std::runtime_error("checkpoint field count mismatch");
    s.grid.validate();
    s.phi.resize(s.grid.size());
    s.pi.resize(s.grid.size());
    is.read(reinterpret_cast<char*>(s.phi.data()), static_cast<std::streamsize>(s.phi.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(s.pi.data()), static_cast<std::streamsize>(s.pi.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint truncated");
    return s;
}

std::string Trajectory::index_json(const GridSpec& g, const std::string& base_dir) const {
    nlohmann::json j;
    j["grid"] = {{"half_width", g.half_width}, {"n", g.n}, {"dx", g.dx()}};
    j["leaf_times"] = leaf_times;
    j["steps"] = steps;
    j["dt_per_interval"] = dts;
    j["min_hyperbolicity_margin"] = min_margin;
    j["max_characteristic_speed"] = max_speed;
    j["boundary_reached"] = boundary_reached;
    nlohmann::json cps = nlohmann::json::array();
    for (const auto& c : checkpoints) {
        const std::string file =
            base_dir.empty() ? c.file
                             : std::filesystem::path(c.file).lexically_relative(base_dir).generic_string();
        cps.push_back({{"t", c.t}, {"file", file}});
    }
    j["checkpoints"] = cps;
    return j.dump(2);
}

}  // namespace qw::evolve
