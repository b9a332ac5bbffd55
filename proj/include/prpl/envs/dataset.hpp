#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prpl/core/constants.hpp"
#include "prpl/envs/env.hpp"

namespace prpl {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

struct Episode {
    std::vector<float> obs;  // (len + 1) x obs_dim
    std::vector<float> act;  // len x act_dim
    std::vector<float> rew;  // len
    bool terminal = false;
    std::string policy;  // provenance label, kept in the sidecar JSON

    std::size_t length() const { return rew.size(); }
};

struct ObsStats {
    std::vector<float> mean;
    std::vector<float> std;
};

struct DatasetFile {
    static constexpr char kMagic[4] = {'P', 'R', 'P', 'D'};
    static constexpr std::uint32_t kVersion = 1;

    std::uint32_t obs_dim = 0;
    std::uint32_t act_dim = 0;
    std::string env;
    std::vector<Episode> episodes;
    ObsStats stats;

    std::span<const float> state(std::size_t e, std::size_t t) const {
        return std::span<const float>(episodes[e].obs).subspan(t * obs_dim, obs_dim);
    }
    std::size_t transition_count() const {
        std::size_t n = 0;
        for (const auto& ep : episodes) n += ep.length();
        return n;
    }
};

/// Per-dimension mean and population std over every stored observation (double accumulation).
inline ObsStats compute_stats(const std::vector<Episode>& episodes, std::size_t obs_dim) {
    std::vector<double> sum(obs_dim, 0.0), sq(obs_dim, 0.0);
    std::size_t n = 0;
    for (const auto& ep : episodes)
        for (std::size_t i = 0; i < ep.obs.size(); i += obs_dim, ++n)
            for (std::size_t k = 0; k < obs_dim; ++k) {
                sum[k] += ep.obs[i + k];
                sq[k] += static_cast<double>(ep.obs[i + k]) * ep.obs[i + k];
            }
    require(n > 0, ErrorKind::data, "cannot compute statistics of an empty dataset");
    ObsStats s;
    for (std::size_t k = 0; k < obs_dim; ++k) {
        const double m = sum[k] / n;
        s.mean.push_back(static_cast<float>(m));
        s.std.push_back(static_cast<float>(std::sqrt(std::max(0.0, sq[k] / n - m * m))));
    }
    return s;
}

inline void validate_stats(const ObsStats& s) {
    require(s.mean.size() == s.std.size(), ErrorKind::data, "statistics dimension mismatch");
    for (std::size_t k = 0; k < s.std.size(); ++k) {
        require(std::isfinite(s.mean[k]) && std::isfinite(s.std[k]), ErrorKind::data,
                "non-finite statistics in dimension " + std::to_string(k));
        require(s.std[k] > tol::kStdFloor, ErrorKind::data,
                "degenerate std in dimension " + std::to_string(k) + " (" + std::to_string(s.std[k]) + ")");
    }
}

inline void normalize_obs(const ObsStats& s, std::span<float> obs) {
    validate_stats(s);
    const std::size_t d = s.mean.size();
    require(obs.size() % d == 0, ErrorKind::contract, "observation width mismatch");
    for (std::size_t i = 0; i < obs.size(); ++i) obs[i] = (obs[i] - s.mean[i % d]) / s.std[i % d];
}

inline void denormalize_obs(const ObsStats& s, std::span<float> obs) {
    const std::size_t d = s.mean.size();
    require(d > 0 && obs.size() % d == 0, ErrorKind::contract, "observation width mismatch");
    for (std::size_t i = 0; i < obs.size(); ++i) obs[i] = obs[i] * s.std[i % d] + s.mean[i % d];
}

namespace io {

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail(ErrorKind::data, std::string("truncated file while reading ") + what);
    return v;
}

inline void put_floats(std::ostream& os, std::span<const float> v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline std::vector<float> get_floats(std::istream& is, std::size_t n, const char* what) {
    std::vector<float> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) fail(ErrorKind::data, std::string("truncated file while reading ") + what);
    return v;
}

}  // namespace io

inline void write_dataset(const DatasetFile& ds, std::ostream& os) {
    os.write(DatasetFile::kMagic, 4);
    io::put<std::uint32_t>(os, DatasetFile::kVersion);
    io::put<std::uint32_t>(os, ds.obs_dim);
    io::put<std::uint32_t>(os, ds.act_dim);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.episodes.size()));
    for (const auto& ep : ds.episodes) {
        io::put<std::uint32_t>(os, static_cast<std::uint32_t>(ep.length()));
        io::put_floats(os, ep.obs);
        io::put_floats(os, ep.act);
        io::put_floats(os, ep.rew);
        io::put<std::uint8_t>(os, ep.terminal ? 1 : 0);
    }
    io::put_floats(os, ds.stats.mean);
    io::put_floats(os, ds.stats.std);
}

inline DatasetFile read_dataset(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(is && std::memcmp(magic, DatasetFile::kMagic, 4) == 0, ErrorKind::data, "not a PRPD dataset file");
    const auto version = io::get<std::uint32_t>(is, "version");
    require(version == DatasetFile::kVersion, ErrorKind::versioning,
            "dataset version " + std::to_string(version) + " unsupported");
    DatasetFile ds;
    ds.obs_dim = io::get<std::uint32_t>(is, "obs dim");
    ds.act_dim = io::get<std::uint32_t>(is, "act dim");
    require(ds.obs_dim > 0 && ds.act_dim > 0, ErrorKind::data, "dataset dimensions must be positive");
    const auto count = io::get<std::uint32_t>(is, "episode count");
    ds.episodes.resize(count);
    for (std::uint32_t e = 0; e < count; ++e) {
        auto& ep = ds.episodes[e];
        const auto len = io::get<std::uint32_t>(is, "episode length");
        ep.obs = io::get_floats(is, (len + 1ull) * ds.obs_dim, "observations");
        ep.act = io::get_floats(is, static_cast<std::size_t>(len) * ds.act_dim, "actions");
        ep.rew = io::get_floats(is, len, "rewards");
        ep.terminal = io::get<std::uint8_t>(is, "terminal flag") != 0;
    }
    ds.stats.mean = io::get_floats(is, ds.obs_dim, "stats mean");
    ds.stats.std = io::get_floats(is, ds.obs_dim, "stats std");
    is.peek();
    require(is.eof(), ErrorKind::data, "trailing bytes after dataset payload");
    return ds;
}

/// Sidecar JSON path for a dataset file.
inline std::string provenance_path(const std::string& dataset_path) { return dataset_path + ".json"; }

inline nlohmann::json provenance_json(const DatasetFile& ds) {
    nlohmann::json j;
    j["format"] = "prpd-provenance";
    j["version"] = 1;
    j["env"] = ds.env;
    auto& eps = j["episodes"] = nlohmann::json::array();
    for (const auto& ep : ds.episodes)
        eps.push_back({{"policy", ep.policy}, {"length", ep.length()}, {"terminal", ep.terminal}});
    return j;
}

inline void save_dataset(const DatasetFile& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::data, "cannot write dataset '" + path + "'");
    write_dataset(ds, os);
    std::ofstream js(provenance_path(path));
    js << provenance_json(ds).dump(1) << '\n';
    require(static_cast<bool>(os) && static_cast<bool>(js), ErrorKind::data, "write failed for '" + path + "'");
}

/// Reads the binary file and, when present, the sidecar labels.
inline DatasetFile load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::data, "cannot open dataset '" + path + "'");
    DatasetFile ds = read_dataset(is);
    std::ifstream js(provenance_path(path));
    if (js) {
        const auto j = nlohmann::json::parse(js, nullptr, false);
        require(!j.is_discarded(), ErrorKind::data, "malformed provenance sidecar for '" + path + "'");
        ds.env = j.value("env", "");
        const auto& eps = j.at("episodes");
        require(eps.size() == ds.episodes.size(), ErrorKind::data, "provenance sidecar episode count mismatch");
        for (std::size_t e = 0; e < eps.size(); ++e) ds.episodes[e].policy = eps[e].value("policy", "");
    }
    return ds;
}

}  // namespace prpl
