#pragma once

// Single-file model store:
//   "PRPL" | u32 version | u32 length + canonical config text | tensor records until EOF
// Tensor record: u32 name length | name | u32 rows | u32 cols | rows*cols little-endian f32.

#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "prpl/harness/config.hpp"

namespace prpl {

inline constexpr char kCheckpointMagic[4] = {'P', 'R', 'P', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    RunConfig config;
    PlannerModel model;
    std::optional<ValueCritic> value;
};

namespace detail {

using TensorMap = std::map<std::string, Tensor2>;

inline void put_tensor(std::ostream& os, const std::string& name, const Tensor2& t) {
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rows()));
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.cols()));
    io::put_floats(os, t.span());
}

inline Tensor2 vec_tensor(std::span<const float> v) { return Tensor2(1, v.size(), std::vector<float>(v.begin(), v.end())); }

inline void put_mlp(std::ostream& os, const std::string& prefix, const MlpParams& p) {
    std::vector<float> acts;
    for (const auto& l : p.layers) acts.push_back(static_cast<float>(static_cast<int>(l.act)));
    put_tensor(os, prefix + "activations", vec_tensor(acts));
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& l = p.layers[i];
        const std::string n = prefix + std::to_string(i) + "/";
        put_tensor(os, n + "weight", l.weight);
        put_tensor(os, n + "bias", l.bias);
        if (l.has_norm()) {
            put_tensor(os, n + "ln_gain", l.ln_gain);
            put_tensor(os, n + "ln_bias", l.ln_bias);
        }
    }
}

inline Tensor2 take(TensorMap& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) fail(ErrorKind::data, "checkpoint is missing tensor '" + name + "'");
    Tensor2 t = std::move(it->second);
    m.erase(it);
    return t;
}

inline Tensor2 take_shaped(TensorMap& m, const std::string& name, const Tensor2& like) {
    Tensor2 t = take(m, name);
    require(t.same_shape(like), ErrorKind::versioning,
            "tensor '" + name + "' has shape " + shape_string(t) + ", expected " + shape_string(like));
    return t;
}

inline MlpParams take_mlp(TensorMap& m, const std::string& prefix) {
    const Tensor2 acts = take(m, prefix + "activations");
    MlpParams p;
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const int code = static_cast<int>(acts[i]);
        require(code >= 0 && code <= static_cast<int>(Activation::tanh), ErrorKind::data, "bad activation code");
        DenseLayer l;
        l.act = static_cast<Activation>(code);
        const std::string n = prefix + std::to_string(i) + "/";
        l.weight = take(m, n + "weight");
        l.bias = take(m, n + "bias");
        require(l.bias.rows() == 1 && l.bias.cols() == l.weight.cols(), ErrorKind::data, "bad bias shape in " + n);
        if (i > 0)
            require(l.weight.rows() == p.layers.back().weight.cols(), ErrorKind::data, "layer width chain broken at " + n);
        if (l.has_norm()) {
            l.ln_gain = take(m, n + "ln_gain");
            l.ln_bias = take(m, n + "ln_bias");
        }
        p.layers.push_back(std::move(l));
    }
    return p;
}

}  // namespace detail

inline void write_checkpoint(const Checkpoint& ck, std::ostream& os) {
    using detail::put_tensor;
    using detail::vec_tensor;
    os.write(kCheckpointMagic, 4);
    io::put<std::uint32_t>(os, kCheckpointVersion);
    const std::string text = config_to_text(ck.config);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));

    const auto& m = ck.model;
    put_tensor(os, "obs/mean", vec_tensor(m.stats.mean));
    put_tensor(os, "obs/std", vec_tensor(m.stats.std));
    for (std::size_t l = 0; l < m.levels.size(); ++l) {
        const std::string p = "level" + std::to_string(l) + "/";
        const auto& lv = m.levels[l];
        put_tensor(os, p + "geometry",
                   Tensor2(1, 3, {static_cast<float>(lv.horizon), static_cast<float>(lv.jump), static_cast<float>(lv.tokens)}));
        put_tensor(os, p + "condition_range",
                   Tensor2(1, 2, {static_cast<float>(m.normalizers[l].min), static_cast<float>(m.normalizers[l].max)}));
        auto net = m.backbones[l].net;
        net.for_each_named([&](const std::string& name, Tensor2& t) { put_tensor(os, p + name, t); });
    }
    detail::put_mlp(os, "invdyn/", m.inverse_dynamics.net);
    put_tensor(os, "invdyn/delta_scale", vec_tensor(m.inverse_dynamics.delta_scale));
    put_tensor(os, "invdyn/bound", Tensor2(1, 1, m.inverse_dynamics.bound));
    if (ck.value) {
        detail::put_mlp(os, "value/", ck.value->net);
        put_tensor(os, "value/scale", Tensor2(1, 1, ck.value->scale));
    }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::data, "cannot write checkpoint '" + path + "'");
    write_checkpoint(ck, os);
    require(static_cast<bool>(os), ErrorKind::data, "write failed for checkpoint '" + path + "'");
}

inline Checkpoint read_checkpoint(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(is && std::memcmp(magic, kCheckpointMagic, 4) == 0, ErrorKind::data, "not a PRPL checkpoint");
    const auto version = io::get<std::uint32_t>(is, "checkpoint version");
    require(version == kCheckpointVersion, ErrorKind::versioning,
            "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kCheckpointVersion) + ")");
    const auto text_len = io::get<std::uint32_t>(is, "config length");
    std::string text(text_len, '\0');
    is.read(text.data(), text_len);
    require(static_cast<bool>(is), ErrorKind::data, "truncated checkpoint config");

    detail::TensorMap tensors;
    while (is.peek() != std::char_traits<char>::eof()) {
        const auto nlen = io::get<std::uint32_t>(is, "tensor name length");
        require(nlen > 0 && nlen < 4096, ErrorKind::data, "bad tensor name length");
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const auto rows = io::get<std::uint32_t>(is, "tensor rows");
        const auto cols = io::get<std::uint32_t>(is, "tensor cols");
        auto data = io::get_floats(is, static_cast<std::size_t>(rows) * cols, name.c_str());
        require(tensors.emplace(name, Tensor2(rows, cols, std::move(data))).second, ErrorKind::data,
                "duplicate tensor '" + name + "'");
    }

    Checkpoint ck;
    ck.config = parse_config_text(text);
    ck.config.validate();
    const auto env = make_env(ck.config.env);
    const std::size_t d = env->obs_dim();
    auto& m = ck.model;
    m.levels = ck.config.mode_levels();
    m.stats.mean = detail::take(tensors, "obs/mean").values();
    m.stats.std = detail::take(tensors, "obs/std").values();
    require(m.stats.mean.size() == d && m.stats.std.size() == d, ErrorKind::versioning, "observation stats width");
    for (std::size_t l = 0; l < m.levels.size(); ++l) {
        const std::string p = "level" + std::to_string(l) + "/";
        const auto& lv = m.levels[l];
        const Tensor2 geo = detail::take(tensors, p + "geometry");
        require(geo.size() == 3 && geo[0] == static_cast<float>(lv.horizon) && geo[1] == static_cast<float>(lv.jump) &&
                    geo[2] == static_cast<float>(lv.tokens),
                ErrorKind::versioning, "level " + std::to_string(l) + " geometry does not match the configuration");
        const Tensor2 range = detail::take(tensors, p + "condition_range");
        require(range.size() == 2, ErrorKind::data, "bad condition range");
        m.normalizers.push_back({range[0], range[1]});
        Rng scratch(0);
        GenerativeBackbone bb = make_backbone(ck.config.kind_at(l), ck.config.shape(lv, d), ck.config.diffusion_steps,
                                              AdamWConfig{ck.config.lr, ck.config.weight_decay}, scratch);
        bb.net.for_each_named([&](const std::string& name, Tensor2& t) { t = detail::take_shaped(tensors, p + name, t); });
        m.backbones.push_back(std::move(bb));
    }
    m.inverse_dynamics.net = detail::take_mlp(tensors, "invdyn/");
    m.inverse_dynamics.stats = m.stats;
    m.inverse_dynamics.delta_scale = detail::take(tensors, "invdyn/delta_scale").values();
    m.inverse_dynamics.bound = detail::take(tensors, "invdyn/bound")[0];
    if (tensors.count("value/activations")) {
        ValueCritic v;
        v.net = detail::take_mlp(tensors, "value/");
        v.gamma = ck.config.gamma;
        v.scale = detail::take(tensors, "value/scale")[0];
        v.stats = m.stats;
        ck.value = std::move(v);
    }
    require(tensors.empty(), ErrorKind::versioning, "checkpoint has unexpected tensor '" +
                                                        (tensors.empty() ? std::string() : tensors.begin()->first) + "'");
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::data, "cannot open checkpoint '" + path + "'");
    return read_checkpoint(is);
}

}  // namespace prpl
