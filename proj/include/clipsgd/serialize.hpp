#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "clipsgd/io.hpp"
#include "clipsgd/network.hpp"

namespace clipsgd {

inline nlohmann::json spec_to_json(const NetSpec& s) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : s.hidden)
        layers.push_back({{"in", l.in_dim}, {"out", l.out_dim},
                          {"activation", format_activation(l.activation)}});
    std::string head_kind = s.head.tag == HeadKind::Tag::Scalar ? "scalar"
                            : s.head.tag == HeadKind::Tag::Softmax ? "softmax"
                                                                   : "qvalues";
    return {{"input_dim", s.input_dim},
            {"layers", layers},
            {"head", {{"kind", head_kind}, {"dim", s.head.dim}}}};
}

inline NetSpec spec_from_json(const nlohmann::json& j) {
    NetSpec s;
    s.input_dim = j.at("input_dim").get<int>();
    for (const auto& l : j.at("layers"))
        s.hidden.emplace_back(l.at("in").get<int>(), l.at("out").get<int>(),
                              parse_activation(l.at("activation").get<std::string>()));
    std::string kind = j.at("head").at("kind").get<std::string>();
    int dim = j.at("head").at("dim").get<int>();
    if (kind == "scalar") {
        s.head = HeadKind::scalar();
    } else if (kind == "softmax") {
        s.head = HeadKind::softmax(dim);
    } else if (kind == "qvalues") {
        s.head = HeadKind::q_values(dim);
    } else {
        throw std::invalid_argument("params sidecar: unknown head kind '" + kind + "'");
    }
    s.validate();
    return s;
}

namespace detail {

inline void put_le64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le64(const std::string& in, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

} // namespace detail

/// Persist parameters as a flat little-endian f64 array (inner block then
/// output block) plus a JSON sidecar describing the layout.
inline void save_params(const std::filesystem::path& bin_path,
                        const std::filesystem::path& json_path, const NetSpec& s,
                        const ParamSet& p) {
    check_layout(s, p);
    Vector flat = flatten(p);
    std::string bytes;
    bytes.reserve(flat.size() * 8);
    for (double v : flat) detail::put_le64(bytes, std::bit_cast<std::uint64_t>(v));
    write_file_atomic(bin_path, bytes);

    nlohmann::json sidecar = spec_to_json(s);
    sidecar["count"] = flat.size();
    write_file_atomic(json_path, sidecar.dump(2) + "\n");
}

struct LoadedParams {
    NetSpec spec;
    ParamSet params;
};

inline LoadedParams load_saved_params(const std::filesystem::path& bin_path,
                                      const std::filesystem::path& json_path) {
    LoadedParams lp;
    lp.spec = spec_from_json(nlohmann::json::parse(read_file(json_path)));
    std::string bytes = read_file(bin_path);
    if (bytes.size() % 8 != 0)
        throw std::runtime_error("params file '" + bin_path.string() + "': truncated");
    Vector flat(bytes.size() / 8);
    for (std::size_t i = 0; i < flat.size(); ++i)
        flat[i] = std::bit_cast<double>(detail::get_le64(bytes, i * 8));
    lp.params = load_params(lp.spec, flat);
    return lp;
}

} // namespace clipsgd
