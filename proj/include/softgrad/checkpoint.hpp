#pragma once

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

#include "softgrad/nn.hpp"

namespace softgrad {

inline constexpr const char* kCheckpointHeader = "softgrad-checkpoint v1";

/// 17 significant decimal digits: enough to reproduce any double bit-exactly.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace detail {

inline std::string next_token(std::istream& in, const char* context) {
    std::string tok;
    if (!(in >> tok)) throw StructuralError(std::string("checkpoint: unexpected end while reading ") + context);
    return tok;
}

inline double next_double(std::istream& in, const char* context) {
    const std::string tok = next_token(in, context);
    char* end = nullptr;
    const double val = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw StructuralError(std::string("checkpoint: bad number '") + tok + "' in " + context);
    return val;
}

inline std::size_t next_size(std::istream& in, const char* context) {
    const std::string tok = next_token(in, context);
    return static_cast<std::size_t>(std::strtoull(tok.c_str(), nullptr, 10));
}

inline void expect_token(std::istream& in, const std::string& want) {
    const std::string got = next_token(in, want.c_str());
    if (got != want)
        throw StructuralError("checkpoint: expected '" + want + "', got '" + got + "'");
}

inline void write_array(std::ostream& out, const char* tag, const std::vector<double>& data) {
    out << tag;
    for (double x : data) out << ' ' << fmt17(x);
    out << '\n';
}

inline void read_array(std::istream& in, const char* tag, std::vector<double>& data) {
    expect_token(in, tag);
    for (auto& x : data) x = next_double(in, tag);
}

}  // namespace detail

inline void write_mlp(std::ostream& out, const Mlp& net) {
    out << "mlp " << net.layers.size() << '\n';
    for (const auto& l : net.layers)
        out << "layer " << l.out_dim() << ' ' << l.in_dim() << ' ' << activation_name(l.act) << '\n';
    out << "adam_step " << net.adam_step << '\n';
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        detail::write_array(out, "w", net.layers[k].weight.data);
        detail::write_array(out, "b", net.layers[k].bias);
        detail::write_array(out, "mw", net.adam_m.layers[k].weight.data);
        detail::write_array(out, "mb", net.adam_m.layers[k].bias);
        detail::write_array(out, "vw", net.adam_v.layers[k].weight.data);
        detail::write_array(out, "vb", net.adam_v.layers[k].bias);
    }
}

inline Mlp read_mlp(std::istream& in) {
    detail::expect_token(in, "mlp");
    const std::size_t nlayers = detail::next_size(in, "layer count");
    std::vector<std::size_t> dims;
    std::vector<Activation> acts;
    for (std::size_t k = 0; k < nlayers; ++k) {
        detail::expect_token(in, "layer");
        const std::size_t out_dim = detail::next_size(in, "layer out dim");
        const std::size_t in_dim = detail::next_size(in, "layer in dim");
        const Activation act = activation_from_name(detail::next_token(in, "activation"));
        if (k == 0)
            dims.push_back(in_dim);
        else if (dims.back() != in_dim)
            throw StructuralError("checkpoint: layer dims do not chain");
        dims.push_back(out_dim);
        acts.push_back(act);
    }
    Mlp net = make_mlp(dims, acts);
    detail::expect_token(in, "adam_step");
    net.adam_step = static_cast<std::int64_t>(detail::next_size(in, "adam_step"));
    for (std::size_t k = 0; k < nlayers; ++k) {
        detail::read_array(in, "w", net.layers[k].weight.data);
        detail::read_array(in, "b", net.layers[k].bias);
        detail::read_array(in, "mw", net.adam_m.layers[k].weight.data);
        detail::read_array(in, "mb", net.adam_m.layers[k].bias);
        detail::read_array(in, "vw", net.adam_v.layers[k].weight.data);
        detail::read_array(in, "vb", net.adam_v.layers[k].bias);
    }
    return net;
}

}  // namespace softgrad
