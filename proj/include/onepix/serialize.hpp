#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "onepix/errors.hpp"
#include "onepix/model.hpp"

namespace onepix {

// Model weight file, version 1:
//
//   bytes 0..7    magic "OPIXMODL"
//   bytes 8..11   format version, u32 little-endian (= 1)
//   bytes 12..15  header length in bytes, u32 little-endian
//   header        ASCII text:
//                     input <height> <width> <channels>
//                     classes <K>
//                     layer conv <in_c> <out_c> <k>
//                     layer relu
//                     layer pool
//                     layer dense <in> <out>
//                     layer softmax
//                     end
//   parameters    for each conv/dense layer in order: weight matrix in
//                 row-major order, then bias, as raw little-endian f32.
//
// Models are stored in f32 regardless of the in-memory scalar, so
// load(save(m)) is bit-identical exactly when the scalar is float.

inline constexpr char kModelMagic[8] = {'O', 'P', 'I', 'X', 'M', 'O', 'D', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32le(out, bits);
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    bool need(std::size_t n, const char* what) {
        if (pos + n > buf.size()) throw FormatError(std::string("truncated model file: ") + what, pos);
        return true;
    }
    std::uint32_t u32le(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf[pos + i]);
        pos += 4;
        return v;
    }
    float f32le(const char* what) {
        const std::uint32_t bits = u32le(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

template <class T>
inline void append_block(std::string& out, const FeatMat<T>& w, const Vector<T>& b) {
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) put_f32le(out, static_cast<float>(w(r, c)));
    for (Eigen::Index i = 0; i < b.size(); ++i) put_f32le(out, static_cast<float>(b[i]));
}

template <class T>
inline void read_block(ByteReader& r, FeatMat<T>& w, Vector<T>& b) {
    for (Eigen::Index rr = 0; rr < w.rows(); ++rr)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(rr, c) = static_cast<T>(r.f32le("weights"));
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = static_cast<T>(r.f32le("bias"));
}

}  // namespace detail

template <class T>
inline std::string serialize_model(const Model<T>& model) {
    std::ostringstream header;
    const Shape& in = model.input_shape();
    header << "input " << in.height << " " << in.width << " " << in.channels << "\n";
    header << "classes " << model.classes() << "\n";
    for (const auto& layer : model.layers()) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>>)
                    header << "layer conv " << l.in_channels << " " << l.out_channels << " " << l.ksize << "\n";
                else if constexpr (std::is_same_v<L, ReLU<T>>)
                    header << "layer relu\n";
                else if constexpr (std::is_same_v<L, MaxPool2<T>>)
                    header << "layer pool\n";
                else if constexpr (std::is_same_v<L, Dense<T>>)
                    header << "layer dense " << l.in_size << " " << l.out_size << "\n";
                else
                    header << "layer softmax\n";
            },
            layer);
    }
    header << "end\n";
    const std::string htext = header.str();

    std::string out;
    out.append(kModelMagic, 8);
    detail::put_u32le(out, kModelVersion);
    detail::put_u32le(out, static_cast<std::uint32_t>(htext.size()));
    out += htext;
    for (const auto& layer : model.layers()) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>> || std::is_same_v<L, Dense<T>>)
                    detail::append_block(out, l.weight, l.bias);
            },
            layer);
    }
    return out;
}

template <class T>
inline Model<T> deserialize_model(const std::string& bytes) {
    detail::ByteReader r{bytes};
    r.need(8, "magic");
    if (std::memcmp(bytes.data(), kModelMagic, 8) != 0)
        throw FormatError("bad magic bytes (expected OPIXMODL, got '" + bytes.substr(0, 8) + "')", 0);
    r.pos = 8;
    const std::uint32_t version = r.u32le("version");
    if (version != kModelVersion)
        throw VersionError("unsupported model format version " + std::to_string(version) + " (expected " +
                           std::to_string(kModelVersion) + ")");
    const std::uint32_t hlen = r.u32le("header length");
    r.need(hlen, "header");
    const std::string htext = bytes.substr(r.pos, hlen);
    const std::size_t header_at = r.pos;
    r.pos += hlen;

    std::istringstream hs(htext);
    std::string word;
    int h = 0, w = 0, c = 0, classes = 0;
    if (!(hs >> word) || word != "input" || !(hs >> h >> w >> c))
        throw FormatError("header missing input line", header_at);
    if (!(hs >> word) || word != "classes" || !(hs >> classes))
        throw FormatError("header missing classes line", header_at);

    std::vector<Layer<T>> layers;
    bool saw_end = false;
    while (hs >> word) {
        if (word == "end") {
            saw_end = true;
            break;
        }
        if (word != "layer") throw FormatError("unexpected header token '" + word + "'", header_at);
        std::string kind;
        if (!(hs >> kind)) throw FormatError("layer line missing kind", header_at);
        if (kind == "conv") {
            int ic = 0, oc = 0, k = 0;
            if (!(hs >> ic >> oc >> k)) throw FormatError("malformed conv layer line", header_at);
            layers.emplace_back(Conv2d<T>(ic, oc, k));
        } else if (kind == "relu") {
            layers.emplace_back(ReLU<T>{});
        } else if (kind == "pool") {
            layers.emplace_back(MaxPool2<T>{});
        } else if (kind == "dense") {
            int is = 0, os = 0;
            if (!(hs >> is >> os)) throw FormatError("malformed dense layer line", header_at);
            layers.emplace_back(Dense<T>(is, os));
        } else if (kind == "softmax") {
            layers.emplace_back(Softmax<T>{});
        } else {
            throw FormatError("unknown layer kind '" + kind + "'", header_at);
        }
    }
    if (!saw_end) throw FormatError("header missing end marker", header_at + hlen);

    for (auto& layer : layers) {
        std::visit(
            [&](auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>> || std::is_same_v<L, Dense<T>>)
                    detail::read_block(r, l.weight, l.bias);
            },
            layer);
    }
    if (r.pos != bytes.size()) throw FormatError("trailing bytes after parameters", r.pos);

    Model<T> model(Shape{c, h, w}, std::move(layers));
    if (model.classes() != classes) throw FormatError("classes line disagrees with layer stack", header_at);
    return model;
}

template <class T>
inline void save_model(const Model<T>& model, const std::string& path) {
    const std::string bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path);
}

template <class T = float>
inline Model<T> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_model<T>(ss.str());
}

}  // namespace onepix
