#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "onepix/errors.hpp"
#include "onepix/types.hpp"

namespace onepix {

// Dense intensity tensor. `data` is interleaved row-major: index of (y, x, c)
// is (y*width + x)*channels + c. Corpus images carry intensities in [0, 1]
// and a class label; intermediate tensors (noised copies, gradients) reuse
// the layout without the range guarantee.
template <class T>
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    Array<T> data;
    std::optional<int> label;

    Image() = default;
    Image(int h, int w, int c) : height(h), width(w), channels(c) {
        data = Array<T>::Zero(static_cast<Eigen::Index>(h) * w * c);
    }

    Shape shape() const { return Shape{channels, height, width}; }

    T& at(int y, int x, int c) { return data[(static_cast<Eigen::Index>(y) * width + x) * channels + c]; }
    T at(int y, int x, int c) const { return data[(static_cast<Eigen::Index>(y) * width + x) * channels + c]; }
};

// Signed per-intensity partial derivatives, same layout as Image::data.
template <class T>
struct GradientMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    Array<T> data;

    T at(int y, int x, int c) const { return data[(static_cast<Eigen::Index>(y) * width + x) * channels + c]; }
};

template <class T>
inline void validate_image(const Image<T>& img) {
    if (img.height <= 0 || img.width <= 0 || (img.channels != 1 && img.channels != 3))
        throw ShapeError("image dimensions invalid");
    if (img.data.size() != static_cast<Eigen::Index>(img.height) * img.width * img.channels)
        throw ShapeError("image data length does not match height*width*channels");
    if ((img.data < T(0)).any() || (img.data > T(1)).any())
        throw Error("image intensities outside [0, 1]");
}

namespace detail {

inline int pnm_read_token(std::istream& in, std::size_t& offset, const std::string& path) {
    // Skip whitespace and '#' comments, then read one unsigned decimal.
    int ch = in.get();
    ++offset;
    for (;;) {
        if (ch == EOF) throw FormatError(path + ": unexpected end of header", offset);
        if (ch == '#') {
            while (ch != '\n' && ch != EOF) {
                ch = in.get();
                ++offset;
            }
        } else if (std::isspace(ch)) {
            ch = in.get();
            ++offset;
        } else {
            break;
        }
    }
    if (ch < '0' || ch > '9') throw FormatError(path + ": expected integer in header", offset);
    long value = 0;
    while (ch >= '0' && ch <= '9') {
        value = value * 10 + (ch - '0');
        if (value > 1 << 20) throw FormatError(path + ": header value out of range", offset);
        ch = in.get();
        ++offset;
    }
    if (ch == EOF) throw FormatError(path + ": unexpected end of header", offset);
    // `ch` is the single whitespace terminating the token; binary data may
    // start right after it.
    if (!std::isspace(ch)) throw FormatError(path + ": malformed header", offset);
    return static_cast<int>(value);
}

}  // namespace detail

// Binary PPM (P6, maxval 255). Intensities are rescaled to [0, 1].
template <class T>
inline Image<T> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open " + path);
    std::size_t offset = 0;
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    offset += 2;
    if (!in || m0 != 'P' || m1 != '6')
        throw FormatError(path + ": not a P6 ppm (magic '" + std::string{m0, m1} + "')", 0);
    const int w = detail::pnm_read_token(in, offset, path);
    const int h = detail::pnm_read_token(in, offset, path);
    const int maxval = detail::pnm_read_token(in, offset, path);
    if (w <= 0 || h <= 0) throw FormatError(path + ": non-positive dimensions", offset);
    if (maxval != 255) throw FormatError(path + ": unsupported maxval " + std::to_string(maxval), offset);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw FormatError(path + ": truncated pixel data", offset + static_cast<std::size_t>(in.gcount()));
    Image<T> img(h, w, 3);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[static_cast<Eigen::Index>(i)] = T(raw[i]) / T(255);
    return img;
}

template <class T>
inline unsigned char to_byte(T v) {
    const T scaled = v * T(255);
    long r = std::lround(static_cast<double>(scaled));
    if (r < 0) r = 0;
    if (r > 255) r = 255;
    return static_cast<unsigned char>(r);
}

template <class T>
inline void write_ppm(const std::string& path, const Image<T>& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                // Grayscale images are written with the gray value replicated.
                const T v = img.channels == 3 ? img.at(y, x, c) : img.at(y, x, 0);
                raw[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] = to_byte(v);
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw Error("short write to " + path);
}

// Channel conversion: 3 -> 1 averages, 1 -> 3 replicates.
template <class T>
inline Image<T> to_channels(const Image<T>& img, int channels) {
    if (img.channels == channels) return img;
    Image<T> out(img.height, img.width, channels);
    out.label = img.label;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (channels == 1) {
                T s = T(0);
                for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
                out.at(y, x, 0) = s / T(img.channels);
            } else {
                for (int c = 0; c < channels; ++c) out.at(y, x, c) = img.at(y, x, 0);
            }
        }
    return out;
}

// Binary PGM (P5, maxval 255) of a single-channel field in [0, 1].
template <class Derived>
inline void write_pgm(const std::string& path, const Eigen::DenseBase<Derived>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    const int h = static_cast<int>(values.rows());
    const int w = static_cast<int>(values.cols());
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            raw[static_cast<std::size_t>(y) * w + x] = to_byte(static_cast<double>(values(y, x)));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw Error("short write to " + path);
}

}  // namespace onepix
