#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "onepix/errors.hpp"
#include "onepix/image.hpp"
#include "onepix/model.hpp"
#include "onepix/rng.hpp"

namespace onepix {

struct SaliencyConfig {
    int samples = 16;       // n: gradient samples averaged
    double sigma = 0.15;    // noise std deviation, in intensity units
    double tau = 0.5;       // threshold on the normalized map
    std::uint64_t seed = 0;

    void validate() const {
        if (samples < 1) throw Error("saliency sample count must be >= 1");
        if (sigma < 0) throw Error("saliency sigma must be >= 0");
        if (tau < 0 || tau > 1) throw Error("saliency tau must be in [0, 1]");
    }
};

// Per-pixel importance scores (h rows, w cols). Raw maps are non-negative;
// after normalize() values lie in [0, 1] with min 0 and max 1 unless the raw
// map was constant (then all zeros and `degenerate` is set).
template <class T>
struct SensitivityMap {
    int height = 0;
    int width = 0;
    Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;
    bool normalized = false;
    bool degenerate = false;
};

struct PixelCoord {
    int x = 0;
    int y = 0;
    friend bool operator==(const PixelCoord& a, const PixelCoord& b) { return a.x == b.x && a.y == b.y; }
};

// Pixel coordinates whose normalized sensitivity exceeds tau, in row-major
// order (y outer, x inner).
struct SusceptibilitySet {
    int height = 0;
    int width = 0;
    std::vector<PixelCoord> coords;

    bool empty() const { return coords.empty(); }
    std::size_t size() const { return coords.size(); }
    bool contains(int x, int y) const {
        for (const auto& c : coords)
            if (c.x == x && c.y == y) return true;
        return false;
    }
};

// SmoothGrad sensitivity map: the mean over `samples` draws of the
// channel-maximum absolute input gradient at Gaussian-noised copies of the
// image. Noise consumption is part of the contract so external code can
// replay it: a single Rng(cfg.seed) stream supplies samples in order, each
// sample drawing height*width*channels standard normals in Image::data
// (interleaved) order, scaled by sigma and added without clamping.
template <class T>
inline SensitivityMap<T> smoothgrad(const Model<T>& model, const Image<T>& image, int class_index,
                                    const SaliencyConfig& cfg) {
    cfg.validate();
    detail::check_input(model, image);

    SensitivityMap<T> map;
    map.height = image.height;
    map.width = image.width;
    map.values.setZero(image.height, image.width);

    Rng rng(cfg.seed);
    Array<T> noise(image.data.size());
    Image<T> noised = image;
    Activations<T> acts;
    for (int s = 0; s < cfg.samples; ++s) {
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.normal_as<T>();
        noised.data = image.data + static_cast<T>(cfg.sigma) * noise;
        const GradientMap<T> g = input_gradient(model, noised, class_index, acts);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) {
                T best = T(0);
                for (int c = 0; c < image.channels; ++c) {
                    const T a = std::abs(g.at(y, x, c));
                    if (a > best) best = a;
                }
                map.values(y, x) += best;
            }
    }
    map.values /= static_cast<T>(cfg.samples);
    map.normalized = false;
    return map;
}

// Min-max normalization onto [0, 1]. A constant map has no contrast to
// preserve: it maps to all zeros with the degenerate flag set.
template <class T>
inline SensitivityMap<T> normalize(const SensitivityMap<T>& map) {
    SensitivityMap<T> out = map;
    const T lo = map.values.minCoeff();
    const T hi = map.values.maxCoeff();
    if (hi == lo) {
        out.values.setZero();
        out.degenerate = true;
    } else {
        out.values = (map.values - lo) / (hi - lo);
        out.degenerate = false;
    }
    out.normalized = true;
    return out;
}

// S = { (x, y) : map(y, x) > tau }, strict inequality, row-major order.
template <class T>
inline SusceptibilitySet threshold(const SensitivityMap<T>& map, double tau) {
    if (!map.normalized) throw Error("threshold expects a normalized map");
    SusceptibilitySet set;
    set.height = map.height;
    set.width = map.width;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            if (static_cast<double>(map.values(y, x)) > tau) set.coords.push_back(PixelCoord{x, y});
    return set;
}

// Plain-text map format: "<height> <width>" header line, then one line of
// space-separated scores per row. %.9g keeps f32 values exact.
template <class T>
inline std::string format_map_text(const SensitivityMap<T>& map) {
    std::ostringstream out;
    out << map.height << " " << map.width << "\n";
    char buf[32];
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(map.values(y, x)));
            out << (x ? " " : "") << buf;
        }
        out << "\n";
    }
    return out.str();
}

inline std::string format_set_text(const SusceptibilitySet& set) {
    std::ostringstream out;
    for (const auto& c : set.coords) out << c.x << " " << c.y << "\n";
    return out.str();
}

}  // namespace onepix
