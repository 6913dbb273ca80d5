#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "onepix/errors.hpp"
#include "onepix/image.hpp"
#include "onepix/rng.hpp"

namespace onepix {

// Labeled image set with uniform dimensions.
template <class T>
struct Corpus {
    std::vector<Image<T>> images;
    std::string name;
    std::string source;

    int size() const { return static_cast<int>(images.size()); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
inline void check_uniform(const Corpus<T>& corpus, const std::string& entry) {
    const Image<T>& first = corpus.images.front();
    const Image<T>& last = corpus.images.back();
    if (last.height != first.height || last.width != first.width || last.channels != first.channels)
        throw DimensionMismatchError(entry + ": expected " + std::to_string(first.width) + "x" +
                                     std::to_string(first.height) + ", got " + std::to_string(last.width) + "x" +
                                     std::to_string(last.height));
}

}  // namespace detail

// Directory layout: manifest.txt with one "filename,label" pair per line
// ('#' lines and blank lines ignored), plus the referenced P6 PPM files.
// `channels` converts on load (PPM files are always stored as RGB).
template <class T>
inline Corpus<T> load_corpus(const std::string& dir, int channels = 3) {
    if (channels != 1 && channels != 3) throw Error("corpus channels must be 1 or 3");
    const std::string manifest = dir + "/manifest.txt";
    std::ifstream in(manifest);
    if (!in) throw IngestionError("cannot open " + manifest);

    Corpus<T> corpus;
    corpus.source = dir;
    corpus.name = std::filesystem::path(dir).filename().string();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const std::string where = manifest + ":" + std::to_string(line_no);
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos) throw IngestionError(where + ": expected \"filename,label\"");
        const std::string fname = detail::trim(line.substr(0, comma));
        const std::string label_str = detail::trim(line.substr(comma + 1));
        if (fname.empty()) throw IngestionError(where + ": empty filename");
        std::size_t used = 0;
        int label = -1;
        try {
            label = std::stoi(label_str, &used);
        } catch (const std::exception&) {
            throw IngestionError(where + ": label \"" + label_str + "\" is not an integer");
        }
        if (used != label_str.size() || label < 0)
            throw IngestionError(where + ": label \"" + label_str + "\" is not a non-negative integer");

        Image<T> img = read_ppm<T>(dir + "/" + fname);
        img.label = label;
        corpus.images.push_back(to_channels(img, channels));
        detail::check_uniform(corpus, where + " (" + fname + ")");
    }
    if (corpus.images.empty()) throw EmptyCorpusError(manifest + " lists no images");
    return corpus;
}

// Writes img_NNNN.ppm files plus manifest.txt. Grayscale images are stored
// with the gray value replicated across RGB.
template <class T>
inline void save_corpus(const std::string& dir, const Corpus<T>& corpus) {
    if (corpus.images.empty()) throw EmptyCorpusError("refusing to save an empty corpus");
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    if (!manifest) throw Error("cannot open " + dir + "/manifest.txt for writing");
    char name[32];
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
        const Image<T>& img = corpus.images[i];
        if (!img.label) throw Error("corpus image " + std::to_string(i) + " has no label");
        std::snprintf(name, sizeof name, "img_%04zu.ppm", i);
        write_ppm(dir + "/" + name, img);
        manifest << name << "," << *img.label << "\n";
    }
    if (!manifest) throw Error("short write to " + dir + "/manifest.txt");
}

// Synthetic corpus recipe. Every class renders the same 3-wide bar and
// differs only by marker cells adjacent to its center (at most 5 classes):
// 0 bare bar, 1 marker below center, 2 marker above center, 3 both
// markers, 4 marker below the left end. Classes therefore sit one pixel
// edit apart, which keeps the images separable yet attackable one pixel
// at a time. `distractors` random-colored dots are sprinkled on the
// background so that lone off-shape pixels carry no class evidence.
template <class T>
struct SyntheticSpec {
    int classes = 3;
    int per_class = 20;
    int height = 16;
    int width = 16;
    int channels = 3;
    int distractors = 2;     // random-colored decoy dots per image
    T background = T(0.25);  // mean background level
    T contrast = T(0.4);     // mean foreground minus background
    T level_jitter = T(0.08);
    T noise = T(0.05);       // per-intensity Gaussian noise, clamped to [0,1]
    std::uint64_t seed = 0;

    void validate() const {
        if (per_class < 1) throw EmptyCorpusError("per-class image count must be >= 1");
        if (classes < 1 || classes > 5) throw Error("synthetic corpus supports 1 to 5 classes");
        if (height < 6 || width < 6) throw Error("synthetic images must be at least 6x6");
        if (channels != 1 && channels != 3) throw Error("synthetic channels must be 1 or 3");
        if (distractors < 0) throw Error("distractor count must be >= 0");
        if (noise < T(0) || level_jitter < T(0)) throw Error("noise and jitter must be >= 0");
    }
};

namespace detail {

template <class T>
inline T clamp_unit(T v) {
    return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

// Fills `img` with one shape instance. Draw order is fixed: background
// level, foreground level, per-channel foreground tints, geometry, one
// position plus one color per distractor (consumed even when the dot is
// skipped), then one noise normal per intensity in data order.
template <class T>
inline void render_synthetic(Image<T>& img, int shape, const SyntheticSpec<T>& spec, Rng& rng) {
    const int h = img.height, w = img.width, ch = img.channels;
    const T jitter = spec.level_jitter;
    const T bg = spec.background + jitter * T(2 * rng.uniform_as<T>() - 1);
    const T fg = bg + spec.contrast + jitter * T(2 * rng.uniform_as<T>() - 1);
    T tint[3] = {T(0), T(0), T(0)};
    if (ch == 3)
        for (int c = 0; c < 3; ++c) tint[c] = jitter * T(0.5) * T(2 * rng.uniform_as<T>() - 1);

    const int m = 1;
    auto place = [&](int extent, int len) {
        // Start of a `len`-long run placed anywhere inside [m, extent - m).
        const int lo = m;
        const int hi = std::max(lo, extent - m - len);
        return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    };

    std::vector<bool> mask(static_cast<std::size_t>(h) * w, false);
    auto set_px = [&](int y, int x) {
        if (y >= 0 && y < h && x >= 0 && x < w) mask[static_cast<std::size_t>(y) * w + x] = true;
    };
    // Every class draws the same 3-wide bar; classes differ only by marker
    // cells adjacent to its center, so one pixel edit can cross classes.
    const int y0 = place(h, 3) + 1;
    const int x0 = place(w, 3);
    for (int x = x0; x < x0 + 3; ++x) set_px(y0, x);
    switch (shape) {
        case 0: break;
        case 1: set_px(y0 + 1, x0 + 1); break;
        case 2: set_px(y0 - 1, x0 + 1); break;
        case 3:
            set_px(y0 + 1, x0 + 1);
            set_px(y0 - 1, x0 + 1);
            break;
        default: set_px(y0 + 1, x0); break;
    }

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool on = mask[static_cast<std::size_t>(y) * w + x];
            for (int c = 0; c < ch; ++c) img.at(y, x, c) = on ? clamp_unit(fg + tint[c]) : bg;
        }

    // Random-colored decoy dots teach that lone off-shape pixels carry no
    // class evidence.
    auto near_shape = [&](int y, int x) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int yy = y + dy, xx = x + dx;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w &&
                    mask[static_cast<std::size_t>(yy) * w + xx])
                    return true;
            }
        return false;
    };
    for (int d = 0; d < spec.distractors; ++d) {
        const int y = place(h, 1);
        const int x = place(w, 1);
        T color[3];
        for (int c = 0; c < ch; ++c) color[c] = rng.uniform_as<T>();
        if (near_shape(y, x)) continue;  // a dot next to the bar would alias a marker
        for (int c = 0; c < ch; ++c) img.at(y, x, c) = color[c];
    }

    if (spec.noise > T(0))
        for (Eigen::Index i = 0; i < img.data.size(); ++i)
            img.data[i] = clamp_unit(img.data[i] + spec.noise * rng.normal_as<T>());
}

}  // namespace detail

// Deterministic per seed: image i (= class*per_class + k) is rendered from
// its own stream derive(derive(seed, corpus stream), i), so the corpus does
// not depend on generation order.
template <class T>
inline Corpus<T> generate_synthetic_corpus(const SyntheticSpec<T>& spec) {
    spec.validate();
    Corpus<T> corpus;
    corpus.name = "synthetic-" + std::to_string(spec.classes) + "x" + std::to_string(spec.per_class) + "-" +
                  std::to_string(spec.width) + "x" + std::to_string(spec.height);
    corpus.source = "generator";
    const std::uint64_t base = derive_seed(spec.seed, seed_stream::kCorpus);
    for (int cls = 0; cls < spec.classes; ++cls)
        for (int k = 0; k < spec.per_class; ++k) {
            const std::uint64_t index = static_cast<std::uint64_t>(cls) * spec.per_class + k;
            Rng rng(derive_seed(base, index));
            Image<T> img(spec.height, spec.width, spec.channels);
            detail::render_synthetic(img, cls, spec, rng);
            img.label = cls;
            corpus.images.push_back(std::move(img));
        }
    return corpus;
}

}  // namespace onepix
