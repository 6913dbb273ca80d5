#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "onepix/model.hpp"
#include "onepix/saliency.hpp"

using namespace onepix;

namespace {

template <class T>
Image<T> random_image(int h, int w, int c, Rng& rng) {
    Image<T> img(h, w, c);
    for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data[i] = rng.uniform_as<T>();
    return img;
}

template <class T>
void zero_params(Model<T>& model) {
    for (auto& layer : model.layers_mut())
        std::visit(
            [](auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>> || std::is_same_v<L, Dense<T>>) {
                    l.weight.setZero();
                    l.bias.setZero();
                }
            },
            layer);
}

template <class T>
SensitivityMap<T> map_from(std::initializer_list<T> row) {
    SensitivityMap<T> m;
    m.height = 1;
    m.width = static_cast<int>(row.size());
    m.values.resize(1, m.width);
    int x = 0;
    for (T v : row) m.values(0, x++) = v;
    return m;
}

}  // namespace

TEST_CASE("one noiseless sample collapses to the plain gradient map") {
    auto model = make_desk_model<float>(8, 8, 3, 4, 31);
    SaliencyConfig cfg;
    cfg.samples = 1;
    cfg.sigma = 0.0;
    cfg.seed = 9;
    Rng rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        const auto img = random_image<float>(8, 8, 3, rng);
        const int cls = trial % 4;
        const auto map = smoothgrad(model, img, cls, cfg);
        const auto g = input_gradient(model, img, cls);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                float best = 0.0f;
                for (int c = 0; c < 3; ++c) best = std::max(best, std::abs(g.at(y, x, c)));
                CHECK(map.values(y, x) == best);
            }
    }
}

TEST_CASE("a zero-weight model yields an all-zero raw map and a degenerate normalization") {
    auto model = make_desk_model<float>(8, 8, 3, 4, 31);
    zero_params(model);
    Rng rng(15);
    const auto img = random_image<float>(8, 8, 3, rng);
    SaliencyConfig cfg;
    cfg.samples = 4;
    cfg.sigma = 0.1;
    const auto map = smoothgrad(model, img, 1, cfg);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(map.values(y, x) == 0.0f);
    const auto norm = normalize(map);
    CHECK(norm.degenerate);
    CHECK(norm.normalized);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(norm.values(y, x) == 0.0f);
}

TEST_CASE("the documented noise stream replays the smoothgrad average externally") {
    auto model = make_desk_model<float>(8, 8, 3, 4, 33);
    Rng img_rng(16);
    const auto img = random_image<float>(8, 8, 3, img_rng);
    SaliencyConfig cfg;
    cfg.samples = 8;
    cfg.sigma = 0.1;
    cfg.seed = 77;
    const auto map = smoothgrad(model, img, 2, cfg);

    // Replay: one Rng(seed) stream, h*w*c standard normals per sample in
    // Image::data order, scaled by sigma, added without clamping.
    Rng rng(cfg.seed);
    Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> acc(8, 8);
    acc.setZero();
    Image<float> noised = img;
    for (int s = 0; s < cfg.samples; ++s) {
        for (Eigen::Index i = 0; i < noised.data.size(); ++i)
            noised.data[i] = img.data[i] + static_cast<float>(cfg.sigma) * rng.normal_as<float>();
        const auto g = input_gradient(model, noised, 2);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                float best = 0.0f;
                for (int c = 0; c < 3; ++c) best = std::max(best, std::abs(g.at(y, x, c)));
                acc(y, x) += best;
            }
    }
    acc /= static_cast<float>(cfg.samples);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(map.values(y, x) == acc(y, x));
}

TEST_CASE("smoothgrad is seed-deterministic") {
    auto model = make_desk_model<float>(8, 8, 3, 4, 33);
    Rng rng(18);
    const auto img = random_image<float>(8, 8, 3, rng);
    SaliencyConfig cfg;
    cfg.samples = 4;
    cfg.sigma = 0.2;
    cfg.seed = 5;
    const auto a = smoothgrad(model, img, 0, cfg);
    const auto b = smoothgrad(model, img, 0, cfg);
    CHECK((a.values == b.values).all());
    cfg.seed = 6;
    const auto c = smoothgrad(model, img, 0, cfg);
    CHECK((a.values != c.values).any());
}

TEST_CASE("smoothgrad rejects invalid configuration") {
    auto model = make_desk_model<float>(8, 8, 1, 2, 1);
    Rng rng(19);
    const auto img = random_image<float>(8, 8, 1, rng);
    SaliencyConfig cfg;
    cfg.samples = 0;
    CHECK_THROWS_AS(smoothgrad(model, img, 0, cfg), Error);
    cfg.samples = 1;
    cfg.sigma = -0.1;
    CHECK_THROWS_AS(smoothgrad(model, img, 0, cfg), Error);
    cfg.sigma = 0.1;
    cfg.tau = 1.5;
    CHECK_THROWS_AS(smoothgrad(model, img, 0, cfg), Error);
}

TEST_CASE("normalize maps {2, 4, 6} onto {0, 0.5, 1}") {
    const auto norm = normalize(map_from<float>({2.0f, 4.0f, 6.0f}));
    CHECK(norm.values(0, 0) == 0.0f);
    CHECK(norm.values(0, 1) == 0.5f);
    CHECK(norm.values(0, 2) == 1.0f);
    CHECK(norm.normalized);
    CHECK(!norm.degenerate);
}

TEST_CASE("normalize sends a constant map to zeros and flags it") {
    auto m = map_from<float>({3.3f, 3.3f, 3.3f});
    const auto norm = normalize(m);
    CHECK(norm.degenerate);
    for (int x = 0; x < 3; ++x) CHECK(norm.values(0, x) == 0.0f);
}

TEST_CASE("normalize is idempotent") {
    Rng rng(20);
    SensitivityMap<float> m;
    m.height = 6;
    m.width = 7;
    m.values.resize(6, 7);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 7; ++x) m.values(y, x) = rng.uniform_as<float>() * 10.0f;
    const auto once = normalize(m);
    const auto twice = normalize(once);
    CHECK((once.values == twice.values).all());
}

TEST_CASE("threshold keeps strictly greater pixels in row-major order") {
    SensitivityMap<float> m;
    m.height = 2;
    m.width = 2;
    m.values.resize(2, 2);
    m.values << 0.8f, 0.5f, 0.0f, 0.6f;
    m.normalized = true;
    const auto set = threshold(m, 0.5);
    REQUIRE(set.size() == 2);
    // The 0.5 pixel is excluded: the inequality is strict.
    CHECK(set.coords[0] == PixelCoord{0, 0});
    CHECK(set.coords[1] == PixelCoord{1, 1});
    CHECK(set.contains(0, 0));
    CHECK(!set.contains(1, 0));
    CHECK(set.height == 2);
    CHECK(set.width == 2);

    // tau = 0 admits every strictly positive pixel, still excluding zero.
    const auto all = threshold(m, 0.0);
    CHECK(all.size() == 3);
}

TEST_CASE("threshold requires a normalized map") {
    auto m = map_from<float>({0.1f, 0.9f});
    CHECK_THROWS_AS(threshold(m, 0.5), Error);
}

TEST_CASE("raising tau only shrinks the set") {
    Rng rng(21);
    SensitivityMap<float> m;
    m.height = 8;
    m.width = 8;
    m.values.resize(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) m.values(y, x) = rng.uniform_as<float>();
    const auto norm = normalize(m);
    const auto wide = threshold(norm, 0.3);
    const auto tight = threshold(norm, 0.7);
    CHECK(tight.size() <= wide.size());
    for (const auto& c : tight.coords) CHECK(wide.contains(c.x, c.y));
}

TEST_CASE("threshold agrees with a brute-force scan on a live map") {
    auto model = make_desk_model<float>(10, 10, 3, 4, 35);
    Rng rng(22);
    const auto img = random_image<float>(10, 10, 3, rng);
    SaliencyConfig cfg;
    cfg.samples = 4;
    cfg.sigma = 0.15;
    cfg.seed = 3;
    const auto norm = normalize(smoothgrad(model, img, predict(model, img), cfg));
    const auto set = threshold(norm, cfg.tau);

    std::size_t count = 0;
    std::size_t pos = 0;
    for (int y = 0; y < norm.height; ++y)
        for (int x = 0; x < norm.width; ++x) {
            const bool in = static_cast<double>(norm.values(y, x)) > cfg.tau;
            count += in;
            if (in) {
                REQUIRE(pos < set.size());
                CHECK(set.coords[pos] == PixelCoord{x, y});
                ++pos;
            }
        }
    CHECK(set.size() == count);
}

TEST_CASE("format_map_text round-trips float scores exactly") {
    Rng rng(23);
    SensitivityMap<float> m;
    m.height = 3;
    m.width = 4;
    m.values.resize(3, 4);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) m.values(y, x) = rng.uniform_as<float>();
    std::istringstream in(format_map_text(m));
    int h = 0, w = 0;
    REQUIRE((in >> h >> w));
    CHECK(h == 3);
    CHECK(w == 4);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) {
            double v = 0.0;
            REQUIRE((in >> v));
            CHECK(static_cast<float>(v) == m.values(y, x));
        }
}
