#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "onepix/corpus.hpp"
#include "onepix/model.hpp"
#include "onepix/train.hpp"
#include "support/fixtures.hpp"
#include "support/temp_dir.hpp"

using namespace onepix;

namespace {

// Byte-exact test image: values on the k/255 grid survive PPM quantization.
Image<float> grid_image(int h, int w, int label, int shift) {
    Image<float> img(h, w, 3);
    for (Eigen::Index i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<float>(((i + shift) * 7) % 256) / 255.0f;
    img.label = label;
    return img;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace

TEST_CASE("load_corpus names the missing manifest") {
    testsupport::TempDir dir;
    try {
        load_corpus<float>(dir.str("nowhere"));
        FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
        CHECK(std::string(e.what()).find("nowhere/manifest.txt") != std::string::npos);
    }
}

TEST_CASE("load_corpus reads a two-image corpus") {
    testsupport::TempDir dir;
    write_ppm(dir.str("a.ppm"), grid_image(6, 5, 0, 0));
    write_ppm(dir.str("b.ppm"), grid_image(6, 5, 0, 3));
    write_text(dir.str("manifest.txt"),
               "# comment line\n"
               "\n"
               "a.ppm,0\n"
               "  b.ppm , 2 \n");
    const auto corpus = load_corpus<float>(dir.path());
    REQUIRE(corpus.size() == 2);
    CHECK(corpus.images[0].label == 0);
    CHECK(corpus.images[1].label == 2);
    CHECK(corpus.images[0].height == 6);
    CHECK(corpus.images[0].width == 5);
    CHECK(corpus.images[0].channels == 3);
    const auto expected = grid_image(6, 5, 0, 0);
    for (Eigen::Index i = 0; i < expected.data.size(); ++i)
        CHECK(corpus.images[0].data[i] == expected.data[i]);
}

TEST_CASE("load_corpus rejects malformed manifest lines") {
    testsupport::TempDir dir;
    write_ppm(dir.str("a.ppm"), grid_image(6, 5, 0, 0));

    write_text(dir.str("manifest.txt"), "a.ppm\n");
    CHECK_THROWS_AS(load_corpus<float>(dir.path()), IngestionError);

    write_text(dir.str("manifest.txt"), "a.ppm,x\n");
    CHECK_THROWS_AS(load_corpus<float>(dir.path()), IngestionError);

    write_text(dir.str("manifest.txt"), "a.ppm,1x\n");
    CHECK_THROWS_AS(load_corpus<float>(dir.path()), IngestionError);

    write_text(dir.str("manifest.txt"), "a.ppm,-2\n");
    CHECK_THROWS_AS(load_corpus<float>(dir.path()), IngestionError);

    write_text(dir.str("manifest.txt"), ",3\n");
    CHECK_THROWS_AS(load_corpus<float>(dir.path()), IngestionError);

    // Only comments and blanks: no images at all.
    write_text(dir.str("manifest.txt"), "# nothing\n\n");
    CHECK_THROWS_AS(load_corpus<float>(dir.path()), EmptyCorpusError);
}

TEST_CASE("load_corpus names a missing referenced file") {
    testsupport::TempDir dir;
    write_text(dir.str("manifest.txt"), "ghost.ppm,1\n");
    try {
        load_corpus<float>(dir.path());
        FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
        CHECK(std::string(e.what()).find("ghost.ppm") != std::string::npos);
    }
}

TEST_CASE("load_corpus rejects mixed image dimensions") {
    testsupport::TempDir dir;
    write_ppm(dir.str("a.ppm"), grid_image(6, 5, 0, 0));
    write_ppm(dir.str("b.ppm"), grid_image(4, 4, 0, 0));
    write_text(dir.str("manifest.txt"), "a.ppm,0\nb.ppm,1\n");
    try {
        load_corpus<float>(dir.path());
        FAIL("expected DimensionMismatchError");
    } catch (const DimensionMismatchError& e) {
        const std::string what = e.what();
        CHECK(what.find("b.ppm") != std::string::npos);
        CHECK(what.find("5x6") != std::string::npos);
        CHECK(what.find("4x4") != std::string::npos);
    }
}

TEST_CASE("load_corpus converts to grayscale on request") {
    testsupport::TempDir dir;
    auto img = grid_image(6, 5, 0, 0);
    write_ppm(dir.str("a.ppm"), img);
    write_text(dir.str("manifest.txt"), "a.ppm,0\n");
    const auto corpus = load_corpus<float>(dir.path(), 1);
    REQUIRE(corpus.images[0].channels == 1);
    const float mean = (img.at(2, 3, 0) + img.at(2, 3, 1) + img.at(2, 3, 2)) / 3.0f;
    CHECK(corpus.images[0].at(2, 3, 0) == mean);
}

TEST_CASE("save_corpus round-trips byte-grid images") {
    testsupport::TempDir dir;
    Corpus<float> corpus;
    corpus.images.push_back(grid_image(6, 5, 2, 0));
    corpus.images.push_back(grid_image(6, 5, 0, 9));
    const std::string out = dir.str("saved");
    save_corpus(out, corpus);

    const auto back = load_corpus<float>(out);
    REQUIRE(back.size() == 2);
    for (int k = 0; k < 2; ++k) {
        CHECK(back.images[k].label == corpus.images[k].label);
        for (Eigen::Index i = 0; i < corpus.images[k].data.size(); ++i)
            CHECK(back.images[k].data[i] == corpus.images[k].data[i]);
    }

    Corpus<float> empty;
    CHECK_THROWS_AS(save_corpus(dir.str("none"), empty), EmptyCorpusError);
}

TEST_CASE("the synthetic generator is bit-deterministic") {
    SyntheticSpec<float> spec;
    spec.classes = 2;
    spec.per_class = 50;
    spec.height = 10;
    spec.width = 10;
    spec.seed = 7;
    const auto a = generate_synthetic_corpus(spec);
    const auto b = generate_synthetic_corpus(spec);
    REQUIRE(a.size() == 100);
    REQUIRE(b.size() == 100);
    for (int k = 0; k < a.size(); ++k) {
        CHECK(a.images[k].label == b.images[k].label);
        CHECK((a.images[k].data == b.images[k].data).all());
    }
    // Labels arrive class-major: per_class images of class 0, then class 1.
    CHECK(a.images[0].label == 0);
    CHECK(a.images[50].label == 1);

    spec.seed = 8;
    const auto c = generate_synthetic_corpus(spec);
    CHECK((a.images[0].data != c.images[0].data).any());
}

TEST_CASE("the synthetic generator validates its recipe") {
    SyntheticSpec<float> spec;
    spec.per_class = 0;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), EmptyCorpusError);
    spec.per_class = 1;
    spec.classes = 6;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), Error);
    spec.classes = 3;
    spec.height = 4;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), Error);
    spec.height = 16;
    spec.channels = 2;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), Error);
}

TEST_CASE("synthetic pixel values stay inside the unit interval") {
    auto spec = testsupport::desk_spec(3);
    spec.per_class = 5;
    const auto corpus = generate_synthetic_corpus(spec);
    for (const auto& img : corpus.images)
        for (Eigen::Index i = 0; i < img.data.size(); ++i) {
            CHECK(img.data[i] >= 0.0f);
            CHECK(img.data[i] <= 1.0f);
        }
}

TEST_CASE("a trained model generalizes to a held-out split") {
    auto spec = testsupport::desk_spec(21);
    spec.per_class = 200;
    const auto corpus = generate_synthetic_corpus(spec);

    // Images are drawn independently, so a per-class index split is a fair
    // train/held-out partition.
    std::vector<Image<float>> train_split, holdout;
    for (int cls = 0; cls < spec.classes; ++cls)
        for (int k = 0; k < spec.per_class; ++k)
            (k < 140 ? train_split : holdout).push_back(corpus.images[cls * spec.per_class + k]);

    auto model = make_desk_model<float>(16, 16, 3, 3, 21);
    TrainConfig<float> cfg;
    cfg.learning_rate = 0.1f;
    cfg.epochs = 120;
    cfg.batch_size = 16;
    cfg.seed = 21;
    const auto result = train(model, train_split, cfg);
    CHECK(result.final_accuracy >= 0.9);

    int correct = 0;
    for (const auto& img : holdout) correct += predict(result.model, img) == *img.label;
    CHECK(static_cast<double>(correct) / holdout.size() >= 0.9);
}
