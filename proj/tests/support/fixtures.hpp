#pragma once

#include <onepix/corpus.hpp>
#include <onepix/model.hpp>
#include <onepix/train.hpp>

namespace testsupport {

// One trained desk model shared across the binary. Training runs once; every
// consumer sees the identical corpus and parameters.
struct DeskFixture {
    onepix::Corpus<float> corpus;
    onepix::Model<float> model;
    double train_accuracy = 0.0;
};

inline onepix::SyntheticSpec<float> desk_spec(std::uint64_t seed) {
    onepix::SyntheticSpec<float> spec;
    spec.classes = 3;
    spec.per_class = 25;
    spec.height = 16;
    spec.width = 16;
    spec.channels = 3;
    spec.distractors = 3;
    spec.background = 0.25f;
    spec.contrast = 0.4f;
    spec.level_jitter = 0.08f;
    spec.noise = 0.05f;
    spec.seed = seed;
    return spec;
}

inline const DeskFixture& desk_fixture() {
    static const DeskFixture fixture = [] {
        const auto spec = desk_spec(13);
        auto corpus = onepix::generate_synthetic_corpus(spec);
        auto model = onepix::make_desk_model<float>(spec.height, spec.width, spec.channels, spec.classes, 13);
        onepix::TrainConfig<float> cfg;
        cfg.learning_rate = 0.1f;
        cfg.epochs = 250;
        cfg.batch_size = 16;
        cfg.seed = 13;
        auto result = onepix::train(model, corpus.images, cfg);
        return DeskFixture{std::move(corpus), std::move(result.model), result.final_accuracy};
    }();
    return fixture;
}

}  // namespace testsupport
