#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "onepix/errors.hpp"
#include "onepix/model.hpp"

namespace onepix {

template <class T>
struct TrainConfig {
    T learning_rate = T(0.05);
    int epochs = 10;
    int batch_size = 16;
    std::uint64_t seed = 0;
};

template <class T>
struct TrainResult {
    Model<T> model;
    double final_accuracy = 0.0;  // on the training corpus, after the last epoch
    double final_loss = 0.0;      // mean cross-entropy, same pass
};

namespace detail {

// In-place Fisher-Yates keyed to the stream: for i = n-1 .. 1, j = below(i+1).
inline void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i-- > 1;) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(idx[i], idx[j]);
    }
}

// Accumulates dL/dparams for one sample into `grads` and returns nothing.
// `acts` must hold the forward pass of this sample; dy_out is overwritten.
template <class T>
inline void backprop_params(const Model<T>& model, const Activations<T>& acts, int label,
                            std::vector<ParamGrads<T>>& grads) {
    const auto& layers = model.layers();
    const auto& shapes = model.stage_shapes();
    const std::size_t last = layers.size() - 1;  // softmax

    // Fused softmax + cross-entropy gradient at the logits.
    FeatMat<T> dy = acts.feat[last + 1];
    dy(label, 0) -= T(1);

    FeatMat<T> dx, dcol;
    for (std::size_t i = last; i-- > 0;) {
        const Shape& in = shapes[i];
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>>) {
                    layer_param_grads(l, acts.col[i], dy, grads[i]);
                    if (i > 0) layer_backward(l, in, acts.feat[i], acts.feat[i + 1], dy, dx, dcol);
                } else if constexpr (std::is_same_v<L, Dense<T>>) {
                    layer_param_grads(l, acts.feat[i], dy, grads[i]);
                    if (i > 0) layer_backward(l, in, acts.feat[i], acts.feat[i + 1], dy, dx);
                } else if constexpr (std::is_same_v<L, MaxPool2<T>>) {
                    if (i > 0) layer_backward(l, in, acts.feat[i], acts.feat[i + 1], dy, dx, acts.pool_src[i]);
                } else {
                    if (i > 0) layer_backward(l, in, acts.feat[i], acts.feat[i + 1], dy, dx);
                }
            },
            layers[i]);
        if (i > 0) dy.swap(dx);
    }
}

template <class T>
inline void apply_sgd(Model<T>& model, std::vector<ParamGrads<T>>& grads, T step) {
    auto& layers = model.layers_mut();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!grads[i].used) continue;
        std::visit(
            [&](auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>> || std::is_same_v<L, Dense<T>>) {
                    l.weight -= step * grads[i].weight;
                    l.bias -= step * grads[i].bias;
                }
            },
            layers[i]);
        grads[i].weight.setZero();
        grads[i].bias.setZero();
        grads[i].used = false;
    }
}

}  // namespace detail

// Plain mini-batch SGD on softmax cross-entropy. Fully reproducible for a
// fixed seed: weights stay as given, the shuffle stream is
// derive_seed(seed, kShuffle), batches are visited in shuffled order, and
// accumulation is sequential.
template <class T>
inline TrainResult<T> train(const Model<T>& model, const std::vector<Image<T>>& corpus,
                            const TrainConfig<T>& cfg) {
    if (corpus.empty()) throw EmptyCorpusError("training corpus is empty");
    for (const auto& img : corpus) {
        if (!img.label) throw IndexError("training image missing label");
        if (*img.label < 0 || *img.label >= model.classes())
            throw IndexError("label " + std::to_string(*img.label) + " out of range [0, " +
                             std::to_string(model.classes()) + ")");
        detail::check_input(model, img);
    }
    if (cfg.epochs < 0 || cfg.batch_size < 1) throw Error("bad training config");

    TrainResult<T> result{model, 0.0, 0.0};
    Model<T>& m = result.model;

    std::vector<ParamGrads<T>> grads(m.layers().size());
    std::vector<int> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, seed_stream::kShuffle));

    Activations<T> acts;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        detail::shuffle_indices(order, shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            for (std::size_t s = start; s < stop; ++s) {
                const Image<T>& img = corpus[order[s]];
                forward_into(m, img, acts);
                detail::backprop_params(m, acts, *img.label, grads);
            }
            detail::apply_sgd(m, grads, cfg.learning_rate / static_cast<T>(stop - start));
        }
    }

    // Final pass over the corpus in storage order.
    std::size_t correct = 0;
    double loss = 0.0;
    for (const auto& img : corpus) {
        forward_into(m, img, acts);
        const auto& probs = acts.feat.back();
        Vector<T> pv = probs.col(0);
        if (argmax_lowest(pv) == *img.label) ++correct;
        loss -= std::log(std::max(static_cast<double>(probs(*img.label, 0)), 1e-30));
    }
    result.final_accuracy = static_cast<double>(correct) / static_cast<double>(corpus.size());
    result.final_loss = loss / static_cast<double>(corpus.size());
    return result;
}

}  // namespace onepix
