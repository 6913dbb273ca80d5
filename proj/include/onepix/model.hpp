#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "onepix/errors.hpp"
#include "onepix/image.hpp"
#include "onepix/layers.hpp"
#include "onepix/rng.hpp"
#include "onepix/types.hpp"

namespace onepix {

// Feed-forward image classifier: a validated layer stack ending in softmax.
// Immutable in normal use; forward/input_gradient/predict are const and safe
// to call concurrently on one instance.
template <class T>
class Model {
public:
    Model() = default;
    Model(Shape input, std::vector<Layer<T>> layers) : input_(input), layers_(std::move(layers)) {
        if (layers_.empty()) throw ShapeError("model needs at least one layer");
        stage_shapes_.reserve(layers_.size() + 1);
        stage_shapes_.push_back(input_);
        for (const auto& l : layers_) stage_shapes_.push_back(layer_out_shape(l, stage_shapes_.back()));
        if (!std::holds_alternative<Softmax<T>>(layers_.back()))
            throw ShapeError("model must end in softmax");
        const Shape& out = stage_shapes_.back();
        if (out.height != 1 || out.width != 1 || out.channels < 1)
            throw ShapeError("model output must be a class vector");
        classes_ = out.channels;
    }

    const Shape& input_shape() const { return input_; }
    int classes() const { return classes_; }
    const std::vector<Layer<T>>& layers() const { return layers_; }
    const std::vector<Shape>& stage_shapes() const { return stage_shapes_; }

    // For the trainer and the serializer; parameter values may change, layer
    // structure and shapes may not.
    std::vector<Layer<T>>& layers_mut() { return layers_; }

private:
    Shape input_{};
    int classes_ = 0;
    std::vector<Layer<T>> layers_;
    std::vector<Shape> stage_shapes_;
};

namespace detail {

template <class T>
inline void image_to_feat(const Image<T>& img, FeatMat<T>& x) {
    x.resize(img.channels, static_cast<Eigen::Index>(img.height) * img.width);
    for (int c = 0; c < img.channels; ++c)
        for (Eigen::Index p = 0; p < x.cols(); ++p) x(c, p) = img.data[p * img.channels + c];
}

template <class T>
inline void check_input(const Model<T>& model, const Image<T>& img) {
    if (img.shape() != model.input_shape()) throw ShapeError("image shape does not match model input");
}

}  // namespace detail

// Runs the stack, filling `acts` (reusable across calls to avoid allocation).
template <class T>
inline void forward_into(const Model<T>& model, const Image<T>& img, Activations<T>& acts) {
    detail::check_input(model, img);
    const auto& layers = model.layers();
    const auto& shapes = model.stage_shapes();
    acts.feat.resize(layers.size() + 1);
    acts.col.resize(layers.size());
    acts.pool_src.resize(layers.size());
    detail::image_to_feat(img, acts.feat[0]);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Shape& in = shapes[i];
        const FeatMat<T>& x = acts.feat[i];
        FeatMat<T>& y = acts.feat[i + 1];
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>>)
                    layer_forward(l, in, x, y, acts.col[i]);
                else if constexpr (std::is_same_v<L, MaxPool2<T>>)
                    layer_forward(l, in, x, y, acts.pool_src[i]);
                else
                    layer_forward(l, in, x, y);
            },
            layers[i]);
    }
}

// Softmax class probabilities for one image.
template <class T>
inline Probabilities<T> forward(const Model<T>& model, const Image<T>& img) {
    Activations<T> acts;
    forward_into(model, img, acts);
    return acts.feat.back().col(0);
}

// Lowest index wins ties.
template <class T>
inline int argmax_lowest(const Vector<T>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

template <class T>
inline int predict(const Model<T>& model, const Image<T>& img) {
    return argmax_lowest<T>(forward(model, img));
}

// d(pre-softmax score of class_index) / d(input intensities), backpropagated
// through every layer except the final softmax. Layout matches Image::data.
template <class T>
inline GradientMap<T> input_gradient(const Model<T>& model, const Image<T>& img, int class_index,
                                     Activations<T>& acts) {
    if (class_index < 0 || class_index >= model.classes())
        throw IndexError("class index " + std::to_string(class_index) + " out of range [0, " +
                         std::to_string(model.classes()) + ")");
    forward_into(model, img, acts);
    const auto& layers = model.layers();
    const auto& shapes = model.stage_shapes();
    const std::size_t last = layers.size() - 1;  // softmax, skipped

    FeatMat<T> dy = FeatMat<T>::Zero(model.classes(), 1);
    dy(class_index, 0) = T(1);
    FeatMat<T> dx, dcol;
    for (std::size_t i = last; i-- > 0;) {
        const Shape& in = shapes[i];
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>>)
                    layer_backward(l, in, acts.feat[i], acts.feat[i + 1], dy, dx, dcol);
                else if constexpr (std::is_same_v<L, MaxPool2<T>>)
                    layer_backward(l, in, acts.feat[i], acts.feat[i + 1], dy, dx, acts.pool_src[i]);
                else
                    layer_backward(l, in, acts.feat[i], acts.feat[i + 1], dy, dx);
            },
            layers[i]);
        dy.swap(dx);
    }

    GradientMap<T> g;
    g.height = img.height;
    g.width = img.width;
    g.channels = img.channels;
    g.data.resize(img.data.size());
    for (int c = 0; c < img.channels; ++c)
        for (Eigen::Index p = 0; p < dy.cols(); ++p) g.data[p * img.channels + c] = dy(c, p);
    return g;
}

template <class T>
inline GradientMap<T> input_gradient(const Model<T>& model, const Image<T>& img, int class_index) {
    Activations<T> acts;
    return input_gradient(model, img, class_index, acts);
}

namespace detail {

// Documented initialization: weights uniform in [-b, b] with
// b = sqrt(6 / (fan_in + fan_out)), drawn in storage (row-major) order from
// stream derive_seed(derive_seed(seed, kWeights), layer_index); biases zero.
template <class T>
inline void init_params(FeatMat<T>& w, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            w(r, c) = static_cast<T>(bound * (2.0 * rng.uniform() - 1.0));
}

}  // namespace detail

// The stock desk-scale classifier:
// conv 3x3x8 - relu - pool - conv 3x3x16 - relu - pool - dense - softmax.
template <class T>
inline Model<T> make_desk_model(int height, int width, int channels, int classes, std::uint64_t seed) {
    if (classes < 1) throw ShapeError("classes must be >= 1");
    std::vector<Layer<T>> layers;
    Conv2d<T> c1(channels, 8, 3);
    Conv2d<T> c2(8, 16, 3);
    const int h2 = (height + 1) / 2, w2 = (width + 1) / 2;
    const int h4 = (h2 + 1) / 2, w4 = (w2 + 1) / 2;
    Dense<T> fc(16 * h4 * w4, classes);

    const std::uint64_t base = derive_seed(seed, seed_stream::kWeights);
    {
        Rng rng(derive_seed(base, 0));
        detail::init_params(c1.weight, channels * 9, 8 * 9, rng);
    }
    {
        Rng rng(derive_seed(base, 3));
        detail::init_params(c2.weight, 8 * 9, 16 * 9, rng);
    }
    {
        Rng rng(derive_seed(base, 6));
        detail::init_params(fc.weight, fc.in_size, fc.out_size, rng);
    }

    layers.emplace_back(std::move(c1));
    layers.emplace_back(ReLU<T>{});
    layers.emplace_back(MaxPool2<T>{});
    layers.emplace_back(std::move(c2));
    layers.emplace_back(ReLU<T>{});
    layers.emplace_back(MaxPool2<T>{});
    layers.emplace_back(std::move(fc));
    layers.emplace_back(Softmax<T>{});
    return Model<T>(Shape{channels, height, width}, std::move(layers));
}

}  // namespace onepix
