#pragma once

#include <onepix/model.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace testsupport {

// Pre-softmax score of one class together with the activation pattern
// (ReLU input signs and pool winner indices) seen while computing it.
template <class T>
struct ScoreProbe {
    double score = 0.0;
    std::vector<char> relu_signs;
    std::vector<int> pool_winners;
};

template <class T>
ScoreProbe<T> probe_score(const onepix::Model<T>& model, const onepix::Image<T>& img,
                          int class_index, onepix::Activations<T>& acts) {
    onepix::forward_into(model, img, acts);
    ScoreProbe<T> p;
    const auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (std::holds_alternative<onepix::ReLU<T>>(layers[i])) {
            const auto& in = acts.feat[i];
            for (Eigen::Index j = 0; j < in.size(); ++j)
                p.relu_signs.push_back(in.data()[j] > T(0) ? 1 : 0);
        } else if (std::holds_alternative<onepix::MaxPool2<T>>(layers[i])) {
            p.pool_winners.insert(p.pool_winners.end(), acts.pool_src[i].begin(),
                                  acts.pool_src[i].end());
        }
    }
    // feat.back() holds softmax output; the score feeding it is feat[L-1].
    p.score = static_cast<double>(acts.feat[layers.size() - 1](class_index, 0));
    return p;
}

struct FdReport {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped_kinks = 0;  // coordinates where x +/- h crosses a ReLU/pool boundary
    int skipped_clamped = 0;  // coordinates where x +/- h leaves [0, 1]
};

// Central finite differences on the pre-softmax class score versus the
// analytic input gradient. Coordinates whose +/- h evaluations disagree on
// any ReLU sign or pool winner sit on a kink where the derivative is not
// defined; they are excluded and counted.
template <class T>
FdReport check_input_gradient(const onepix::Model<T>& model, const onepix::Image<T>& img,
                              int class_index, double h = 1e-4) {
    onepix::Activations<T> acts;
    onepix::GradientMap<T> analytic = onepix::input_gradient(model, img, class_index, acts);

    FdReport rep;
    onepix::Image<T> probe = img;
    for (Eigen::Index i = 0; i < img.data.size(); ++i) {
        const double x0 = static_cast<double>(img.data[i]);
        if (x0 - h < 0.0 || x0 + h > 1.0) {
            ++rep.skipped_clamped;
            continue;
        }
        probe.data[i] = static_cast<T>(x0 + h);
        ScoreProbe<T> up = probe_score(model, probe, class_index, acts);
        probe.data[i] = static_cast<T>(x0 - h);
        ScoreProbe<T> dn = probe_score(model, probe, class_index, acts);
        probe.data[i] = img.data[i];
        if (up.relu_signs != dn.relu_signs || up.pool_winners != dn.pool_winners) {
            ++rep.skipped_kinks;
            continue;
        }
        const double fd = (up.score - dn.score) / (2.0 * h);
        const double an = static_cast<double>(analytic.data[i]);
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - an) / denom);
        ++rep.checked;
    }
    return rep;
}

}  // namespace testsupport
