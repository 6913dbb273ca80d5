#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "onepix/errors.hpp"
#include "onepix/image.hpp"
#include "onepix/model.hpp"
#include "onepix/rng.hpp"
#include "onepix/saliency.hpp"

namespace onepix {

// A candidate is a continuous vector [X, Y, color...] of size 2 + channels.
// Coordinates round half-up and clamp into bounds only at evaluation time;
// DE arithmetic stays unconstrained.
template <class T>
using Candidate = Vector<T>;

template <class T>
struct AttackConfig {
    int population = 100;     // N
    T weight = T(0.5);        // F, the differential weight
    int max_iterations = 100;
    bool constrained = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (population < 4) throw Error("population must be >= 4 (rand/1 needs three distinct partners)");
        if (!(weight > T(0))) throw Error("differential weight must be > 0");
        if (max_iterations < 1) throw Error("max_iterations must be >= 1");
    }
};

// Fixed-size DE population: one candidate per column.
template <class T>
struct Population {
    Matrix<T> members;   // (2 + channels) x N
    Array<T> fitness;    // true-class probability per member; NaN until evaluated
    int generation = 0;

    int size() const { return static_cast<int>(members.cols()); }
    bool evaluated() const { return fitness.size() == members.cols() && !fitness.hasNaN(); }
};

template <class T>
struct TraceRow {
    int generation = 0;
    T best_fitness = T(0);
    Candidate<T> best;
};

template <class T>
struct AttackResult {
    bool success = false;
    int iterations_used = 0;
    double elapsed_seconds = 0.0;  // DE loop only; saliency time is reported separately
    Candidate<T> best;
    T final_true_class_probability = T(1);
    std::optional<int> adversarial_label;
    std::vector<TraceRow<T>> trace;     // row 0 is the evaluated initial population
    Matrix<T> initial_population;       // generation-0 members, one per column
};

namespace detail {

inline int clamp_round(double v, int bound) {
    const double r = std::floor(v + 0.5);  // round half up
    if (r < 0) return 0;
    if (r > bound - 1) return bound - 1;
    return static_cast<int>(r);
}

template <class T>
inline T clamp01(T v) {
    return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

// Overwrites `out` with `image` plus the candidate's pixel.
template <class T>
inline void apply_perturbation_into(const Image<T>& image, const Candidate<T>& cand, Image<T>& out) {
    out.height = image.height;
    out.width = image.width;
    out.channels = image.channels;
    out.label = image.label;
    out.data = image.data;
    const int px = clamp_round(static_cast<double>(cand[0]), image.width);
    const int py = clamp_round(static_cast<double>(cand[1]), image.height);
    for (int c = 0; c < image.channels; ++c) out.at(py, px, c) = clamp01(cand[2 + c]);
}

// Reusable buffers for the evaluation-heavy loops.
template <class T>
struct EvalContext {
    Image<T> scratch;
    Activations<T> acts;
};

template <class T>
inline T fitness_into(const Model<T>& model, const Image<T>& image, int true_label,
                      const Candidate<T>& cand, EvalContext<T>& ctx) {
    apply_perturbation_into(image, cand, ctx.scratch);
    forward_into(model, ctx.scratch, ctx.acts);
    return ctx.acts.feat.back()(true_label, 0);
}

template <class T>
inline int best_index(const Population<T>& pop) {
    int best = 0;
    for (int i = 1; i < pop.size(); ++i)
        if (pop.fitness[i] < pop.fitness[best]) best = i;
    return best;
}

}  // namespace detail

// Copy of `image` with exactly the candidate's pixel replaced by its clamped
// color; every other pixel is bit-identical.
template <class T>
inline Image<T> apply_perturbation(const Image<T>& image, const Candidate<T>& cand) {
    Image<T> out;
    detail::apply_perturbation_into(image, cand, out);
    return out;
}

// True-class softmax probability of the perturbed image. Lower is fitter;
// the attack maximizes f_adv = 1 - fitness.
template <class T>
inline T fitness(const Model<T>& model, const Image<T>& image, int true_label, const Candidate<T>& cand) {
    if (true_label < 0 || true_label >= model.classes()) throw IndexError("true_label out of range");
    detail::EvalContext<T> ctx;
    return detail::fitness_into(model, image, true_label, cand, ctx);
}

// Generation-0 population. Unconstrained mode draws integer pixel positions
// uniformly over the image; constrained mode draws them uniformly from the
// susceptibility set. Colors are uniform in [0, 1] per channel. Per
// candidate the draw order is X, Y (or one set index), then the colors.
template <class T>
inline Population<T> init_population(const Image<T>& image, const AttackConfig<T>& cfg,
                                     const SusceptibilitySet* constraint, Rng& rng) {
    cfg.validate();
    if (cfg.constrained && (constraint == nullptr || constraint->empty()))
        throw EmptySusceptibilitySetError("constrained initialization needs a non-empty susceptibility set");

    Population<T> pop;
    const int dim = 2 + image.channels;
    pop.members.resize(dim, cfg.population);
    pop.fitness = Array<T>::Constant(cfg.population, std::numeric_limits<T>::quiet_NaN());
    for (int i = 0; i < cfg.population; ++i) {
        if (cfg.constrained) {
            const auto& c = constraint->coords[static_cast<std::size_t>(rng.below(constraint->coords.size()))];
            pop.members(0, i) = static_cast<T>(c.x);
            pop.members(1, i) = static_cast<T>(c.y);
        } else {
            pop.members(0, i) = static_cast<T>(rng.below(static_cast<std::uint64_t>(image.width)));
            pop.members(1, i) = static_cast<T>(rng.below(static_cast<std::uint64_t>(image.height)));
        }
        for (int c = 0; c < image.channels; ++c) pop.members(2 + c, i) = rng.uniform_as<T>();
    }
    return pop;
}

template <class T>
inline void evaluate_population(Population<T>& pop, const Model<T>& model, const Image<T>& image,
                                int true_label, detail::EvalContext<T>* ctx = nullptr) {
    detail::EvalContext<T> local;
    detail::EvalContext<T>& c = ctx ? *ctx : local;
    for (int i = 0; i < pop.size(); ++i)
        pop.fitness[i] = detail::fitness_into(model, image, true_label, pop.members.col(i).eval(), c);
}

// One DE generation: rand/1 mutation (child = m[r1] + F*(m[r2] - m[r3]),
// r1, r2, r3 distinct and != parent index, no crossover) with pairwise
// selection (child replaces its parent only on strictly lower fitness).
// All random indices for the generation are drawn before any evaluation,
// in parent-index order, r1 then r2 then r3, each by rejection.
template <class T>
inline Population<T> de_step(const Population<T>& pop, const Model<T>& model, const Image<T>& image,
                             int true_label, const AttackConfig<T>& cfg, Rng& rng,
                             detail::EvalContext<T>* ctx = nullptr) {
    if (!pop.evaluated()) throw Error("de_step needs an evaluated population");
    const int n = pop.size();
    Matrix<T> children(pop.members.rows(), n);
    for (int i = 0; i < n; ++i) {
        std::uint64_t r1, r2, r3;
        do r1 = rng.below(n); while (static_cast<int>(r1) == i);
        do r2 = rng.below(n); while (static_cast<int>(r2) == i || r2 == r1);
        do r3 = rng.below(n); while (static_cast<int>(r3) == i || r3 == r1 || r3 == r2);
        children.col(i) = pop.members.col(r1) + cfg.weight * (pop.members.col(r2) - pop.members.col(r3));
    }

    detail::EvalContext<T> local;
    detail::EvalContext<T>& c = ctx ? *ctx : local;
    Population<T> next = pop;
    next.generation = pop.generation + 1;
    for (int i = 0; i < n; ++i) {
        const T f = detail::fitness_into(model, image, true_label, children.col(i).eval(), c);
        if (f < pop.fitness[i]) {
            next.members.col(i) = children.col(i);
            next.fitness[i] = f;
        }
    }
    return next;
}

// Full one-pixel attack: constrained or unconstrained initialization, then
// DE generations with an early stop as soon as the best member flips the
// prediction. The success check runs once per completed generation.
template <class T>
inline AttackResult<T> run_attack(const Model<T>& model, const Image<T>& image, int true_label,
                                  const AttackConfig<T>& cfg, const SusceptibilitySet* constraint = nullptr) {
    cfg.validate();
    if (true_label < 0 || true_label >= model.classes()) throw IndexError("true_label out of range");
    if (predict(model, image) != true_label)
        throw NotCorrectlyClassifiedError("image is not classified as the given label; nothing to attack");

    Rng rng(cfg.seed);
    detail::EvalContext<T> ctx;
    const auto t0 = std::chrono::steady_clock::now();

    Population<T> pop = init_population(image, cfg, constraint, rng);
    AttackResult<T> result;
    result.initial_population = pop.members;
    evaluate_population(pop, model, image, true_label, &ctx);

    auto record = [&](const Population<T>& p) {
        const int b = detail::best_index(p);
        result.trace.push_back(TraceRow<T>{p.generation, p.fitness[b], p.members.col(b)});
    };
    record(pop);

    for (int gen = 1; gen <= cfg.max_iterations; ++gen) {
        pop = de_step(pop, model, image, true_label, cfg, rng, &ctx);
        record(pop);
        result.iterations_used = gen;

        const int b = detail::best_index(pop);
        detail::apply_perturbation_into(image, Candidate<T>(pop.members.col(b)), ctx.scratch);
        forward_into(model, ctx.scratch, ctx.acts);
        Vector<T> probs = ctx.acts.feat.back().col(0);
        const int label = argmax_lowest(probs);
        if (label != true_label) {
            result.success = true;
            result.adversarial_label = label;
            break;
        }
    }

    const int b = detail::best_index(pop);
    result.best = pop.members.col(b);
    result.final_true_class_probability = pop.fitness[b];
    result.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// Brute-force single-pixel minimum over every pixel position and every
// combination of grid colors. Ties keep the earliest candidate in row-major
// position order, then lexicographic color order (first channel most
// significant). Verification oracle for small instances.
template <class T>
inline std::pair<Candidate<T>, T> exhaustive_oracle(const Model<T>& model, const Image<T>& image,
                                                    int true_label, const std::vector<T>& color_grid) {
    if (true_label < 0 || true_label >= model.classes()) throw IndexError("true_label out of range");
    if (color_grid.empty()) throw Error("color grid is empty");

    detail::EvalContext<T> ctx;
    const int channels = image.channels;
    Candidate<T> cand(2 + channels), best_cand(2 + channels);
    T best = std::numeric_limits<T>::infinity();
    std::vector<std::size_t> idx(channels, 0);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            cand[0] = static_cast<T>(x);
            cand[1] = static_cast<T>(y);
            std::fill(idx.begin(), idx.end(), 0);
            for (;;) {
                for (int c = 0; c < channels; ++c) cand[2 + c] = color_grid[idx[c]];
                const T f = detail::fitness_into(model, image, true_label, cand, ctx);
                if (f < best) {
                    best = f;
                    best_cand = cand;
                }
                // Odometer over color combinations, last channel fastest.
                int c = channels - 1;
                for (; c >= 0; --c) {
                    if (++idx[c] < color_grid.size()) break;
                    idx[c] = 0;
                }
                if (c < 0) break;
            }
        }
    }
    return {best_cand, best};
}

// Trace export: "<generation> <best fitness> <X> <Y> <colors...>" per line.
template <class T>
inline std::string format_trace(const AttackResult<T>& result) {
    std::ostringstream out;
    char buf[32];
    for (const auto& row : result.trace) {
        out << row.generation;
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(row.best_fitness));
        out << " " << buf;
        for (Eigen::Index i = 0; i < row.best.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(row.best[i]));
            out << " " << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace onepix
