#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "onepix/attack.hpp"
#include "onepix/corpus.hpp"
#include "onepix/errors.hpp"
#include "onepix/model.hpp"
#include "onepix/parallel.hpp"
#include "onepix/rng.hpp"
#include "onepix/saliency.hpp"

namespace onepix {

enum class Mode { kUnconstrained, kConstrained };

inline const char* mode_name(Mode m) { return m == Mode::kUnconstrained ? "unconstrained" : "constrained"; }

// Per-seed, per-mode aggregates. Absent values (no divisor, or a field that
// does not apply to the mode) are NaN and render as "-".
struct RunStats {
    std::uint64_t seed = 0;
    Mode mode = Mode::kUnconstrained;
    double total_time_s = 0.0;       // DE loop time summed over counted attacks
    double avg_time_s = std::numeric_limits<double>::quiet_NaN();
    double avg_iterations = std::numeric_limits<double>::quiet_NaN();
    long long success_count = 0;
    long long attacked_count = 0;
    long long fallback_count = 0;    // constrained attacks that fell back to unconstrained init
    double saliency_time_s = std::numeric_limits<double>::quiet_NaN();  // constrained rows only
};

// One attack outcome, handed to the observer hook in deterministic order
// (mode, then seed, then corpus index). `constraint` is non-null whenever a
// susceptibility set was computed, including empty-set fallbacks.
template <class T>
struct AttackObservation {
    Mode mode = Mode::kUnconstrained;
    std::uint64_t run_seed = 0;
    int image_index = 0;
    bool fallback = false;
    const SusceptibilitySet* constraint = nullptr;
    const AttackResult<T>& result;
};

template <class T>
struct BenchOptions {
    // Restrict totals and averages to successful attacks (divisor becomes
    // success_count). Default counts every attacked image.
    bool successful_only = false;
    int threads = 1;
    std::function<void(const AttackObservation<T>&)> observer;
};

struct ExperimentReport {
    std::vector<RunStats> rows;  // all unconstrained rows in seed order, then all constrained
    std::vector<std::uint64_t> seeds;
    std::string model_id;
    std::string corpus_id;
    std::string config_echo;
    long long excluded_count = 0;  // misclassified images, attacked in neither mode
    bool successful_only = false;
};

namespace detail {

template <class T>
inline std::string describe_model(const Model<T>& model) {
    std::ostringstream out;
    const Shape in = model.input_shape();
    for (const auto& layer : model.layers()) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Conv2d<T>>)
                    out << "conv" << l.ksize << "x" << l.ksize << "x" << l.out_channels << "-";
                else if constexpr (std::is_same_v<L, ReLU<T>>)
                    out << "relu-";
                else if constexpr (std::is_same_v<L, MaxPool2<T>>)
                    out << "pool2-";
                else if constexpr (std::is_same_v<L, Dense<T>>)
                    out << "dense" << l.out_size << "-";
                else
                    out << "softmax";
            },
            layer);
    }
    out << "@" << in.width << "x" << in.height << "x" << in.channels;
    return out.str();
}

template <class T>
inline std::string echo_config(const AttackConfig<T>& a, const SaliencyConfig& s, bool successful_only) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "population=%d weight=%g max_iterations=%d samples=%d sigma=%g tau=%g saliency_seed=%llu "
                  "averages=%s",
                  a.population, static_cast<double>(a.weight), a.max_iterations, s.samples, s.sigma, s.tau,
                  static_cast<unsigned long long>(s.seed), successful_only ? "successful" : "all");
    return buf;
}

// Outcome of one image's attack in one (seed, mode) run.
template <class T>
struct BenchSlot {
    AttackResult<T> result;
    SusceptibilitySet set;
    bool has_set = false;
    bool fallback = false;
    double saliency_s = 0.0;
};

}  // namespace detail

// Runs every correctly classified corpus image through run_attack for each
// seed in both modes. Constrained mode first computes the per-image
// susceptibility set (smoothgrad -> normalize -> threshold) for the clean
// image's predicted class; an empty set falls back to unconstrained
// initialization and is counted. Pairing guarantees: both modes attack the
// identical image subset in the identical corpus order, and image attacks use
// per-image seeds derived from (run seed, corpus index) only, so results do
// not depend on thread count.
template <class T>
inline ExperimentReport run_experiment(const Model<T>& model, const Corpus<T>& corpus,
                                       const AttackConfig<T>& attack_cfg, const SaliencyConfig& saliency_cfg,
                                       const std::vector<std::uint64_t>& seeds,
                                       const BenchOptions<T>& opts = {}) {
    attack_cfg.validate();
    saliency_cfg.validate();
    if (corpus.images.empty()) throw EmptyCorpusError("experiment corpus is empty");
    if (seeds.empty()) throw Error("experiment needs at least one seed");
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
        const auto& img = corpus.images[i];
        if (!img.label) throw Error("corpus image " + std::to_string(i) + " has no label");
        if (*img.label < 0 || *img.label >= model.classes())
            throw IndexError("corpus image " + std::to_string(i) + " label " + std::to_string(*img.label) +
                             " out of range for " + std::to_string(model.classes()) + " classes");
        if (img.shape() != model.input_shape())
            throw ShapeError("corpus image " + std::to_string(i) + " does not match the model input shape");
    }

    // Attacked subset: correctly classified images, in corpus order. The
    // subset is decided once so both modes and all seeds pair up exactly.
    std::vector<int> attacked;
    for (int i = 0; i < corpus.size(); ++i)
        if (predict(model, corpus.images[i]) == *corpus.images[i].label) attacked.push_back(i);

    ExperimentReport report;
    report.seeds = seeds;
    report.model_id = detail::describe_model(model);
    report.corpus_id = corpus.name.empty() ? corpus.source : corpus.name;
    report.config_echo = detail::echo_config(attack_cfg, saliency_cfg, opts.successful_only);
    report.excluded_count = corpus.size() - static_cast<long long>(attacked.size());
    report.successful_only = opts.successful_only;

    const int n = static_cast<int>(attacked.size());
    for (const Mode mode : {Mode::kUnconstrained, Mode::kConstrained}) {
        for (const std::uint64_t seed : seeds) {
            std::vector<detail::BenchSlot<T>> slots(static_cast<std::size_t>(n));
            const std::uint64_t attack_base = derive_seed(seed, seed_stream::kAttack);
            const std::uint64_t saliency_base = derive_seed(saliency_cfg.seed, seed_stream::kSaliency);
            parallel_for(n, opts.threads, [&](int j) {
                const int idx = attacked[static_cast<std::size_t>(j)];
                const Image<T>& img = corpus.images[idx];
                detail::BenchSlot<T>& slot = slots[static_cast<std::size_t>(j)];

                AttackConfig<T> acfg = attack_cfg;
                acfg.seed = derive_seed(attack_base, static_cast<std::uint64_t>(idx));
                acfg.constrained = false;
                const SusceptibilitySet* constraint = nullptr;
                if (mode == Mode::kConstrained) {
                    SaliencyConfig scfg = saliency_cfg;
                    scfg.seed = derive_seed(saliency_base, static_cast<std::uint64_t>(idx));
                    const auto t0 = std::chrono::steady_clock::now();
                    // Predicted class == label for every attacked image.
                    SensitivityMap<T> map = normalize(smoothgrad(model, img, *img.label, scfg));
                    slot.set = threshold(map, scfg.tau);
                    slot.saliency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    slot.has_set = true;
                    if (slot.set.empty())
                        slot.fallback = true;
                    else {
                        acfg.constrained = true;
                        constraint = &slot.set;
                    }
                }
                slot.result = run_attack(model, img, *img.label, acfg, constraint);
            });

            RunStats st;
            st.seed = seed;
            st.mode = mode;
            st.attacked_count = n;
            double time_all = 0, time_succ = 0, saliency = 0;
            long long iter_all = 0, iter_succ = 0;
            for (int j = 0; j < n; ++j) {
                const auto& slot = slots[static_cast<std::size_t>(j)];
                if (opts.observer) {
                    AttackObservation<T> obs{mode, seed, attacked[static_cast<std::size_t>(j)], slot.fallback,
                                             slot.has_set ? &slot.set : nullptr, slot.result};
                    opts.observer(obs);
                }
                time_all += slot.result.elapsed_seconds;
                iter_all += slot.result.iterations_used;
                saliency += slot.saliency_s;
                if (slot.result.success) {
                    ++st.success_count;
                    time_succ += slot.result.elapsed_seconds;
                    iter_succ += slot.result.iterations_used;
                }
                if (slot.fallback) ++st.fallback_count;
            }
            const long long denom = opts.successful_only ? st.success_count : st.attacked_count;
            st.total_time_s = opts.successful_only ? time_succ : time_all;
            if (denom > 0) {
                st.avg_time_s = st.total_time_s / static_cast<double>(denom);
                st.avg_iterations =
                    static_cast<double>(opts.successful_only ? iter_succ : iter_all) / static_cast<double>(denom);
            }
            if (mode == Mode::kConstrained) st.saliency_time_s = saliency;
            report.rows.push_back(st);
        }
    }
    return report;
}

enum class ReportFormat { kTable, kCsv };

inline constexpr const char* kReportCsvHeader =
    "seed,mode,total_time_s,avg_time_s,avg_iterations,success_count,attacked_count,fallback_count,saliency_time_s";

namespace detail {

inline std::string g17(double v) {
    if (std::isnan(v)) return "-";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fixed(double v, int places) {
    if (std::isnan(v)) return "-";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", places, v);
    return buf;
}

inline void put_cell(std::string& line, const std::string& cell, std::size_t width) {
    line += cell;
    for (std::size_t i = cell.size(); i < width; ++i) line += ' ';
}

}  // namespace detail

// Table format: one row per seed with the unconstrained column triplet
// T(s), AVG T(s), AVG # itr followed by the constrained triplet, then a
// supplementary block with success, fallback, and saliency/combined cost.
// CSV format: the fixed header plus one row per RunStats, %.17g numbers,
// "-" for absent values.
inline std::string emit_report(const ExperimentReport& report, ReportFormat format) {
    std::ostringstream out;
    const std::size_t n_seeds = report.seeds.size();
    if (report.rows.size() != 2 * n_seeds) throw Error("report rows do not pair with seeds");

    if (format == ReportFormat::kCsv) {
        out << kReportCsvHeader << "\n";
        for (const RunStats& st : report.rows) {
            out << st.seed << "," << mode_name(st.mode) << "," << detail::g17(st.total_time_s) << ","
                << detail::g17(st.avg_time_s) << "," << detail::g17(st.avg_iterations) << "," << st.success_count
                << "," << st.attacked_count << "," << st.fallback_count << "," << detail::g17(st.saliency_time_s)
                << "\n";
        }
        return out.str();
    }

    out << "model:  " << report.model_id << "\n";
    out << "corpus: " << report.corpus_id << " (" << (report.rows.empty() ? 0 : report.rows[0].attacked_count)
        << " attacked, " << report.excluded_count << " excluded)\n";
    out << "config: " << report.config_echo << "\n\n";

    const std::size_t seed_w = 14, col_w = 11;
    std::string line;
    detail::put_cell(line, "", seed_w);
    detail::put_cell(line, "unconstrained", 3 * col_w);
    detail::put_cell(line, "constrained", 3 * col_w);
    out << line << "\n";
    line.clear();
    detail::put_cell(line, "seed", seed_w);
    for (int rep = 0; rep < 2; ++rep) {
        detail::put_cell(line, "T(s)", col_w);
        detail::put_cell(line, "AVG T(s)", col_w);
        detail::put_cell(line, "AVG # itr", col_w);
    }
    out << line << "\n";
    for (std::size_t i = 0; i < n_seeds; ++i) {
        const RunStats& u = report.rows[i];
        const RunStats& c = report.rows[n_seeds + i];
        line.clear();
        detail::put_cell(line, std::to_string(u.seed), seed_w);
        for (const RunStats* st : {&u, &c}) {
            detail::put_cell(line, detail::fixed(st->total_time_s, 3), col_w);
            detail::put_cell(line, detail::fixed(st->avg_time_s, 4), col_w);
            detail::put_cell(line, detail::fixed(st->avg_iterations, 2), col_w);
        }
        out << line << "\n";
    }

    out << "\n";
    line.clear();
    detail::put_cell(line, "seed", seed_w);
    for (const char* h : {"success(u)", "success(c)", "fallback(c)", "saliency T(s)", "combined T(s)"})
        detail::put_cell(line, h, 14);
    out << line << "\n";
    for (std::size_t i = 0; i < n_seeds; ++i) {
        const RunStats& u = report.rows[i];
        const RunStats& c = report.rows[n_seeds + i];
        line.clear();
        detail::put_cell(line, std::to_string(u.seed), seed_w);
        detail::put_cell(line, std::to_string(u.success_count) + "/" + std::to_string(u.attacked_count), 14);
        detail::put_cell(line, std::to_string(c.success_count) + "/" + std::to_string(c.attacked_count), 14);
        detail::put_cell(line, std::to_string(c.fallback_count), 14);
        detail::put_cell(line, detail::fixed(c.saliency_time_s, 3), 14);
        const double combined = std::isnan(c.saliency_time_s) ? c.total_time_s : c.total_time_s + c.saliency_time_s;
        detail::put_cell(line, detail::fixed(combined, 3), 14);
        out << line << "\n";
    }
    return out.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double_or_nan(const std::string& s, const std::string& where) {
    if (s == "-") return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty()) throw FormatError(where + ": bad number \"" + s + "\"", 0);
    return v;
}

inline long long parse_count(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || s.empty() || v < 0)
        throw FormatError(where + ": bad count \"" + s + "\"", 0);
    return v;
}

}  // namespace detail

// Inverse of emit_report's CSV format; numbers written with %.17g parse back
// bit-identically.
inline std::vector<RunStats> parse_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty csv", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kReportCsvHeader) throw FormatError("csv header mismatch", 0);

    std::vector<RunStats> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string where = "csv line " + std::to_string(line_no);
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 9) throw FormatError(where + ": expected 9 fields, got " + std::to_string(fields.size()), 0);
        RunStats st;
        char* end = nullptr;
        st.seed = std::strtoull(fields[0].c_str(), &end, 10);
        if (end != fields[0].c_str() + fields[0].size() || fields[0].empty())
            throw FormatError(where + ": bad seed \"" + fields[0] + "\"", 0);
        if (fields[1] == "unconstrained")
            st.mode = Mode::kUnconstrained;
        else if (fields[1] == "constrained")
            st.mode = Mode::kConstrained;
        else
            throw FormatError(where + ": bad mode \"" + fields[1] + "\"", 0);
        st.total_time_s = detail::parse_double_or_nan(fields[2], where);
        st.avg_time_s = detail::parse_double_or_nan(fields[3], where);
        st.avg_iterations = detail::parse_double_or_nan(fields[4], where);
        st.success_count = detail::parse_count(fields[5], where);
        st.attacked_count = detail::parse_count(fields[6], where);
        st.fallback_count = detail::parse_count(fields[7], where);
        st.saliency_time_s = detail::parse_double_or_nan(fields[8], where);
        rows.push_back(st);
    }
    return rows;
}

}  // namespace onepix
