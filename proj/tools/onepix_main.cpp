// onepix: train a desk-scale CNN, emit saliency maps, run one-pixel DE
// attacks, benchmark constrained vs. unconstrained convergence, and verify
// against the exhaustive single-pixel oracle.
//
// Exit codes: 0 success, 2 usage error, 3 precondition violation, 4 budget
// exceeded, 1 any other error.
//
// Every command takes one --seed; component streams are derived from it
// (attack, saliency, corpus, weights, shuffle) so reruns with the same flags
// reproduce results exactly. bench additionally takes --seeds, the list of
// per-run attack seeds.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "onepix/onepix.hpp"

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int parse_int(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(s, &used);
    } catch (const std::exception&) {
        throw UsageError(what + ": \"" + s + "\" is not an integer");
    }
    if (used != s.size()) throw UsageError(what + ": \"" + s + "\" is not an integer");
    return v;
}

float parse_float(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    float v = 0;
    try {
        v = std::stof(s, &used);
    } catch (const std::exception&) {
        throw UsageError(what + ": \"" + s + "\" is not a number");
    }
    if (used != s.size()) throw UsageError(what + ": \"" + s + "\" is not a number");
    return v;
}

// Synthetic corpus spec string: comma-separated key=value pairs. Keys:
// classes, per-class, size (or height/width), noise, contrast, background.
onepix::SyntheticSpec<float> parse_synthetic_spec(const std::string& text, int channels, std::uint64_t seed) {
    onepix::SyntheticSpec<float> spec;
    spec.channels = channels;
    spec.seed = seed;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = text.substr(pos, comma - pos);
        pos = comma + 1;
        if (item.empty()) continue;
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("--synthetic item \"" + item + "\" is not key=value");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        if (key == "classes")
            spec.classes = parse_int(value, "--synthetic classes");
        else if (key == "per-class" || key == "per_class")
            spec.per_class = parse_int(value, "--synthetic per-class");
        else if (key == "size")
            spec.height = spec.width = parse_int(value, "--synthetic size");
        else if (key == "height")
            spec.height = parse_int(value, "--synthetic height");
        else if (key == "width")
            spec.width = parse_int(value, "--synthetic width");
        else if (key == "distractors")
            spec.distractors = parse_int(value, "--synthetic distractors");
        else if (key == "noise")
            spec.noise = parse_float(value, "--synthetic noise");
        else if (key == "contrast")
            spec.contrast = parse_float(value, "--synthetic contrast");
        else if (key == "background")
            spec.background = parse_float(value, "--synthetic background");
        else
            throw UsageError("--synthetic key \"" + key + "\" is not recognized");
    }
    return spec;
}

onepix::Image<float> load_input_image(const std::string& path, const onepix::Model<float>& model) {
    return onepix::to_channels(onepix::read_ppm<float>(path), model.input_shape().channels);
}

struct TrainArgs {
    std::string corpus_dir, synthetic, out, save_corpus_dir;
    int epochs = 10, batch = 16, channels = 3;
    double lr = 0.05;
    std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
    if (a.corpus_dir.empty() == a.synthetic.empty())
        throw UsageError("provide exactly one of --corpus and --synthetic");
    onepix::Corpus<float> corpus = a.corpus_dir.empty()
                                       ? onepix::generate_synthetic_corpus(
                                             parse_synthetic_spec(a.synthetic, a.channels, a.seed))
                                       : onepix::load_corpus<float>(a.corpus_dir, a.channels);
    int classes = 0;
    for (const auto& img : corpus.images)
        if (img.label && *img.label + 1 > classes) classes = *img.label + 1;
    if (classes < 2) throw UsageError("corpus must contain at least 2 classes");

    const auto& first = corpus.images.front();
    onepix::Model<float> model =
        onepix::make_desk_model<float>(first.height, first.width, first.channels, classes, a.seed);
    onepix::TrainConfig<float> cfg;
    cfg.learning_rate = static_cast<float>(a.lr);
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    onepix::TrainResult<float> result = onepix::train(model, corpus.images, cfg);
    onepix::save_model(result.model, a.out);
    if (!a.save_corpus_dir.empty()) onepix::save_corpus(a.save_corpus_dir, corpus);

    std::printf("corpus: %s (%d images, %d classes)\n", corpus.name.c_str(), corpus.size(), classes);
    std::printf("model: %s\n", onepix::detail::describe_model(result.model).c_str());
    std::printf("final_accuracy: %.6g\n", result.final_accuracy);
    std::printf("final_loss: %.6g\n", result.final_loss);
    std::printf("saved: %s\n", a.out.c_str());
    return 0;
}

struct SaliencyArgs {
    std::string model, image, map_out, pgm_out, set_out;
    int class_index = -1, samples = 16;
    double sigma = 0.15, tau = 0.5;
    std::uint64_t seed = 0;
};

int cmd_saliency(const SaliencyArgs& a) {
    onepix::Model<float> model = onepix::load_model<float>(a.model);
    onepix::Image<float> img = load_input_image(a.image, model);
    const int predicted = onepix::predict(model, img);
    const int cls = a.class_index < 0 ? predicted : a.class_index;

    onepix::SaliencyConfig cfg;
    cfg.samples = a.samples;
    cfg.sigma = a.sigma;
    cfg.tau = a.tau;
    cfg.seed = onepix::derive_seed(a.seed, onepix::seed_stream::kSaliency);
    onepix::SensitivityMap<float> raw = onepix::smoothgrad(model, img, cls, cfg);
    onepix::SensitivityMap<float> norm = onepix::normalize(raw);
    onepix::SusceptibilitySet set = onepix::threshold(norm, cfg.tau);

    std::printf("class: %d (%s)\n", cls, a.class_index < 0 ? "predicted" : "given");
    std::printf("raw_min: %.9g raw_max: %.9g\n", static_cast<double>(raw.values.minCoeff()),
                static_cast<double>(raw.values.maxCoeff()));
    std::printf("set_size: %zu (tau=%g)\n", set.coords.size(), cfg.tau);
    if (norm.degenerate) std::printf("warning: sensitivity map is constant; normalized map is all zeros\n");
    if (set.empty()) std::printf("warning: susceptibility set is empty for %s\n", a.image.c_str());

    if (!a.map_out.empty()) {
        std::ofstream out(a.map_out);
        if (!out) throw onepix::Error("cannot open " + a.map_out + " for writing");
        out << onepix::format_map_text(norm);
    }
    if (!a.pgm_out.empty()) onepix::write_pgm(a.pgm_out, norm.values);
    if (!a.set_out.empty()) {
        std::ofstream out(a.set_out);
        if (!out) throw onepix::Error("cannot open " + a.set_out + " for writing");
        out << onepix::format_set_text(set);
    }
    return 0;
}

struct AttackArgs {
    std::string model, image, out, trace_out;
    int label = -1;
    bool constrained = false;
    int population = 100, max_iterations = 100, samples = 16;
    double weight = 0.5, sigma = 0.15, tau = 0.5;
    std::uint64_t seed = 0;
};

int cmd_attack(const AttackArgs& a) {
    onepix::Model<float> model = onepix::load_model<float>(a.model);
    onepix::Image<float> img = load_input_image(a.image, model);
    const int predicted = onepix::predict(model, img);
    const int label = a.label < 0 ? predicted : a.label;

    onepix::AttackConfig<float> cfg;
    cfg.population = a.population;
    cfg.weight = static_cast<float>(a.weight);
    cfg.max_iterations = a.max_iterations;
    cfg.seed = onepix::derive_seed(a.seed, onepix::seed_stream::kAttack);
    cfg.constrained = false;

    onepix::SusceptibilitySet set;
    const onepix::SusceptibilitySet* constraint = nullptr;
    bool fallback = false;
    if (a.constrained) {
        onepix::SaliencyConfig scfg;
        scfg.samples = a.samples;
        scfg.sigma = a.sigma;
        scfg.tau = a.tau;
        scfg.seed = onepix::derive_seed(a.seed, onepix::seed_stream::kSaliency);
        set = onepix::threshold(onepix::normalize(onepix::smoothgrad(model, img, predicted, scfg)), scfg.tau);
        if (set.empty()) {
            fallback = true;
            std::printf("fallback: susceptibility set empty; using unconstrained initialization\n");
        } else {
            cfg.constrained = true;
            constraint = &set;
        }
    }

    onepix::AttackResult<float> result = onepix::run_attack(model, img, label, cfg, constraint);
    const int px = onepix::detail::clamp_round(static_cast<double>(result.best[0]), img.width);
    const int py = onepix::detail::clamp_round(static_cast<double>(result.best[1]), img.height);

    std::printf("success: %s\n", result.success ? "true" : "false");
    std::printf("iterations: %d\n", result.iterations_used);
    std::printf("pixel: x=%d y=%d\n", px, py);
    std::printf("color:");
    for (int c = 0; c < img.channels; ++c)
        std::printf(" %.9g", static_cast<double>(onepix::detail::clamp01(result.best[2 + c])));
    std::printf("\n");
    std::printf("true_class_probability: %.9g\n", static_cast<double>(result.final_true_class_probability));
    if (result.adversarial_label) std::printf("adversarial_label: %d\n", *result.adversarial_label);
    if (a.constrained) std::printf("constrained: %s\n", fallback ? "fallback" : "true");
    std::printf("elapsed_s: %.3f\n", result.elapsed_seconds);

    if (!a.out.empty()) onepix::write_ppm(a.out, onepix::apply_perturbation(img, result.best));
    if (!a.trace_out.empty()) {
        std::ofstream out(a.trace_out);
        if (!out) throw onepix::Error("cannot open " + a.trace_out + " for writing");
        out << onepix::format_trace(result);
    }
    return 0;
}

struct BenchArgs {
    std::string model, corpus_dir, synthetic, format = "table", csv_out;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::uint64_t seed = 0;
    int population = 100, max_iterations = 100, samples = 16, threads = 1;
    double weight = 0.5, sigma = 0.15, tau = 0.5;
    bool successful_only = false;
};

int cmd_bench(const BenchArgs& a) {
    if (a.corpus_dir.empty() == a.synthetic.empty())
        throw UsageError("provide exactly one of --corpus and --synthetic");
    onepix::Model<float> model = onepix::load_model<float>(a.model);
    const int channels = model.input_shape().channels;
    onepix::Corpus<float> corpus =
        a.corpus_dir.empty()
            ? onepix::generate_synthetic_corpus(parse_synthetic_spec(a.synthetic, channels, a.seed))
            : onepix::load_corpus<float>(a.corpus_dir, channels);

    onepix::AttackConfig<float> acfg;
    acfg.population = a.population;
    acfg.weight = static_cast<float>(a.weight);
    acfg.max_iterations = a.max_iterations;
    onepix::SaliencyConfig scfg;
    scfg.samples = a.samples;
    scfg.sigma = a.sigma;
    scfg.tau = a.tau;
    scfg.seed = a.seed;
    onepix::BenchOptions<float> opts;
    opts.successful_only = a.successful_only;
    opts.threads = a.threads;

    onepix::ExperimentReport report = onepix::run_experiment(model, corpus, acfg, scfg, a.seeds, opts);
    const onepix::ReportFormat fmt =
        a.format == "csv" ? onepix::ReportFormat::kCsv : onepix::ReportFormat::kTable;
    std::fputs(onepix::emit_report(report, fmt).c_str(), stdout);
    if (!a.csv_out.empty()) {
        std::ofstream out(a.csv_out);
        if (!out) throw onepix::Error("cannot open " + a.csv_out + " for writing");
        out << onepix::emit_report(report, onepix::ReportFormat::kCsv);
    }
    return 0;
}

struct OracleArgs {
    std::string model, image;
    int label = -1;
    std::vector<double> grid = {0.0, 0.5, 1.0};
    std::uint64_t budget = 1000000;
};

int cmd_oracle(const OracleArgs& a) {
    onepix::Model<float> model = onepix::load_model<float>(a.model);
    onepix::Image<float> img = load_input_image(a.image, model);
    const int label = a.label < 0 ? onepix::predict(model, img) : a.label;
    if (a.grid.empty()) throw UsageError("--grid needs at least one value");

    unsigned long long evals = static_cast<unsigned long long>(img.height) * img.width;
    bool overflow = false;
    for (int c = 0; c < img.channels && !overflow; ++c) {
        const unsigned long long g = a.grid.size();
        if (evals > std::numeric_limits<unsigned long long>::max() / g)
            overflow = true;
        else
            evals *= g;
    }
    if (overflow || evals > a.budget) {
        if (overflow)
            std::printf("oracle needs more than %llu evaluations, over the budget of %llu\n",
                        std::numeric_limits<unsigned long long>::max(),
                        static_cast<unsigned long long>(a.budget));
        else
            std::printf("oracle needs %llu evaluations, over the budget of %llu\n", evals,
                        static_cast<unsigned long long>(a.budget));
        return 4;
    }

    std::vector<float> grid(a.grid.begin(), a.grid.end());
    const auto [best, fit] = onepix::exhaustive_oracle(model, img, label, grid);
    std::printf("evaluations: %llu\n", evals);
    std::printf("pixel: x=%d y=%d\n", static_cast<int>(best[0]), static_cast<int>(best[1]));
    std::printf("color:");
    for (int c = 0; c < img.channels; ++c) std::printf(" %.9g", static_cast<double>(best[2 + c]));
    std::printf("\n");
    std::printf("fitness: %.9g\n", static_cast<double>(fit));
    return 0;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const onepix::NotCorrectlyClassifiedError& e) {
        std::fprintf(stderr, "error: image not correctly classified (%s)\n", e.what());
        return 3;
    } catch (const onepix::EmptySusceptibilitySetError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const onepix::ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const onepix::IndexError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"saliency-guided one-pixel adversarial attack toolkit"};
    app.require_subcommand(1);
    app.footer("Randomness: each command fans --seed out into fixed component streams\n"
               "(attack, saliency noise, corpus generation, weight init, shuffling), so\n"
               "identical flags reproduce identical results. bench runs the attack once\n"
               "per seed in --seeds, in both modes, over the same images.");

    TrainArgs train;
    CLI::App* t = app.add_subcommand("train", "train the desk-scale CNN and save it");
    t->add_option("--corpus", train.corpus_dir, "corpus directory (manifest.txt + PPM files)");
    t->add_option("--synthetic", train.synthetic,
                  "synthetic corpus spec, e.g. classes=3,per-class=20,size=16");
    t->add_option("--out", train.out, "output model path")->required();
    t->add_option("--epochs", train.epochs)->capture_default_str();
    t->add_option("--lr", train.lr, "SGD learning rate")->capture_default_str();
    t->add_option("--batch", train.batch, "mini-batch size")->capture_default_str();
    t->add_option("--channels", train.channels, "image channels (1 or 3)")->capture_default_str();
    t->add_option("--seed", train.seed)->capture_default_str();
    t->add_option("--save-corpus", train.save_corpus_dir, "also write the corpus to this directory");

    SaliencyArgs sal;
    CLI::App* s = app.add_subcommand("saliency", "emit a sensitivity map and susceptibility set");
    s->add_option("--model", sal.model)->required();
    s->add_option("--image", sal.image, "input PPM")->required();
    s->add_option("--class-index", sal.class_index, "class to differentiate (default: predicted)");
    s->add_option("--samples", sal.samples, "noise samples n")->capture_default_str();
    s->add_option("--sigma", sal.sigma, "noise standard deviation")->capture_default_str();
    s->add_option("--tau", sal.tau, "susceptibility threshold")->capture_default_str();
    s->add_option("--seed", sal.seed)->capture_default_str();
    s->add_option("--map-out", sal.map_out, "write the normalized map as text");
    s->add_option("--pgm-out", sal.pgm_out, "write the normalized map as PGM");
    s->add_option("--set-out", sal.set_out, "write susceptibility coordinates as text");

    AttackArgs atk;
    CLI::App* k = app.add_subcommand("attack", "run one one-pixel DE attack");
    k->add_option("--model", atk.model)->required();
    k->add_option("--image", atk.image, "input PPM")->required();
    k->add_option("--label", atk.label, "true class label (default: predicted)");
    k->add_flag("--constrained", atk.constrained, "constrain initialization to the susceptibility set");
    k->add_option("--population", atk.population, "DE population size N")->capture_default_str();
    k->add_option("--weight", atk.weight, "DE differential weight F")->capture_default_str();
    k->add_option("--max-iterations", atk.max_iterations)->capture_default_str();
    k->add_option("--samples", atk.samples, "saliency noise samples")->capture_default_str();
    k->add_option("--sigma", atk.sigma, "saliency noise std")->capture_default_str();
    k->add_option("--tau", atk.tau, "saliency threshold")->capture_default_str();
    k->add_option("--seed", atk.seed)->capture_default_str();
    k->add_option("--out", atk.out, "write the perturbed image as PPM");
    k->add_option("--trace-out", atk.trace_out, "write the per-generation best trace");

    BenchArgs bench;
    CLI::App* b = app.add_subcommand("bench", "benchmark constrained vs unconstrained attacks");
    b->add_option("--model", bench.model)->required();
    b->add_option("--corpus", bench.corpus_dir, "corpus directory");
    b->add_option("--synthetic", bench.synthetic, "synthetic corpus spec (see train)");
    b->add_option("--seeds", bench.seeds, "comma-separated attack run seeds")
        ->delimiter(',')
        ->capture_default_str();
    b->add_option("--seed", bench.seed, "base seed for corpus generation and saliency noise")
        ->capture_default_str();
    b->add_option("--population", bench.population)->capture_default_str();
    b->add_option("--weight", bench.weight)->capture_default_str();
    b->add_option("--max-iterations", bench.max_iterations)->capture_default_str();
    b->add_option("--samples", bench.samples)->capture_default_str();
    b->add_option("--sigma", bench.sigma)->capture_default_str();
    b->add_option("--tau", bench.tau)->capture_default_str();
    b->add_flag("--successful-only", bench.successful_only, "average over successful attacks only");
    b->add_option("--threads", bench.threads, "worker thread cap")->capture_default_str();
    b->add_option("--format", bench.format, "report format")
        ->check(CLI::IsMember({"table", "csv"}))
        ->capture_default_str();
    b->add_option("--csv-out", bench.csv_out, "also write the CSV report to this path");

    OracleArgs oracle;
    CLI::App* o = app.add_subcommand("oracle", "exhaustive single-pixel grid search");
    o->add_option("--model", oracle.model)->required();
    o->add_option("--image", oracle.image, "input PPM")->required();
    o->add_option("--label", oracle.label, "true class label (default: predicted)");
    o->add_option("--grid", oracle.grid, "comma-separated channel values")
        ->delimiter(',')
        ->capture_default_str();
    o->add_option("--budget", oracle.budget, "maximum evaluation count")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (t->parsed()) return run_guarded([&] { return cmd_train(train); });
    if (s->parsed()) return run_guarded([&] { return cmd_saliency(sal); });
    if (k->parsed()) return run_guarded([&] { return cmd_attack(atk); });
    if (b->parsed()) return run_guarded([&] { return cmd_bench(bench); });
    return run_guarded([&] { return cmd_oracle(oracle); });
}
