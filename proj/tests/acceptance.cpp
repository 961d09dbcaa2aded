// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   coad_acceptance [path/to/coad]
//
// The CLI path enables the report-determinism check; without it that check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "coad/checkpoint.hpp"
#include "coad/detector.hpp"
#include "coad/evalharness.hpp"
#include "coad/synth.hpp"
#include "coad/train.hpp"
#include "coad/wavelet.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace coad;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kDwtTol = 1e-5;
constexpr double kDwtSeconds = 10.0;
constexpr double kGradRelTol = 1e-3;
constexpr int kGradMinParams = 50;
constexpr double kQuartileTol = 1e-9;
constexpr double kColorBoxplotMin = 0.85;
constexpr double kFixedIndexBand = 0.05;

// Synthetic end-to-end setup.
constexpr int kClasses = 12;
constexpr int kPerClass = 50;
constexpr int kTestPerClass = 20;
constexpr int kSize = 64;
constexpr int kEpochs = 15;
constexpr double kLr = 1e-4;
constexpr int kSets = 72;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail)
{
    std::printf("%s  %-34s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
}

std::string fmt(const char* f, auto... args)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criteria

void dwt_suite()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> half(1, 64);
    double worst_rt = 0.0;
    double worst_lin = 0.0;
    double worst_energy = 0.0;
    for (int t = 0; t < 100; ++t) {
        const int h = 2 * half(rng);
        const int w = 2 * half(rng);
        const Mat x = oracle::random_mat(h, w, rng);
        const Mat y = oracle::random_mat(h, w, rng);
        const double a = std::uniform_real_distribution<double>(-3, 3)(rng);
        const double b = std::uniform_real_distribution<double>(-3, 3)(rng);

        const WaveletComponents cx = dwt2_haar(x);
        const Mat back = idwt2_haar(cx);
        for (std::size_t i = 0; i < x.size(); ++i) {
            worst_rt = std::max(worst_rt, std::abs(back.data[i] - x.data[i]));
        }

        Mat mix(h, w);
        for (std::size_t i = 0; i < x.size(); ++i) {
            mix.data[i] = a * x.data[i] + b * y.data[i];
        }
        const WaveletComponents cm = dwt2_haar(mix);
        const WaveletComponents cy = dwt2_haar(y);
        const Mat* parts_m[] = {&cm.ll, &cm.hl, &cm.lh, &cm.hh};
        const Mat* parts_x[] = {&cx.ll, &cx.hl, &cx.lh, &cx.hh};
        const Mat* parts_y[] = {&cy.ll, &cy.hl, &cy.lh, &cy.hh};
        double lin_err = 0.0;
        double lin_scale = 0.0;
        double energy = 0.0;
        for (int k = 0; k < 4; ++k) {
            for (std::size_t i = 0; i < parts_m[k]->size(); ++i) {
                const double want = a * parts_x[k]->data[i] + b * parts_y[k]->data[i];
                lin_err = std::max(lin_err, std::abs(parts_m[k]->data[i] - want));
                lin_scale = std::max(lin_scale, std::abs(want));
            }
            energy += sum_squares(*parts_x[k]);
        }
        worst_lin = std::max(worst_lin, lin_err / std::max(lin_scale, 1e-300));
        worst_energy = std::max(worst_energy, std::abs(energy - sum_squares(x)) / sum_squares(x));
    }
    const double secs = seconds_since(t0);
    report(worst_rt < kDwtTol && worst_lin < kDwtTol && worst_energy < kDwtTol && secs < kDwtSeconds, "dwt suite",
           fmt("100 channels: round trip %.2e, linearity %.2e, energy %.2e, %.3f s", worst_rt, worst_lin,
               worst_energy, secs));
}

double grad_norm(const std::vector<nn::Param*>& params)
{
    double s = 0.0;
    for (const nn::Param* p : params) {
        s += sum_squares(p->grad);
    }
    return std::sqrt(s);
}

void gradient_isolation()
{
    std::mt19937_64 rng(202);
    Model model(fixture::tiny(Variant::vit_cm_dwt, 5));
    int clean = 0;
    double leak = 0.0;
    for (int t = 0; t < 20; ++t) {
        std::vector<Image> batch;
        for (int i = 0; i < 1 + t % 4; ++i) {
            batch.push_back(fixture::random_image(16, rng));
        }
        model.zero_grad();
        model.forward_backward(batch, Phase::modulated);
        const double content_norm = grad_norm(model.content_encoder_parameters());
        const bool color_moved = grad_norm(model.color_encoder_parameters()) > 0.0;
        model.zero_grad();
        model.forward_backward(batch, Phase::content);
        const double color_norm = grad_norm(model.color_encoder_parameters());
        const bool content_moved = grad_norm(model.content_encoder_parameters()) > 0.0;
        leak = std::max({leak, content_norm, color_norm});
        clean += content_norm == 0.0 && color_norm == 0.0 && color_moved && content_moved ? 1 : 0;
    }
    report(clean == 20, "gradient isolation", fmt("%d/20 batches exact zero, largest leaked norm %g", clean, leak));
}

void gradient_correctness()
{
    std::mt19937_64 rng(303);
    Model model(fixture::tiny(Variant::vit_cm_dwt, 7));
    std::vector<Image> batch{fixture::random_image(16, rng), fixture::random_image(16, rng)};
    auto loss = [&] {
        return model.forward_backward(batch, Phase::modulated, {.detach_content = false, .backward = false}) +
               model.forward_backward(batch, Phase::content, {.backward = false});
    };
    model.zero_grad();
    model.forward_backward(batch, Phase::modulated, {.detach_content = false});
    model.forward_backward(batch, Phase::content);

    int checked = 0;
    double worst = 0.0;
    for (nn::Param* p : model.parameters()) {
        std::uniform_int_distribution<std::size_t> pick(0, p->value.size() - 1);
        for (int i = 0; i < 2; ++i) {
            const std::size_t k = pick(rng);
            const double fd = oracle::central_difference(loss, p->value.data[k], 1e-5);
            const double an = p->grad.data[k];
            const double scale = std::max(std::abs(fd), std::abs(an));
            if (scale < 1e-9) {
                continue;
            }
            worst = std::max(worst, std::abs(fd - an) / scale);
            ++checked;
        }
    }
    report(checked >= kGradMinParams && worst < kGradRelTol, "gradient correctness",
           fmt("%d parameters, worst relative error %.2e", checked, worst));
}

void gray_invariance()
{
    std::mt19937_64 rng(404);
    const Model model(fixture::tiny(Variant::vit_cm_dwt, 9));
    int identical = 0;
    for (int t = 0; t < 20; ++t) {
        auto e = model.encode(fixture::random_image(16, rng));
        const Image before = model.reconstruct(e, DecodeMode::gray).image;
        for (Mat& c : e.color) {
            c = oracle::random_mat(c.rows, c.cols, rng, -10, 10);
        }
        identical += model.reconstruct(e, DecodeMode::gray).image == before ? 1 : 0;
    }
    report(identical == 20, "grayscale-path invariance", fmt("%d/20 trials bit identical", identical));
}

std::vector<std::vector<double>> gaussian_points(int n, int dim, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> p(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& v : p) {
        for (double& x : v) {
            x = g(rng);
        }
    }
    return p;
}

void outlier_oracles()
{
    std::mt19937_64 rng(505);
    double worst_q = 0.0;
    int fence_ok = 0;
    for (int t = 0; t < 1000; ++t) {
        const int n = 4 + static_cast<int>(rng() % 60);
        std::vector<double> v(static_cast<std::size_t>(n));
        std::uniform_real_distribution<double> u(0.0, 10.0);
        for (double& x : v) {
            x = u(rng);
        }
        const BoxplotStats b = boxplot_stats(v);
        const double q1 = oracle::sorted_quantile(v, 0.25);
        const double q3 = oracle::sorted_quantile(v, 0.75);
        worst_q = std::max({worst_q, std::abs(b.q1 - q1), std::abs(b.q3 - q3)});
        fence_ok += std::abs(b.upper_fence - (q3 + 1.5 * (q3 - q1))) < kQuartileTol ? 1 : 0;
    }

    int matched = 0;
    for (int t = 0; t < 200; ++t) {
        const int n = 3 + t % 4;
        const auto pts = gaussian_points(n, 1 + t % 16, rng);
        std::vector<ObjectFeature> f;
        for (int i = 0; i < n; ++i) {
            f.push_back({std::to_string(i), pts[static_cast<std::size_t>(i)]});
        }
        const auto got = cluster_outlier(f).cluster_labels;
        const auto want = oracle::best_two_partition(pts);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i) {
            same = (got[i] == got[0]) == (want[i] == want[0]);
        }
        matched += same ? 1 : 0;
    }
    report(worst_q < kQuartileTol && fence_ok == 1000 && matched == 200, "outlier oracles",
           fmt("quartiles worst %.1e, fences %d/1000, two-partition %d/200", worst_q, fence_ok, matched));
}

// ---------------------------------------------------------------- synthetic end-to-end

std::string shape_of(const std::string& label)
{
    return label.substr(0, label.find('-'));
}

struct EndToEnd {
    fs::path checkpoint;
    fs::path test_manifest;
};

EndToEnd synthetic_end_to_end(const fs::path& work)
{
    const auto classes = synth::product_classes(kClasses);
    std::vector<Image> train_images;
    for (auto& s : synth::generate(classes, kPerClass, kSize, 1)) {
        train_images.push_back(std::move(s.image));
    }
    // Held-out renders, written to disk so the CLI check can reuse them.
    const fs::path test_manifest = synth::write_dataset(work / "test", kClasses, kTestPerClass, kSize, 2);
    const DatasetIndex index = load_manifest(test_manifest);

    TrainConfig cfg;
    cfg.variant = Variant::vit_cm_dwt;
    cfg.input_size = kSize;
    cfg.epochs = kEpochs;
    cfg.lr = kLr;
    cfg.seed = 3;
    const auto t0 = std::chrono::steady_clock::now();
    const Model model = train(train_images, cfg);
    const double train_secs = seconds_since(t0);
    const fs::path ckpt = work / "vit-cm-dwt.ckpt";
    save_checkpoint(model, ckpt, cfg.items());

    const std::vector<FeatureSelection> sels{FeatureSelection::color, FeatureSelection::content};
    const std::vector<FeatureModel> models{feature_model("vit-cm-dwt", model, sels)};
    const auto detectors = default_detectors();
    const ImageLoader loader = [&index](const std::string& id) { return index.load(index.at(id), kSize); };

    EvalSetOptions all;
    all.count = kSets;
    all.seed = 5;
    const SuccessReport any = evaluate(build_eval_sets(index, all), models, detectors, loader);
    const double color_rate = any.cell("vit-cm-dwt", FeatureSelection::color, "boxplot_pairwise_distance").rate();

    // Color-dominated: the odd product has the majority's shape and differs only in hue.
    EvalSetOptions hue = all;
    hue.pair_filter = [](const std::string& a, const std::string& b) { return shape_of(a) == shape_of(b); };
    const SuccessReport dom = evaluate(build_eval_sets(index, hue), models, detectors, loader);
    const double dom_color = dom.cell("vit-cm-dwt", FeatureSelection::color, "boxplot_pairwise_distance").rate();
    const double dom_content = dom.cell("vit-cm-dwt", FeatureSelection::content, "boxplot_pairwise_distance").rate();

    report(color_rate >= kColorBoxplotMin && dom_color > dom_content && any.invalid_sets.empty() &&
               dom.invalid_sets.empty(),
           "synthetic end-to-end",
           fmt("%d px, %d classes x %d, %d epochs in %.0f s; K=%d color+boxplot %.1f%%; color-dominated color "
               "%.1f%% vs content %.1f%%",
               kSize, kClasses, kPerClass, kEpochs, train_secs, kSets, 100.0 * color_rate, 100.0 * dom_color,
               100.0 * dom_content));
    return {ckpt, test_manifest};
}

void fixed_index_baseline(const fs::path& test_manifest)
{
    const DatasetIndex index = load_manifest(test_manifest);
    EvalSetOptions opt;
    opt.count = 400;
    opt.seed = 11;
    const auto sets = build_eval_sets(index, opt);
    const int set_size = static_cast<int>(sets.front().object_ids.size());

    // Features are irrelevant to a fixed guess; a constant vector avoids decoding images.
    const std::vector<FeatureModel> models{
        {"constant", {FeatureSelection::both}, [](const Image&, std::span<const FeatureSelection>, const std::string& id) {
             return std::vector<ObjectFeature>{{id, {1.0}}};
         }}};
    const std::vector<DetectorSpec> detectors{
        {"fixed-index", [](std::span<const ObjectFeature> f, const EvaluationSet&) {
             AnomalyVerdict v;
             v.flagged = true;
             v.anomaly_index = 0;
             v.row_scores.assign(f.size(), 0.0);
             return v;
         }}};
    const auto r = evaluate(sets, models, detectors, [](const std::string&) { return Image(3, 2, 2); });
    const double rate = r.cells.front().rate();
    const double expected = 1.0 / set_size;
    report(std::abs(rate - expected) <= kFixedIndexBand, "fixed-index baseline",
           fmt("K=%d, rate %.1f%% vs 1/%d = %.1f%%", opt.count, 100.0 * rate, set_size, 100.0 * expected));
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void evaluate_determinism(const std::string& cli, const EndToEnd& e2e, const fs::path& work)
{
    if (cli.empty()) {
        report(false, "evaluate determinism", "no coad executable given");
        return;
    }
    int status = 0;
    for (const char* run : {"a", "b"}) {
        const std::string cmd = "\"" + cli + "\" evaluate --manifest \"" + e2e.test_manifest.string() +
                                "\" --checkpoint \"" + e2e.checkpoint.string() + "\" --out-dir \"" +
                                (work / run).string() + "\" --sets 72 --seed 9 > /dev/null 2>&1";
        status |= std::system(cmd.c_str());
    }
    const std::string a = slurp(work / "a" / "grid.csv");
    const std::string b = slurp(work / "b" / "grid.csv");
    const bool same = status == 0 && !a.empty() && a == b &&
                      slurp(work / "a" / "trials.jsonl") == slurp(work / "b" / "trials.jsonl");
    report(same, "evaluate determinism",
           fmt("two seeded runs, grid.csv %zu bytes, %s", a.size(), same ? "byte identical" : "differ or failed"));
}

}  // namespace

int main(int argc, char** argv)
{
    const std::string cli = argc > 1 ? argv[1] : "";
    const fs::path work = fs::temp_directory_path() / ("coad-acceptance-" + std::to_string(::getpid()));
    fs::create_directories(work);

    try {
        dwt_suite();
        gradient_isolation();
        gradient_correctness();
        gray_invariance();
        outlier_oracles();
        const EndToEnd e2e = synthetic_end_to_end(work);
        fixed_index_baseline(e2e.test_manifest);
        evaluate_determinism(cli, e2e, work);
    } catch (const std::exception& e) {
        report(false, "aborted", e.what());
    }
    fs::remove_all(work);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
