// coad: train, detect, evaluate and embed-cache front end.
//
// Exit codes: 0 success (detect: row flagged), 1 runtime failure,
// 2 usage or configuration error, 3 detect found no anomaly.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coad/checkpoint.hpp"
#include "coad/dataset.hpp"
#include "coad/detector.hpp"
#include "coad/embed.hpp"
#include "coad/evalharness.hpp"
#include "coad/synth.hpp"
#include "coad/train.hpp"

namespace fs = std::filesystem;
using namespace coad;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitClean = 3;

class UsageError : public Error {
public:
    using Error::Error;
};

void echo_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& items,
                 std::ostream& out)
{
    out << "# coad " << command << " resolved config\n";
    for (const auto& [k, v] : items) {
        out << k << " = " << v << '\n';
    }
}

std::vector<FeatureSelection> parse_selections(const std::vector<std::string>& names)
{
    std::vector<FeatureSelection> out;
    for (const auto& n : names) {
        const FeatureSelection s = parse_selection(n);
        if (std::find(out.begin(), out.end(), s) == out.end()) {
            out.push_back(s);
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& v, char sep = ',')
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? std::string(1, sep) : std::string()) + v[i];
    }
    return out;
}

bool is_image_file(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string manifest;
    std::string out;
    std::string config;
    std::string loss_csv;
    // flag value by config key; only keys given on the command line are applied
    std::map<std::string, std::string> overrides;
};

void add_train(CLI::App& app, TrainArgs& a)
{
    app.add_option("--manifest", a.manifest, "Dataset manifest (.jsonl or .csv)")->required();
    app.add_option("-o,--out", a.out, "Checkpoint path")->required();
    app.add_option("--config", a.config, "key = value training config file");
    app.add_option("--loss-csv", a.loss_csv, "Loss curve CSV (default: <out>.loss.csv)");
    const std::vector<std::pair<std::string, std::string>> flags{
        {"--epochs", "epochs"},         {"--lr", "lr"},
        {"--batch-size", "batch_size"}, {"--seed", "seed"},
        {"--variant", "variant"},       {"--input-size", "input_size"},
        {"--patch-size", "patch_size"}, {"-M,--concept-dim", "M"},
        {"--heads", "heads"},           {"--ff-width", "ff_width"},
        {"--beta1", "beta1"},           {"--beta2", "beta2"},
        {"--checkpoint-every", "checkpoint_every"},
    };
    for (const auto& [flag, key] : flags) {
        app.add_option(flag, a.overrides[key], "Overrides config key '" + key + "'");
    }
}

int run_train(const CLI::App& app, TrainArgs& a)
{
    TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
    for (const auto& [key, value] : a.overrides) {
        if (!value.empty()) {
            cfg.set(key, value);
        }
    }
    (void)app;
    cfg.validate();
    echo_config("train", cfg.items(), std::cerr);

    const DatasetIndex index = load_manifest(a.manifest);
    std::vector<Image> images;
    images.reserve(index.size());
    for (const auto& r : index.records()) {
        try {
            images.push_back(index.load(r, cfg.input_size));
        } catch (const Error& e) {
            throw IoError("record '" + r.id + "': " + e.what());
        }
    }

    const fs::path out = a.out;
    if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    const fs::path loss_path = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
    std::ofstream loss(loss_path);
    if (!loss) {
        throw IoError("cannot write '" + loss_path.string() + "'");
    }
    loss << "step,epoch,phase,loss\n";
    const auto echo = cfg.items();

    TrainHooks hooks;
    hooks.on_step = [&](const LossRecord& r) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", r.loss);
        const char* phase = r.phase == Phase::modulated ? "modulated" : r.phase == Phase::content ? "content" : "plain";
        loss << r.step << ',' << r.epoch << ',' << phase << ',' << buf << '\n';
    };
    hooks.on_checkpoint = [&](const Model& m) {
        const fs::path p = m.epoch == cfg.epochs ? out : fs::path(a.out + ".epoch" + std::to_string(m.epoch));
        save_checkpoint(m, p, echo);
        std::cerr << "checkpoint " << p.string() << " (epoch " << m.epoch << ", step " << m.step << ")\n";
    };
    (void)train(images, cfg, hooks);
    std::cout << out.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
    std::string checkpoint;
    std::string images;
    std::string shelf;
    std::string layout;
    std::string features = "color";
    std::string method = "boxplot";
    std::string metric = "euclidean";
    std::string row_id;
};

void add_detect(CLI::App& app, DetectArgs& a)
{
    app.add_option("--checkpoint", a.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    auto* images = app.add_option("--images", a.images, "Directory of row crops, ordered by file name");
    auto* shelf = app.add_option("--shelf", a.shelf, "Shelf image to crop");
    auto* layout = app.add_option("--layout", a.layout, "Box layout JSON for --shelf");
    images->excludes(shelf)->excludes(layout);
    shelf->needs(layout);
    layout->needs(shelf);
    app.add_option("--features", a.features, "color | content | both")->capture_default_str();
    app.add_option("--method", a.method, "boxplot | cluster")->capture_default_str();
    app.add_option("--metric", a.metric, "euclidean | cosine")->capture_default_str();
    app.add_option("--row-id", a.row_id, "Identifier echoed in the verdict");
}

int run_detect(DetectArgs& a)
{
    const FeatureSelection selection = parse_selection(a.features);
    const Method method = parse_method(a.method);
    const Metric metric = parse_metric(a.metric);
    if (a.images.empty() && a.shelf.empty()) {
        throw UsageError("detect needs --images DIR or --shelf IMAGE --layout FILE");
    }
    const Model model = load_checkpoint(a.checkpoint);
    const int size = model.config().input_size;

    std::vector<Image> crops;
    std::vector<std::string> ids;
    std::string row_id = a.row_id;
    if (!a.images.empty()) {
        if (!fs::is_directory(a.images)) {
            throw UsageError("--images '" + a.images + "' is not a directory");
        }
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(a.images)) {
            if (e.is_regular_file() && is_image_file(e.path())) {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            crops.push_back(resize(load_image(f), size, size));
            ids.push_back(f.filename().string());
        }
        if (row_id.empty()) {
            row_id = fs::path(a.images).filename().string();
        }
    } else {
        const Image shelf = load_image(a.shelf);
        const auto boxes = load_layout(a.layout);
        crops = crop_row(shelf, boxes, size);
        for (std::size_t i = 0; i < crops.size(); ++i) {
            ids.push_back(std::to_string(i));
        }
        if (row_id.empty()) {
            row_id = fs::path(a.shelf).stem().string();
        }
    }
    if (crops.size() < 2) {
        throw UsageError("detect needs at least 2 crops, got " + std::to_string(crops.size()));
    }

    const auto features = extract_row_features(crops, model, selection, ids);
    const AnomalyVerdict v = detect_features(features, method, metric);
    auto j = verdict_to_json(v, row_id, to_string(selection));
    j["metric"] = to_string(metric);
    j["objects"] = ids;
    std::cout << j.dump(2) << '\n';
    return v.flagged ? 0 : kExitClean;
}

// ---------------------------------------------------------------- shared by evaluate / embed-cache

/// Wraps a model's feature extraction with an optional on-disk cache.
class CachedExtractor {
public:
    CachedExtractor(const Model& model, const std::string& digest, std::span<const FeatureSelection> sels,
                    const std::optional<fs::path>& cache_root)
        : model_(model)
    {
        if (cache_root) {
            for (FeatureSelection s : sels) {
                caches_.emplace(s, std::make_unique<EmbeddingCache>(*cache_root, digest, s));
            }
        }
    }

    std::vector<ObjectFeature> operator()(const Image& img, std::span<const FeatureSelection> sels,
                                          const std::string& id)
    {
        std::vector<ObjectFeature> out(sels.size());
        std::vector<FeatureSelection> missing;
        {
            std::lock_guard lock(mutex_);
            for (std::size_t k = 0; k < sels.size(); ++k) {
                auto it = caches_.find(sels[k]);
                if (it == caches_.end()) {
                    missing.push_back(sels[k]);
                } else if (auto v = it->second->find(id)) {
                    out[k] = {id, *v};
                    ++hits_;
                } else {
                    missing.push_back(sels[k]);
                }
            }
        }
        if (missing.empty()) {
            return out;
        }
        const int size = model_.config().input_size;
        const Image input = img.height() == size && img.width() == size ? img : resize(img, size, size);
        const auto fresh = extract_features(input, model_, missing, id);
        std::lock_guard lock(mutex_);
        std::size_t f = 0;
        for (std::size_t k = 0; k < sels.size(); ++k) {
            if (out[k].vector.empty()) {
                out[k] = fresh[f++];
                if (auto it = caches_.find(sels[k]); it != caches_.end()) {
                    it->second->put(out[k]);
                }
            }
        }
        return out;
    }

    [[nodiscard]] long hits() const noexcept { return hits_; }

private:
    const Model& model_;
    std::map<FeatureSelection, std::unique_ptr<EmbeddingCache>> caches_;
    std::mutex mutex_;
    long hits_ = 0;
};

std::optional<fs::path> cache_root(const std::string& flag)
{
    if (!flag.empty()) {
        return fs::path(flag);
    }
    return EmbeddingCache::root_from_env();
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string manifest;
    std::vector<std::string> checkpoints;
    std::string out_dir;
    int sets = 72;
    int n_majority = 9;
    unsigned long long seed = 0;
    std::vector<std::string> features{"color", "content", "both"};
    std::vector<std::string> detectors{"agglomerative_clustering", "boxplot_pairwise_distance"};
    std::string metric = "euclidean";
    std::string baseline_onnx;
    std::string baseline_layer;
    int baseline_input_size = 224;
    std::string cache_dir;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a)
{
    app.add_option("--manifest", a.manifest, "Labelled crop manifest")->required();
    app.add_option("--checkpoint", a.checkpoints, "Checkpoint(s) to evaluate")->required();
    app.add_option("-o,--out-dir", a.out_dir, "Report directory")->required();
    app.add_option("--sets", a.sets, "Number of evaluation sets")->capture_default_str();
    app.add_option("--n-majority", a.n_majority, "Majority objects per set")->capture_default_str();
    app.add_option("--seed", a.seed, "Evaluation set seed")->capture_default_str();
    app.add_option("--features", a.features, "Feature selections")->delimiter(',')->capture_default_str();
    app.add_option("--detectors", a.detectors,
                   "agglomerative_clustering, boxplot_pairwise_distance, oracle, fixed-index:<k>")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--metric", a.metric, "Distance for the boxplot detector")->capture_default_str();
    app.add_option("--baseline-onnx", a.baseline_onnx, "Pretrained classifier (ONNX) evaluated as a baseline");
    app.add_option("--baseline-layer", a.baseline_layer, "Output name of the penultimate layer");
    app.add_option("--baseline-input-size", a.baseline_input_size, "Baseline input side")->capture_default_str();
    app.add_option("--cache-dir", a.cache_dir, "Embedding cache root (default: $COAD_CACHE_DIR)");
}

std::vector<DetectorSpec> make_detectors(const std::vector<std::string>& names, Metric metric)
{
    const auto standard = default_detectors(metric);
    std::vector<DetectorSpec> out;
    for (const auto& n : names) {
        if (auto it = std::find_if(standard.begin(), standard.end(), [&](const auto& d) { return d.name == n; });
            it != standard.end()) {
            out.push_back(*it);
        } else if (n == "oracle") {
            // Always names the planted position; checks the scorer.
            out.push_back({n, [](std::span<const ObjectFeature> f, const EvaluationSet& s) {
                               AnomalyVerdict v;
                               v.flagged = true;
                               v.anomaly_index = s.anomaly_position;
                               v.argmax_index = s.anomaly_position;
                               v.row_scores.assign(f.size(), 0.0);
                               return v;
                           }});
        } else if (n.rfind("fixed-index:", 0) == 0) {
            const int k = std::stoi(n.substr(12));
            out.push_back({n, [k](std::span<const ObjectFeature> f, const EvaluationSet&) {
                               AnomalyVerdict v;
                               v.flagged = true;
                               v.anomaly_index = k;
                               v.argmax_index = k;
                               v.row_scores.assign(f.size(), 0.0);
                               return v;
                           }});
        } else {
            throw ConfigError("unknown detector '" + n + "'");
        }
    }
    return out;
}

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream f(p, std::ios::binary);
    if (!f || !(f << text)) {
        throw IoError("cannot write '" + p.string() + "'");
    }
}

int run_evaluate(EvaluateArgs& a)
{
    // Every referenced asset must exist before anything is computed.
    std::vector<std::string> missing;
    for (const auto& c : a.checkpoints) {
        if (!fs::is_regular_file(c)) {
            missing.push_back(c);
        }
    }
    if (!a.baseline_onnx.empty() && !fs::is_regular_file(a.baseline_onnx)) {
        missing.push_back(a.baseline_onnx);
    }
    if (!fs::is_regular_file(a.manifest)) {
        missing.push_back(a.manifest);
    }
    if (!missing.empty()) {
        for (const auto& m : missing) {
            std::cerr << "missing: " << m << '\n';
        }
        throw UsageError(std::to_string(missing.size()) + " input file(s) missing; nothing was computed");
    }

    const auto selections = parse_selections(a.features);
    const Metric metric = parse_metric(a.metric);
    const auto detectors = make_detectors(a.detectors, metric);
    const DatasetIndex index = load_manifest(a.manifest);

    std::vector<std::pair<std::string, std::string>> echo{
        {"manifest", a.manifest},
        {"checkpoints", join(a.checkpoints)},
        {"sets", std::to_string(a.sets)},
        {"n_majority", std::to_string(a.n_majority)},
        {"seed", std::to_string(a.seed)},
        {"features", join(a.features)},
        {"detectors", join(a.detectors)},
        {"metric", a.metric},
        {"baseline_onnx", a.baseline_onnx},
        {"baseline_layer", a.baseline_layer},
        {"baseline_input_size", std::to_string(a.baseline_input_size)},
    };
    echo_config("evaluate", echo, std::cerr);

    std::vector<std::unique_ptr<Model>> models;
    std::vector<std::unique_ptr<CachedExtractor>> extractors;
    std::vector<FeatureModel> feature_models;
    std::map<std::string, int> name_uses;
    const auto root = cache_root(a.cache_dir);
    for (const auto& c : a.checkpoints) {
        models.push_back(std::make_unique<Model>(load_checkpoint(c)));
        const Model& m = *models.back();
        std::vector<FeatureSelection> sels = selections;
        if (m.variant() == Variant::vit_ae) {
            sels = {FeatureSelection::both};
        }
        std::string name = fs::path(c).stem().string();
        if (const int n = name_uses[name]++; n > 0) {
            name += "#" + std::to_string(n + 1);
        }
        extractors.push_back(std::make_unique<CachedExtractor>(m, file_digest(c), sels, root));
        CachedExtractor* ex = extractors.back().get();
        feature_models.push_back(
            {name, sels, [ex](const Image& img, std::span<const FeatureSelection> s, const std::string& id) {
                 return (*ex)(img, s, id);
             }});
    }
    std::unique_ptr<PretrainedBackbone> backbone;
    if (!a.baseline_onnx.empty()) {
        backbone = std::make_unique<PretrainedBackbone>(a.baseline_onnx, a.baseline_layer, a.baseline_input_size);
        const PretrainedBackbone* bb = backbone.get();
        feature_models.push_back(
            {"pretrained", {FeatureSelection::both},
             [bb](const Image& img, std::span<const FeatureSelection>, const std::string& id) {
                 return std::vector<ObjectFeature>{bb->features(img, id)};
             }});
    }

    EvalSetOptions opt;
    opt.count = a.sets;
    opt.n_majority = a.n_majority;
    opt.seed = a.seed;
    const auto sets = build_eval_sets(index, opt);
    const ImageLoader loader = [&index](const std::string& id) { return index.load(index.at(id), 0); };
    const SuccessReport report = evaluate(sets, feature_models, detectors, loader);

    const fs::path out = a.out_dir;
    fs::create_directories(out);
    write_file(out / "grid.csv", report_grid_csv(report, detectors));
    write_file(out / "trials.jsonl", report_trials_jsonl(report));

    // Plot data for the first valid set.
    nlohmann::ordered_json plots = nlohmann::ordered_json::array();
    for (const auto& s : sets) {
        const bool invalid = std::any_of(report.invalid_sets.begin(), report.invalid_sets.end(),
                                         [&](const auto& p) { return p.first == s.id; });
        if (invalid) {
            continue;
        }
        for (const auto& fm : feature_models) {
            std::vector<std::vector<ObjectFeature>> per(fm.selections.size());
            for (const auto& id : s.object_ids) {
                auto f = fm.extract(loader(id), fm.selections, id);
                for (std::size_t k = 0; k < f.size(); ++k) {
                    per[k].push_back(std::move(f[k]));
                }
            }
            nlohmann::ordered_json entry;
            entry["set_id"] = s.id;
            entry["model"] = fm.name;
            entry["planted"] = s.anomaly_position;
            entry["selections"] = boxplot_data(per, fm.selections);
            plots.push_back(std::move(entry));
        }
        break;
    }
    write_file(out / "boxplot.json", plots.dump(2) + "\n");

    std::ostringstream cfg;
    echo_config("evaluate", echo, cfg);
    write_file(out / "config.txt", cfg.str());

    for (const auto& [id, why] : report.invalid_sets) {
        std::cerr << "invalid set " << id << ": " << why << '\n';
    }
    std::cout << report_grid_csv(report, detectors);
    return 0;
}

// ---------------------------------------------------------------- embed-cache

struct EmbedCacheArgs {
    std::string manifest;
    std::string checkpoint;
    std::vector<std::string> features{"color", "content", "both"};
    std::string cache_dir;
};

void add_embed_cache(CLI::App& app, EmbedCacheArgs& a)
{
    app.add_option("--manifest", a.manifest, "Crop manifest")->required()->check(CLI::ExistingFile);
    app.add_option("--checkpoint", a.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    app.add_option("--features", a.features, "Feature selections")->delimiter(',')->capture_default_str();
    app.add_option("--cache-dir", a.cache_dir, "Cache root (default: $COAD_CACHE_DIR)");
}

int run_embed_cache(EmbedCacheArgs& a)
{
    const auto root = cache_root(a.cache_dir);
    if (!root) {
        throw UsageError("no cache location: pass --cache-dir or set COAD_CACHE_DIR");
    }
    const Model model = load_checkpoint(a.checkpoint);
    auto sels = parse_selections(a.features);
    if (model.variant() == Variant::vit_ae) {
        sels = {FeatureSelection::both};
    }
    const DatasetIndex index = load_manifest(a.manifest);
    const std::string digest = file_digest(a.checkpoint);
    echo_config("embed-cache",
                {{"manifest", a.manifest},
                 {"checkpoint", a.checkpoint},
                 {"digest", digest},
                 {"features", join(a.features)},
                 {"cache_dir", root->string()}},
                std::cerr);

    CachedExtractor extractor(model, digest, sels, root);
    long computed = 0;
    for (const auto& r : index.records()) {
        const long before = extractor.hits();
        (void)extractor(index.load(r, model.config().input_size), sels, r.id);
        computed += extractor.hits() - before < static_cast<long>(sels.size()) ? 1 : 0;
    }
    for (FeatureSelection s : sels) {
        const EmbeddingCache c(*root, digest, s);
        std::cout << c.file().string() << " (" << c.size() << " records)\n";
    }
    std::cerr << computed << " of " << index.size() << " objects encoded\n";
    return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out;
    int classes = 12;
    int per_class = 50;
    int size = 64;
    unsigned long long seed = 0;
    int rows = 0;
    int row_length = 6;
};

void add_synth(CLI::App& app, SynthArgs& a)
{
    app.add_option("-o,--out", a.out, "Output directory")->required();
    app.add_option("--classes", a.classes, "Number of product classes")->capture_default_str();
    app.add_option("--per-class", a.per_class, "Images per class")->capture_default_str();
    app.add_option("--size", a.size, "Image side in pixels")->capture_default_str();
    app.add_option("--seed", a.seed, "Generator seed")->capture_default_str();
    app.add_option("--rows", a.rows, "Also render this many shelf rows with one planted anomaly")
        ->capture_default_str();
    app.add_option("--row-length", a.row_length, "Products per shelf row")->capture_default_str();
}

int run_synth(SynthArgs& a)
{
    if (a.classes < 2 || a.per_class < 1 || a.size < 8 || a.row_length < 2) {
        throw UsageError("synth: need >= 2 classes, >= 1 image per class, size >= 8 and rows of >= 2");
    }
    const fs::path manifest = synth::write_dataset(a.out, a.classes, a.per_class, a.size, a.seed);
    std::cout << manifest.string() << '\n';
    if (a.rows <= 0) {
        return 0;
    }
    const auto classes = synth::product_classes(a.classes);
    std::mt19937_64 rng(a.seed ^ 0x5eedULL);
    const fs::path dir = fs::path(a.out) / "rows";
    fs::create_directories(dir);
    std::ofstream truth(dir / "truth.jsonl");
    for (int r = 0; r < a.rows; ++r) {
        const std::size_t major = std::uniform_int_distribution<std::size_t>(0, classes.size() - 1)(rng);
        std::size_t odd = std::uniform_int_distribution<std::size_t>(0, classes.size() - 2)(rng);
        odd += odd >= major ? 1 : 0;
        const int pos = std::uniform_int_distribution<int>(0, a.row_length - 1)(rng);
        std::vector<synth::ProductClass> row(static_cast<std::size_t>(a.row_length), classes[major]);
        row[static_cast<std::size_t>(pos)] = classes[odd];
        const auto shelf = synth::render_shelf_row(row, a.size, rng);
        const std::string stem = "row-" + std::to_string(r);
        save_image(shelf.image, dir / (stem + ".png"));
        nlohmann::json boxes = nlohmann::json::array();
        for (const auto& b : shelf.boxes) {
            boxes.push_back({b.x, b.y, b.w, b.h});
        }
        write_file(dir / (stem + ".json"), nlohmann::json{{"boxes", boxes}}.dump() + "\n");
        truth << nlohmann::json{{"row", stem},
                                {"majority", classes[major].label},
                                {"anomaly", classes[odd].label},
                                {"anomaly_index", pos}}
                     .dump()
              << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Concept-embedding shelf anomaly detection"};
    app.require_subcommand(1);

    TrainArgs train_args;
    DetectArgs detect_args;
    EvaluateArgs eval_args;
    EmbedCacheArgs cache_args;
    SynthArgs synth_args;

    auto* train_cmd = app.add_subcommand("train", "Train an auto-encoder variant on a manifest");
    add_train(*train_cmd, train_args);
    auto* detect_cmd = app.add_subcommand("detect", "Flag the odd object in one shelf row");
    add_detect(*detect_cmd, detect_args);
    auto* eval_cmd = app.add_subcommand("evaluate", "Success-rate grid over random evaluation sets");
    add_evaluate(*eval_cmd, eval_args);
    auto* cache_cmd = app.add_subcommand("embed-cache", "Precompute object features into the embedding cache");
    add_embed_cache(*cache_cmd, cache_args);
    auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic colored-shapes dataset");
    add_synth(*synth_cmd, synth_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*train_cmd) {
            return run_train(*train_cmd, train_args);
        }
        if (*detect_cmd) {
            return run_detect(detect_args);
        }
        if (*eval_cmd) {
            return run_evaluate(eval_args);
        }
        if (*cache_cmd) {
            return run_embed_cache(cache_args);
        }
        return run_synth(synth_args);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}
