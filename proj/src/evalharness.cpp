#include "coad/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#include <opencv2/dnn.hpp>

namespace coad {

// ---------------------------------------------------------------- row ingestion

std::vector<Image> crop_row(const Image& shelf, std::span<const BoundingBox> boxes, int size)
{
    if (boxes.empty()) {
        throw Error("crop_row: no boxes");
    }
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return boxes[a].center_x() < boxes[b].center_x(); });
    std::vector<Image> out;
    out.reserve(boxes.size());
    for (std::size_t i : order) {
        try {
            out.push_back(resize(crop(shelf, boxes[i]), size, size));
        } catch (const ShapeError& e) {
            throw CropError(i, e.what());
        }
    }
    return out;
}

std::vector<BoundingBox> load_layout(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open layout '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("layout '" + path.string() + "' is not valid JSON: " + e.what());
    }
    const nlohmann::json& arr = j.is_object() ? j.at("boxes") : j;
    std::vector<BoundingBox> boxes;
    for (const auto& b : arr) {
        const auto v = b.get<std::vector<int>>();
        if (v.size() != 4) {
            throw ConfigError("layout boxes must be [x, y, w, h]");
        }
        boxes.push_back({v[0], v[1], v[2], v[3]});
    }
    return boxes;
}

// ---------------------------------------------------------------- evaluation sets

void check_evaluation_set(const EvaluationSet& set, const DatasetIndex& index)
{
    const int n = static_cast<int>(set.object_ids.size());
    if (n < 4) {
        throw Error("evaluation set " + std::to_string(set.id) + " has fewer than 4 objects");
    }
    if (set.majority_label == set.anomaly_label) {
        throw Error("evaluation set " + std::to_string(set.id) + ": anomaly class equals majority class");
    }
    if (set.anomaly_position < 0 || set.anomaly_position >= n) {
        throw Error("evaluation set " + std::to_string(set.id) + ": anomaly position out of range");
    }
    int off_class = 0;
    for (int i = 0; i < n; ++i) {
        const std::string& label = index.at(set.object_ids[i]).label;
        if (label != set.majority_label) {
            ++off_class;
            if (i != set.anomaly_position || label != set.anomaly_label) {
                throw Error("evaluation set " + std::to_string(set.id) + ": unexpected off-class object at " +
                            std::to_string(i));
            }
        }
    }
    if (off_class != 1) {
        throw Error("evaluation set " + std::to_string(set.id) + " must contain exactly one off-class object");
    }
}

std::vector<EvaluationSet> build_eval_sets(const DatasetIndex& index, const EvalSetOptions& opt)
{
    const auto& classes = index.classes();
    if (classes.size() < 2) {
        throw Error("build_eval_sets: need at least 2 classes, got " + std::to_string(classes.size()));
    }
    if (opt.n_majority < 3) {
        throw ConfigError("build_eval_sets: n_majority must be >= 3 (sets of at least 4)");
    }
    if (opt.count < 0) {
        throw ConfigError("build_eval_sets: negative set count");
    }
    std::vector<const std::string*> labels;
    for (const auto& [label, members] : classes) {
        labels.push_back(&label);
    }

    std::mt19937_64 rng(opt.seed);
    auto uniform = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

    std::vector<EvaluationSet> sets;
    sets.reserve(static_cast<std::size_t>(opt.count));
    int retries = 0;
    while (static_cast<int>(sets.size()) < opt.count) {
        const std::string& major = *labels[uniform(labels.size())];
        const auto& members = classes.at(major);
        std::vector<const std::string*> others;
        for (const auto* l : labels) {
            if (*l != major && (!opt.pair_filter || opt.pair_filter(major, *l))) {
                others.push_back(l);
            }
        }
        if (static_cast<int>(members.size()) < opt.n_majority || others.empty()) {
            if (++retries > opt.max_retries) {
                throw Error("build_eval_sets: no class with " + std::to_string(opt.n_majority) +
                            " images and a valid anomaly class after " + std::to_string(opt.max_retries) +
                            " retries");
            }
            continue;
        }
        const std::string& anomaly = *others[uniform(others.size())];

        // partial Fisher-Yates: n_majority distinct images of the majority class
        std::vector<std::size_t> pool = members;
        for (int k = 0; k < opt.n_majority; ++k) {
            const std::size_t j = k + uniform(pool.size() - k);
            std::swap(pool[k], pool[j]);
        }
        const auto& anomaly_members = classes.at(anomaly);
        const std::size_t anomaly_record = anomaly_members[uniform(anomaly_members.size())];
        const int position = static_cast<int>(uniform(static_cast<std::size_t>(opt.n_majority) + 1));

        EvaluationSet s;
        s.id = static_cast<int>(sets.size());
        s.majority_label = major;
        s.anomaly_label = anomaly;
        s.anomaly_position = position;
        s.seed = opt.seed;
        for (int k = 0; k < opt.n_majority; ++k) {
            s.object_ids.push_back(index.records()[pool[k]].id);
        }
        s.object_ids.insert(s.object_ids.begin() + position, index.records()[anomaly_record].id);
        check_evaluation_set(s, index);
        sets.push_back(std::move(s));
    }
    return sets;
}

// ---------------------------------------------------------------- evaluation

FeatureModel feature_model(const std::string& name, const Model& model, std::vector<FeatureSelection> selections)
{
    FeatureModel fm;
    fm.name = name;
    fm.selections = std::move(selections);
    fm.extract = [&model](const Image& img, std::span<const FeatureSelection> sels, const std::string& id) {
        return extract_features(img, model, sels, id);
    };
    return fm;
}

std::vector<DetectorSpec> default_detectors(Metric metric)
{
    return {
        {"agglomerative_clustering",
         [](std::span<const ObjectFeature> f, const EvaluationSet&) { return cluster_outlier(f); }},
        {"boxplot_pairwise_distance",
         [metric](std::span<const ObjectFeature> f, const EvaluationSet&) {
             return boxplot_outlier(pairwise_distances(f, metric));
         }},
    };
}

const EvalCell& SuccessReport::cell(const std::string& model, FeatureSelection sel, const std::string& method) const
{
    for (const auto& c : cells) {
        if (c.model == model && c.selection == sel && c.method == method) {
            return c;
        }
    }
    throw Error("no report cell for " + model + "/" + to_string(sel) + "/" + method);
}

SuccessReport evaluate(std::span<const EvaluationSet> sets, std::span<const FeatureModel> models,
                       std::span<const DetectorSpec> detectors, const ImageLoader& load)
{
    SuccessReport report;
    report.sets = static_cast<int>(sets.size());
    if (!sets.empty()) {
        report.n_majority = static_cast<int>(sets.front().object_ids.size()) - 1;
        report.seed = sets.front().seed;
    }

    // Every object once, in first-appearance order.
    std::vector<std::string> ids;
    std::map<std::string, std::size_t> slot;
    for (const auto& s : sets) {
        for (const auto& id : s.object_ids) {
            if (slot.emplace(id, ids.size()).second) {
                ids.push_back(id);
            }
        }
    }

    // features[m][k][slot]: model m, its k-th selection.
    std::vector<std::vector<std::vector<ObjectFeature>>> features(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
        features[m].assign(models[m].selections.size(), std::vector<ObjectFeature>(ids.size()));
    }
    std::vector<std::string> failure(ids.size());

    const long n_ids = static_cast<long>(ids.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n_ids; ++i) {
        try {
            const Image img = load(ids[i]);
            for (std::size_t m = 0; m < models.size(); ++m) {
                auto f = models[m].extract(img, models[m].selections, ids[i]);
                for (std::size_t k = 0; k < f.size(); ++k) {
                    features[m][k][i] = std::move(f[k]);
                }
            }
        } catch (const std::exception& e) {
            failure[i] = e.what();
        }
    }

    struct Work {
        std::size_t set;
        std::size_t model;
        std::size_t sel;
        std::size_t det;
    };
    std::vector<Work> work;
    std::vector<char> set_ok(sets.size(), 1);
    for (std::size_t s = 0; s < sets.size(); ++s) {
        for (const auto& id : sets[s].object_ids) {
            if (!failure[slot.at(id)].empty()) {
                set_ok[s] = 0;
                report.invalid_sets.emplace_back(sets[s].id, id + ": " + failure[slot.at(id)]);
                break;
            }
        }
        if (!set_ok[s]) {
            continue;
        }
        for (std::size_t m = 0; m < models.size(); ++m) {
            for (std::size_t k = 0; k < models[m].selections.size(); ++k) {
                for (std::size_t d = 0; d < detectors.size(); ++d) {
                    work.push_back({s, m, k, d});
                }
            }
        }
    }

    std::vector<TrialRecord> trials(work.size());
    const long n_work = static_cast<long>(work.size());
#pragma omp parallel for schedule(dynamic)
    for (long w = 0; w < n_work; ++w) {
        const Work& job = work[w];
        const EvaluationSet& set = sets[job.set];
        std::vector<ObjectFeature> row;
        row.reserve(set.object_ids.size());
        for (const auto& id : set.object_ids) {
            row.push_back(features[job.model][job.sel][slot.at(id)]);
        }
        TrialRecord t;
        t.set_id = set.id;
        t.model = models[job.model].name;
        t.selection = models[job.model].selections[job.sel];
        t.method = detectors[job.det].name;
        t.planted = set.anomaly_position;
        t.verdict = detectors[job.det].run(row, set);
        t.correct = t.verdict.flagged && t.verdict.anomaly_index == set.anomaly_position;
        trials[w] = std::move(t);
    }

    // Ordered reduction: cells in (model, selection, detector) order.
    for (std::size_t m = 0; m < models.size(); ++m) {
        for (FeatureSelection sel : models[m].selections) {
            for (const auto& det : detectors) {
                report.cells.push_back({models[m].name, sel, det.name, 0, 0});
            }
        }
    }
    for (const auto& t : trials) {
        for (auto& c : report.cells) {
            if (c.model == t.model && c.selection == t.selection && c.method == t.method) {
                ++c.trials;
                c.correct += t.correct ? 1 : 0;
                break;
            }
        }
    }
    report.trials = std::move(trials);
    return report;
}

std::string report_grid_csv(const SuccessReport& report, std::span<const DetectorSpec> detectors)
{
    std::ostringstream out;
    out << "# sets=" << report.sets << ",n_majority=" << report.n_majority << ",seed=" << report.seed
        << ",invalid_sets=" << report.invalid_sets.size() << '\n';
    out << "model,selection,trials";
    for (const auto& d : detectors) {
        out << ',' << d.name;
    }
    out << '\n';
    for (std::size_t i = 0; i < report.cells.size(); i += detectors.size()) {
        const EvalCell& first = report.cells[i];
        out << first.model << ',' << to_string(first.selection) << ',' << first.trials;
        for (std::size_t d = 0; d < detectors.size(); ++d) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", 100.0 * report.cells[i + d].rate());
            out << ',' << buf;
        }
        out << '\n';
    }
    return out.str();
}

std::string report_trials_jsonl(const SuccessReport& report)
{
    std::ostringstream out;
    for (const auto& t : report.trials) {
        nlohmann::ordered_json j;
        j["set_id"] = t.set_id;
        j["model"] = t.model;
        j["planted"] = t.planted;
        j["correct"] = t.correct;
        auto v = verdict_to_json(t.verdict, std::to_string(t.set_id), to_string(t.selection));
        v["method"] = t.method;
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (it.key() != "row_id") {
                j[it.key()] = it.value();
            }
        }
        out << j.dump() << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------- boxplot data

nlohmann::ordered_json boxplot_data(std::span<const std::vector<ObjectFeature>> features_per_selection,
                                    std::span<const FeatureSelection> selections)
{
    if (features_per_selection.size() != selections.size()) {
        throw Error("boxplot_data: one feature list per selection required");
    }
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < selections.size(); ++k) {
        const auto& feats = features_per_selection[k];
        if (feats.size() < 4) {
            throw Error("boxplot_data: need at least 4 objects, got " + std::to_string(feats.size()));
        }
        const AnomalyVerdict v = boxplot_outlier(pairwise_distances(feats, Metric::euclidean));
        const double mx = *std::max_element(v.row_scores.begin(), v.row_scores.end());
        std::vector<double> scores = v.row_scores;
        if (mx > 0.0) {
            for (double& s : scores) {
                s /= mx;
            }
        }
        const BoxplotStats b = boxplot_stats(scores);
        std::vector<int> outliers;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] > b.upper_fence) {
                outliers.push_back(static_cast<int>(i));
            }
        }
        std::vector<std::string> ids;
        for (const auto& f : feats) {
            ids.push_back(f.object_id);
        }
        nlohmann::ordered_json j;
        j["selection"] = to_string(selections[k]);
        j["ids"] = ids;
        j["scores"] = scores;
        j["raw_scores"] = v.row_scores;
        j["median"] = [&] {
            std::vector<double> s = scores;
            std::sort(s.begin(), s.end());
            return quantile_linear(s, 0.5);
        }();
        j["q1"] = b.q1;
        j["q3"] = b.q3;
        j["iqr"] = b.iqr;
        j["upper_fence"] = b.upper_fence;
        j["lower_fence"] = b.q1 - 1.5 * b.iqr;
        j["outliers"] = outliers;
        out.push_back(std::move(j));
    }
    return out;
}

// ---------------------------------------------------------------- pretrained baseline

struct PretrainedBackbone::Impl {
    cv::dnn::Net net;
    std::string layer;
    int input_size = 224;
    std::mutex mutex;
};

PretrainedBackbone::PretrainedBackbone(const std::filesystem::path& onnx, std::string layer, int input_size)
    : impl_(std::make_unique<Impl>())
{
    if (onnx.empty() || !std::filesystem::exists(onnx)) {
        throw ConfigError("pretrained backbone asset '" + onnx.string() +
                          "' not found; export a classifier to ONNX and pass its path");
    }
    try {
        impl_->net = cv::dnn::readNetFromONNX(onnx.string());
    } catch (const cv::Exception& e) {
        throw ConfigError("cannot load pretrained backbone '" + onnx.string() + "': " + e.what());
    }
    if (impl_->net.empty()) {
        throw ConfigError("pretrained backbone '" + onnx.string() + "' is empty");
    }
    impl_->layer = std::move(layer);
    impl_->input_size = input_size;
}

PretrainedBackbone::~PretrainedBackbone() = default;
PretrainedBackbone::PretrainedBackbone(PretrainedBackbone&&) noexcept = default;
PretrainedBackbone& PretrainedBackbone::operator=(PretrainedBackbone&&) noexcept = default;

ObjectFeature PretrainedBackbone::features(const Image& crop, const std::string& id) const
{
    // ImageNet normalisation, NCHW float.
    constexpr double mean[3] = {0.485, 0.456, 0.406};
    constexpr double stdev[3] = {0.229, 0.224, 0.225};
    const int s = impl_->input_size;
    const Image img = resize(crop, s, s);
    const int dims[4] = {1, 3, s, s};
    cv::Mat blob(4, dims, CV_32F);
    auto* p = blob.ptr<float>();
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < img.planes[c].size(); ++i) {
            *p++ = static_cast<float>((img.planes[c].data[i] - mean[c]) / stdev[c]);
        }
    }
    cv::Mat out;
    {
        std::lock_guard lock(impl_->mutex);
        impl_->net.setInput(blob);
        out = impl_->layer.empty() ? impl_->net.forward() : impl_->net.forward(impl_->layer);
    }
    cv::Mat f;
    out.convertTo(f, CV_64F);
    ObjectFeature feat{id, {}};
    if (f.dims == 4) {
        const int ch = f.size[1];
        const int spatial = f.size[2] * f.size[3];
        const auto* d = f.ptr<double>();
        for (int c = 0; c < ch; ++c) {
            double acc = 0.0;
            for (int k = 0; k < spatial; ++k) {
                acc += d[static_cast<std::size_t>(c) * spatial + k];
            }
            feat.vector.push_back(acc / spatial);
        }
    } else {
        const auto* d = f.ptr<double>();
        feat.vector.assign(d, d + f.total());
    }
    double n = 0.0;
    for (double v : feat.vector) {
        n += v * v;
    }
    n = std::sqrt(n);
    if (n > 0.0) {
        for (double& v : feat.vector) {
            v /= n;
        }
    }
    return feat;
}

std::vector<ObjectFeature> baseline_pretrained_features(std::span<const Image> crops,
                                                        const PretrainedBackbone& backbone)
{
    std::vector<ObjectFeature> out;
    out.reserve(crops.size());
    for (std::size_t i = 0; i < crops.size(); ++i) {
        out.push_back(backbone.features(crops[i], std::to_string(i)));
    }
    return out;
}

}  // namespace coad
