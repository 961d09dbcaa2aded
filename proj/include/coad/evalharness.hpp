#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coad/dataset.hpp"
#include "coad/detector.hpp"
#include "coad/embed.hpp"

namespace coad {

// ---------------------------------------------------------------- row ingestion

/// Crops every box out of a shelf image, resized to `size` x `size`, ordered
/// left to right by box x-center. Throws CropError naming the offending box
/// (index in the input order) for empty or out-of-bounds boxes.
std::vector<Image> crop_row(const Image& shelf, std::span<const BoundingBox> boxes, int size);

/// Reads a layout file: a JSON array of [x, y, w, h] boxes, or an object with a
/// "boxes" array.
std::vector<BoundingBox> load_layout(const std::filesystem::path& path);

// ---------------------------------------------------------------- evaluation sets

struct EvaluationSet {
    int id = 0;
    std::vector<std::string> object_ids;
    std::string majority_label;
    int anomaly_position = 0;
    std::string anomaly_label;
    unsigned long long seed = 0;
};

struct EvalSetOptions {
    int count = 72;
    int n_majority = 9;
    unsigned long long seed = 0;
    int max_retries = 1000;
    /// Optional restriction on (majority label, anomaly label) pairs.
    std::function<bool(const std::string&, const std::string&)> pair_filter;
};

/// Throws Error when the invariants (one off-class member, size >= 4) fail.
void check_evaluation_set(const EvaluationSet& set, const DatasetIndex& index);

std::vector<EvaluationSet> build_eval_sets(const DatasetIndex& index, const EvalSetOptions& options);

// ---------------------------------------------------------------- evaluation

/// A feature extractor under evaluation, e.g. one checkpoint or the pretrained baseline.
struct FeatureModel {
    std::string name;
    std::vector<FeatureSelection> selections;
    std::function<std::vector<ObjectFeature>(const Image&, std::span<const FeatureSelection>, const std::string& id)>
        extract;
};

FeatureModel feature_model(const std::string& name, const Model& model, std::vector<FeatureSelection> selections);

/// Outlier detector run on one set's features. Real detectors ignore the set;
/// it is passed so test stubs can cheat.
struct DetectorSpec {
    std::string name;
    std::function<AnomalyVerdict(std::span<const ObjectFeature>, const EvaluationSet&)> run;
};

/// Agglomerative clustering then boxplot on pairwise distance (the table columns).
std::vector<DetectorSpec> default_detectors(Metric metric = Metric::euclidean);

struct EvalCell {
    std::string model;
    FeatureSelection selection = FeatureSelection::both;
    std::string method;
    int trials = 0;
    int correct = 0;

    [[nodiscard]] double rate() const noexcept { return trials == 0 ? 0.0 : static_cast<double>(correct) / trials; }
};

struct TrialRecord {
    int set_id = 0;
    std::string model;
    FeatureSelection selection = FeatureSelection::both;
    std::string method;
    int planted = 0;
    bool correct = false;
    AnomalyVerdict verdict;
};

struct SuccessReport {
    int sets = 0;
    int n_majority = 0;
    unsigned long long seed = 0;
    std::vector<EvalCell> cells;
    std::vector<TrialRecord> trials;
    /// Sets dropped because an image failed to load: (set id, message).
    std::vector<std::pair<int, std::string>> invalid_sets;

    [[nodiscard]] const EvalCell& cell(const std::string& model, FeatureSelection sel, const std::string& method) const;
};

using ImageLoader = std::function<Image(const std::string& object_id)>;

/// Runs every (model, selection, detector) cell over every set. A trial is
/// correct iff the detector flags exactly the planted position.
SuccessReport evaluate(std::span<const EvaluationSet> sets, std::span<const FeatureModel> models,
                       std::span<const DetectorSpec> detectors, const ImageLoader& load);

/// Grid CSV: one row per (model, selection), one rate column per detector.
std::string report_grid_csv(const SuccessReport& report, std::span<const DetectorSpec> detectors);
/// One JSON object per trial.
std::string report_trials_jsonl(const SuccessReport& report);

// ---------------------------------------------------------------- boxplot data

/// Per selection: distance row sums of the L2-normalised features scaled by
/// their maximum, quartiles, fence and outlier marks.
nlohmann::ordered_json boxplot_data(std::span<const std::vector<ObjectFeature>> features_per_selection,
                                    std::span<const FeatureSelection> selections);

// ---------------------------------------------------------------- pretrained baseline

/// Penultimate-layer features of a pretrained classifier exported to ONNX.
class PretrainedBackbone {
public:
    /// Throws ConfigError when the model file is missing or cannot be loaded.
    /// An empty `layer` means the network's final output.
    explicit PretrainedBackbone(const std::filesystem::path& onnx, std::string layer = {}, int input_size = 224);
    ~PretrainedBackbone();
    PretrainedBackbone(PretrainedBackbone&&) noexcept;
    PretrainedBackbone& operator=(PretrainedBackbone&&) noexcept;

    /// Activations mean-pooled over any spatial axes and L2-normalised.
    [[nodiscard]] ObjectFeature features(const Image& crop, const std::string& id = {}) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::vector<ObjectFeature> baseline_pretrained_features(std::span<const Image> crops,
                                                        const PretrainedBackbone& backbone);

}  // namespace coad
