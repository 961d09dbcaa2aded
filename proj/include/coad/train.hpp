#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coad/model.hpp"
#include "coad/optim.hpp"

namespace coad {

/// Flat key = value training configuration. Unknown keys are rejected.
struct TrainConfig {
    int epochs = 100;
    double lr = 1e-4;
    int batch_size = 16;
    unsigned long long seed = 0;
    Variant variant = Variant::vit_cm_dwt;
    int input_size = 224;
    int patch_size = 16;
    int concept_dim = 64;  // key "M"
    int heads = 4;
    int ff_width = 2048;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int checkpoint_every = 0;  // epochs; 0 = only the final checkpoint

    [[nodiscard]] ModelConfig model_config() const;
    void validate() const;

    /// Sets one key from its text value; throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Resolved configuration in a fixed key order.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> items() const;
};

TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& config);

struct LossRecord {
    long step = 0;
    int epoch = 0;
    Phase phase = Phase::modulated;
    double loss = 0.0;
};

/// Optimiser plus the two alternating update rules.
class Trainer {
public:
    Trainer(Model& model, AdamConfig adam);

    /// RGB loss with color-modulated, detached content blocks.
    double train_step_modulated(std::span<const Image> batch);
    /// Gray loss through the content path only.
    double train_step_content(std::span<const Image> batch);
    /// Single RGB loss of the vit-ae baseline.
    double train_step_plain(std::span<const Image> batch);
    /// Picks the next phase: vit-ae always plain, otherwise modulated on even
    /// steps and content on odd ones. Returns the loss and reports the phase.
    double train_step(std::span<const Image> batch, Phase* phase = nullptr);

    [[nodiscard]] Model& model() noexcept { return model_; }

private:
    double run(std::span<const Image> batch, Phase phase);

    Model& model_;
    Adam adam_;
};

struct TrainHooks {
    std::function<void(const LossRecord&)> on_step;
    /// Called every `checkpoint_every` epochs and after the last one.
    std::function<void(const Model&)> on_checkpoint;
};

/// Trains a fresh model of `config.variant` on `dataset`. Images must already be
/// 3 x input_size x input_size. Deterministic for a given seed.
Model train(std::span<const Image> dataset, const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace coad
