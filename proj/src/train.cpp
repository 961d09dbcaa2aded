#include "coad/train.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

namespace coad {

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text)
{
    T v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    }
    return v;
}

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

ModelConfig TrainConfig::model_config() const
{
    ModelConfig m;
    m.variant = variant;
    m.input_size = input_size;
    m.patch_size = patch_size;
    m.concept_dim = concept_dim;
    m.heads = heads;
    m.ff_width = ff_width;
    m.init_seed = seed;
    return m;
}

void TrainConfig::validate() const
{
    if (epochs <= 0) {
        throw ConfigError("epochs must be positive");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("lr must be positive");
    }
    if (batch_size <= 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (checkpoint_every < 0) {
        throw ConfigError("checkpoint_every must be >= 0");
    }
    model_config().validate();
}

void TrainConfig::set(const std::string& key, const std::string& value)
{
    if (key == "epochs") {
        epochs = parse_number<int>(key, value);
    } else if (key == "lr") {
        lr = parse_number<double>(key, value);
    } else if (key == "batch_size") {
        batch_size = parse_number<int>(key, value);
    } else if (key == "seed") {
        seed = parse_number<unsigned long long>(key, value);
    } else if (key == "variant") {
        variant = parse_variant(value);
    } else if (key == "input_size") {
        input_size = parse_number<int>(key, value);
    } else if (key == "patch_size") {
        patch_size = parse_number<int>(key, value);
    } else if (key == "M") {
        concept_dim = parse_number<int>(key, value);
    } else if (key == "heads") {
        heads = parse_number<int>(key, value);
    } else if (key == "ff_width") {
        ff_width = parse_number<int>(key, value);
    } else if (key == "beta1") {
        beta1 = parse_number<double>(key, value);
    } else if (key == "beta2") {
        beta2 = parse_number<double>(key, value);
    } else if (key == "checkpoint_every") {
        checkpoint_every = parse_number<int>(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

std::vector<std::pair<std::string, std::string>> TrainConfig::items() const
{
    return {
        {"variant", to_string(variant)},
        {"epochs", std::to_string(epochs)},
        {"lr", format_double(lr)},
        {"batch_size", std::to_string(batch_size)},
        {"seed", std::to_string(seed)},
        {"input_size", std::to_string(input_size)},
        {"patch_size", std::to_string(patch_size)},
        {"M", std::to_string(concept_dim)},
        {"heads", std::to_string(heads)},
        {"ff_width", std::to_string(ff_width)},
        {"beta1", format_double(beta1)},
        {"beta2", format_double(beta2)},
        {"checkpoint_every", std::to_string(checkpoint_every)},
    };
}

TrainConfig parse_train_config(const std::string& text)
{
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open config '" + path.string() + "'");
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_train_config(ss.str());
}

std::string format_train_config(const TrainConfig& config)
{
    std::string out;
    for (const auto& [k, v] : config.items()) {
        out += k + " = " + v + "\n";
    }
    return out;
}

// ---------------------------------------------------------------- Trainer

Trainer::Trainer(Model& model, AdamConfig adam) : model_(model), adam_(model.parameters(), adam) {}

double Trainer::run(std::span<const Image> batch, Phase phase)
{
    model_.zero_grad();
    const double loss = model_.forward_backward(batch, phase);
    adam_.step();
    ++model_.step;
    return loss;
}

double Trainer::train_step_modulated(std::span<const Image> batch)
{
    return run(batch, Phase::modulated);
}

double Trainer::train_step_content(std::span<const Image> batch)
{
    return run(batch, Phase::content);
}

double Trainer::train_step_plain(std::span<const Image> batch)
{
    return run(batch, Phase::plain);
}

double Trainer::train_step(std::span<const Image> batch, Phase* phase)
{
    Phase p = Phase::plain;
    if (model_.variant() != Variant::vit_ae) {
        p = model_.step % 2 == 0 ? Phase::modulated : Phase::content;
    }
    if (phase != nullptr) {
        *phase = p;
    }
    return run(batch, p);
}

// ---------------------------------------------------------------- train

Model train(std::span<const Image> dataset, const TrainConfig& config, const TrainHooks& hooks)
{
    config.validate();
    if (dataset.empty()) {
        throw Error("train: empty dataset");
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Image& img = dataset[i];
        if (img.channels() != 3 || img.height() != config.input_size || img.width() != config.input_size) {
            throw ShapeError("train: image " + std::to_string(i) + " is not 3x" + std::to_string(config.input_size) +
                             "x" + std::to_string(config.input_size));
        }
        for (const Mat& p : img.planes) {
            if (!all_finite(p)) {
                throw Error("train: image " + std::to_string(i) + " has non-finite pixels");
            }
        }
    }

    Model model(config.model_config());
    Trainer trainer(model, AdamConfig{config.lr, config.beta1, config.beta2});
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(dataset.size());
    std::vector<Image> batch;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(dataset[order[k]]);
            }
            Phase phase{};
            const long step = model.step;
            const double loss = trainer.train_step(batch, &phase);
            if (hooks.on_step) {
                hooks.on_step(LossRecord{step, epoch, phase, loss});
            }
        }
        model.epoch = epoch + 1;
        const bool last = epoch + 1 == config.epochs;
        const bool periodic = config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0;
        if (hooks.on_checkpoint && (last || periodic)) {
            hooks.on_checkpoint(model);
        }
    }
    return model;
}

}  // namespace coad
