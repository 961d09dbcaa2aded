#pragma once

#include <vector>

#include "coad/nn.hpp"

namespace coad {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Adam over a fixed parameter list. Parameters whose `has_grad` is false are
/// left untouched for the step (their moments do not decay and their step
/// count does not advance).
class Adam {
public:
    Adam(std::vector<nn::Param*> params, AdamConfig config);

    void step();
    [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }
    /// Per-parameter update count, in parameter order.
    [[nodiscard]] long steps_of(std::size_t index) const { return state_.at(index).t; }

private:
    struct State {
        Mat m;
        Mat v;
        long t = 0;
    };
    std::vector<nn::Param*> params_;
    std::vector<State> state_;
    AdamConfig config_;
};

}  // namespace coad
