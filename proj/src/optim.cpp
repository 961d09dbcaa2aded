#include "coad/optim.hpp"

#include <cmath>

namespace coad {

Adam::Adam(std::vector<nn::Param*> params, AdamConfig config) : params_(std::move(params)), config_(config)
{
    state_.reserve(params_.size());
    for (const auto* p : params_) {
        state_.push_back({Mat(p->value.rows, p->value.cols), Mat(p->value.rows, p->value.cols), 0});
    }
}

void Adam::step()
{
    const auto& c = config_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        nn::Param& p = *params_[i];
        if (!p.has_grad) {
            continue;
        }
        State& s = state_[i];
        ++s.t;
        const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
        const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
        const double step = c.lr / bc1;
        const double sqrt_bc2 = std::sqrt(bc2);
        const auto n = static_cast<long>(p.value.size());
#pragma omp parallel for schedule(static) if (n > 65536)
        for (long k = 0; k < n; ++k) {
            double g = p.grad.data[k];
            if (c.weight_decay != 0.0) {
                g += c.weight_decay * p.value.data[k];
            }
            s.m.data[k] = c.beta1 * s.m.data[k] + (1.0 - c.beta1) * g;
            s.v.data[k] = c.beta2 * s.v.data[k] + (1.0 - c.beta2) * g * g;
            const double denom = std::sqrt(s.v.data[k]) / sqrt_bc2 + c.eps;
            p.value.data[k] -= step * s.m.data[k] / denom;
        }
    }
}

}  // namespace coad
