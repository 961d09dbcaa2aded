#pragma once

#include <random>

#include "coad/model.hpp"

namespace fixture {

/// Small enough for finite differences and quick training loops.
inline coad::ModelConfig tiny(coad::Variant v = coad::Variant::vit_cm_dwt, unsigned long long seed = 1)
{
    coad::ModelConfig c;
    c.variant = v;
    c.input_size = 16;
    c.patch_size = 4;
    c.concept_dim = 8;
    c.heads = 1;
    c.ff_width = 16;
    c.init_seed = seed;
    return c;
}

inline coad::Image random_image(int size, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    coad::Image img(3, size, size);
    for (auto& p : img.planes) {
        for (double& v : p.data) {
            v = u(rng);
        }
    }
    return img;
}

inline coad::Image solid(int size, double r, double g, double b)
{
    coad::Image img(3, size, size);
    img.planes[0].fill(r);
    img.planes[1].fill(g);
    img.planes[2].fill(b);
    return img;
}

}  // namespace fixture
