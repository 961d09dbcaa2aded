#pragma once

// Transformer building blocks with hand-written backward passes.
//
// Layers are stateless apart from their parameters: forward() returns (or
// fills) a cache that the caller hands back to backward(). That keeps frozen
// models safe to share between threads and lets one layer be applied several
// times in a single graph (the decoder bank is shared by R, G, B and gray).

#include <random>
#include <string>
#include <vector>

#include "coad/tensor.hpp"

namespace coad::nn {

struct Param {
    std::string name;
    Mat value;
    Mat grad;
    /// Set when backward() wrote into `grad` since the last zero_grad().
    bool has_grad = false;

    Param() = default;
    Param(std::string n, int rows, int cols) : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

    void zero_grad()
    {
        grad.fill(0.0);
        has_grad = false;
    }
};

using Rng = std::mt19937_64;

struct Linear {
    Param weight;  // out x in
    Param bias;    // 1 x out

    Linear() = default;
    Linear(const std::string& name, int in, int out, Rng& rng);

    [[nodiscard]] int in_features() const noexcept { return weight.value.cols; }
    [[nodiscard]] int out_features() const noexcept { return weight.value.rows; }

    [[nodiscard]] Mat forward(const Mat& x) const;
    /// Accumulates parameter gradients; returns dL/dx when `need_dx`.
    Mat backward(const Mat& x, const Mat& dy, bool need_dx = true);

    template <class F>
    void for_each_param(F&& f)
    {
        f(weight);
        f(bias);
    }
};

struct LayerNormCache {
    Mat xhat;
    std::vector<double> rstd;
};

struct LayerNorm {
    Param gamma;
    Param beta;
    double eps = 1e-5;

    LayerNorm() = default;
    LayerNorm(const std::string& name, int width);

    Mat forward(const Mat& x, LayerNormCache& cache) const;
    Mat backward(const LayerNormCache& cache, const Mat& dy);

    template <class F>
    void for_each_param(F&& f)
    {
        f(gamma);
        f(beta);
    }
};

struct AttentionCache {
    Mat x;
    Mat qkv;
    Mat heads;                  // concatenated per-head outputs, before out projection
    std::vector<Mat> probs;     // softmax weights, one per (image, head)
};

/// Multi-head self-attention over images of `seq` consecutive token rows.
struct SelfAttention {
    int num_heads = 1;
    Linear in_proj;   // width -> 3 * width (q, k, v)
    Linear out_proj;

    SelfAttention() = default;
    SelfAttention(const std::string& name, int width, int heads, Rng& rng);

    Mat forward(const Mat& x, int seq, AttentionCache& cache) const;
    Mat backward(const AttentionCache& cache, const Mat& dy, int seq);

    template <class F>
    void for_each_param(F&& f)
    {
        in_proj.for_each_param(f);
        out_proj.for_each_param(f);
    }
};

struct EncoderLayerCache {
    AttentionCache attn;
    LayerNormCache norm1;
    Mat h1;        // norm1 output
    Mat ff_pre;    // first feed-forward projection, before GELU
    Mat ff_act;
    LayerNormCache norm2;
};

/// Post-norm transformer encoder layer:
///   h = LN1(x + SelfAttention(x));  y = LN2(h + W2 GELU(W1 h))
struct EncoderLayer {
    SelfAttention attn;
    LayerNorm norm1;
    Linear ff1;
    Linear ff2;
    LayerNorm norm2;

    EncoderLayer() = default;
    EncoderLayer(const std::string& name, int width, int heads, int ff_width, Rng& rng);

    Mat forward(const Mat& x, int seq, EncoderLayerCache& cache) const;
    Mat forward(const Mat& x, int seq) const;
    Mat backward(const EncoderLayerCache& cache, const Mat& dy, int seq);

    template <class F>
    void for_each_param(F&& f)
    {
        attn.for_each_param(f);
        norm1.for_each_param(f);
        ff1.for_each_param(f);
        ff2.for_each_param(f);
        norm2.for_each_param(f);
    }
};

}  // namespace coad::nn
