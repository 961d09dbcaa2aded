#include "coad/nn.hpp"

#include <cmath>

#include "coad/kernels.hpp"

namespace coad::nn {

namespace {

void uniform_fill(Mat& m, double bound, Rng& rng)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : m.data) {
        v = dist(rng);
    }
}

void add_inplace(Mat& a, const Mat& b)
{
    require_same_shape(a, b, "add");
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.data[i] += b.data[i];
    }
}

Mat add(const Mat& a, const Mat& b)
{
    Mat out = a;
    add_inplace(out, b);
    return out;
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight(name + ".weight", out, in), bias(name + ".bias", 1, out)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    uniform_fill(weight.value, bound, rng);
    uniform_fill(bias.value, bound, rng);
}

Mat Linear::forward(const Mat& x) const
{
    if (x.cols != in_features()) {
        throw ShapeError(weight.name + ": expected width " + std::to_string(in_features()) + ", got " +
                         shape_str(x));
    }
    Mat y;
    kernels::gemm_nt(x, weight.value, y);
    for (int r = 0; r < y.rows; ++r) {
        auto yr = y.row(r);
        for (int c = 0; c < y.cols; ++c) {
            yr[c] += bias.value.data[c];
        }
    }
    return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy, bool need_dx)
{
    if (dy.cols != out_features() || dy.rows != x.rows) {
        throw ShapeError(weight.name + ": backward shape mismatch " + shape_str(x) + " / " + shape_str(dy));
    }
    kernels::gemm_tn_acc(dy, x, weight.grad);
    for (int c = 0; c < dy.cols; ++c) {
        double s = 0.0;
        for (int r = 0; r < dy.rows; ++r) {
            s += dy(r, c);
        }
        bias.grad.data[c] += s;
    }
    weight.has_grad = true;
    bias.has_grad = true;
    Mat dx;
    if (need_dx) {
        kernels::gemm_nn(dy, weight.value, dx);
    }
    return dx;
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, int width)
    : gamma(name + ".weight", 1, width), beta(name + ".bias", 1, width)
{
    gamma.value.fill(1.0);
}

Mat LayerNorm::forward(const Mat& x, LayerNormCache& cache) const
{
    Mat y;
    kernels::layernorm_forward(x, gamma.value, beta.value, eps, y, cache.xhat, cache.rstd);
    return y;
}

Mat LayerNorm::backward(const LayerNormCache& cache, const Mat& dy)
{
    Mat dx;
    kernels::layernorm_backward(dy, cache.xhat, cache.rstd, gamma.value, dx, gamma.grad, beta.grad);
    gamma.has_grad = true;
    beta.has_grad = true;
    return dx;
}

// ---------------------------------------------------------------- SelfAttention

SelfAttention::SelfAttention(const std::string& name, int width, int heads, Rng& rng)
    : num_heads(heads), in_proj(name + ".in_proj", width, 3 * width, rng),
      out_proj(name + ".out_proj", width, width, rng)
{
    if (heads <= 0 || width % heads != 0) {
        throw ConfigError(name + ": width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                          " heads");
    }
    // Xavier-uniform q/k/v projection and zero biases.
    const double xavier = std::sqrt(6.0 / static_cast<double>(width + 3 * width));
    uniform_fill(in_proj.weight.value, xavier, rng);
    in_proj.bias.value.fill(0.0);
    out_proj.bias.value.fill(0.0);
}

Mat SelfAttention::forward(const Mat& x, int seq, AttentionCache& cache) const
{
    const int width = x.cols;
    if (seq <= 0 || x.rows % seq != 0) {
        throw ShapeError("attention: " + std::to_string(x.rows) + " tokens not a multiple of sequence " +
                         std::to_string(seq));
    }
    const int images = x.rows / seq;
    const int hd = width / num_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    cache.x = x;
    cache.qkv = in_proj.forward(x);
    cache.heads = Mat(x.rows, width);
    cache.probs.assign(static_cast<std::size_t>(images * num_heads), Mat());

    const Mat& qkv = cache.qkv;
#pragma omp parallel for schedule(static) if (images * num_heads > 1 && seq * seq * hd > 2048)
    for (int bh = 0; bh < images * num_heads; ++bh) {
        const int b = bh / num_heads;
        const int h = bh % num_heads;
        const int r0 = b * seq;
        const int qo = h * hd;
        const int ko = width + h * hd;
        const int vo = 2 * width + h * hd;
        Mat p(seq, seq);
        for (int i = 0; i < seq; ++i) {
            for (int j = 0; j < seq; ++j) {
                double s = 0.0;
                for (int t = 0; t < hd; ++t) {
                    s += qkv(r0 + i, qo + t) * qkv(r0 + j, ko + t);
                }
                p(i, j) = s * scale;
            }
        }
        kernels::serial::softmax_rows(p);
        for (int i = 0; i < seq; ++i) {
            for (int t = 0; t < hd; ++t) {
                double s = 0.0;
                for (int j = 0; j < seq; ++j) {
                    s += p(i, j) * qkv(r0 + j, vo + t);
                }
                cache.heads(r0 + i, qo + t) = s;
            }
        }
        cache.probs[bh] = std::move(p);
    }
    return out_proj.forward(cache.heads);
}

Mat SelfAttention::backward(const AttentionCache& cache, const Mat& dy, int seq)
{
    const int width = cache.x.cols;
    const int images = cache.x.rows / seq;
    const int hd = width / num_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const Mat& qkv = cache.qkv;

    const Mat dheads = out_proj.backward(cache.heads, dy);
    Mat dqkv(qkv.rows, qkv.cols);

#pragma omp parallel for schedule(static) if (images * num_heads > 1 && seq * seq * hd > 2048)
    for (int bh = 0; bh < images * num_heads; ++bh) {
        const int b = bh / num_heads;
        const int h = bh % num_heads;
        const int r0 = b * seq;
        const int qo = h * hd;
        const int ko = width + h * hd;
        const int vo = 2 * width + h * hd;
        const Mat& p = cache.probs[bh];

        Mat dp(seq, seq);
        for (int i = 0; i < seq; ++i) {
            for (int j = 0; j < seq; ++j) {
                double s = 0.0;
                for (int t = 0; t < hd; ++t) {
                    s += dheads(r0 + i, qo + t) * qkv(r0 + j, vo + t);
                }
                dp(i, j) = s;
            }
        }
        for (int j = 0; j < seq; ++j) {
            for (int t = 0; t < hd; ++t) {
                double s = 0.0;
                for (int i = 0; i < seq; ++i) {
                    s += p(i, j) * dheads(r0 + i, qo + t);
                }
                dqkv(r0 + j, vo + t) = s;
            }
        }
        // softmax Jacobian, folded with the 1/sqrt(d) scale
        Mat ds(seq, seq);
        for (int i = 0; i < seq; ++i) {
            double dot = 0.0;
            for (int k = 0; k < seq; ++k) {
                dot += p(i, k) * dp(i, k);
            }
            for (int j = 0; j < seq; ++j) {
                ds(i, j) = p(i, j) * (dp(i, j) - dot) * scale;
            }
        }
        for (int i = 0; i < seq; ++i) {
            for (int t = 0; t < hd; ++t) {
                double sq = 0.0;
                double sk = 0.0;
                for (int j = 0; j < seq; ++j) {
                    sq += ds(i, j) * qkv(r0 + j, ko + t);
                    sk += ds(j, i) * qkv(r0 + j, qo + t);
                }
                dqkv(r0 + i, qo + t) = sq;
                dqkv(r0 + i, ko + t) = sk;
            }
        }
    }
    return in_proj.backward(cache.x, dqkv);
}

// ---------------------------------------------------------------- EncoderLayer

EncoderLayer::EncoderLayer(const std::string& name, int width, int heads, int ff_width, Rng& rng)
    : attn(name + ".self_attn", width, heads, rng), norm1(name + ".norm1", width),
      ff1(name + ".linear1", width, ff_width, rng), ff2(name + ".linear2", ff_width, width, rng),
      norm2(name + ".norm2", width)
{
}

Mat EncoderLayer::forward(const Mat& x, int seq, EncoderLayerCache& c) const
{
    const Mat sa = attn.forward(x, seq, c.attn);
    c.h1 = norm1.forward(add(x, sa), c.norm1);
    c.ff_pre = ff1.forward(c.h1);
    kernels::gelu_forward(c.ff_pre, c.ff_act);
    const Mat ff = ff2.forward(c.ff_act);
    return norm2.forward(add(c.h1, ff), c.norm2);
}

Mat EncoderLayer::forward(const Mat& x, int seq) const
{
    EncoderLayerCache c;
    return forward(x, seq, c);
}

Mat EncoderLayer::backward(const EncoderLayerCache& c, const Mat& dy, int seq)
{
    const Mat dz2 = norm2.backward(c.norm2, dy);
    const Mat dact = ff2.backward(c.ff_act, dz2);
    Mat dpre;
    kernels::gelu_backward(c.ff_pre, dact, dpre);
    Mat dh1 = ff1.backward(c.h1, dpre);
    add_inplace(dh1, dz2);
    const Mat dz1 = norm1.backward(c.norm1, dh1);
    Mat dx = attn.backward(c.attn, dz1, seq);
    add_inplace(dx, dz1);
    return dx;
}

}  // namespace coad::nn
