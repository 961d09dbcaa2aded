#include "coad/model.hpp"

#include <cmath>

namespace coad {

namespace {

constexpr const char* kSubbandNames[4] = {"ll", "hl", "lh", "hh"};
constexpr const char* kColorNames[3] = {"r", "g", "b"};

Mat hadamard(const Mat& a, const Mat& b)
{
    require_same_shape(a, b, "modulate");
    Mat out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data[i] = a.data[i] * b.data[i];
    }
    return out;
}

void hadamard_acc(Mat& acc, const Mat& a, const Mat& b)
{
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc.data[i] += a.data[i] * b.data[i];
    }
}

void add_to(Mat& acc, const Mat& x)
{
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc.data[i] += x.data[i];
    }
}

Mat slice_rows(const Mat& m, int r0, int n)
{
    Mat out(n, m.cols);
    std::copy(m.data.begin() + static_cast<std::ptrdiff_t>(r0) * m.cols,
              m.data.begin() + static_cast<std::ptrdiff_t>(r0 + n) * m.cols, out.data.begin());
    return out;
}

}  // namespace

std::string to_string(Variant v)
{
    switch (v) {
    case Variant::vit_cm_dwt:
        return "vit-cm-dwt";
    case Variant::vit_cm:
        return "vit-cm";
    case Variant::vit_ae:
        return "vit-ae";
    }
    return "?";
}

Variant parse_variant(std::string_view s)
{
    if (s == "vit-cm-dwt") {
        return Variant::vit_cm_dwt;
    }
    if (s == "vit-cm") {
        return Variant::vit_cm;
    }
    if (s == "vit-ae") {
        return Variant::vit_ae;
    }
    throw ConfigError("unknown variant '" + std::string(s) + "' (expected vit-cm-dwt, vit-cm or vit-ae)");
}

void ModelConfig::validate() const
{
    if (patch_size <= 0 || input_size <= 0 || input_size % patch_size != 0) {
        throw ConfigError("input_size " + std::to_string(input_size) + " must be a positive multiple of patch_size " +
                          std::to_string(patch_size));
    }
    if (variant == Variant::vit_cm_dwt && patch_size % 2 != 0) {
        throw ConfigError("vit-cm-dwt needs an even patch_size");
    }
    if (concept_dim <= 0 || heads <= 0 || ff_width <= 0) {
        throw ConfigError("concept_dim, heads and ff_width must be positive");
    }
    const int width = variant == Variant::vit_ae ? token_width() : concept_dim;
    if (width % heads != 0) {
        throw ConfigError("encoder width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                          " heads");
    }
}

std::vector<Mat> modulate(std::span<const Mat> content, const Mat& color_block)
{
    std::vector<Mat> out;
    out.reserve(content.size());
    for (const Mat& c : content) {
        out.push_back(hadamard(c, color_block));
    }
    return out;
}

// ---------------------------------------------------------------- construction

Model::Model(const ModelConfig& config) : config_(config)
{
    config_.validate();
    nn::Rng rng(config_.init_seed);
    const int p = config_.patch_size;
    const int m = config_.concept_dim;
    const int n = config_.patches();

    patch_proj_ = nn::Linear("patch_embed", 3 * p * p, 2 * m, rng);

    const int content_width = config_.variant == Variant::vit_ae ? 2 * m : m;
    pos_embed_ = nn::Param("pos_embed", n, content_width);
    std::normal_distribution<double> pos_dist(0.0, 0.02);
    for (double& v : pos_embed_.value.data) {
        v = pos_dist(rng);
    }

    switch (config_.variant) {
    case Variant::vit_cm_dwt:
        for (const char* s : kSubbandNames) {
            content_layers_.emplace_back(std::string("content_encoder.") + s, m, config_.heads, config_.ff_width, rng);
        }
        break;
    case Variant::vit_cm:
        content_layers_.emplace_back("content_encoder.content", m, config_.heads, config_.ff_width, rng);
        break;
    case Variant::vit_ae:
        content_layers_.emplace_back("encoder", 2 * m, config_.heads, config_.ff_width, rng);
        break;
    }
    if (config_.variant != Variant::vit_ae) {
        for (const char* c : kColorNames) {
            color_layers_.emplace_back(std::string("color_encoder.") + c, m, config_.heads, config_.ff_width, rng);
        }
    }

    switch (config_.variant) {
    case Variant::vit_cm_dwt:
        for (const char* s : kSubbandNames) {
            decoders_.emplace_back(std::string("decoder.") + s, m, (p / 2) * (p / 2), rng);
        }
        break;
    case Variant::vit_cm:
        decoders_.emplace_back("decoder.content", m, p * p, rng);
        break;
    case Variant::vit_ae:
        decoders_.emplace_back("decoder", 2 * m, 3 * p * p, rng);
        break;
    }
}

// ---------------------------------------------------------------- parameters

std::vector<nn::Param*> Model::parameters()
{
    std::vector<nn::Param*> out;
    auto push = [&out](nn::Param& prm) { out.push_back(&prm); };
    patch_proj_.for_each_param(push);
    out.push_back(&pos_embed_);
    for (auto& l : content_layers_) {
        l.for_each_param(push);
    }
    for (auto& l : color_layers_) {
        l.for_each_param(push);
    }
    for (auto& d : decoders_) {
        d.for_each_param(push);
    }
    return out;
}

std::vector<const nn::Param*> Model::parameters() const
{
    auto mut = const_cast<Model*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::vector<nn::Param*> Model::content_encoder_parameters()
{
    std::vector<nn::Param*> out{&pos_embed_};
    for (auto& l : content_layers_) {
        l.for_each_param([&out](nn::Param& prm) { out.push_back(&prm); });
    }
    return out;
}

std::vector<nn::Param*> Model::color_encoder_parameters()
{
    std::vector<nn::Param*> out;
    for (auto& l : color_layers_) {
        l.for_each_param([&out](nn::Param& prm) { out.push_back(&prm); });
    }
    return out;
}

std::size_t Model::parameter_count() const
{
    std::size_t n = 0;
    for (const auto* prm : parameters()) {
        n += prm->value.size();
    }
    return n;
}

void Model::zero_grad()
{
    for (auto* prm : parameters()) {
        prm->zero_grad();
    }
}

// ---------------------------------------------------------------- geometry helpers

void Model::check_image(const Image& image) const
{
    if (image.channels() != 3 || image.height() != config_.input_size || image.width() != config_.input_size) {
        throw ShapeError("expected a 3x" + std::to_string(config_.input_size) + "x" +
                         std::to_string(config_.input_size) + " image, got " + std::to_string(image.channels()) +
                         "x" + std::to_string(image.height()) + "x" + std::to_string(image.width()));
    }
}

Mat Model::patchify(std::span<const Image> images) const
{
    const int p = config_.patch_size;
    if (images.empty()) {
        return Mat(0, 3 * p * p);
    }
    const int h = images[0].height();
    const int w = images[0].width();
    if (h % p != 0 || w % p != 0 || h == 0 || w == 0) {
        throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch size " +
                         std::to_string(p));
    }
    const int gy = h / p;
    const int gx = w / p;
    Mat out(static_cast<int>(images.size()) * gy * gx, 3 * p * p);
    for (std::size_t b = 0; b < images.size(); ++b) {
        const Image& img = images[b];
        if (img.channels() != 3 || img.height() != h || img.width() != w) {
            throw ShapeError("patchify: images in one batch must all be 3x" + std::to_string(h) + "x" +
                             std::to_string(w));
        }
        for (int py = 0; py < gy; ++py) {
            for (int px = 0; px < gx; ++px) {
                auto row = out.row(static_cast<int>(b) * gy * gx + py * gx + px);
                int k = 0;
                for (int c = 0; c < 3; ++c) {
                    for (int y = 0; y < p; ++y) {
                        for (int x = 0; x < p; ++x) {
                            row[k++] = img.planes[c](py * p + y, px * p + x);
                        }
                    }
                }
            }
        }
    }
    return out;
}

int Model::decoder_block() const noexcept
{
    return config_.variant == Variant::vit_cm_dwt ? config_.patch_size / 2 : config_.patch_size;
}

void Model::blocks_to_plane(const Mat& rows, int image, int block, Mat& plane, int col0) const
{
    const int g = config_.grid();
    plane = Mat(g * block, g * block);
    for (int py = 0; py < g; ++py) {
        for (int px = 0; px < g; ++px) {
            auto r = rows.row(image * g * g + py * g + px);
            for (int i = 0; i < block; ++i) {
                for (int j = 0; j < block; ++j) {
                    plane(py * block + i, px * block + j) = r[col0 + i * block + j];
                }
            }
        }
    }
}

void Model::plane_to_blocks(const Mat& plane, int image, int block, Mat& rows, int col0) const
{
    const int g = config_.grid();
    for (int py = 0; py < g; ++py) {
        for (int px = 0; px < g; ++px) {
            auto r = rows.row(image * g * g + py * g + px);
            for (int i = 0; i < block; ++i) {
                for (int j = 0; j < block; ++j) {
                    r[col0 + i * block + j] = plane(py * block + i, px * block + j);
                }
            }
        }
    }
}

Mat Model::decode_plane(const std::vector<Mat>& decoded, int image, WaveletComponents* subbands) const
{
    const int q = decoder_block();
    if (config_.variant == Variant::vit_cm_dwt) {
        WaveletComponents wc;
        blocks_to_plane(decoded[0], image, q, wc.ll);
        blocks_to_plane(decoded[1], image, q, wc.hl);
        blocks_to_plane(decoded[2], image, q, wc.lh);
        blocks_to_plane(decoded[3], image, q, wc.hh);
        Mat plane = idwt2_haar(wc);
        if (subbands != nullptr) {
            *subbands = std::move(wc);
        }
        return plane;
    }
    Mat plane;
    blocks_to_plane(decoded[0], image, q, plane);
    return plane;
}

void Model::plane_grad_to_rows(const Mat& dplane, int image, std::vector<Mat>& drows) const
{
    const int q = decoder_block();
    if (config_.variant == Variant::vit_cm_dwt) {
        // The orthonormal inverse transform is orthogonal: its adjoint is the forward transform.
        const WaveletComponents g = dwt2_haar(dplane);
        plane_to_blocks(g.ll, image, q, drows[0]);
        plane_to_blocks(g.hl, image, q, drows[1]);
        plane_to_blocks(g.lh, image, q, drows[2]);
        plane_to_blocks(g.hh, image, q, drows[3]);
        return;
    }
    plane_to_blocks(dplane, image, q, drows[0]);
}

// ---------------------------------------------------------------- encoder

struct Model::Tape {
    int images = 0;
    Mat patches;
    Mat color_in;
    Mat content_in;
    std::vector<nn::EncoderLayerCache> color_cache;
    std::vector<nn::EncoderLayerCache> content_cache;
    std::vector<Mat> color;
    std::vector<Mat> content;
};

Model::Tape Model::run_encoder(std::span<const Image> images, bool want_color, bool want_content,
                               bool keep_cache) const
{
    Tape t;
    t.images = static_cast<int>(images.size());
    for (const Image& img : images) {
        check_image(img);
    }
    t.patches = patchify(images);
    const Mat tokens = patch_proj_.forward(t.patches);
    const int n = config_.patches();
    const int m = config_.concept_dim;

    if (config_.variant == Variant::vit_ae) {
        t.content_in = tokens;
    } else {
        t.color_in = slice_cols(tokens, 0, m);
        t.content_in = slice_cols(tokens, m, m);
    }
    for (int r = 0; r < t.content_in.rows; ++r) {
        auto dst = t.content_in.row(r);
        auto pos = pos_embed_.value.row(r % n);
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] += pos[j];
        }
    }

    auto run = [&](const std::vector<nn::EncoderLayer>& layers, const Mat& in, std::vector<Mat>& out,
                   std::vector<nn::EncoderLayerCache>& cache) {
        out.resize(layers.size());
        if (keep_cache) {
            cache.resize(layers.size());
        }
        for (std::size_t i = 0; i < layers.size(); ++i) {
            out[i] = keep_cache ? layers[i].forward(in, n, cache[i]) : layers[i].forward(in, n);
        }
    };
    if (want_content) {
        run(content_layers_, t.content_in, t.content, t.content_cache);
    }
    if (want_color && config_.variant != Variant::vit_ae) {
        run(color_layers_, t.color_in, t.color, t.color_cache);
    }
    return t;
}

Mat Model::patch_embed(const Image& image) const
{
    return patch_proj_.forward(patchify(std::span<const Image>(&image, 1)));
}

std::vector<ConceptEmbedding> Model::encode_batch(std::span<const Image> images) const
{
    if (config_.variant == Variant::vit_ae) {
        throw ConfigError("encode: vit-ae has no concept embedding; use encode_latent");
    }
    const Tape t = run_encoder(images, true, true, false);
    const int n = config_.patches();
    std::vector<ConceptEmbedding> out(images.size());
    for (int b = 0; b < t.images; ++b) {
        for (const Mat& c : t.color) {
            out[b].color.push_back(slice_rows(c, b * n, n));
        }
        for (const Mat& c : t.content) {
            out[b].content.push_back(slice_rows(c, b * n, n));
        }
    }
    return out;
}

ConceptEmbedding Model::encode(const Image& image) const
{
    return std::move(encode_batch(std::span<const Image>(&image, 1)).front());
}

Mat Model::encode_latent(const Image& image) const
{
    if (config_.variant != Variant::vit_ae) {
        throw ConfigError("encode_latent: only vit-ae has an undisentangled latent");
    }
    Tape t = run_encoder(std::span<const Image>(&image, 1), false, true, false);
    return std::move(t.content.front());
}

// ---------------------------------------------------------------- decoder

Reconstruction Model::decode(const DecoderInput& input, DecodeMode mode) const
{
    const int n = config_.patches();
    const std::size_t channels = input.channels.size();
    if (config_.variant == Variant::vit_ae) {
        if (mode != DecodeMode::rgb || channels != 1 || input.modulated) {
            throw ConfigError("decode: vit-ae decodes one unmodulated latent block to rgb");
        }
    } else if (mode == DecodeMode::rgb) {
        if (!input.modulated) {
            throw ConfigError("decode: rgb mode needs modulated content blocks");
        }
        if (channels != 3) {
            throw ConfigError("decode: rgb mode needs three modulated block sets, got " + std::to_string(channels));
        }
    } else {
        if (input.modulated || channels != 1) {
            throw ConfigError("decode: gray mode takes exactly one unmodulated content block set");
        }
    }

    Reconstruction rec;
    for (const auto& blocks : input.channels) {
        if (blocks.size() != decoders_.size()) {
            throw ShapeError("decode: expected " + std::to_string(decoders_.size()) + " blocks per channel, got " +
                             std::to_string(blocks.size()));
        }
        std::vector<Mat> decoded;
        for (std::size_t s = 0; s < blocks.size(); ++s) {
            if (blocks[s].rows != n || blocks[s].cols != decoders_[s].in_features()) {
                throw ShapeError("decode: block " + std::to_string(s) + " is " + shape_str(blocks[s]) + ", expected " +
                                 std::to_string(n) + "x" + std::to_string(decoders_[s].in_features()));
            }
            decoded.push_back(decoders_[s].forward(blocks[s]));
        }
        if (config_.variant == Variant::vit_ae) {
            const int pp = config_.patch_size * config_.patch_size;
            for (int c = 0; c < 3; ++c) {
                Mat plane;
                blocks_to_plane(decoded[0], 0, config_.patch_size, plane, c * pp);
                rec.image.planes.push_back(std::move(plane));
            }
        } else if (config_.variant == Variant::vit_cm_dwt) {
            WaveletComponents wc;
            rec.image.planes.push_back(decode_plane(decoded, 0, &wc));
            rec.subbands.push_back(std::move(wc));
        } else {
            rec.image.planes.push_back(decode_plane(decoded, 0, nullptr));
        }
    }
    return rec;
}

Reconstruction Model::reconstruct(const ConceptEmbedding& e, DecodeMode mode) const
{
    DecoderInput in;
    if (mode == DecodeMode::rgb) {
        if (e.color.size() != 3) {
            throw ConfigError("reconstruct: rgb mode needs three color blocks");
        }
        in.modulated = true;
        for (const Mat& c : e.color) {
            in.channels.push_back(modulate(e.content, c));
        }
    } else {
        in.channels.push_back(e.content);
    }
    return decode(in, mode);
}

Reconstruction Model::autoencode(const Image& image, DecodeMode mode) const
{
    if (config_.variant == Variant::vit_ae) {
        DecoderInput in;
        in.channels.push_back({encode_latent(image)});
        return decode(in, mode);
    }
    return reconstruct(encode(image), mode);
}

// ---------------------------------------------------------------- training pass

double Model::forward_backward(std::span<const Image> batch, Phase phase, StepOptions opts)
{
    if (batch.empty()) {
        throw Error("forward_backward: empty batch");
    }
    const bool ae = config_.variant == Variant::vit_ae;
    if (ae != (phase == Phase::plain)) {
        throw ConfigError("phase does not match variant " + to_string(config_.variant));
    }
    const int images = static_cast<int>(batch.size());
    const int n = config_.patches();
    const int m = config_.concept_dim;
    const int side = config_.input_size;
    const bool detach = phase == Phase::modulated && opts.detach_content;
    const bool need_content_cache = opts.backward && !detach;

    Tape t = run_encoder(batch, phase == Phase::modulated, true,
                         opts.backward && (need_content_cache || phase == Phase::modulated));
    if (detach) {
        t.content_cache.clear();
    }

    const std::size_t nd = decoders_.size();
    const double count =
        static_cast<double>(images) * (phase == Phase::content ? 1.0 : 3.0) * side * side;

    // Forward. `inputs[k][s]` feeds decoder s for output group k; `residual[k][b]`
    // is recon - target of image b in that group.
    std::vector<std::vector<Mat>> inputs;
    std::vector<std::vector<Mat>> residual;
    double sse = 0.0;

    auto add_residual = [&](std::vector<Mat>& dst, Mat plane, const Mat& target) {
        for (std::size_t i = 0; i < plane.size(); ++i) {
            plane.data[i] -= target.data[i];
            sse += plane.data[i] * plane.data[i];
        }
        dst.push_back(std::move(plane));
    };

    if (phase == Phase::modulated) {
        for (int c = 0; c < 3; ++c) {
            inputs.push_back(modulate(t.content, t.color[c]));
            std::vector<Mat> decoded;
            for (std::size_t s = 0; s < nd; ++s) {
                decoded.push_back(decoders_[s].forward(inputs.back()[s]));
            }
            residual.emplace_back();
            for (int b = 0; b < images; ++b) {
                add_residual(residual.back(), decode_plane(decoded, b, nullptr), batch[b].planes[c]);
            }
        }
    } else if (phase == Phase::content) {
        inputs.push_back(t.content);
        std::vector<Mat> decoded;
        for (std::size_t s = 0; s < nd; ++s) {
            decoded.push_back(decoders_[s].forward(inputs.back()[s]));
        }
        residual.emplace_back();
        for (int b = 0; b < images; ++b) {
            add_residual(residual.back(), decode_plane(decoded, b, nullptr), grayscale(batch[b]));
        }
    } else {
        inputs.push_back(t.content);
        const Mat decoded = decoders_[0].forward(inputs.back()[0]);
        const int pp = config_.patch_size * config_.patch_size;
        for (int c = 0; c < 3; ++c) {
            residual.emplace_back();
            for (int b = 0; b < images; ++b) {
                Mat plane;
                blocks_to_plane(decoded, b, config_.patch_size, plane, c * pp);
                add_residual(residual.back(), std::move(plane), batch[b].planes[c]);
            }
        }
    }

    const double loss = sse / count;
    if (!std::isfinite(loss)) {
        throw Error("non-finite loss (" + std::to_string(loss) + ") at step " + std::to_string(step) + ", phase " +
                    (phase == Phase::modulated ? "modulated" : phase == Phase::content ? "content" : "plain") +
                    ", variant " + to_string(config_.variant));
    }
    if (!opts.backward) {
        return loss;
    }

    // Backward.
    const double gscale = 2.0 / count;
    const int rows = images * n;
    std::vector<Mat> dcontent(t.content.size(), Mat(rows, t.content.empty() ? 0 : t.content[0].cols));
    std::vector<Mat> dcolor(t.color.size(), Mat(rows, m));

    if (phase == Phase::plain) {
        const int pp = config_.patch_size * config_.patch_size;
        Mat drows(rows, 3 * pp);
        for (int c = 0; c < 3; ++c) {
            for (int b = 0; b < images; ++b) {
                Mat d = residual[c][b];
                for (double& v : d.data) {
                    v *= gscale;
                }
                plane_to_blocks(d, b, config_.patch_size, drows, c * pp);
            }
        }
        dcontent[0] = decoders_[0].backward(inputs[0][0], drows);
    } else {
        const int q = decoder_block();
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            std::vector<Mat> drows(nd, Mat(rows, q * q));
            for (int b = 0; b < images; ++b) {
                Mat d = residual[k][b];
                for (double& v : d.data) {
                    v *= gscale;
                }
                plane_grad_to_rows(d, b, drows);
            }
            for (std::size_t s = 0; s < nd; ++s) {
                const Mat dz = decoders_[s].backward(inputs[k][s], drows[s]);
                if (phase == Phase::modulated) {
                    hadamard_acc(dcolor[k], dz, t.content[s]);
                    if (!detach) {
                        hadamard_acc(dcontent[s], dz, t.color[k]);
                    }
                } else {
                    add_to(dcontent[s], dz);
                }
            }
        }
    }

    Mat dtokens(rows, 2 * m);
    if (phase == Phase::modulated) {
        Mat dcolor_in(rows, m);
        for (std::size_t i = 0; i < color_layers_.size(); ++i) {
            add_to(dcolor_in, color_layers_[i].backward(t.color_cache[i], dcolor[i], n));
        }
        put_cols(dtokens, dcolor_in, 0);
    }
    if (!detach) {
        Mat dcontent_in(rows, t.content_in.cols);
        for (std::size_t i = 0; i < content_layers_.size(); ++i) {
            add_to(dcontent_in, content_layers_[i].backward(t.content_cache[i], dcontent[i], n));
        }
        for (int r = 0; r < rows; ++r) {
            auto src = dcontent_in.row(r);
            auto dst = pos_embed_.grad.row(r % n);
            for (std::size_t j = 0; j < src.size(); ++j) {
                dst[j] += src[j];
            }
        }
        pos_embed_.has_grad = true;
        put_cols(dtokens, dcontent_in, ae ? 0 : m);
    }
    patch_proj_.backward(t.patches, dtokens, false);
    return loss;
}

}  // namespace coad
