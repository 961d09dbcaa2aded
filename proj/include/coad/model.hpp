#pragma once

// Disentangling ViT auto-encoder.
//
// A strided patch projection produces 2M-wide tokens. The first M channels go
// (without positional embeddings) through three color encoder layers giving
// f_R, f_G, f_B; the other M channels plus a learned positional table go
// through the content encoder layers giving f_LL, f_HL, f_LH, f_HH (vit-cm-dwt)
// or a single f_content (vit-cm).
//
// RGB reconstruction modulates every content block with one color block
// (Hadamard product) and runs the shared decoder bank; gray reconstruction
// decodes the content blocks as they are. For vit-cm-dwt each decoder emits one
// Haar subband and the inverse transform assembles the plane.
//
// vit-ae is the undisentangled control: one encoder layer over the full 2M
// tokens and a single decoder straight to RGB.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coad/image.hpp"
#include "coad/nn.hpp"
#include "coad/wavelet.hpp"

namespace coad {

enum class Variant { vit_cm_dwt, vit_cm, vit_ae };

std::string to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ModelConfig {
    Variant variant = Variant::vit_cm_dwt;
    int input_size = 224;
    int patch_size = 16;
    int concept_dim = 64;  // M; tokens are 2M wide
    int heads = 4;
    int ff_width = 2048;
    unsigned long long init_seed = 0;

    [[nodiscard]] int grid() const noexcept { return input_size / patch_size; }
    [[nodiscard]] int patches() const noexcept { return grid() * grid(); }
    [[nodiscard]] int token_width() const noexcept { return 2 * concept_dim; }
    /// Throws ConfigError on inconsistent geometry.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Concept blocks of one object, each patches x M.
struct ConceptEmbedding {
    std::vector<Mat> color;    // f_R, f_G, f_B
    std::vector<Mat> content;  // f_LL, f_HL, f_LH, f_HH  or  f_content

    [[nodiscard]] std::size_t concept_count() const noexcept { return color.size() + content.size(); }
};

/// Input to the decoder bank: one block set per output channel.
struct DecoderInput {
    std::vector<std::vector<Mat>> channels;
    bool modulated = false;
};

enum class DecodeMode { rgb, gray };

struct Reconstruction {
    Image image;
    /// Per output channel, when the wavelet decoder is active.
    std::vector<WaveletComponents> subbands;
};

/// Hadamard product of every content block with `color_block`.
std::vector<Mat> modulate(std::span<const Mat> content, const Mat& color_block);

/// Which reconstruction loss a training step optimises.
enum class Phase {
    modulated,  // RGB target, content blocks modulated by color
    content,    // gray target, content blocks only
    plain,      // vit-ae RGB target
};

struct StepOptions {
    /// Cut the gradient from the modulated loss into the content path.
    bool detach_content = true;
    /// Skip the backward pass (loss evaluation only).
    bool backward = true;
};

class Model {
public:
    explicit Model(const ModelConfig& config);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] Variant variant() const noexcept { return config_.variant; }

    /// Patch projection: patches x 2M. Any image with 3 channels and sides
    /// divisible by the patch size is accepted.
    [[nodiscard]] Mat patch_embed(const Image& image) const;

    /// Concept embedding of one image. Throws ConfigError for vit-ae.
    [[nodiscard]] ConceptEmbedding encode(const Image& image) const;
    [[nodiscard]] std::vector<ConceptEmbedding> encode_batch(std::span<const Image> images) const;
    /// vit-ae latent tokens (patches x 2M). Throws ConfigError for other variants.
    [[nodiscard]] Mat encode_latent(const Image& image) const;

    [[nodiscard]] Reconstruction decode(const DecoderInput& input, DecodeMode mode) const;
    /// Builds the decoder input from an embedding (modulating for rgb) and decodes it.
    [[nodiscard]] Reconstruction reconstruct(const ConceptEmbedding& embedding, DecodeMode mode) const;
    /// Full auto-encoder pass; for vit-ae the mode must be rgb.
    [[nodiscard]] Reconstruction autoencode(const Image& image, DecodeMode mode) const;

    /// Mean squared reconstruction error of one phase over the batch, with
    /// gradients accumulated into the parameters when `opts.backward`.
    /// Throws Error on a non-finite loss.
    double forward_backward(std::span<const Image> batch, Phase phase, StepOptions opts = {});

    void zero_grad();

    /// All trainable parameters in a fixed order.
    [[nodiscard]] std::vector<nn::Param*> parameters();
    [[nodiscard]] std::vector<const nn::Param*> parameters() const;
    /// Parameters of the content path (content encoders and positional table).
    [[nodiscard]] std::vector<nn::Param*> content_encoder_parameters();
    /// Parameters of the three color encoders.
    [[nodiscard]] std::vector<nn::Param*> color_encoder_parameters();
    [[nodiscard]] std::size_t parameter_count() const;

    long step = 0;
    int epoch = 0;

private:
    struct Tape;

    void check_image(const Image& image) const;
    Mat patchify(std::span<const Image> images) const;
    Tape run_encoder(std::span<const Image> images, bool want_color, bool want_content, bool keep_cache) const;
    [[nodiscard]] int decoder_block() const noexcept;
    void blocks_to_plane(const Mat& rows, int image, int block, Mat& plane, int col0 = 0) const;
    void plane_to_blocks(const Mat& plane, int image, int block, Mat& rows, int col0 = 0) const;
    Mat decode_plane(const std::vector<Mat>& decoded, int image, WaveletComponents* subbands) const;
    void plane_grad_to_rows(const Mat& dplane, int image, std::vector<Mat>& drows) const;

    ModelConfig config_;
    nn::Linear patch_proj_;
    nn::Param pos_embed_;
    std::vector<nn::EncoderLayer> content_layers_;
    std::vector<nn::EncoderLayer> color_layers_;
    std::vector<nn::Linear> decoders_;
};

}  // namespace coad
