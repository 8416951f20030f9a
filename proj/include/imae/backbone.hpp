#pragma once

#include <string>
#include <vector>

#include "imae/patches.hpp"
#include "imae/rng.hpp"

namespace imae::model {

struct BackboneConfig {
    i64 image_h = 32, image_w = 32, channels = 3;
    i64 patch = 4;
    i64 embed_dim = 64, depth = 4, heads = 4;
    i64 dec_dim = 32, dec_depth = 2;
    i64 mlp_ratio = 4;
    double mask_ratio = 0.75;

    i64 grid_h() const { return image_h / patch; }
    i64 grid_w() const { return image_w / patch; }
    i64 n_patches() const { return grid_h() * grid_w(); }
    i64 patch_dim() const { return patch * patch * channels; }
    i64 n_masked() const;   // round(mask_ratio * N), half away from zero
    i64 n_visible() const { return n_patches() - n_masked(); }

    void validate() const;
    bool same_architecture(const BackboneConfig& o) const;
};

/// Per-sample random masking: which patch tokens stay visible and how to
/// restore the original order.
struct MaskSpec {
    i64 B = 0, N = 0, V = 0;
    std::vector<i64> ids_keep;     // [B, V] flattened, per-sample patch indices
    std::vector<i64> ids_restore;  // [B, N] flattened, inverse shuffle
    std::vector<uint8_t> mask;     // [B, N] flattened, 1 = masked

    i64 keep(i64 b, i64 v) const { return ids_keep[static_cast<size_t>(b * V + v)]; }
    i64 restore(i64 b, i64 n) const { return ids_restore[static_cast<size_t>(b * N + n)]; }
    bool masked(i64 b, i64 n) const { return mask[static_cast<size_t>(b * N + n)] != 0; }
};

/// MAE-style shuffle mask: per-sample uniform noise, argsort, keep first V.
MaskSpec random_mask_spec(i64 B, i64 N, double mask_ratio, Rng& rng);

/// Select visible token rows of [B, N, D] per the mask -> [B, V, D].
Tensor gather_visible(const Tensor& tokens, const MaskSpec& spec);

/// Per-token latent features.
struct FeatureSet {
    Tensor tokens;           // [B, T, D]; T includes the class token when set
    bool includes_cls = true;

    i64 batch() const { return tokens.dim(0); }
    i64 count() const { return tokens.dim(1); }
    i64 dim() const { return tokens.dim(2); }
};

// ---- parameter registry ----

struct Param {
    std::string name;
    Tensor w, g;
    bool decay = false;  // weight decay applies (2-D weights only)
};

class ParamStore {
public:
    i64 add(const std::string& name, std::vector<i64> shape, bool decay);
    Param& at(i64 i) { return params_[static_cast<size_t>(i)]; }
    const Param& at(i64 i) const { return params_[static_cast<size_t>(i)]; }
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;
    i64 count() const { return static_cast<i64>(params_.size()); }
    i64 total_size() const;
    void zero_grad();

    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }

private:
    std::vector<Param> params_;
};

// ---- transformer tower (shared by encoder and decoder) ----

struct LinearRef {
    i64 w = -1, b = -1;
    i64 in = 0, out = 0;
};

struct LayerNormRef {
    i64 g = -1, b = -1;
    i64 dim = 0;
};

struct BlockRefs {
    LayerNormRef ln1, ln2;
    LinearRef qkv, proj, fc1, fc2;
};

struct BlockActs {
    Tensor x_in;                       // [M, D]
    Tensor ln1_out, ln1_mean, ln1_rstd;
    Tensor qkv;                        // [M, 3D]
    Tensor probs;                      // [B, H, T, T]
    Tensor ctx;                        // [M, D] merged heads
    Tensor res1;                       // x + attention
    Tensor ln2_out, ln2_mean, ln2_rstd;
    Tensor fc1_out, gelu_out;          // [M, mlp]
};

struct TowerActs {
    i64 B = 0, T = 0;
    std::vector<BlockActs> blocks;
    Tensor final_in, final_mean, final_rstd;
};

class Tower {
public:
    Tower() = default;
    Tower(ParamStore& store, const std::string& prefix, i64 dim, i64 depth, i64 heads,
          i64 mlp_ratio);

    /// x: [B*T, D] flattened tokens. Returns the post-final-norm output.
    Tensor forward(const ParamStore& store, const Tensor& x, i64 B, i64 T, TowerActs* acts) const;
    /// Accumulates parameter grads; returns d_input [B*T, D].
    Tensor backward(ParamStore& store, const Tensor& d_out, const TowerActs& acts) const;

    i64 dim() const { return dim_; }
    i64 depth() const { return depth_; }

    const std::vector<BlockRefs>& blocks() const { return blocks_; }

private:
    i64 dim_ = 0, depth_ = 0, heads_ = 0, mlp_ = 0;
    std::vector<BlockRefs> blocks_;
    LayerNormRef final_ln_;
};

// ---- MAE vision transformer ----

struct EncodeActs {
    i64 B = 0, T = 0;
    bool masked = false;
    std::vector<i64> keep_rows;  // global row gather indices when masked
    Tensor patch_rows;           // [B*N, PPC]
    Tensor tokens_in;            // [B*T, D] tower input
    TowerActs tower;
};

struct DecodeActs {
    i64 B = 0;
    const MaskSpec* mask = nullptr;
    Tensor vis_in;                  // [B*V, D] decoder-embed input
    std::vector<i64> restore_rows;  // global unshuffle gather indices
    Tensor x_in;                    // [B*N, dec_dim] tower input
    TowerActs tower;
    Tensor tower_out;               // [B*N, dec_dim] prediction-head input
};

/// ViT encoder plus lightweight decoder with random masking; also serves as
/// the frozen teacher (forward only).
class ViTBackbone {
public:
    ViTBackbone(const BackboneConfig& cfg, Rng& init_rng);

    const BackboneConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Patch-embed + positional + (optional) masking + cls + encoder blocks.
    /// Output tokens [B, 1+V, D] (or [B, 1+N, D] unmasked).
    Tensor encode(const data::ImageBatch& images, const MaskSpec* mask, EncodeActs* acts) const;
    void encode_backward(const Tensor& d_tokens, const EncodeActs& acts);

    /// Decoder: embed, fill mask tokens, restore order, decode, per-patch pixels.
    /// enc_tokens [B, 1+V, D] -> predictions [B, N, P*P*C].
    Tensor decode(const Tensor& enc_tokens, const MaskSpec& mask, DecodeActs* acts) const;
    Tensor decode_backward(const Tensor& d_pred, const DecodeActs& acts);

    /// Post-softmax attention of one layer/head on an unmasked forward pass.
    Tensor attention_map(const data::ImageBatch& image, i64 layer, i64 head) const;

    MaskSpec draw_mask(i64 B, Rng& rng) const {
        return random_mask_spec(B, cfg_.n_patches(), cfg_.mask_ratio, rng);
    }

    const Tensor& encoder_pos() const { return enc_pos_; }

private:
    BackboneConfig cfg_;
    ParamStore params_;
    LinearRef patch_embed_;
    i64 cls_token_ = -1;
    Tower encoder_;
    LinearRef dec_embed_;
    i64 mask_token_ = -1;
    Tower decoder_;
    LinearRef pred_;
    Tensor enc_pos_;  // [1+N, D] fixed sinusoidal, row 0 (cls) = 0
    Tensor dec_pos_;  // [N, dec_dim]
};

/// Fixed 2-D sin-cos positional table for a grid, [gh*gw, dim]; dim % 4 == 0.
Tensor sincos_pos_embed(i64 dim, i64 gh, i64 gw);

/// Shared init: truncated normal (std 0.02) weights, zero biases.
void init_params(ParamStore& store, Rng& rng);

}  // namespace imae::model
