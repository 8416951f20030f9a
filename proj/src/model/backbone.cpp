#include "imae/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imae/kernels.hpp"

namespace imae::model {

namespace k = imae::kernels;

i64 BackboneConfig::n_masked() const {
    return std::llround(mask_ratio * static_cast<double>(n_patches()));
}

void BackboneConfig::validate() const {
    if (patch <= 0 || image_h % patch != 0 || image_w % patch != 0)
        throw ConfigError("image size must be divisible by patch size");
    if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
    if (dec_dim % heads != 0) throw ConfigError("dec_dim must be divisible by heads");
    if (embed_dim % 4 != 0 || dec_dim % 4 != 0)
        throw ConfigError("embedding dims must be divisible by 4 (sin-cos table)");
    if (depth < 0 || dec_depth < 0) throw ConfigError("negative depth");
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0) throw ConfigError("mask_ratio must be in (0,1)");
    if (n_masked() < 1) throw ConfigError("mask_ratio too low: zero masked patches");
    if (n_visible() < 1) throw ConfigError("mask_ratio too high: zero visible patches");
    if (mlp_ratio <= 0) throw ConfigError("mlp_ratio must be positive");
}

bool BackboneConfig::same_architecture(const BackboneConfig& o) const {
    return image_h == o.image_h && image_w == o.image_w && channels == o.channels &&
           patch == o.patch && embed_dim == o.embed_dim && depth == o.depth && heads == o.heads &&
           dec_dim == o.dec_dim && dec_depth == o.dec_depth && mlp_ratio == o.mlp_ratio;
}

MaskSpec random_mask_spec(i64 B, i64 N, double mask_ratio, Rng& rng) {
    const i64 n_masked = std::llround(mask_ratio * static_cast<double>(N));
    const i64 V = N - n_masked;
    if (V < 1) throw ConfigError("mask_ratio leaves no visible tokens");
    if (n_masked < 1) throw ConfigError("mask_ratio leaves no masked tokens");
    MaskSpec s;
    s.B = B;
    s.N = N;
    s.V = V;
    s.ids_keep.resize(static_cast<size_t>(B * V));
    s.ids_restore.resize(static_cast<size_t>(B * N));
    s.mask.resize(static_cast<size_t>(B * N));
    std::vector<std::pair<double, i64>> noise(static_cast<size_t>(N));
    for (i64 b = 0; b < B; ++b) {
        for (i64 n = 0; n < N; ++n) noise[static_cast<size_t>(n)] = {rng.uniform(), n};
        std::sort(noise.begin(), noise.end());
        for (i64 j = 0; j < N; ++j) {
            const i64 token = noise[static_cast<size_t>(j)].second;
            if (j < V) s.ids_keep[static_cast<size_t>(b * V + j)] = token;
            s.ids_restore[static_cast<size_t>(b * N + token)] = j;
            s.mask[static_cast<size_t>(b * N + token)] = j < V ? 0 : 1;
        }
    }
    return s;
}

Tensor gather_visible(const Tensor& tokens, const MaskSpec& spec) {
    const i64 B = tokens.dim(0), N = tokens.dim(1), D = tokens.dim(2);
    if (B != spec.B || N != spec.N) throw DimensionError("mask spec does not match tokens");
    std::vector<i64> rows(static_cast<size_t>(B * spec.V));
    for (i64 b = 0; b < B; ++b)
        for (i64 v = 0; v < spec.V; ++v)
            rows[static_cast<size_t>(b * spec.V + v)] = b * N + spec.keep(b, v);
    Tensor out({B, spec.V, D});
    k::gather_rows(tokens.data(), rows.data(), out.data(), B * spec.V, D);
    return out;
}

// ---- parameter registry ----

i64 ParamStore::add(const std::string& name, std::vector<i64> shape, bool decay) {
    Param p;
    p.name = name;
    p.w = Tensor(shape);
    p.g = Tensor(std::move(shape));
    p.decay = decay;
    params_.push_back(std::move(p));
    return static_cast<i64>(params_.size()) - 1;
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

i64 ParamStore::total_size() const {
    i64 n = 0;
    for (const auto& p : params_) n += p.w.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.g.zero();
}

void init_params(ParamStore& store, Rng& rng) {
    for (auto& p : store.all()) {
        const auto& name = p.name;
        auto ends_with = [&](const char* suf) {
            std::string s(suf);
            return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
        };
        if (ends_with("norm.g") || ends_with("ln1.g") || ends_with("ln2.g")) {
            p.w.fill(1.0);
        } else if (ends_with("mask_token")) {
            p.w.zero();
        } else if (ends_with(".b")) {
            p.w.zero();
        } else {
            for (i64 i = 0; i < p.w.size(); ++i) p.w[i] = rng.trunc_normal(0.02);
        }
    }
}

// ---- linear helper ----

namespace {

void linear_fwd(const ParamStore& ps, const LinearRef& l, const double* x, double* y, i64 M) {
    k::matmul(x, ps.at(l.w).w.data(), y, M, l.in, l.out, false);
    k::add_bias(y, ps.at(l.b).w.data(), M, l.out);
}

void linear_bwd(ParamStore& ps, const LinearRef& l, const double* x, const double* dy, double* dx,
                i64 M) {
    k::matmul_tn(x, dy, ps.at(l.w).g.data(), M, l.in, l.out, true);
    k::bias_grad(dy, ps.at(l.b).g.data(), M, l.out, true);
    if (dx) {
        // dX = dY W^T via the contiguous kernel; transposing W first is far
        // cheaper than the strided dot-product form for M >> in.
        Tensor wt({l.out, l.in});
        k::transpose(ps.at(l.w).w.data(), wt.data(), l.in, l.out);
        k::matmul(dy, wt.data(), dx, M, l.out, l.in, false);
    }
}

LinearRef add_linear(ParamStore& ps, const std::string& prefix, i64 in, i64 out) {
    LinearRef l;
    l.in = in;
    l.out = out;
    l.w = ps.add(prefix + ".w", {in, out}, true);
    l.b = ps.add(prefix + ".b", {out}, false);
    return l;
}

LayerNormRef add_layernorm(ParamStore& ps, const std::string& prefix, i64 dim) {
    LayerNormRef l;
    l.dim = dim;
    l.g = ps.add(prefix + ".g", {dim}, false);
    l.b = ps.add(prefix + ".b", {dim}, false);
    return l;
}

}  // namespace

// ---- transformer tower ----

Tower::Tower(ParamStore& store, const std::string& prefix, i64 dim, i64 depth, i64 heads,
             i64 mlp_ratio)
    : dim_(dim), depth_(depth), heads_(heads), mlp_(dim * mlp_ratio) {
    for (i64 d = 0; d < depth; ++d) {
        const std::string bp = prefix + ".block" + std::to_string(d);
        BlockRefs b;
        b.ln1 = add_layernorm(store, bp + ".ln1", dim);
        b.qkv = add_linear(store, bp + ".qkv", dim, 3 * dim);
        b.proj = add_linear(store, bp + ".proj", dim, dim);
        b.ln2 = add_layernorm(store, bp + ".ln2", dim);
        b.fc1 = add_linear(store, bp + ".fc1", dim, mlp_);
        b.fc2 = add_linear(store, bp + ".fc2", mlp_, dim);
        blocks_.push_back(b);
    }
    final_ln_ = add_layernorm(store, prefix + ".norm", dim);
}

Tensor Tower::forward(const ParamStore& ps, const Tensor& x_in, i64 B, i64 T,
                      TowerActs* acts) const {
    const i64 M = B * T, D = dim_, H = heads_, dh = D / H, G = B * H;
    if (x_in.size() != M * D) throw DimensionError("tower input shape mismatch");
    if (acts) {
        acts->B = B;
        acts->T = T;
        acts->blocks.resize(static_cast<size_t>(depth_));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor x = x_in;
    Tensor q({G, T, dh}), kx({G, T, dh}), v({G, T, dh}), scores({G, T, T}), ctxh({G, T, dh});
    for (i64 bi = 0; bi < depth_; ++bi) {
        const BlockRefs& br = blocks_[static_cast<size_t>(bi)];
        BlockActs local;
        BlockActs& a = acts ? acts->blocks[static_cast<size_t>(bi)] : local;
        a.x_in = x;
        a.ln1_out = Tensor({M, D});
        a.ln1_mean = Tensor({M});
        a.ln1_rstd = Tensor({M});
        k::layernorm_fwd(x.data(), ps.at(br.ln1.g).w.data(), ps.at(br.ln1.b).w.data(),
                         a.ln1_out.data(), a.ln1_mean.data(), a.ln1_rstd.data(), M, D);
        a.qkv = Tensor({M, 3 * D});
        linear_fwd(ps, br.qkv, a.ln1_out.data(), a.qkv.data(), M);
        k::split_qkv_heads(a.qkv.data(), q.data(), kx.data(), v.data(), B, T, H, dh);
        k::bmatmul_nt(q.data(), kx.data(), scores.data(), G, T, dh, T);
        k::scale_inplace(scores.data(), scale, G * T * T);
        a.probs = Tensor({B, H, T, T});
        k::softmax_fwd(scores.data(), a.probs.data(), G * T, T);
        k::bmatmul(a.probs.data(), v.data(), ctxh.data(), G, T, T, dh);
        a.ctx = Tensor({M, D});
        k::merge_heads(ctxh.data(), a.ctx.data(), B, T, H, dh);
        a.res1 = x;  // copy, then add projection
        Tensor proj_out({M, D});
        linear_fwd(ps, br.proj, a.ctx.data(), proj_out.data(), M);
        k::add_inplace(a.res1.data(), proj_out.data(), M * D);
        a.ln2_out = Tensor({M, D});
        a.ln2_mean = Tensor({M});
        a.ln2_rstd = Tensor({M});
        k::layernorm_fwd(a.res1.data(), ps.at(br.ln2.g).w.data(), ps.at(br.ln2.b).w.data(),
                         a.ln2_out.data(), a.ln2_mean.data(), a.ln2_rstd.data(), M, D);
        a.fc1_out = Tensor({M, mlp_});
        linear_fwd(ps, br.fc1, a.ln2_out.data(), a.fc1_out.data(), M);
        a.gelu_out = Tensor({M, mlp_});
        k::gelu_fwd(a.fc1_out.data(), a.gelu_out.data(), M * mlp_);
        Tensor fc2_out({M, D});
        linear_fwd(ps, br.fc2, a.gelu_out.data(), fc2_out.data(), M);
        x = a.res1;
        k::add_inplace(x.data(), fc2_out.data(), M * D);
    }
    Tensor out({M, D});
    Tensor local_mean, local_rstd;
    Tensor& fm = acts ? acts->final_mean : local_mean;
    Tensor& fr = acts ? acts->final_rstd : local_rstd;
    fm = Tensor({M});
    fr = Tensor({M});
    if (acts) acts->final_in = x;
    k::layernorm_fwd(x.data(), ps.at(final_ln_.g).w.data(), ps.at(final_ln_.b).w.data(), out.data(),
                     fm.data(), fr.data(), M, D);
    return out;
}

Tensor Tower::backward(ParamStore& ps, const Tensor& d_out, const TowerActs& acts) const {
    const i64 B = acts.B, T = acts.T, M = B * T, D = dim_, H = heads_, dh = D / H, G = B * H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor d({M, D});
    k::layernorm_bwd(d_out.data(), acts.final_in.data(), ps.at(final_ln_.g).w.data(),
                     acts.final_mean.data(), acts.final_rstd.data(), d.data(),
                     ps.at(final_ln_.g).g.data(), ps.at(final_ln_.b).g.data(), M, D);
    Tensor q({G, T, dh}), kx({G, T, dh}), v({G, T, dh});
    Tensor d_ctxh({G, T, dh}), d_probs({G, T, T}), d_scores({G, T, T});
    Tensor dq({G, T, dh}), dk({G, T, dh}), dv({G, T, dh});
    for (i64 bi = depth_ - 1; bi >= 0; --bi) {
        const BlockRefs& br = blocks_[static_cast<size_t>(bi)];
        const BlockActs& a = acts.blocks[static_cast<size_t>(bi)];
        // x_out = res1 + fc2(gelu(fc1(ln2(res1)))); d carries d_x_out
        Tensor d_gelu({M, mlp_});
        linear_bwd(ps, br.fc2, a.gelu_out.data(), d.data(), d_gelu.data(), M);
        Tensor d_fc1({M, mlp_});
        k::gelu_bwd(a.fc1_out.data(), d_gelu.data(), d_fc1.data(), M * mlp_);
        Tensor d_ln2({M, D});
        linear_bwd(ps, br.fc1, a.ln2_out.data(), d_fc1.data(), d_ln2.data(), M);
        Tensor d_res1({M, D});
        k::layernorm_bwd(d_ln2.data(), a.res1.data(), ps.at(br.ln2.g).w.data(), a.ln2_mean.data(),
                         a.ln2_rstd.data(), d_res1.data(), ps.at(br.ln2.g).g.data(),
                         ps.at(br.ln2.b).g.data(), M, D);
        k::add_inplace(d_res1.data(), d.data(), M * D);  // residual skip
        // res1 = x_in + proj(ctx)
        Tensor d_ctx({M, D});
        linear_bwd(ps, br.proj, a.ctx.data(), d_res1.data(), d_ctx.data(), M);
        k::split_heads(d_ctx.data(), d_ctxh.data(), B, T, H, dh);
        k::split_qkv_heads(a.qkv.data(), q.data(), kx.data(), v.data(), B, T, H, dh);
        k::bmatmul_nt(d_ctxh.data(), v.data(), d_probs.data(), G, T, dh, T);
        k::bmatmul_tn(a.probs.data(), d_ctxh.data(), dv.data(), G, T, T, dh);
        k::softmax_bwd(d_probs.data(), a.probs.data(), d_scores.data(), G * T, T);
        k::scale_inplace(d_scores.data(), scale, G * T * T);
        k::bmatmul(d_scores.data(), kx.data(), dq.data(), G, T, T, dh);
        k::bmatmul_tn(d_scores.data(), q.data(), dk.data(), G, T, T, dh);
        Tensor d_qkv({M, 3 * D});
        k::merge_qkv_heads(dq.data(), dk.data(), dv.data(), d_qkv.data(), B, T, H, dh);
        Tensor d_ln1({M, D});
        linear_bwd(ps, br.qkv, a.ln1_out.data(), d_qkv.data(), d_ln1.data(), M);
        Tensor d_x({M, D});
        k::layernorm_bwd(d_ln1.data(), a.x_in.data(), ps.at(br.ln1.g).w.data(), a.ln1_mean.data(),
                         a.ln1_rstd.data(), d_x.data(), ps.at(br.ln1.g).g.data(),
                         ps.at(br.ln1.b).g.data(), M, D);
        k::add_inplace(d_x.data(), d_res1.data(), M * D);  // residual skip
        d = d_x;
    }
    return d;
}

// ---- sin-cos positional table ----

Tensor sincos_pos_embed(i64 dim, i64 gh, i64 gw) {
    if (dim % 4 != 0) throw ConfigError("sincos table needs dim divisible by 4");
    const i64 quarter = dim / 4, half = dim / 2;
    Tensor out({gh * gw, dim});
    for (i64 y = 0; y < gh; ++y)
        for (i64 x = 0; x < gw; ++x) {
            double* row = out.data() + (y * gw + x) * dim;
            for (i64 i = 0; i < quarter; ++i) {
                const double omega =
                    1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
                row[i] = std::sin(static_cast<double>(y) * omega);
                row[quarter + i] = std::cos(static_cast<double>(y) * omega);
                row[half + i] = std::sin(static_cast<double>(x) * omega);
                row[half + quarter + i] = std::cos(static_cast<double>(x) * omega);
            }
        }
    return out;
}

// ---- backbone ----

ViTBackbone::ViTBackbone(const BackboneConfig& cfg, Rng& init_rng) : cfg_(cfg) {
    cfg_.validate();
    patch_embed_ = add_linear(params_, "patch_embed", cfg_.patch_dim(), cfg_.embed_dim);
    cls_token_ = params_.add("cls_token", {cfg_.embed_dim}, false);
    encoder_ = Tower(params_, "encoder", cfg_.embed_dim, cfg_.depth, cfg_.heads, cfg_.mlp_ratio);
    dec_embed_ = add_linear(params_, "decoder_embed", cfg_.embed_dim, cfg_.dec_dim);
    mask_token_ = params_.add("mask_token", {cfg_.dec_dim}, false);
    decoder_ = Tower(params_, "decoder", cfg_.dec_dim, cfg_.dec_depth, cfg_.heads, cfg_.mlp_ratio);
    pred_ = add_linear(params_, "pred", cfg_.dec_dim, cfg_.patch_dim());
    init_params(params_, init_rng);

    Tensor grid = sincos_pos_embed(cfg_.embed_dim, cfg_.grid_h(), cfg_.grid_w());
    enc_pos_ = Tensor({cfg_.n_patches() + 1, cfg_.embed_dim});
    std::copy(grid.data(), grid.data() + grid.size(), enc_pos_.data() + cfg_.embed_dim);
    dec_pos_ = sincos_pos_embed(cfg_.dec_dim, cfg_.grid_h(), cfg_.grid_w());
}

Tensor ViTBackbone::encode(const data::ImageBatch& images, const MaskSpec* mask,
                           EncodeActs* acts) const {
    const i64 B = images.batch(), N = cfg_.n_patches(), D = cfg_.embed_dim;
    if (images.height() != cfg_.image_h || images.width() != cfg_.image_w ||
        images.channels() != cfg_.channels)
        throw DimensionError("image shape does not match backbone config");
    if (mask && (mask->B != B || mask->N != N)) throw DimensionError("mask spec mismatch");

    EncodeActs local;
    EncodeActs& a = acts ? *acts : local;
    a.B = B;
    a.masked = mask != nullptr;
    data::PatchTargets pt = data::patchify(images, cfg_.patch);
    a.patch_rows = std::move(pt.patches);
    a.patch_rows.reshape({B * N, cfg_.patch_dim()});

    Tensor emb({B * N, D});
    linear_fwd(params_, patch_embed_, a.patch_rows.data(), emb.data(), B * N);
    for (i64 b = 0; b < B; ++b)
        k::add_inplace(emb.data() + b * N * D, enc_pos_.data() + D, N * D);

    const i64 V = mask ? mask->V : N;
    const i64 T = 1 + V;
    a.T = T;
    Tensor tokens({B * T, D});
    const double* cls = params_.at(cls_token_).w.data();
    if (mask) {
        a.keep_rows.resize(static_cast<size_t>(B * V));
        for (i64 b = 0; b < B; ++b)
            for (i64 v = 0; v < V; ++v)
                a.keep_rows[static_cast<size_t>(b * V + v)] = b * N + mask->keep(b, v);
        Tensor vis({B * V, D});
        k::gather_rows(emb.data(), a.keep_rows.data(), vis.data(), B * V, D);
        for (i64 b = 0; b < B; ++b) {
            double* row0 = tokens.data() + b * T * D;
            for (i64 j = 0; j < D; ++j) row0[j] = cls[j] + enc_pos_[j];
            std::copy(vis.data() + b * V * D, vis.data() + (b + 1) * V * D, row0 + D);
        }
    } else {
        for (i64 b = 0; b < B; ++b) {
            double* row0 = tokens.data() + b * T * D;
            for (i64 j = 0; j < D; ++j) row0[j] = cls[j] + enc_pos_[j];
            std::copy(emb.data() + b * N * D, emb.data() + (b + 1) * N * D, row0 + D);
        }
    }
    a.tokens_in = tokens;
    Tensor out = encoder_.forward(params_, tokens, B, T, acts ? &a.tower : nullptr);
    out.reshape({B, T, D});
    return out;
}

void ViTBackbone::encode_backward(const Tensor& d_tokens, const EncodeActs& a) {
    const i64 B = a.B, T = a.T, D = cfg_.embed_dim, N = cfg_.n_patches();
    Tensor d_flat = d_tokens;
    d_flat.reshape({B * T, D});
    Tensor d_in = encoder_.backward(params_, d_flat, a.tower);

    double* cls_g = params_.at(cls_token_).g.data();
    for (i64 b = 0; b < B; ++b) {
        const double* row0 = d_in.data() + b * T * D;
        for (i64 j = 0; j < D; ++j) cls_g[j] += row0[j];
    }
    const i64 V = T - 1;
    Tensor d_emb({B * N, D});
    if (a.masked) {
        Tensor d_vis({B * V, D});
        for (i64 b = 0; b < B; ++b)
            std::copy(d_in.data() + (b * T + 1) * D, d_in.data() + (b * T + 1 + V) * D,
                      d_vis.data() + b * V * D);
        k::scatter_rows_add(d_vis.data(), a.keep_rows.data(), d_emb.data(), B * V, D);
    } else {
        for (i64 b = 0; b < B; ++b)
            std::copy(d_in.data() + (b * T + 1) * D, d_in.data() + (b * T + 1 + V) * D,
                      d_emb.data() + b * N * D);
    }
    linear_bwd(params_, patch_embed_, a.patch_rows.data(), d_emb.data(), nullptr, B * N);
}

Tensor ViTBackbone::decode(const Tensor& enc_tokens, const MaskSpec& mask, DecodeActs* acts) const {
    const i64 B = mask.B, N = mask.N, V = mask.V;
    const i64 D = cfg_.embed_dim, Dd = cfg_.dec_dim, T = 1 + V;
    if (enc_tokens.size() != B * T * D) throw DimensionError("decoder input shape mismatch");

    DecodeActs local;
    DecodeActs& a = acts ? *acts : local;
    a.B = B;
    a.mask = &mask;
    a.vis_in = Tensor({B * V, D});
    for (i64 b = 0; b < B; ++b)  // drop the class token
        std::copy(enc_tokens.data() + (b * T + 1) * D, enc_tokens.data() + (b * T + 1 + V) * D,
                  a.vis_in.data() + b * V * D);

    Tensor y({B * V, Dd});
    linear_fwd(params_, dec_embed_, a.vis_in.data(), y.data(), B * V);

    // Shuffled layout: visible embeddings first, then mask tokens; restore to
    // natural patch order via ids_restore.
    Tensor shuffled({B * N, Dd});
    const double* mtok = params_.at(mask_token_).w.data();
    for (i64 b = 0; b < B; ++b) {
        std::copy(y.data() + b * V * Dd, y.data() + (b + 1) * V * Dd,
                  shuffled.data() + b * N * Dd);
        for (i64 j = V; j < N; ++j)
            std::copy(mtok, mtok + Dd, shuffled.data() + (b * N + j) * Dd);
    }
    a.restore_rows.resize(static_cast<size_t>(B * N));
    for (i64 b = 0; b < B; ++b)
        for (i64 n = 0; n < N; ++n)
            a.restore_rows[static_cast<size_t>(b * N + n)] = b * N + mask.restore(b, n);
    Tensor x({B * N, Dd});
    k::gather_rows(shuffled.data(), a.restore_rows.data(), x.data(), B * N, Dd);
    for (i64 b = 0; b < B; ++b) k::add_inplace(x.data() + b * N * Dd, dec_pos_.data(), N * Dd);

    a.x_in = x;
    a.tower_out = decoder_.forward(params_, x, B, N, acts ? &a.tower : nullptr);
    Tensor pred({B * N, cfg_.patch_dim()});
    linear_fwd(params_, pred_, a.tower_out.data(), pred.data(), B * N);
    pred.reshape({B, N, cfg_.patch_dim()});
    return pred;
}

Tensor ViTBackbone::decode_backward(const Tensor& d_pred, const DecodeActs& a) {
    const MaskSpec& mask = *a.mask;
    const i64 B = a.B, N = mask.N, V = mask.V;
    const i64 D = cfg_.embed_dim, Dd = cfg_.dec_dim, T = 1 + V;
    Tensor d_pred_flat = d_pred;
    d_pred_flat.reshape({B * N, cfg_.patch_dim()});
    Tensor d_z({B * N, Dd});
    linear_bwd(params_, pred_, a.tower_out.data(), d_pred_flat.data(), d_z.data(), B * N);
    Tensor d_x = decoder_.backward(params_, d_z, a.tower);

    Tensor d_shuffled({B * N, Dd});
    k::scatter_rows_add(d_x.data(), a.restore_rows.data(), d_shuffled.data(), B * N, Dd);
    Tensor d_y({B * V, Dd});
    double* mtok_g = params_.at(mask_token_).g.data();
    for (i64 b = 0; b < B; ++b) {
        std::copy(d_shuffled.data() + b * N * Dd, d_shuffled.data() + (b * N + V) * Dd,
                  d_y.data() + b * V * Dd);
        for (i64 j = V; j < N; ++j) {
            const double* row = d_shuffled.data() + (b * N + j) * Dd;
            for (i64 c = 0; c < Dd; ++c) mtok_g[c] += row[c];
        }
    }
    Tensor d_vis({B * V, D});
    linear_bwd(params_, dec_embed_, a.vis_in.data(), d_y.data(), d_vis.data(), B * V);
    Tensor d_tokens({B, T, D});
    for (i64 b = 0; b < B; ++b)
        std::copy(d_vis.data() + b * V * D, d_vis.data() + (b + 1) * V * D,
                  d_tokens.data() + (b * T + 1) * D);
    return d_tokens;
}

Tensor ViTBackbone::attention_map(const data::ImageBatch& image, i64 layer, i64 head) const {
    if (layer < 0 || layer >= cfg_.depth) throw ConfigError("attention layer out of range");
    if (head < 0 || head >= cfg_.heads) throw ConfigError("attention head out of range");
    if (image.batch() != 1) throw DimensionError("attention_map expects a single image");
    EncodeActs acts;
    encode(image, nullptr, &acts);
    const i64 T = acts.T;
    const BlockActs& blk = acts.tower.blocks[static_cast<size_t>(layer)];
    Tensor out({T, T});
    const double* src = blk.probs.data() + head * T * T;  // B == 1
    std::copy(src, src + T * T, out.data());
    return out;
}

}  // namespace imae::model
