#include "imae/imae_model.hpp"

#include <cmath>

#include "imae/kernels.hpp"

namespace imae::model {

namespace k = imae::kernels;

double recon_loss(const Tensor& pred, const Tensor& target, const MaskSpec& mask, Tensor* d_pred) {
    if (!pred.same_shape(target)) throw DimensionError("recon_loss shape mismatch");
    const i64 B = pred.dim(0), N = pred.dim(1), D = pred.dim(2);
    if (mask.B != B || mask.N != N) throw DimensionError("recon_loss mask mismatch");
    i64 n_masked = 0;
    for (i64 i = 0; i < B * N; ++i) n_masked += mask.mask[static_cast<size_t>(i)];
    if (n_masked == 0) throw ConfigError("recon_loss: no masked patches");

    if (d_pred) {
        *d_pred = Tensor({B, N, D});
    }
    const double inv = 1.0 / (static_cast<double>(n_masked) * static_cast<double>(D));
    double loss = 0.0;
    for (i64 r = 0; r < B * N; ++r) {
        if (!mask.mask[static_cast<size_t>(r)]) continue;
        const double* p = pred.data() + r * D;
        const double* t = target.data() + r * D;
        double acc = 0.0;
        for (i64 j = 0; j < D; ++j) {
            const double d = p[j] - t[j];
            acc += d * d;
            if (d_pred) (*d_pred)[r * D + j] = 2.0 * d * inv;
        }
        loss += acc;
    }
    return loss * inv;
}

double distill_loss(const Tensor& h_student, const Tensor& h_teacher, bool skip_cls,
                    Tensor* d_student) {
    if (!h_student.same_shape(h_teacher)) throw DimensionError("distill_loss shape mismatch");
    const i64 B = h_student.dim(0), T = h_student.dim(1), D = h_student.dim(2);
    const i64 t0 = skip_cls ? 1 : 0;
    const i64 count = B * (T - t0) * D;
    if (count <= 0) throw DimensionError("distill_loss: empty token set");
    if (d_student) *d_student = Tensor({B, T, D});
    const double inv = 1.0 / static_cast<double>(count);
    double loss = 0.0;
    for (i64 b = 0; b < B; ++b)
        for (i64 t = t0; t < T; ++t) {
            const i64 r = (b * T + t) * D;
            for (i64 j = 0; j < D; ++j) {
                const double d = h_student[r + j] - h_teacher[r + j];
                loss += d * d;
                if (d_student) (*d_student)[r + j] = 2.0 * d * inv;
            }
        }
    return loss * inv;
}

ImaeModel::ImaeModel(const BackboneConfig& cfg, Rng& init_rng) : vit_(cfg, init_rng) {
    const i64 D = cfg.embed_dim;
    ParamStore& ps = vit_.params();
    f1_.in = f1_.out = D;
    f1_.w = ps.add("f1.w", {D, D}, true);
    f1_.b = ps.add("f1.b", {D}, false);
    f2_.in = f2_.out = D;
    f2_.w = ps.add("f2.w", {D, D}, true);
    f2_.b = ps.add("f2.b", {D}, false);
    for (const char* n : {"f1.w", "f2.w"})
        for (i64 i = 0; i < ps.find(n)->w.size(); ++i) ps.find(n)->w[i] = init_rng.trunc_normal(0.02);
}

Tensor ImaeModel::disentangle(const Tensor& h_m, int head) const {
    const LinearRef& f = head == 1 ? f1_ : f2_;
    const i64 B = h_m.dim(0), T = h_m.dim(1), D = h_m.dim(2);
    if (D != f.in) throw DimensionError("disentangle head dimension mismatch");
    Tensor out({B, T, D});
    const ParamStore& ps = params();
    k::matmul(h_m.data(), ps.at(f.w).w.data(), out.data(), B * T, D, D, false);
    k::add_bias(out.data(), ps.at(f.b).w.data(), B * T, D);
    return out;
}

void ImaeModel::disentangle_backward(const Tensor& h_m, const Tensor& d_h, int head,
                                     Tensor& d_h_m) {
    const LinearRef& f = head == 1 ? f1_ : f2_;
    const i64 B = h_m.dim(0), T = h_m.dim(1), D = h_m.dim(2);
    ParamStore& ps = params();
    k::matmul_tn(h_m.data(), d_h.data(), ps.at(f.w).g.data(), B * T, D, D, true);
    k::bias_grad(d_h.data(), ps.at(f.b).g.data(), B * T, D, true);
    Tensor wt({D, D});
    k::transpose(ps.at(f.w).w.data(), wt.data(), D, D);
    k::matmul(d_h.data(), wt.data(), d_h_m.data(), B * T, D, D, true);
}

LossReport imae_step(ImaeModel& student, const ViTBackbone* teacher,
                     const data::ImageBatch& batch, const mix::MixSpec& mix_spec,
                     const MaskSpec& mask, const LossConfig& cfg, bool backward) {
    cfg.validate();
    if (cfg.use_distill) {
        if (!teacher) throw ConfigError("distillation requires a teacher checkpoint");
        if (teacher->config().embed_dim != student.vit().config().embed_dim ||
            teacher->config().patch != student.vit().config().patch ||
            teacher->config().image_h != student.vit().config().image_h ||
            teacher->config().image_w != student.vit().config().image_w)
            throw ConfigError("teacher encoder incompatible with student");
    }

    data::ImageBatch mixed, sub, dom;
    mix::mix_batch(batch, mix_spec, mixed, sub, dom);

    auto make_targets = [&](const data::ImageBatch& imgs) {
        data::PatchTargets t = data::patchify(imgs, student.vit().config().patch);
        return cfg.norm_pix_targets ? data::normalize_pix(t) : std::move(t);
    };
    data::PatchTargets t_sub = make_targets(sub);

    EncodeActs enc_acts;
    Tensor h_m = student.vit().encode(mixed, &mask, backward ? &enc_acts : nullptr);
    Tensor h1 = student.disentangle(h_m, 1);

    DecodeActs dec1;
    Tensor d_pred1, d_pred2;
    LossReport rep;
    {
        Tensor pred1 = student.vit().decode(h1, mask, backward ? &dec1 : nullptr);
        rep.recon_sub = recon_loss(pred1, t_sub.patches, mask, backward ? &d_pred1 : nullptr);
    }

    Tensor h2;
    DecodeActs dec2;
    if (cfg.dual_branch) {
        data::PatchTargets t_dom = make_targets(dom);
        h2 = student.disentangle(h_m, 2);
        Tensor pred2 = student.vit().decode(h2, mask, backward ? &dec2 : nullptr);
        rep.recon_dom = recon_loss(pred2, t_dom.patches, mask, backward ? &d_pred2 : nullptr);
    }

    Tensor d_h1_dist, d_h2_dist;
    if (cfg.use_distill) {
        Tensor w1 = teacher->encode(sub, &mask, nullptr);
        rep.distill_sub = distill_loss(h1, w1, true, backward ? &d_h1_dist : nullptr);
        if (cfg.dual_branch) {
            Tensor w2 = teacher->encode(dom, &mask, nullptr);
            rep.distill_dom = distill_loss(h2, w2, true, backward ? &d_h2_dist : nullptr);
        }
    }

    rep.total = rep.recon_sub + rep.recon_dom +
                cfg.distill_coeff * (rep.distill_sub + rep.distill_dom);
    for (i64 i = 0; i < mix_spec.batch(); ++i) {
        rep.alpha_mean += mix_spec.alpha[static_cast<size_t>(i)];
        rep.sub_coeff_mean += mix_spec.sub_coeff(i);
    }
    rep.alpha_mean /= static_cast<double>(mix_spec.batch());
    rep.sub_coeff_mean /= static_cast<double>(mix_spec.batch());

    if (backward) {
        Tensor d_h_m({h_m.dim(0), h_m.dim(1), h_m.dim(2)});
        Tensor d_h1 = student.vit().decode_backward(d_pred1, dec1);
        if (cfg.use_distill)
            k::axpy(cfg.distill_coeff, d_h1_dist.data(), d_h1.data(), d_h1.size());
        student.disentangle_backward(h_m, d_h1, 1, d_h_m);
        if (cfg.dual_branch) {
            Tensor d_h2 = student.vit().decode_backward(d_pred2, dec2);
            if (cfg.use_distill)
                k::axpy(cfg.distill_coeff, d_h2_dist.data(), d_h2.data(), d_h2.size());
            student.disentangle_backward(h_m, d_h2, 2, d_h_m);
        }
        student.vit().encode_backward(d_h_m, enc_acts);
    }
    return rep;
}

LossReport imae_forward(ImaeModel& student, const ViTBackbone* teacher,
                        const data::ImageBatch& batch, const mix::MixSpec& mix_spec,
                        const LossConfig& cfg, Rng& rng, bool backward) {
    MaskSpec mask = student.vit().draw_mask(batch.batch(), rng);
    return imae_step(student, teacher, batch, mix_spec, mask, cfg, backward);
}

}  // namespace imae::model
