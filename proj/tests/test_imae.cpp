#include <doctest.h>

#include <cstring>

#include "imae/imae_model.hpp"
#include "test_util.hpp"

using namespace imae;
using namespace imae::model;

namespace {

BackboneConfig gradcheck_cfg() {
    BackboneConfig c;
    c.image_h = c.image_w = 16;
    c.channels = 3;
    c.patch = 4;
    c.embed_dim = 8;
    c.depth = 2;
    c.heads = 2;
    c.dec_dim = 8;
    c.dec_depth = 1;
    c.mlp_ratio = 4;
    c.mask_ratio = 0.75;
    return c;
}

void copy_param(ParamStore& dst, const ParamStore& src, const std::string& to,
                const std::string& from) {
    Param* d = dst.find(to);
    const Param* s = src.find(from);
    REQUIRE(d);
    REQUIRE(s);
    REQUIRE(d->w.size() == s->w.size());
    std::copy(s->w.data(), s->w.data() + s->w.size(), d->w.data());
}

}  // namespace

TEST_CASE("disentangle: identity head, linearity, explicit matrix oracle") {
    Rng init(61);
    BackboneConfig cfg = gradcheck_cfg();
    ImaeModel m(cfg, init);
    Rng rng(62);
    Tensor h_m = testutil::random_tensor({2, 3, 8}, rng);

    SUBCASE("identity F1 reproduces the input") {
        Param* w = m.params().find("f1.w");
        Param* b = m.params().find("f1.b");
        w->w.zero();
        for (i64 i = 0; i < 8; ++i) w->w[i * 8 + i] = 1.0;
        b->w.zero();
        Tensor h1 = m.disentangle(h_m, 1);
        for (i64 i = 0; i < h_m.size(); ++i)
            CHECK(h1[i] == doctest::Approx(h_m[i]).epsilon(1e-12));
    }
    SUBCASE("linearity with zero bias") {
        m.params().find("f2.b")->w.zero();
        Tensor x = testutil::random_tensor({1, 2, 8}, rng);
        Tensor y = testutil::random_tensor({1, 2, 8}, rng);
        Tensor combo({1, 2, 8});
        for (i64 i = 0; i < combo.size(); ++i) combo[i] = 2.0 * x[i] - 3.0 * y[i];
        Tensor hx = m.disentangle(x, 2), hy = m.disentangle(y, 2), hc = m.disentangle(combo, 2);
        for (i64 i = 0; i < hc.size(); ++i)
            CHECK(hc[i] == doctest::Approx(2.0 * hx[i] - 3.0 * hy[i]).epsilon(1e-10));
    }
    SUBCASE("random head equals naive matrix multiply plus bias") {
        const Param* w = m.params().find("f1.w");
        const Param* b = m.params().find("f1.b");
        Tensor h1 = m.disentangle(h_m, 1);
        for (i64 r = 0; r < 6; ++r)
            for (i64 o = 0; o < 8; ++o) {
                double v = b->w[o];
                for (i64 i = 0; i < 8; ++i) v += h_m[r * 8 + i] * w->w[i * 8 + o];
                CHECK(h1[r * 8 + o] == doctest::Approx(v).epsilon(1e-12));
            }
    }
}

TEST_CASE("recon_loss examples and gradient") {
    Rng rng(63);
    MaskSpec mask;
    mask.B = 1;
    mask.N = 2;
    mask.V = 1;
    mask.ids_keep = {0};
    mask.ids_restore = {0, 1};
    mask.mask = {0, 1};

    SUBCASE("pred == target gives zero") {
        Tensor t = testutil::random_tensor({1, 2, 4}, rng);
        CHECK(recon_loss(t, t, mask) == 0.0);
    }
    SUBCASE("constant offset of 1 gives loss 1") {
        Tensor t = testutil::random_tensor({1, 2, 4}, rng);
        Tensor p = t;
        for (i64 i = 0; i < p.size(); ++i) p[i] += 1.0;
        CHECK(recon_loss(p, t, mask) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("hand-summed masked MSE: diff [1,-1,0,0] on one masked patch") {
        Tensor t({1, 2, 4}), p({1, 2, 4});
        p[4] = 1.0;   // masked patch row = index 1
        p[5] = -1.0;
        // visible patch row differs wildly but must not contribute
        p[0] = 100.0;
        CHECK(recon_loss(p, t, mask) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("gradient matches finite differences") {
        Tensor t = testutil::random_tensor({1, 2, 4}, rng);
        Tensor p = testutil::random_tensor({1, 2, 4}, rng);
        Tensor d;
        recon_loss(p, t, mask, &d);
        const double h = 1e-6;
        for (i64 i = 0; i < p.size(); ++i) {
            Tensor pp = p, pm = p;
            pp[i] += h;
            pm[i] -= h;
            const double fd = (recon_loss(pp, t, mask) - recon_loss(pm, t, mask)) / (2 * h);
            CHECK(d[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
    SUBCASE("no masked patches is an error") {
        MaskSpec none = mask;
        none.mask = {0, 0};
        Tensor t({1, 2, 4});
        CHECK_THROWS_AS(recon_loss(t, t, none), ConfigError);
    }
}

TEST_CASE("distill_loss examples and gradient") {
    Rng rng(64);
    SUBCASE("student == teacher gives zero") {
        Tensor t = testutil::random_tensor({2, 3, 4}, rng);
        CHECK(distill_loss(t, t, true) == 0.0);
    }
    SUBCASE("doubling a unit-norm-token student: loss equals mean token norm over dim") {
        const i64 B = 1, T = 3, D = 4;
        Tensor t({B, T, D});
        Rng r2(65);
        for (i64 tok = 0; tok < T; ++tok) {
            double norm2 = 0;
            for (i64 j = 0; j < D; ++j) {
                t[tok * D + j] = r2.normal();
                norm2 += t[tok * D + j] * t[tok * D + j];
            }
            for (i64 j = 0; j < D; ++j) t[tok * D + j] /= std::sqrt(norm2);
        }
        Tensor s = t;
        for (i64 i = 0; i < s.size(); ++i) s[i] *= 2.0;
        // oracle: diff = t, elementwise MSE over (T-1) visible tokens x D dims
        double expect = 0.0;
        for (i64 tok = 1; tok < T; ++tok)
            for (i64 j = 0; j < D; ++j) expect += t[tok * D + j] * t[tok * D + j];
        expect /= static_cast<double>((T - 1) * D);
        CHECK(distill_loss(s, t, true) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(expect == doctest::Approx(1.0 / D).epsilon(1e-12));  // unit-norm tokens
    }
    SUBCASE("gradient equals 2(h_s - h_t)/count and matches finite differences") {
        Tensor t = testutil::random_tensor({2, 3, 4}, rng);
        Tensor s = testutil::random_tensor({2, 3, 4}, rng);
        Tensor d;
        distill_loss(s, t, true, &d);
        const i64 count = 2 * 2 * 4;  // B * (T-1) * D
        const double h = 1e-6;
        for (i64 i = 0; i < s.size(); ++i) {
            Tensor sp = s, sm = s;
            sp[i] += h;
            sm[i] -= h;
            const double fd = (distill_loss(sp, t, true) - distill_loss(sm, t, true)) / (2 * h);
            CHECK(d[i] == doctest::Approx(fd).epsilon(1e-5));
            const bool cls_row = (i % (3 * 4)) < 4;
            const double expect = cls_row ? 0.0 : 2.0 * (s[i] - t[i]) / count;
            CHECK(d[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("imae_step configuration algebra") {
    Rng init(66);
    BackboneConfig cfg = gradcheck_cfg();
    ImaeModel student(cfg, init);
    Rng init2(67);
    ViTBackbone teacher(cfg, init2);
    Rng rng(68);
    data::ImageBatch batch = testutil::random_images(4, 16, 16, 3, rng);
    batch.labels = {0, 1, 0, 1};

    mix::MixConfig mc;
    mix::MixSpec spec = mix::make_mix_spec(batch.labels, 4, mc, rng);
    MaskSpec mask = student.vit().draw_mask(4, rng);

    SUBCASE("no distill, single branch: total == recon_sub exactly") {
        LossConfig lc;
        lc.use_distill = false;
        lc.dual_branch = false;
        LossReport rep = imae_step(student, nullptr, batch, spec, mask, lc, false);
        CHECK(rep.total == rep.recon_sub);
        CHECK(rep.recon_dom == 0.0);
        CHECK(rep.distill_sub == 0.0);
    }
    SUBCASE("report total identity holds at 1e-10") {
        LossConfig lc;
        lc.distill_coeff = 0.7;
        LossReport rep = imae_step(student, &teacher, batch, spec, mask, lc, false);
        CHECK(rep.total == doctest::Approx(rep.recon_sub + rep.recon_dom +
                                           0.7 * (rep.distill_sub + rep.distill_dom))
                               .epsilon(1e-10));
        CHECK(rep.distill_sub > 0.0);
    }
    SUBCASE("c = 0 makes the total independent of teacher parameters") {
        LossConfig lc;
        lc.distill_coeff = 0.0;
        LossReport r1 = imae_step(student, &teacher, batch, spec, mask, lc, false);
        for (auto& p : teacher.params().all())
            for (i64 i = 0; i < p.w.size(); ++i) p.w[i] += 0.1;
        LossReport r2 = imae_step(student, &teacher, batch, spec, mask, lc, false);
        CHECK(r1.total == r2.total);
    }
    SUBCASE("distillation without a teacher is a config error") {
        LossConfig lc;
        CHECK_THROWS_AS(imae_step(student, nullptr, batch, spec, mask, lc, false), ConfigError);
    }
    SUBCASE("teacher gradients never accumulate") {
        LossConfig lc;
        teacher.params().zero_grad();
        imae_step(student, &teacher, batch, spec, mask, lc, true);
        for (const auto& p : teacher.params().all())
            for (i64 i = 0; i < p.g.size(); ++i) CHECK(p.g[i] == 0.0);
    }
    SUBCASE("total stays finite on constant images") {
        data::ImageBatch flat;
        flat.pixels = Tensor::full({4, 16, 16, 3}, 0.5);
        flat.ids = {0, 1, 2, 3};
        flat.labels = {0, 0, 1, 1};
        LossConfig lc;
        LossReport rep = imae_step(student, &teacher, flat, spec, mask, lc, false);
        CHECK(std::isfinite(rep.total));
    }
}

TEST_CASE("branch symmetry: swapping sub/dom targets and F1/F2 leaves the loss invariant") {
    Rng init(69);
    BackboneConfig cfg = gradcheck_cfg();
    ImaeModel a(cfg, init);
    Rng initb(70);
    ImaeModel b(cfg, initb);
    // copy all params from a to b, with heads crossed
    for (const auto& p : a.params().all()) {
        std::string target = p.name;
        if (target.rfind("f1.", 0) == 0) target = "f2." + target.substr(3);
        else if (target.rfind("f2.", 0) == 0) target = "f1." + target.substr(3);
        copy_param(b.params(), a.params(), target, p.name);
    }
    Rng init3(71);
    ViTBackbone teacher(cfg, init3);

    Rng rng(72);
    data::ImageBatch batch = testutil::random_images(4, 16, 16, 3, rng);
    batch.labels = {0, 1, 2, 3};
    mix::MixConfig mc;
    mix::MixSpec spec = mix::make_mix_spec(batch.labels, 4, mc, rng);
    MaskSpec mask = a.vit().draw_mask(4, rng);

    mix::MixSpec flipped = spec;
    for (auto& f : flipped.sub_is_first) f = !f;

    LossConfig lc;
    LossReport ra = imae_step(a, &teacher, batch, spec, mask, lc, false);
    LossReport rb = imae_step(b, &teacher, batch, flipped, mask, lc, false);
    CHECK(rb.total == doctest::Approx(ra.total).epsilon(1e-12));
    CHECK(rb.recon_sub == doctest::Approx(ra.recon_dom).epsilon(1e-12));
    CHECK(rb.distill_sub == doctest::Approx(ra.distill_dom).epsilon(1e-12));
}

TEST_CASE("full i-MAE loss gradients match finite differences on a few tensors") {
    // spot check; the acceptance suite sweeps every parameter tensor
    Rng init(73);
    BackboneConfig cfg = gradcheck_cfg();
    ImaeModel student(cfg, init);
    Rng init2(74);
    ViTBackbone teacher(cfg, init2);
    Rng rng(75);
    data::ImageBatch batch = testutil::random_images(2, 16, 16, 3, rng);
    batch.labels = {0, 1};
    mix::MixConfig mc;
    mix::MixSpec spec = mix::make_mix_spec(batch.labels, 2, mc, rng);
    MaskSpec mask = student.vit().draw_mask(2, rng);
    LossConfig lc;  // dual + distill, c = 1

    auto eval_loss = [&]() {
        return imae_step(student, &teacher, batch, spec, mask, lc, false).total;
    };
    student.params().zero_grad();
    imae_step(student, &teacher, batch, spec, mask, lc, true);
    for (const char* name : {"f1.w", "encoder.block0.qkv.w", "patch_embed.b", "mask_token",
                             "cls_token", "decoder.block0.fc2.w", "pred.b"}) {
        Param* p = student.params().find(name);
        REQUIRE(p);
        const double err = testutil::grad_check_tensor(*p, eval_loss);
        INFO(name);
        CHECK(err < 1e-4);
    }
}
