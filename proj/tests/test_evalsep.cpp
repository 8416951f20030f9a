#include <doctest.h>

#include "imae/evalsep.hpp"
#include "imae/trainer.hpp"
#include "test_util.hpp"

using namespace imae;
using namespace imae::eval;

TEST_CASE("lasso: Y == X at lambda 0 recovers the identity") {
    Rng rng(91);
    Tensor X = testutil::random_tensor({40, 6}, rng);
    LinearMap m = fit_lasso(X, X, 0.0);
    CHECK(m.converged);
    for (i64 i = 0; i < 6; ++i)
        for (i64 j = 0; j < 6; ++j)
            CHECK(m.W[i * 6 + j] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-6));
    for (i64 j = 0; j < 6; ++j) CHECK(m.bias[j] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("lasso at lambda 0 matches closed-form least squares on random systems") {
    Rng rng(92);
    for (int it = 0; it < 10; ++it) {
        Tensor X = testutil::random_tensor({32, 8}, rng);
        Tensor Wtrue = testutil::random_tensor({8, 5}, rng);
        Tensor Y({32, 5});
        testutil::naive_matmul(X.data(), Wtrue.data(), Y.data(), 32, 8, 5);
        for (i64 i = 0; i < Y.size(); ++i) Y[i] += 0.1 * rng.normal();

        LinearMap m = fit_lasso(X, Y, 0.0);
        Tensor Wref, bref;
        testutil::least_squares(X, Y, Wref, bref);
        for (i64 i = 0; i < m.W.size(); ++i)
            CHECK(m.W[i] == doctest::Approx(Wref[i]).epsilon(1e-6));
        for (i64 i = 0; i < m.bias.size(); ++i)
            CHECK(m.bias[i] == doctest::Approx(bref[i]).epsilon(1e-6));
    }
}

TEST_CASE("lasso objective is non-increasing across sweeps") {
    Rng rng(93);
    Tensor X = testutil::random_tensor({64, 10}, rng);
    Tensor Y = testutil::random_tensor({64, 4}, rng);
    for (double lam : {0.0, 1e-3, 1e-2, 0.5}) {
        LinearMap m = fit_lasso(X, Y, lam);
        for (size_t s = 1; s < m.objective.size(); ++s)
            CHECK(m.objective[s] <= m.objective[s - 1] + 1e-12);
    }
}

TEST_CASE("very large lambda shrinks W to zero with column-mean bias") {
    Rng rng(94);
    Tensor X = testutil::random_tensor({30, 5}, rng);
    Tensor Y = testutil::random_tensor({30, 3}, rng);
    for (i64 i = 0; i < Y.size(); ++i) Y[i] += 2.0;
    LinearMap m = fit_lasso(X, Y, 1e6);
    for (i64 i = 0; i < m.W.size(); ++i) CHECK(m.W[i] == 0.0);
    for (i64 c = 0; c < 3; ++c) {
        double mean = 0;
        for (i64 r = 0; r < 30; ++r) mean += Y[r * 3 + c];
        mean /= 30;
        CHECK(m.bias[c] == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("nrmse examples") {
    Rng rng(95);
    Tensor t = testutil::random_tensor({20, 4}, rng);
    CHECK(nrmse(t, t) == 0.0);

    // constant mean prediction scores exactly 1
    double mean = 0;
    for (i64 i = 0; i < t.size(); ++i) mean += t[i];
    mean /= static_cast<double>(t.size());
    Tensor m = Tensor::full({20, 4}, mean);
    CHECK(nrmse(m, t) == doctest::Approx(1.0).epsilon(1e-12));

    // adding one std everywhere also scores exactly 1
    double var = 0;
    for (i64 i = 0; i < t.size(); ++i) var += (t[i] - mean) * (t[i] - mean);
    var /= static_cast<double>(t.size());
    Tensor shifted = t;
    for (i64 i = 0; i < t.size(); ++i) shifted[i] += std::sqrt(var);
    CHECK(nrmse(shifted, t) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor flat = Tensor::full({4, 4}, 3.0);
    CHECK_THROWS_AS(nrmse(flat, flat), NumericError);
}

TEST_CASE("r_squared examples and the 1 - nrmse^2 identity") {
    Rng rng(96);
    Tensor t = testutil::random_tensor({25, 3}, rng);
    CHECK(r_squared(t, t) == doctest::Approx(1.0));
    double mean = 0;
    for (i64 i = 0; i < t.size(); ++i) mean += t[i];
    mean /= static_cast<double>(t.size());
    CHECK(r_squared(Tensor::full({25, 3}, mean), t) == doctest::Approx(0.0).epsilon(1e-12));

    for (int it = 0; it < 10; ++it) {
        Tensor p = testutil::random_tensor({25, 3}, rng);
        const double n = nrmse(p, t);
        CHECK(r_squared(p, t) == doctest::Approx(1.0 - n * n).epsilon(1e-10));
        CHECK(r_squared(p, t) <= 1.0);
    }
}

TEST_CASE("cosine similarity examples") {
    Rng rng(97);
    Tensor t = testutil::random_tensor({15, 6}, rng);
    CHECK(cosine_sim(t, t) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor neg = t;
    for (i64 i = 0; i < t.size(); ++i) neg[i] = -t[i];
    CHECK(cosine_sim(neg, t) == doctest::Approx(-1.0).epsilon(1e-12));

    // orthogonal random pairs in high dimension concentrate near zero
    Tensor a = testutil::random_tensor({1000, 512}, rng);
    Tensor b = testutil::random_tensor({1000, 512}, rng);
    CHECK(std::fabs(cosine_sim(a, b)) < 0.05);

    // zero rows are skipped and counted
    Tensor z = t;
    for (i64 j = 0; j < 6; ++j) z[j] = 0.0;
    i64 skipped = 0;
    const double c = cosine_sim(z, t, &skipped);
    CHECK(skipped == 1);
    CHECK(c == doctest::Approx(1.0).epsilon(1e-6));  // remaining rows still match
}

TEST_CASE("metrics are invariant under identical row permutations") {
    Rng rng(98);
    Tensor p = testutil::random_tensor({12, 5}, rng);
    Tensor t = testutil::random_tensor({12, 5}, rng);
    std::vector<i64> perm = rng.permutation(12);
    Tensor pp({12, 5}), tp({12, 5});
    for (i64 r = 0; r < 12; ++r)
        for (i64 j = 0; j < 5; ++j) {
            pp[r * 5 + j] = p[perm[static_cast<size_t>(r)] * 5 + j];
            tp[r * 5 + j] = t[perm[static_cast<size_t>(r)] * 5 + j];
        }
    CHECK(nrmse(pp, tp) == doctest::Approx(nrmse(p, t)).epsilon(1e-12));
    CHECK(r_squared(pp, tp) == doctest::Approx(r_squared(p, t)).epsilon(1e-12));
    CHECK(cosine_sim(pp, tp) == doctest::Approx(cosine_sim(p, t)).epsilon(1e-12));
}

TEST_CASE("refitting on the same set with lambda 0 cannot reduce r-squared") {
    Rng rng(99);
    Tensor X = testutil::random_tensor({50, 6}, rng);
    Tensor Y({50, 6});
    // targets correlated with X plus noise
    for (i64 i = 0; i < Y.size(); ++i) Y[i] = 0.5 * X[i] + 0.8 * rng.normal();
    LinearMap m = fit_lasso(X, Y, 0.0);
    Tensor pred = m.predict(X);
    CHECK(r_squared(pred, Y) >= r_squared(X, Y) - 1e-12);
}

TEST_CASE("separability report: exact self-comparison in the degenerate path") {
    Rng init(100);
    model::BackboneConfig cfg;
    cfg.image_h = cfg.image_w = 16;
    cfg.channels = 3;
    cfg.patch = 4;
    cfg.embed_dim = 8;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.dec_dim = 8;
    cfg.dec_depth = 1;
    cfg.mask_ratio = 0.75;
    model::ImaeModel student(cfg, init);
    // F1 := identity so the subordinate branch output equals h_m
    model::Param* w = student.params().find("f1.w");
    model::Param* b = student.params().find("f1.b");
    w->w.zero();
    for (i64 i = 0; i < 8; ++i) w->w[i * 8 + i] = 1.0;
    b->w.zero();
    // teacher := the student's own backbone
    Rng init2(101);
    model::ViTBackbone teacher(cfg, init2);
    for (auto& p : teacher.params().all()) {
        const model::Param* sp = student.params().find(p.name);
        REQUIRE(sp);
        std::copy(sp->w.data(), sp->w.data() + sp->w.size(), p.w.data());
    }

    data::DatasetConfig dc;
    dc.size = 64;
    dc.num_classes = 4;
    dc.image_h = dc.image_w = 16;
    dc.split = "val";
    data::Dataset ds = data::Dataset::load(dc);

    SeparabilityOptions opt;
    opt.batch = 16;
    opt.max_batches = 4;
    opt.pairing = PairingMode::identity;  // mix(alpha, x, x) == x
    opt.mix.fixed_alpha = 0.5;
    opt.lambda = 0.0;
    SeparabilityReport rep = separability_report(student, teacher, ds, opt);
    CHECK(rep.cos_fore == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.nrmse_fore == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(rep.r2_fore == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.train_rows + rep.val_rows == 64 * 4);  // V = 4 visible tokens per image
}

TEST_CASE("separability report runs end to end on trained-shape models") {
    Rng init(102);
    model::BackboneConfig cfg;
    cfg.image_h = cfg.image_w = 16;
    cfg.channels = 3;
    cfg.patch = 4;
    cfg.embed_dim = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.dec_dim = 8;
    cfg.dec_depth = 1;
    cfg.mask_ratio = 0.5;
    model::ImaeModel student(cfg, init);
    Rng init2(103);
    model::ViTBackbone teacher(cfg, init2);

    data::DatasetConfig dc;
    dc.size = 48;
    dc.num_classes = 3;
    dc.image_h = dc.image_w = 16;
    dc.split = "val";
    data::Dataset ds = data::Dataset::load(dc);

    SeparabilityOptions opt;
    opt.batch = 16;
    opt.max_batches = 3;
    opt.lambda = 1e-3;
    SeparabilityReport rep = separability_report(student, teacher, ds, opt);
    CHECK(rep.cos_aft >= -1.0);
    CHECK(rep.cos_aft <= 1.0);
    CHECK(rep.nrmse_aft >= 0.0);
    CHECK(rep.r2_aft <= 1.0);
    CHECK(rep.val_rows > 0);
    // the fitted regressor should beat the raw features on held-out data here
    CHECK(rep.nrmse_aft <= rep.nrmse_fore + 1e-9);
    const std::string csv = rep.csv_row("test");
    CHECK(csv.find("test,") == 0);
}
