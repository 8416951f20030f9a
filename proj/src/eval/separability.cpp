#include "imae/evalsep.hpp"

namespace imae::eval {

namespace {

/// Deterministic 80/20 split by the subordinate image id: all tokens of one
/// image land on the same side.
bool is_validation_id(i64 id, double train_frac) {
    const u64 h = hash_mix(0x5911, static_cast<u64>(id));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u >= train_frac;
}

}  // namespace

SeparabilityReport separability_report(const model::ImaeModel& student,
                                       const model::ViTBackbone& teacher,
                                       const data::Dataset& ds, const SeparabilityOptions& opt) {
    const model::BackboneConfig& cfg = student.vit().config();
    if (teacher.config().embed_dim != cfg.embed_dim)
        throw ConfigError("separability: teacher/student feature dims differ");
    const i64 D = cfg.embed_dim;

    Rng rng(hash_mix(opt.seed, 0x5EBA));
    data::IteratorOptions it_opt;
    it_opt.batch_size = opt.batch;
    it_opt.drop_last = true;
    it_opt.shuffle = true;
    it_opt.seed = opt.seed;
    it_opt.epoch = 0;
    data::BatchIterator it(ds, it_opt);
    if (it.num_batches() < 1) throw DataError("separability: dataset smaller than one batch");

    std::vector<double> train_x, train_y, val_x, val_y;
    i64 batches = 0;
    data::ImageBatch batch;
    while (batches < opt.max_batches && it.next(batch)) {
        const i64 B = batch.batch();
        mix::MixSpec spec;
        if (opt.pairing == PairingMode::identity) {
            spec.alpha = mix::sample_alpha(opt.mix, B, rng);
            spec.perm.resize(static_cast<size_t>(B));
            for (i64 i = 0; i < B; ++i) spec.perm[static_cast<size_t>(i)] = i;
            spec.sub_is_first.assign(static_cast<size_t>(B), 1);
            spec.same_class.assign(static_cast<size_t>(B), 1);
        } else {
            spec = mix::make_mix_spec(batch.labels, B, opt.mix, rng, true);
        }
        data::ImageBatch mixed, sub, dom;
        mix::mix_batch(batch, spec, mixed, sub, dom);
        model::MaskSpec mask = student.vit().draw_mask(B, rng);

        Tensor h_m = student.vit().encode(mixed, &mask, nullptr);
        Tensor h1 = student.disentangle(h_m, 1);
        Tensor w1 = teacher.encode(sub, &mask, nullptr);

        // visible patch tokens only (class token dropped), flattened per token
        const i64 T = h1.dim(1);
        for (i64 b = 0; b < B; ++b) {
            const bool val = is_validation_id(sub.ids[static_cast<size_t>(b)], opt.train_frac);
            auto& xs = val ? val_x : train_x;
            auto& ys = val ? val_y : train_y;
            for (i64 t = 1; t < T; ++t) {
                const double* hx = h1.data() + (b * T + t) * D;
                const double* hy = w1.data() + (b * T + t) * D;
                xs.insert(xs.end(), hx, hx + D);
                ys.insert(ys.end(), hy, hy + D);
            }
        }
        ++batches;
    }

    const i64 m_train = static_cast<i64>(train_x.size()) / D;
    const i64 m_val = static_cast<i64>(val_x.size()) / D;
    if (m_train < 2 || m_val < 2)
        throw DataError("separability: insufficient samples for the train/val split");

    auto to_tensor = [&](std::vector<double>& v, i64 rows) {
        Tensor t({rows, D});
        std::copy(v.begin(), v.end(), t.data());
        return t;
    };
    Tensor Xtr = to_tensor(train_x, m_train), Ytr = to_tensor(train_y, m_train);
    Tensor Xva = to_tensor(val_x, m_val), Yva = to_tensor(val_y, m_val);

    SeparabilityReport rep;
    rep.lambda = opt.lambda;
    rep.train_rows = m_train;
    rep.val_rows = m_val;

    rep.nrmse_fore = nrmse(Xva, Yva);
    rep.r2_fore = r_squared(Xva, Yva);
    i64 skipped = 0;
    rep.cos_fore = cosine_sim(Xva, Yva, &skipped);
    rep.skipped_rows = skipped;

    LinearMap map = fit_lasso(Xtr, Ytr, opt.lambda);
    Tensor pred = map.predict(Xva);
    rep.nrmse_aft = nrmse(pred, Yva);
    rep.r2_aft = r_squared(pred, Yva);
    rep.cos_aft = cosine_sim(pred, Yva, &skipped);
    rep.skipped_rows += skipped;
    return rep;
}

}  // namespace imae::eval
