#include "imae/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "imae/kernels.hpp"

namespace imae::train {

namespace k = imae::kernels;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory: " + dir);
}

u64 epoch_stream(u64 seed, i64 epoch, u64 tag) {
    return hash_mix(hash_mix(seed, tag), static_cast<u64>(epoch));
}

}  // namespace

std::string metrics_csv_header() {
    return "epoch,step,recon_sub,recon_dom,distill_sub,distill_dom,total,lr\n";
}

std::string metrics_csv_row(const MetricsRow& r) {
    std::string s = std::to_string(r.epoch) + "," + std::to_string(r.step);
    for (double v : {r.recon_sub, r.recon_dom, r.distill_sub, r.distill_dom, r.total, r.lr})
        s += "," + fmt_double(v);
    s += "\n";
    return s;
}

model::LossReport mae_step(model::ViTBackbone& vit, const data::ImageBatch& batch,
                           const model::MaskSpec& mask, bool norm_pix, bool backward) {
    data::PatchTargets targets = data::patchify(batch, vit.config().patch);
    if (norm_pix) targets = data::normalize_pix(targets);
    model::EncodeActs enc_acts;
    Tensor tokens = vit.encode(batch, &mask, backward ? &enc_acts : nullptr);
    model::DecodeActs dec_acts;
    Tensor pred = vit.decode(tokens, mask, backward ? &dec_acts : nullptr);
    Tensor d_pred;
    model::LossReport rep;
    rep.recon_sub = model::recon_loss(pred, targets.patches, mask, backward ? &d_pred : nullptr);
    rep.total = rep.recon_sub;
    if (backward) {
        Tensor d_tokens = vit.decode_backward(d_pred, dec_acts);
        vit.encode_backward(d_tokens, enc_acts);
    }
    return rep;
}

LoadedModel load_model(const std::string& ckpt_path) {
    LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    LoadedModel out;
    out.kind = ck.meta.kind;
    out.meta = ck.meta;
    Rng dummy(0);
    if (ck.meta.kind == "imae") {
        out.imae = std::make_unique<model::ImaeModel>(ck.meta.model, dummy);
        restore_params(ck, out.imae->params(), true);
    } else {
        out.vit = std::make_unique<model::ViTBackbone>(ck.meta.model, dummy);
        // finetune checkpoints carry an extra classifier head; ignore it here
        restore_params(ck, out.vit->params(), ck.meta.kind == "teacher");
    }
    return out;
}

PretrainResult pretrain(const TrainOptions& opt, const data::Dataset& train_data) {
    if (opt.phase != "teacher_pretrain" && opt.phase != "imae_pretrain")
        throw ConfigError("unknown pretrain phase: " + opt.phase);
    const bool imae_phase = opt.phase == "imae_pretrain";
    if (opt.batch < 2 && imae_phase) throw ConfigError("mixing needs batch_size >= 2");
    if (opt.epochs <= 0 || opt.warmup_epochs >= opt.epochs)
        throw ConfigError("warmup_epochs must be < total epochs");
    if (opt.accum_steps < 1) throw ConfigError("accum_steps must be >= 1");
    ensure_dir(opt.out_dir);

    PretrainResult result;

    // student
    Rng init_rng(hash_mix(opt.seed, 0x1417));
    std::unique_ptr<model::ImaeModel> student;
    std::unique_ptr<model::ViTBackbone> teacher_vit;  // teacher phase trains this
    if (imae_phase)
        student = std::make_unique<model::ImaeModel>(opt.backbone, init_rng);
    else
        teacher_vit = std::make_unique<model::ViTBackbone>(opt.backbone, init_rng);
    model::ParamStore& params = imae_phase ? student->params() : teacher_vit->params();

    // frozen teacher for distillation
    std::unique_ptr<LoadedModel> frozen;
    if (imae_phase && opt.loss.use_distill) {
        if (opt.teacher_ckpt.empty())
            throw ConfigError("imae_pretrain with loss.use_distill needs teacher.ckpt");
        frozen = std::make_unique<LoadedModel>(load_model(opt.teacher_ckpt));
        result.teacher_hash_before = sha256_params(frozen->backbone().params());
    }

    AdamW optimizer(params, opt.beta1, opt.beta2, 1e-8, opt.weight_decay);

    i64 start_epoch = 0;
    if (!opt.resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(opt.resume);
        restore_params(ck, params, true);
        restore_optimizer(ck, optimizer);
        start_epoch = ck.meta.epoch;
        if (start_epoch >= opt.epochs)
            throw ConfigError("resume checkpoint already completed the requested epochs");
    }

    const i64 micro_per_epoch = train_data.size() / opt.batch;  // drop last
    if (micro_per_epoch < 1) throw ConfigError("dataset smaller than one batch");
    const i64 steps_per_epoch = (micro_per_epoch + opt.accum_steps - 1) / opt.accum_steps;
    const i64 warmup_steps = opt.warmup_epochs * steps_per_epoch;
    const i64 total_steps = opt.epochs * steps_per_epoch;

    result.metrics_path = opt.out_dir + "/" + opt.run_name + "_metrics.csv";
    std::ofstream metrics(result.metrics_path,
                          start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics) throw DataError("cannot write metrics log: " + result.metrics_path);
    if (start_epoch == 0) metrics << metrics_csv_header();

    const model::BackboneConfig& bc = imae_phase ? student->vit().config() : teacher_vit->config();

    for (i64 epoch = start_epoch; epoch < opt.epochs; ++epoch) {
        data::IteratorOptions it_opt;
        it_opt.batch_size = opt.batch;
        it_opt.drop_last = true;
        it_opt.shuffle = true;
        it_opt.seed = opt.seed;
        it_opt.epoch = epoch;
        data::BatchIterator it(train_data, it_opt);
        Rng step_rng(epoch_stream(opt.seed, epoch, 0xE90C));

        data::ImageBatch batch;
        i64 micro = 0;
        i64 pending = 0;
        model::LossReport accum_rep;
        params.zero_grad();
        while (it.next(batch)) {
            mix::MixSpec mspec;
            model::LossReport rep;
            if (imae_phase) {
                mspec = mix::make_mix_spec(batch.labels, batch.batch(), opt.mix, step_rng);
                model::MaskSpec mask = student->vit().draw_mask(batch.batch(), step_rng);
                rep = model::imae_step(*student, frozen ? &frozen->backbone() : nullptr, batch,
                                       mspec, mask, opt.loss, true);
            } else {
                model::MaskSpec mask = teacher_vit->draw_mask(batch.batch(), step_rng);
                rep = mae_step(*teacher_vit, batch, mask, opt.loss.norm_pix_targets, true);
            }
            if (!std::isfinite(rep.total)) {
                json dump;
                dump["epoch"] = epoch;
                dump["micro_step"] = micro;
                dump["phase"] = opt.phase;
                dump["total"] = "non-finite";
                if (imae_phase) dump["mix_spec"] = json::parse(mspec.to_json());
                std::ofstream d(opt.out_dir + "/nan_dump.json");
                d << dump.dump(2) << "\n";
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                   " (batch spec dumped to nan_dump.json)");
            }
            accum_rep.recon_sub += rep.recon_sub;
            accum_rep.recon_dom += rep.recon_dom;
            accum_rep.distill_sub += rep.distill_sub;
            accum_rep.distill_dom += rep.distill_dom;
            accum_rep.total += rep.total;
            ++pending;
            ++micro;
            const bool flush = pending == opt.accum_steps || micro == micro_per_epoch;
            if (!flush) continue;

            const double inv = 1.0 / static_cast<double>(pending);
            for (auto& p : params.all()) k::scale_inplace(p.g.data(), inv, p.g.size());
            const double lr =
                lr_schedule(optimizer.steps_taken(), warmup_steps, total_steps, opt.base_lr);
            optimizer.step(lr);
            params.zero_grad();

            MetricsRow row;
            row.epoch = epoch;
            row.step = optimizer.steps_taken() - 1;
            row.recon_sub = accum_rep.recon_sub * inv;
            row.recon_dom = accum_rep.recon_dom * inv;
            row.distill_sub = accum_rep.distill_sub * inv;
            row.distill_dom = accum_rep.distill_dom * inv;
            row.total = accum_rep.total * inv;
            row.lr = lr;
            metrics << metrics_csv_row(row);
            result.rows.push_back(row);
            accum_rep = model::LossReport{};
            pending = 0;
        }
        metrics.flush();

        const bool last = epoch + 1 == opt.epochs;
        if (last || (opt.checkpoint_every > 0 && (epoch + 1) % opt.checkpoint_every == 0)) {
            CheckpointMeta meta;
            meta.kind = imae_phase ? "imae" : "teacher";
            meta.model = bc;
            meta.extra = opt.config_echo;
            meta.epoch = epoch + 1;
            meta.rng_state = Rng(epoch_stream(opt.seed, epoch + 1, 0xE90C)).save_state();
            const std::string path =
                opt.out_dir + "/" + opt.run_name +
                (last ? std::string(".ckpt") : "_epoch" + std::to_string(epoch + 1) + ".ckpt");
            save_checkpoint(path, meta, params, &optimizer);
            if (last) result.checkpoint_path = path;
        }
    }

    if (frozen) result.teacher_hash_after = sha256_params(frozen->backbone().params());
    return result;
}

// ---- classification helpers ----

double softmax_xent(const Tensor& logits, const Tensor& targets, Tensor* d_logits) {
    const i64 B = logits.dim(0), C = logits.dim(1);
    if (!logits.same_shape(targets)) throw DimensionError("softmax_xent shape mismatch");
    if (d_logits) *d_logits = Tensor({B, C});
    double loss = 0.0;
    for (i64 b = 0; b < B; ++b) {
        const double* x = logits.data() + b * C;
        const double* t = targets.data() + b * C;
        double mx = x[0];
        for (i64 c = 1; c < C; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (i64 c = 0; c < C; ++c) sum += std::exp(x[c] - mx);
        const double lse = mx + std::log(sum);
        for (i64 c = 0; c < C; ++c) {
            loss -= t[c] * (x[c] - lse);
            if (d_logits) {
                const double p = std::exp(x[c] - lse);
                (*d_logits)[b * C + c] = (p - t[c]) / static_cast<double>(B);
            }
        }
    }
    return loss / static_cast<double>(B);
}

Tensor batchnorm_train(const Tensor& x, Tensor& running_mean, Tensor& running_var,
                       double momentum) {
    const i64 B = x.dim(0), D = x.dim(1);
    constexpr double eps = 1e-5;
    Tensor out({B, D});
    for (i64 j = 0; j < D; ++j) {
        double mu = 0.0;
        for (i64 b = 0; b < B; ++b) mu += x[b * D + j];
        mu /= static_cast<double>(B);
        double var = 0.0;
        for (i64 b = 0; b < B; ++b) {
            const double d = x[b * D + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(B);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (i64 b = 0; b < B; ++b) out[b * D + j] = (x[b * D + j] - mu) * inv;
        running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mu;
        running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var;
    }
    return out;
}

Tensor batchnorm_eval(const Tensor& x, const Tensor& running_mean, const Tensor& running_var) {
    const i64 B = x.dim(0), D = x.dim(1);
    constexpr double eps = 1e-5;
    Tensor out({B, D});
    for (i64 j = 0; j < D; ++j) {
        const double inv = 1.0 / std::sqrt(running_var[j] + eps);
        for (i64 b = 0; b < B; ++b) out[b * D + j] = (x[b * D + j] - running_mean[j]) * inv;
    }
    return out;
}

namespace {

/// Pool encoder tokens to one feature per image.
Tensor pool_tokens(const Tensor& tokens, bool mean_pool) {
    const i64 B = tokens.dim(0), T = tokens.dim(1), D = tokens.dim(2);
    Tensor out({B, D});
    if (!mean_pool) {
        for (i64 b = 0; b < B; ++b)
            std::copy(tokens.data() + b * T * D, tokens.data() + b * T * D + D,
                      out.data() + b * D);
        return out;
    }
    const double inv = 1.0 / static_cast<double>(T - 1);
    for (i64 b = 0; b < B; ++b)
        for (i64 t = 1; t < T; ++t)
            for (i64 j = 0; j < D; ++j) out[b * D + j] += tokens[(b * T + t) * D + j] * inv;
    return out;
}

Tensor unpool_grad(const Tensor& d_feat, i64 T, bool mean_pool) {
    const i64 B = d_feat.dim(0), D = d_feat.dim(1);
    Tensor d_tokens({B, T, D});
    if (!mean_pool) {
        for (i64 b = 0; b < B; ++b)
            std::copy(d_feat.data() + b * D, d_feat.data() + (b + 1) * D,
                      d_tokens.data() + b * T * D);
        return d_tokens;
    }
    const double inv = 1.0 / static_cast<double>(T - 1);
    for (i64 b = 0; b < B; ++b)
        for (i64 t = 1; t < T; ++t)
            for (i64 j = 0; j < D; ++j) d_tokens[(b * T + t) * D + j] = d_feat[b * D + j] * inv;
    return d_tokens;
}

Tensor one_hot_targets(const std::vector<int>& labels, int num_classes) {
    const i64 B = static_cast<i64>(labels.size());
    Tensor t({B, num_classes});
    for (i64 b = 0; b < B; ++b) {
        const int y = labels[static_cast<size_t>(b)];
        if (y < 0 || y >= num_classes) throw DataError("label out of range for classifier head");
        t[b * num_classes + y] = 1.0;
    }
    return t;
}

double top1_of_logits(const Tensor& logits, const std::vector<int>& labels) {
    const i64 B = logits.dim(0), C = logits.dim(1);
    i64 hits = 0;
    for (i64 b = 0; b < B; ++b) {
        i64 best = 0;
        for (i64 c = 1; c < C; ++c)
            if (logits[b * C + c] > logits[b * C + best]) best = c;
        if (best == labels[static_cast<size_t>(b)]) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(B);
}

}  // namespace

Tensor extract_features(const model::ViTBackbone& vit, const data::Dataset& ds, bool mean_pool,
                        i64 batch) {
    const i64 M = ds.size(), D = vit.config().embed_dim;
    Tensor out({M, D});
    std::vector<i64> idx;
    for (i64 start = 0; start < M; start += batch) {
        const i64 take = std::min(batch, M - start);
        idx.resize(static_cast<size_t>(take));
        for (i64 i = 0; i < take; ++i) idx[static_cast<size_t>(i)] = start + i;
        data::ImageBatch b = ds.make_batch(idx);
        Tensor tokens = vit.encode(b, nullptr, nullptr);
        Tensor feat = pool_tokens(tokens, mean_pool);
        std::copy(feat.data(), feat.data() + feat.size(), out.data() + start * D);
    }
    return out;
}

EvalReport finetune(const FinetuneOptions& opt, const data::Dataset& train_data,
                    const data::Dataset& val_data) {
    if (opt.init_ckpt.empty()) throw ConfigError("finetune needs init.ckpt");
    if (opt.epochs <= 0 || opt.warmup_epochs >= opt.epochs)
        throw ConfigError("warmup_epochs must be < total epochs");
    if (opt.fixed_lambda && (*opt.fixed_lambda <= 0.0 || *opt.fixed_lambda > 1.0))
        throw ConfigError("finetune.fixed_lambda must lie in (0, 1]");
    ensure_dir(opt.out_dir);

    LoadedCheckpoint ck = load_checkpoint(opt.init_ckpt);
    Rng init_rng(hash_mix(opt.seed, 0xF17E));
    model::ViTBackbone vit(ck.meta.model, init_rng);
    restore_params(ck, vit.params(), false);  // ignore disentangle heads etc.
    const i64 D = vit.config().embed_dim;
    model::ParamStore& params = vit.params();
    model::LinearRef head;
    head.in = D;
    head.out = opt.num_classes;
    head.w = params.add("head.w", {D, opt.num_classes}, true);
    head.b = params.add("head.b", {opt.num_classes}, false);
    for (i64 i = 0; i < params.at(head.w).w.size(); ++i)
        params.at(head.w).w[i] = init_rng.trunc_normal(0.01);

    AdamW optimizer(params, opt.beta1, opt.beta2, 1e-8, opt.weight_decay);
    const i64 steps_per_epoch = std::max<i64>(1, train_data.size() / opt.batch);
    const i64 warmup_steps = opt.warmup_epochs * steps_per_epoch;
    const i64 total_steps = opt.epochs * steps_per_epoch;

    mix::MixConfig mix_cfg;
    mix_cfg.beta_param = opt.mix_beta;

    EvalReport report;
    std::ofstream log(opt.out_dir + "/" + opt.run_name + "_metrics.csv");
    log << "epoch,loss,val_top1\n";
    for (i64 epoch = 0; epoch < opt.epochs; ++epoch) {
        data::IteratorOptions it_opt;
        it_opt.batch_size = opt.batch;
        it_opt.drop_last = true;
        it_opt.shuffle = true;
        it_opt.seed = opt.seed;
        it_opt.epoch = epoch;
        data::BatchIterator it(train_data, it_opt);
        Rng step_rng(epoch_stream(opt.seed, epoch, 0xF1E7));
        data::ImageBatch batch;
        double epoch_loss = 0.0;
        i64 steps = 0;
        while (it.next(batch)) {
            const i64 B = batch.batch();
            Tensor targets;
            data::ImageBatch* input = &batch;
            data::ImageBatch mixed, sub, dom;
            if (opt.mixup) {
                double lam = opt.fixed_lambda ? *opt.fixed_lambda
                                              : mix::sample_alpha(mix_cfg, 1, step_rng)[0];
                mix::MixSpec spec;
                spec.alpha.assign(static_cast<size_t>(B), lam);
                spec.perm = mix::semantic_pairing({}, 0.0, B, step_rng);  // label-free derangement
                spec.sub_is_first.assign(static_cast<size_t>(B), lam <= 0.5);
                spec.same_class.assign(static_cast<size_t>(B), 0);
                mix::mix_batch(batch, spec, mixed, sub, dom);
                input = &mixed;
                Tensor t1 = one_hot_targets(batch.labels, opt.num_classes);
                targets = Tensor({B, opt.num_classes});
                for (i64 b = 0; b < B; ++b) {
                    const i64 j = spec.perm[static_cast<size_t>(b)];
                    for (i64 c = 0; c < opt.num_classes; ++c)
                        targets[b * opt.num_classes + c] =
                            lam * t1[b * opt.num_classes + c] +
                            (1.0 - lam) * t1[j * opt.num_classes + c];
                }
            } else {
                targets = one_hot_targets(batch.labels, opt.num_classes);
            }

            model::EncodeActs acts;
            Tensor tokens = vit.encode(*input, nullptr, &acts);
            Tensor feat = pool_tokens(tokens, opt.mean_pool);
            Tensor logits({B, opt.num_classes});
            k::matmul(feat.data(), params.at(head.w).w.data(), logits.data(), B, D,
                      opt.num_classes, false);
            k::add_bias(logits.data(), params.at(head.b).w.data(), B, opt.num_classes);
            Tensor d_logits;
            const double loss = softmax_xent(logits, targets, &d_logits);
            if (!std::isfinite(loss)) throw NumericError("non-finite finetune loss");
            epoch_loss += loss;
            ++steps;

            params.zero_grad();
            k::matmul_tn(feat.data(), d_logits.data(), params.at(head.w).g.data(), B, D,
                         opt.num_classes, true);
            k::bias_grad(d_logits.data(), params.at(head.b).g.data(), B, opt.num_classes, true);
            Tensor d_feat({B, D});
            k::matmul_nt(d_logits.data(), params.at(head.w).w.data(), d_feat.data(), B,
                         opt.num_classes, D, false);
            Tensor d_tokens = unpool_grad(d_feat, tokens.dim(1), opt.mean_pool);
            vit.encode_backward(d_tokens, acts);
            const double lr =
                lr_schedule(optimizer.steps_taken(), warmup_steps, total_steps, opt.base_lr);
            optimizer.step(lr);
        }

        // clean validation pass
        Tensor val_feat = extract_features(vit, val_data, opt.mean_pool, opt.batch);
        Tensor val_logits({val_data.size(), opt.num_classes});
        k::matmul(val_feat.data(), params.at(head.w).w.data(), val_logits.data(), val_data.size(),
                  D, opt.num_classes, false);
        k::add_bias(val_logits.data(), params.at(head.b).w.data(), val_data.size(),
                    opt.num_classes);
        const double top1 = top1_of_logits(val_logits, val_data.labels());
        report.history.push_back(top1);
        log << epoch << "," << fmt_double(steps ? epoch_loss / static_cast<double>(steps) : 0.0)
            << "," << fmt_double(top1) << "\n";
        log.flush();
    }
    report.top1 = report.history.empty() ? 0.0 : report.history.back();

    CheckpointMeta meta;
    meta.kind = "finetune";
    meta.model = vit.config();
    meta.extra = opt.config_echo;
    meta.epoch = opt.epochs;
    meta.rng_state = Rng(hash_mix(opt.seed, 0xF17E)).save_state();
    report.checkpoint_path = opt.out_dir + "/" + opt.run_name + ".ckpt";
    save_checkpoint(report.checkpoint_path, meta, params, nullptr);
    return report;
}

std::vector<double> train_linear_head(const Tensor& x_train, const std::vector<int>& y_train,
                                      const Tensor& x_val, const std::vector<int>& y_val,
                                      const ProbeOptions& opt) {
    const i64 M = x_train.dim(0), D = x_train.dim(1);
    const i64 batch = std::min(opt.batch, M);

    model::ParamStore head_params;
    model::LinearRef head;
    head.in = D;
    head.out = opt.num_classes;
    head.w = head_params.add("probe_head.w", {D, opt.num_classes}, false);  // zero weight decay
    head.b = head_params.add("probe_head.b", {opt.num_classes}, false);
    Rng init_rng(hash_mix(opt.seed, 0x9806));
    for (i64 i = 0; i < head_params.at(head.w).w.size(); ++i)
        head_params.at(head.w).w[i] = init_rng.trunc_normal(0.01);

    Tensor running_mean({D}), running_var({D});
    running_var.fill(1.0);
    SgdMomentum optimizer(head_params, opt.momentum, 0.0);
    const i64 steps_per_epoch = std::max<i64>(1, M / batch);
    const i64 total_steps = opt.epochs * steps_per_epoch;
    i64 step = 0;

    std::vector<double> history;
    for (i64 epoch = 0; epoch < opt.epochs; ++epoch) {
        Rng order_rng(epoch_stream(opt.seed, epoch, 0x9807));
        std::vector<i64> order = order_rng.permutation(M);
        for (i64 start = 0; start + batch <= M; start += batch) {
            Tensor xb({batch, D});
            std::vector<int> yb(static_cast<size_t>(batch));
            for (i64 b = 0; b < batch; ++b) {
                const i64 i = order[static_cast<size_t>(start + b)];
                std::copy(x_train.data() + i * D, x_train.data() + (i + 1) * D,
                          xb.data() + b * D);
                yb[static_cast<size_t>(b)] = y_train[static_cast<size_t>(i)];
            }
            Tensor xn = batchnorm_train(xb, running_mean, running_var);
            Tensor logits({batch, opt.num_classes});
            k::matmul(xn.data(), head_params.at(head.w).w.data(), logits.data(), batch, D,
                      opt.num_classes, false);
            k::add_bias(logits.data(), head_params.at(head.b).w.data(), batch, opt.num_classes);
            Tensor targets = one_hot_targets(yb, opt.num_classes);
            Tensor d_logits;
            const double loss = softmax_xent(logits, targets, &d_logits);
            if (!std::isfinite(loss)) throw NumericError("non-finite probe loss");
            head_params.zero_grad();
            k::matmul_tn(xn.data(), d_logits.data(), head_params.at(head.w).g.data(), batch, D,
                         opt.num_classes, true);
            k::bias_grad(d_logits.data(), head_params.at(head.b).g.data(), batch, opt.num_classes,
                         true);
            const double lr = lr_schedule(step, 0, total_steps, opt.base_lr);
            optimizer.step(lr);
            ++step;
        }
        Tensor xvn = batchnorm_eval(x_val, running_mean, running_var);
        Tensor val_logits({x_val.dim(0), opt.num_classes});
        k::matmul(xvn.data(), head_params.at(head.w).w.data(), val_logits.data(), x_val.dim(0), D,
                  opt.num_classes, false);
        k::add_bias(val_logits.data(), head_params.at(head.b).w.data(), x_val.dim(0),
                    opt.num_classes);
        history.push_back(top1_of_logits(val_logits, y_val));
    }
    return history;
}

EvalReport linear_probe(const ProbeOptions& opt, const data::Dataset& train_data,
                        const data::Dataset& val_data) {
    if (opt.init_ckpt.empty()) throw ConfigError("linear_probe needs init.ckpt");
    ensure_dir(opt.out_dir);
    LoadedModel lm = load_model(opt.init_ckpt);
    const model::ViTBackbone& vit = lm.backbone();

    EvalReport report;
    report.encoder_hash_before = sha256_params(vit.params());

    // frozen encoder: features are extracted once
    Tensor x_train = extract_features(vit, train_data, opt.mean_pool, opt.batch);
    Tensor x_val = extract_features(vit, val_data, opt.mean_pool, opt.batch);
    report.history = train_linear_head(x_train, train_data.labels(), x_val, val_data.labels(), opt);
    report.top1 = report.history.empty() ? 0.0 : report.history.back();

    std::ofstream log(opt.out_dir + "/" + opt.run_name + "_metrics.csv");
    log << "epoch,val_top1\n";
    for (size_t e = 0; e < report.history.size(); ++e)
        log << e << "," << fmt_double(report.history[e]) << "\n";
    report.encoder_hash_after = sha256_params(vit.params());
    return report;
}

}  // namespace imae::train
