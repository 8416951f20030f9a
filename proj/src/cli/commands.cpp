#include "imae/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "imae/checkpoint.hpp"
#include "imae/evalsep.hpp"
#include "imae/image_io.hpp"
#include "imae/trainer.hpp"
#include "imae/util.hpp"

namespace imae::cli {

using nlohmann::json;

namespace {

json config_echo(const Config& cfg) {
    json j = json::object();
    for (const auto& [k, v] : cfg.values())
        if (!v.empty()) j[k] = v;
    return j;
}

std::string config_hash(const Config& cfg) {
    const std::string s = cfg.canonical_string();
    return train::sha256_bytes(s.data(), s.size());
}

train::TrainOptions pretrain_options(const Config& cfg, const std::string& phase) {
    train::TrainOptions opt;
    opt.phase = phase;
    opt.backbone = cfg.backbone();
    opt.mix = cfg.mix();
    opt.loss = cfg.loss();
    opt.base_lr = cfg.get_real("train.base_lr");
    opt.epochs = cfg.get_i64("train.epochs");
    opt.warmup_epochs = cfg.get_i64("train.warmup");
    opt.batch = cfg.get_i64("train.batch");
    opt.accum_steps = cfg.get_i64("train.accum_steps");
    opt.weight_decay = cfg.get_real("train.weight_decay");
    opt.beta1 = cfg.get_real("train.beta1");
    opt.beta2 = cfg.get_real("train.beta2");
    opt.seed = static_cast<u64>(cfg.get_i64("train.seed"));
    opt.teacher_ckpt = cfg.get_str("teacher.ckpt");
    opt.resume = cfg.get_str("train.resume");
    opt.checkpoint_every = cfg.get_i64("train.eval_every");
    opt.out_dir = cfg.get_str("out.dir");
    opt.run_name = phase == "teacher_pretrain" ? "teacher" : "imae";
    opt.config_echo = config_echo(cfg);
    return opt;
}

// 3x5 digit glyphs for labeling reconstruction rows.
const char* glyph(char c) {
    switch (c) {
        case '0': return "111101101101111";
        case '1': return "010110010010111";
        case '2': return "111001111100111";
        case '3': return "111001111001111";
        case '4': return "101101111001001";
        case '5': return "111100111001111";
        case '6': return "111100111101111";
        case '7': return "111001010010010";
        case '8': return "111101111101111";
        case '9': return "111101111001111";
        case '.': return "000000000000010";
        default: return "000000000000000";
    }
}

void draw_text(io::Image& img, const std::string& text, i64 x0, i64 y0, i64 scale) {
    i64 x = x0;
    for (char c : text) {
        const char* g = glyph(c);
        for (i64 gy = 0; gy < 5; ++gy)
            for (i64 gx = 0; gx < 3; ++gx) {
                if (g[gy * 3 + gx] != '1') continue;
                for (i64 sy = 0; sy < scale; ++sy)
                    for (i64 sx = 0; sx < scale; ++sx) {
                        const i64 py = y0 + gy * scale + sy, px = x + gx * scale + sx;
                        if (py < 0 || py >= img.h || px < 0 || px >= img.w) continue;
                        for (i64 ch = 0; ch < img.c; ++ch) img.at(py, px, ch) = 1.0;
                    }
            }
        x += 4 * scale;
    }
}

void blit_cell(io::Image& grid, const data::ImageBatch& img, i64 y0, i64 x0, i64 scale) {
    const i64 H = img.height(), W = img.width(), C = img.channels();
    for (i64 y = 0; y < H * scale; ++y)
        for (i64 x = 0; x < W * scale; ++x)
            for (i64 ch = 0; ch < grid.c; ++ch) {
                double v = img.pixels[((y / scale) * W + (x / scale)) * C + (ch % C)];
                grid.at(y0 + y, x0 + x, ch) = std::clamp(v, 0.0, 1.0);
            }
}

}  // namespace

void cmd_pretrain_teacher(Config& cfg) {
    auto opt = pretrain_options(cfg, "teacher_pretrain");
    data::Dataset train_data = data::Dataset::load(cfg.dataset("train"));
    auto result = train::pretrain(opt, train_data);
    util::Manifest m;
    m.command = "pretrain-teacher";
    m.config_sha256 = config_hash(cfg);
    m.inputs["dataset"] = cfg.get_str("dataset.name");
    m.outputs = {result.checkpoint_path, result.metrics_path};
    m.inputs["checkpoint_sha256"] = train::sha256_file(result.checkpoint_path);
    m.write(opt.out_dir);
}

void cmd_pretrain_imae(Config& cfg) {
    auto opt = pretrain_options(cfg, "imae_pretrain");
    data::Dataset train_data = data::Dataset::load(cfg.dataset("train"));
    auto result = train::pretrain(opt, train_data);
    util::Manifest m;
    m.command = "pretrain-imae";
    m.config_sha256 = config_hash(cfg);
    m.inputs["dataset"] = cfg.get_str("dataset.name");
    if (!opt.teacher_ckpt.empty()) {
        m.inputs["teacher"] = opt.teacher_ckpt;
        m.inputs["teacher_sha256_before"] = result.teacher_hash_before;
        m.inputs["teacher_sha256_after"] = result.teacher_hash_after;
    }
    m.outputs = {result.checkpoint_path, result.metrics_path};
    m.inputs["checkpoint_sha256"] = train::sha256_file(result.checkpoint_path);
    m.write(opt.out_dir);
}

void cmd_finetune(Config& cfg) {
    train::FinetuneOptions opt;
    opt.init_ckpt = cfg.get_str("init.ckpt");
    opt.num_classes = static_cast<int>(cfg.get_i64("dataset.num_classes"));
    opt.mixup = cfg.get_bool("finetune.mixup");
    opt.mix_beta = cfg.get_real("mix.beta");
    opt.fixed_lambda = cfg.get_opt_real("finetune.fixed_lambda");
    opt.mean_pool = cfg.get_bool("finetune.mean_pool");
    opt.base_lr = cfg.get_real("train.base_lr");
    opt.epochs = cfg.get_i64("train.epochs");
    opt.warmup_epochs = cfg.get_i64("train.warmup");
    opt.batch = cfg.get_i64("train.batch");
    opt.weight_decay = cfg.get_real("train.weight_decay");
    opt.beta1 = cfg.get_real("train.beta1");
    opt.beta2 = cfg.get_real("train.beta2");
    opt.seed = static_cast<u64>(cfg.get_i64("train.seed"));
    opt.out_dir = cfg.get_str("out.dir");
    opt.config_echo = config_echo(cfg);

    data::Dataset train_data = data::Dataset::load(cfg.dataset("train"));
    data::Dataset val_data = data::Dataset::load(cfg.dataset("val"));
    auto report = train::finetune(opt, train_data, val_data);

    json summary;
    summary["top1"] = report.top1;
    summary["history"] = report.history;
    util::write_text_file(opt.out_dir + "/finetune_report.json", summary.dump(2) + "\n");
    util::Manifest m;
    m.command = "finetune";
    m.config_sha256 = config_hash(cfg);
    m.inputs["init"] = opt.init_ckpt;
    m.inputs["init_sha256"] = train::sha256_file(opt.init_ckpt);
    m.outputs = {report.checkpoint_path, opt.out_dir + "/finetune_report.json"};
    m.write(opt.out_dir);
}

void cmd_probe(Config& cfg) {
    train::ProbeOptions opt;
    opt.init_ckpt = cfg.get_str("init.ckpt");
    opt.num_classes = static_cast<int>(cfg.get_i64("dataset.num_classes"));
    opt.mean_pool = cfg.get_bool("finetune.mean_pool");
    opt.base_lr = cfg.get_real("train.base_lr");
    opt.momentum = cfg.get_real("probe.momentum");
    opt.epochs = cfg.get_i64("train.epochs");
    opt.batch = cfg.get_i64("train.batch");
    opt.seed = static_cast<u64>(cfg.get_i64("train.seed"));
    opt.out_dir = cfg.get_str("out.dir");
    opt.config_echo = config_echo(cfg);

    data::Dataset train_data = data::Dataset::load(cfg.dataset("train"));
    data::Dataset val_data = data::Dataset::load(cfg.dataset("val"));
    auto report = train::linear_probe(opt, train_data, val_data);
    if (report.encoder_hash_before != report.encoder_hash_after)
        throw NumericError("linear probe modified the frozen encoder");

    json summary;
    summary["top1"] = report.top1;
    summary["history"] = report.history;
    summary["encoder_sha256"] = report.encoder_hash_after;
    util::write_text_file(opt.out_dir + "/probe_report.json", summary.dump(2) + "\n");
    util::Manifest m;
    m.command = "probe";
    m.config_sha256 = config_hash(cfg);
    m.inputs["init"] = opt.init_ckpt;
    m.inputs["init_sha256"] = train::sha256_file(opt.init_ckpt);
    m.outputs = {opt.out_dir + "/probe_report.json"};
    m.write(opt.out_dir);
}

void cmd_sep_report(Config& cfg) {
    const std::string student_path = cfg.get_str("sep.student");
    const std::string teacher_path = cfg.get_str("sep.teacher");
    if (student_path.empty() || teacher_path.empty())
        throw ConfigError("sep-report needs sep.student and sep.teacher checkpoints");
    train::LoadedModel student = train::load_model(student_path);
    if (!student.imae) throw ConfigError("sep.student must be an i-MAE checkpoint");
    train::LoadedModel teacher = train::load_model(teacher_path);

    data::Dataset val_data = data::Dataset::load(cfg.dataset("val"));
    eval::SeparabilityOptions opt;
    opt.lambda = cfg.get_real("sep.lambda");
    opt.train_frac = cfg.get_real("sep.train_frac");
    opt.batch = cfg.get_i64("train.batch");
    opt.max_batches = cfg.get_i64("sep.batches");
    opt.seed = static_cast<u64>(cfg.get_i64("train.seed"));
    opt.mix = cfg.mix();

    const std::string out_dir = cfg.get_str("out.dir");
    util::ensure_dir(out_dir);
    std::vector<double> lambdas = cfg.get_bool("sep.sweep")
                                      ? std::vector<double>{0.0, 1e-4, 1e-3, 1e-2}
                                      : std::vector<double>{opt.lambda};
    std::string csv, txt;
    for (double lam : lambdas) {
        opt.lambda = lam;
        eval::SeparabilityReport rep =
            eval::separability_report(*student.imae, teacher.backbone(), val_data, opt);
        std::ostringstream tag;
        tag << "lambda=" << lam;
        if (csv.empty()) csv = rep.csv_header();
        csv += rep.csv_row(tag.str());
        txt += rep.table(tag.str()) + "\n";
    }
    util::write_text_file(out_dir + "/sep_report.csv", csv);
    util::write_text_file(out_dir + "/sep_report.txt", txt);

    util::Manifest m;
    m.command = "sep-report";
    m.config_sha256 = config_hash(cfg);
    m.inputs["student"] = student_path;
    m.inputs["student_sha256"] = train::sha256_file(student_path);
    m.inputs["teacher"] = teacher_path;
    m.inputs["teacher_sha256"] = train::sha256_file(teacher_path);
    m.outputs = {out_dir + "/sep_report.csv", out_dir + "/sep_report.txt"};
    m.write(out_dir);
}

void cmd_reconstruct(Config& cfg) {
    const std::string ckpt_path = cfg.get_str("init.ckpt");
    if (ckpt_path.empty()) throw ConfigError("reconstruct needs init.ckpt");
    train::LoadedModel lm = train::load_model(ckpt_path);
    if (!lm.imae) throw ConfigError("reconstruct needs an i-MAE checkpoint (with heads)");
    model::ImaeModel& student = *lm.imae;
    model::BackboneConfig bc = student.vit().config();

    std::vector<double> alphas = cfg.get_real_list("reconstruct.alphas");
    if (alphas.empty()) throw ConfigError("reconstruct.alphas is empty");
    for (double a : alphas)
        if (a <= 0.0 || a > 0.5)
            throw ConfigError("reconstruct alphas must lie in (0, 0.5]");

    data::Dataset val_data = data::Dataset::load(cfg.dataset("val"));
    const i64 index = cfg.get_i64("reconstruct.index");
    if (2 * index + 1 >= val_data.size()) throw DataError("reconstruct.index beyond dataset");
    data::ImageBatch pair = val_data.make_batch({2 * index, 2 * index + 1});
    const i64 H = pair.height(), W = pair.width(), C = pair.channels(), S = H * W * C;

    const double mask_ratio = cfg.has("reconstruct.mask_ratio")
                                  ? cfg.get_real("reconstruct.mask_ratio")
                                  : bc.mask_ratio;
    const u64 seed = static_cast<u64>(cfg.get_i64("train.seed"));
    Rng rng(hash_mix(seed, 0x12EC));
    model::MaskSpec mask = model::random_mask_spec(1, bc.n_patches(), mask_ratio, rng);
    const bool norm_pix =
        lm.meta.extra.is_object() ? lm.meta.extra.value("loss.norm_pix", "true") == "true" : true;

    const i64 scale = 2, margin = 2, gutter = 36;
    io::Image grid;
    grid.c = 3;
    grid.w = gutter + 4 * (W * scale + margin) + margin;
    grid.h = static_cast<i64>(alphas.size()) * (H * scale + margin) + margin;
    grid.px.assign(static_cast<size_t>(grid.w * grid.h * 3), 0.08);

    for (size_t row = 0; row < alphas.size(); ++row) {
        const double a = alphas[row];
        data::ImageBatch mixed, sub;
        mixed.pixels = Tensor({1, H, W, C});
        sub.pixels = Tensor({1, H, W, C});
        mixed.ids = {0};
        sub.ids = {0};
        for (i64 i = 0; i < S; ++i) {
            mixed.pixels[i] = a * pair.pixels[i] + (1.0 - a) * pair.pixels[S + i];
            sub.pixels[i] = pair.pixels[i];  // alpha <= 0.5: first image is subordinate
        }

        Tensor h_m = student.vit().encode(mixed, &mask, nullptr);
        Tensor h1 = student.disentangle(h_m, 1);
        Tensor pred = student.vit().decode(h1, mask, nullptr);

        data::PatchTargets target = data::patchify(sub, bc.patch);
        data::PatchTargets pred_patches;
        pred_patches.patches = pred;
        pred_patches.normalized = norm_pix;
        if (norm_pix) {
            data::PatchStats stats;
            data::normalize_pix(target, &stats);
            pred_patches = data::denormalize_pix(pred_patches, stats);
        }
        data::ImageBatch recon = data::unpatchify(pred_patches, bc.patch, H, W, C);

        data::PatchTargets mixed_patches = data::patchify(mixed, bc.patch);
        for (i64 n = 0; n < mask.N; ++n)
            if (mask.masked(0, n))
                for (i64 j = 0; j < bc.patch_dim(); ++j)
                    mixed_patches.patches[n * bc.patch_dim() + j] = 0.5;
        data::ImageBatch masked_view = data::unpatchify(mixed_patches, bc.patch, H, W, C);

        const i64 y0 = margin + static_cast<i64>(row) * (H * scale + margin);
        char label[16];
        std::snprintf(label, sizeof(label), "%.2f", a);
        draw_text(grid, label, 2, y0 + (H * scale) / 2 - 5, 2);
        const data::ImageBatch* cells[4] = {&mixed, &masked_view, &recon, &sub};
        for (int c = 0; c < 4; ++c)
            blit_cell(grid, *cells[c], y0, gutter + c * (W * scale + margin), scale);
    }

    const std::string out_dir = cfg.get_str("out.dir");
    util::ensure_dir(out_dir);
    const std::string out_path = out_dir + "/reconstruct.bmp";
    io::write_bmp(out_path, grid);

    util::Manifest m;
    m.command = "reconstruct";
    m.config_sha256 = config_hash(cfg);
    m.inputs["checkpoint"] = ckpt_path;
    m.inputs["checkpoint_sha256"] = train::sha256_file(ckpt_path);
    m.outputs = {out_path};
    m.write(out_dir);
}

void cmd_plots(Config& cfg) {
    const std::string path_a = cfg.get_str("plots.ckpt_a");
    const std::string path_b = cfg.get_str("plots.ckpt_b");
    if (path_a.empty() || path_b.empty())
        throw ConfigError("plots needs plots.ckpt_a and plots.ckpt_b");
    train::LoadedModel ma = train::load_model(path_a);
    train::LoadedModel mb = train::load_model(path_b);
    if (!ma.backbone().config().same_architecture(mb.backbone().config()))
        throw ConfigError("plots: checkpoint architectures differ");

    auto encoder_weights = [](const model::ViTBackbone& vit) {
        std::vector<double> w;
        for (const auto& p : vit.params().all()) {
            const bool enc = p.name.rfind("patch_embed", 0) == 0 ||
                             p.name.rfind("encoder", 0) == 0 || p.name == "cls_token";
            if (!enc) continue;
            w.insert(w.end(), p.w.data(), p.w.data() + p.w.size());
        }
        return w;
    };
    std::vector<double> wa = encoder_weights(ma.backbone());
    std::vector<double> wb = encoder_weights(mb.backbone());

    double amax = 0.0;
    for (double v : wa) amax = std::max(amax, std::fabs(v));
    for (double v : wb) amax = std::max(amax, std::fabs(v));
    if (amax == 0.0) amax = 1.0;
    const int bins = 200;
    std::vector<i64> ha(bins, 0), hb(bins, 0);
    auto fill = [&](const std::vector<double>& w, std::vector<i64>& h) {
        for (double v : w) {
            int bin = static_cast<int>((v + amax) / (2.0 * amax) * bins);
            bin = std::clamp(bin, 0, bins - 1);
            ++h[static_cast<size_t>(bin)];
        }
    };
    fill(wa, ha);
    fill(wb, hb);

    const std::string out_dir = cfg.get_str("out.dir");
    util::ensure_dir(out_dir);
    std::ostringstream csv;
    csv.precision(17);
    csv << "bin_lo,bin_hi,count_a,count_b\n";
    for (int i = 0; i < bins; ++i) {
        const double lo = -amax + 2.0 * amax * i / bins;
        const double hi = -amax + 2.0 * amax * (i + 1) / bins;
        csv << lo << "," << hi << "," << ha[static_cast<size_t>(i)] << ","
            << hb[static_cast<size_t>(i)] << "\n";
    }
    const std::string hist_csv = out_dir + "/weight_hist.csv";
    util::write_text_file(hist_csv, csv.str());

    // overlay plot: model a filled columns, model b bright outline
    io::Image plot;
    plot.w = 800;
    plot.h = 400;
    plot.c = 3;
    plot.px.assign(static_cast<size_t>(plot.w * plot.h * 3), 0.05);
    i64 peak = 1;
    for (int i = 0; i < bins; ++i) peak = std::max<i64>(peak, std::max(ha[i], hb[i]));
    for (int i = 0; i < bins; ++i) {
        const i64 x0 = i * plot.w / bins, x1 = (i + 1) * plot.w / bins;
        const i64 ya = ha[i] * (plot.h - 4) / peak;
        const i64 yb = hb[i] * (plot.h - 4) / peak;
        for (i64 x = x0; x < x1; ++x) {
            for (i64 y = 0; y < ya; ++y) plot.at(plot.h - 1 - y, x, 0) = 0.85;
            const i64 ytop = plot.h - 1 - yb;
            if (ytop >= 0) {
                plot.at(ytop, x, 2) = 1.0;
                plot.at(ytop, x, 1) = 0.6;
            }
        }
    }
    const std::string hist_bmp = out_dir + "/weight_hist.bmp";
    io::write_bmp(hist_bmp, plot);

    // attention heat-maps for the requested layer/head
    data::Dataset val_data = data::Dataset::load(cfg.dataset("val"));
    const i64 img_index = cfg.get_i64("plots.image_index");
    if (img_index >= val_data.size()) throw DataError("plots.image_index beyond dataset");
    data::ImageBatch img = val_data.make_batch({img_index});
    const i64 layer = cfg.get_i64("plots.layer"), head = cfg.get_i64("plots.head");
    std::vector<std::string> outputs = {hist_csv, hist_bmp};
    const char* names[2] = {"attention_a.bmp", "attention_b.bmp"};
    model::ViTBackbone* vits[2] = {&ma.backbone(), &mb.backbone()};
    for (int i = 0; i < 2; ++i) {
        Tensor att = vits[i]->attention_map(img, layer, head);
        const i64 T = att.dim(0), cell = std::max<i64>(1, 512 / T);
        io::Image heat;
        heat.w = heat.h = T * cell;
        heat.c = 1;
        heat.px.assign(static_cast<size_t>(heat.w * heat.h), 0.0);
        double mx = 0.0;
        for (i64 j = 0; j < att.size(); ++j) mx = std::max(mx, att[j]);
        for (i64 r = 0; r < T; ++r)
            for (i64 cix = 0; cix < T; ++cix)
                for (i64 sy = 0; sy < cell; ++sy)
                    for (i64 sx = 0; sx < cell; ++sx)
                        heat.at(r * cell + sy, cix * cell + sx, 0) =
                            mx > 0 ? att[r * T + cix] / mx : 0.0;
        const std::string p = out_dir + "/" + names[i];
        io::write_bmp(p, heat);
        outputs.push_back(p);
    }

    util::Manifest m;
    m.command = "plots";
    m.config_sha256 = config_hash(cfg);
    m.inputs["ckpt_a"] = path_a;
    m.inputs["ckpt_a_sha256"] = train::sha256_file(path_a);
    m.inputs["ckpt_b"] = path_b;
    m.inputs["ckpt_b_sha256"] = train::sha256_file(path_b);
    m.outputs = outputs;
    m.write(out_dir);
}

void run_command(const std::string& name, Config& cfg) {
    if (const char* env = std::getenv("IMAE_OUT"); env && *env) cfg.set("out.dir", env);
    if (name == "pretrain-teacher")
        cmd_pretrain_teacher(cfg);
    else if (name == "pretrain-imae")
        cmd_pretrain_imae(cfg);
    else if (name == "finetune")
        cmd_finetune(cfg);
    else if (name == "probe")
        cmd_probe(cfg);
    else if (name == "sep-report")
        cmd_sep_report(cfg);
    else if (name == "reconstruct")
        cmd_reconstruct(cfg);
    else if (name == "plots")
        cmd_plots(cfg);
    else
        throw ConfigError("unknown command: " + name);
}

}  // namespace imae::cli
