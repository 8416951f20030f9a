#include "imae/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace imae::cli {

namespace {

enum class Type { Int, Real, Bool, Str, RealList };

struct SchemaEntry {
    const char* key;
    Type type;
    const char* default_value;
};

// Every accepted key with its type and default. Empty default = unset.
const SchemaEntry kSchema[] = {
    {"phase", Type::Str, ""},
    {"dataset.name", Type::Str, "synthetic"},
    {"dataset.root", Type::Str, ""},
    {"dataset.size", Type::Int, "5000"},
    {"dataset.val_size", Type::Int, "1000"},
    {"dataset.num_classes", Type::Int, "10"},
    {"dataset.image", Type::Int, "32"},
    {"dataset.channels", Type::Int, "3"},
    {"dataset.augment_crop", Type::Bool, "false"},
    {"dataset.augment_hflip", Type::Bool, "false"},
    {"model.profile", Type::Str, "micro"},
    {"model.patch", Type::Int, ""},
    {"model.embed_dim", Type::Int, ""},
    {"model.depth", Type::Int, ""},
    {"model.heads", Type::Int, ""},
    {"model.dec_dim", Type::Int, ""},
    {"model.dec_depth", Type::Int, ""},
    {"model.mlp_ratio", Type::Int, ""},
    {"mask_ratio", Type::Real, "0.75"},
    {"mix.beta", Type::Real, "1.0"},
    {"mix.fixed_alpha", Type::Real, ""},
    {"mix.same_class_ratio", Type::Real, "0.0"},
    {"loss.c", Type::Real, "1.0"},
    {"loss.dual_branch", Type::Bool, "true"},
    {"loss.use_distill", Type::Bool, "true"},
    {"loss.norm_pix", Type::Bool, "true"},
    {"train.base_lr", Type::Real, "1.5e-4"},
    {"train.epochs", Type::Int, "100"},
    {"train.warmup", Type::Int, "10"},
    {"train.batch", Type::Int, "128"},
    {"train.seed", Type::Int, "0"},
    {"train.weight_decay", Type::Real, "0.05"},
    {"train.beta1", Type::Real, "0.9"},
    {"train.beta2", Type::Real, "0.95"},
    {"train.accum_steps", Type::Int, "1"},
    {"train.eval_every", Type::Int, "0"},
    {"train.resume", Type::Str, ""},
    {"teacher.ckpt", Type::Str, ""},
    {"init.ckpt", Type::Str, ""},
    {"finetune.mixup", Type::Bool, "true"},
    {"finetune.fixed_lambda", Type::Real, ""},
    {"finetune.mean_pool", Type::Bool, "false"},
    {"probe.momentum", Type::Real, "0.9"},
    {"sep.student", Type::Str, ""},
    {"sep.teacher", Type::Str, ""},
    {"sep.lambda", Type::Real, "1e-3"},
    {"sep.sweep", Type::Bool, "false"},
    {"sep.train_frac", Type::Real, "0.8"},
    {"sep.batches", Type::Int, "8"},
    {"reconstruct.alphas", Type::RealList, "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5"},
    {"reconstruct.mask_ratio", Type::Real, ""},
    {"reconstruct.index", Type::Int, "0"},
    {"plots.ckpt_a", Type::Str, ""},
    {"plots.ckpt_b", Type::Str, ""},
    {"plots.layer", Type::Int, "0"},
    {"plots.head", Type::Int, "0"},
    {"plots.image_index", Type::Int, "0"},
    {"out.dir", Type::Str, "out"},
};

const SchemaEntry* find_schema(const std::string& key) {
    for (const auto& e : kSchema)
        if (key == e.key) return &e;
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

void type_check(const SchemaEntry& e, const std::string& value) {
    if (value.empty()) return;
    try {
        size_t pos = 0;
        switch (e.type) {
            case Type::Int:
                (void)std::stoll(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
                break;
            case Type::Real:
                (void)std::stod(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
                break;
            case Type::Bool:
                if (value != "true" && value != "false" && value != "1" && value != "0")
                    throw std::invalid_argument(value);
                break;
            case Type::RealList: {
                std::stringstream ss(value);
                std::string item;
                while (std::getline(ss, item, ',')) (void)std::stod(trim(item));
                break;
            }
            case Type::Str:
                break;
        }
    } catch (const std::exception&) {
        throw ConfigError("bad value for key '" + std::string(e.key) + "': " + value);
    }
}

}  // namespace

Config::Config() {
    for (const auto& e : kSchema) values_[e.key] = e.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
    const SchemaEntry* e = find_schema(key);
    if (!e) throw ConfigError("unknown config key: " + key);
    std::string v = trim(value);
    type_check(*e, v);
    values_[key] = v;
}

void Config::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
}

void Config::apply_override(const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

bool Config::has(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return !it->second.empty();
}

std::string Config::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

i64 Config::get_i64(const std::string& key) const {
    const std::string v = get_str(key);
    if (v.empty()) throw ConfigError("config key not set: " + key);
    return std::stoll(v);
}

double Config::get_real(const std::string& key) const {
    const std::string v = get_str(key);
    if (v.empty()) throw ConfigError("config key not set: " + key);
    return std::stod(v);
}

bool Config::get_bool(const std::string& key) const {
    const std::string v = get_str(key);
    return v == "true" || v == "1";
}

std::optional<double> Config::get_opt_real(const std::string& key) const {
    const std::string v = get_str(key);
    if (v.empty()) return std::nullopt;
    return std::stod(v);
}

std::vector<double> Config::get_real_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get_str(key));
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty()) out.push_back(std::stod(trim(item)));
    return out;
}

std::string Config::canonical_string() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

data::DatasetConfig Config::dataset(const std::string& split) const {
    data::DatasetConfig d;
    d.name = get_str("dataset.name");
    d.root = get_str("dataset.root");
    d.split = split;
    d.size = split == "train" ? get_i64("dataset.size") : get_i64("dataset.val_size");
    d.num_classes = static_cast<int>(get_i64("dataset.num_classes"));
    d.image_h = d.image_w = get_i64("dataset.image");
    d.channels = get_i64("dataset.channels");
    d.seed = static_cast<u64>(get_i64("train.seed"));
    d.augment_crop = get_bool("dataset.augment_crop");
    d.augment_hflip = get_bool("dataset.augment_hflip");
    return d;
}

model::BackboneConfig Config::backbone() const {
    model::BackboneConfig b;
    const std::string profile = get_str("model.profile");
    if (profile == "micro") {
        b.patch = 4; b.embed_dim = 64; b.depth = 4; b.heads = 4;
        b.dec_dim = 32; b.dec_depth = 2; b.mlp_ratio = 4;
    } else if (profile == "tiny") {
        b.patch = 4; b.embed_dim = 192; b.depth = 12; b.heads = 3;
        b.dec_dim = 96; b.dec_depth = 4; b.mlp_ratio = 4;
    } else if (profile == "gradcheck") {
        b.patch = 4; b.embed_dim = 8; b.depth = 2; b.heads = 2;
        b.dec_dim = 8; b.dec_depth = 1; b.mlp_ratio = 4;
    } else if (profile == "custom") {
        // everything must come from explicit model.* keys
    } else {
        throw ConfigError("unknown model.profile: " + profile);
    }
    b.image_h = b.image_w = get_i64("dataset.image");
    b.channels = get_i64("dataset.channels");
    if (profile == "gradcheck") b.image_h = b.image_w = 16;
    if (has("model.patch")) b.patch = get_i64("model.patch");
    if (has("model.embed_dim")) b.embed_dim = get_i64("model.embed_dim");
    if (has("model.depth")) b.depth = get_i64("model.depth");
    if (has("model.heads")) b.heads = get_i64("model.heads");
    if (has("model.dec_dim")) b.dec_dim = get_i64("model.dec_dim");
    if (has("model.dec_depth")) b.dec_depth = get_i64("model.dec_depth");
    if (has("model.mlp_ratio")) b.mlp_ratio = get_i64("model.mlp_ratio");
    b.mask_ratio = get_real("mask_ratio");
    b.validate();
    return b;
}

mix::MixConfig Config::mix() const {
    mix::MixConfig m;
    m.beta_param = get_real("mix.beta");
    m.fixed_alpha = get_opt_real("mix.fixed_alpha");
    m.same_class_ratio = get_real("mix.same_class_ratio");
    m.validate();
    return m;
}

model::LossConfig Config::loss() const {
    model::LossConfig l;
    l.distill_coeff = get_real("loss.c");
    l.dual_branch = get_bool("loss.dual_branch");
    l.use_distill = get_bool("loss.use_distill");
    l.norm_pix_targets = get_bool("loss.norm_pix");
    l.validate();
    return l;
}

}  // namespace imae::cli
