#include "imae/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <openssl/sha.h>

namespace imae::train {

using nlohmann::json;

json backbone_config_to_json(const model::BackboneConfig& c) {
    return json{{"image_h", c.image_h}, {"image_w", c.image_w}, {"channels", c.channels},
                {"patch", c.patch},     {"embed_dim", c.embed_dim}, {"depth", c.depth},
                {"heads", c.heads},     {"dec_dim", c.dec_dim},     {"dec_depth", c.dec_depth},
                {"mlp_ratio", c.mlp_ratio}, {"mask_ratio", c.mask_ratio}};
}

model::BackboneConfig backbone_config_from_json(const json& j) {
    model::BackboneConfig c;
    c.image_h = j.at("image_h").get<i64>();
    c.image_w = j.at("image_w").get<i64>();
    c.channels = j.at("channels").get<i64>();
    c.patch = j.at("patch").get<i64>();
    c.embed_dim = j.at("embed_dim").get<i64>();
    c.depth = j.at("depth").get<i64>();
    c.heads = j.at("heads").get<i64>();
    c.dec_dim = j.at("dec_dim").get<i64>();
    c.dec_depth = j.at("dec_depth").get<i64>();
    c.mlp_ratio = j.at("mlp_ratio").get<i64>();
    c.mask_ratio = j.at("mask_ratio").get<double>();
    return c;
}

namespace {
constexpr char kMagic[8] = {'I', 'M', 'A', 'E', 'C', 'K', 'P', '1'};

void write_blob(std::ofstream& f, const Tensor& t) {
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_blob(std::ifstream& f, Tensor& t) {
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw DataError("truncated checkpoint blob");
}
}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore& params, const AdamW* opt) {
    json header;
    header["version"] = 1;
    header["kind"] = meta.kind;
    header["model"] = backbone_config_to_json(meta.model);
    header["extra"] = meta.extra;
    header["epoch"] = meta.epoch;
    header["rng"] = meta.rng_state;
    json plist = json::array();
    for (const auto& p : params.all()) plist.push_back(json{{"name", p.name}, {"shape", p.w.shape()}});
    header["params"] = plist;
    header["has_opt"] = opt != nullptr;
    if (opt)
        header["opt"] = json{{"t", opt->steps_taken()},
                             {"beta1", opt->beta1()},
                             {"beta2", opt->beta2()},
                             {"weight_decay", opt->weight_decay()}};
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write(kMagic, 8);
    const u64 len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& p : params.all()) write_blob(f, p.w);
    if (opt) {
        for (const auto& t : opt->m()) write_blob(f, t);
        for (const auto& t : opt->v()) write_blob(f, t);
    }
    if (!f) throw DataError("write failure on checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not an imae checkpoint: " + path);
    u64 len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    if (!f) throw DataError("truncated checkpoint header: " + path);
    json header = json::parse(hs);

    LoadedCheckpoint ck;
    ck.meta.kind = header.at("kind").get<std::string>();
    ck.meta.model = backbone_config_from_json(header.at("model"));
    ck.meta.extra = header.value("extra", json::object());
    ck.meta.epoch = header.at("epoch").get<i64>();
    ck.meta.rng_state = header.at("rng").get<std::string>();
    for (const auto& pj : header.at("params")) {
        Tensor t(pj.at("shape").get<std::vector<i64>>());
        read_blob(f, t);
        ck.params.emplace_back(pj.at("name").get<std::string>(), std::move(t));
    }
    ck.has_opt = header.value("has_opt", false);
    if (ck.has_opt) {
        ck.opt_t = header.at("opt").at("t").get<i64>();
        for (const auto& [name, t] : ck.params) {
            (void)name;
            ck.opt_m.emplace_back(t.shape());
        }
        for (auto& t : ck.opt_m) read_blob(f, t);
        for (const auto& [name, t] : ck.params) {
            (void)name;
            ck.opt_v.emplace_back(t.shape());
        }
        for (auto& t : ck.opt_v) read_blob(f, t);
    }
    return ck;
}

void restore_params(const LoadedCheckpoint& ck, ParamStore& params, bool strict) {
    size_t matched = 0;
    for (auto& p : params.all()) {
        const Tensor* found = nullptr;
        for (const auto& [name, t] : ck.params)
            if (name == p.name) {
                found = &t;
                break;
            }
        if (!found) {
            if (strict) throw DataError("checkpoint missing parameter: " + p.name);
            continue;
        }
        if (found->size() != p.w.size())
            throw DataError("checkpoint shape mismatch for " + p.name);
        std::copy(found->data(), found->data() + found->size(), p.w.data());
        ++matched;
    }
    if (strict && matched != ck.params.size())
        throw DataError("checkpoint has extra parameters not present in model");
}

void restore_optimizer(const LoadedCheckpoint& ck, AdamW& opt) {
    if (!ck.has_opt) throw DataError("checkpoint carries no optimizer state");
    if (ck.opt_m.size() != opt.m().size())
        throw DataError("optimizer state size mismatch");
    for (size_t i = 0; i < ck.opt_m.size(); ++i) {
        std::copy(ck.opt_m[i].data(), ck.opt_m[i].data() + ck.opt_m[i].size(), opt.m()[i].data());
        std::copy(ck.opt_v[i].data(), ck.opt_v[i].data() + ck.opt_v[i].size(), opt.v()[i].data());
    }
    opt.set_steps(ck.opt_t);
}

std::string sha256_bytes(const void* data, size_t len) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(static_cast<const unsigned char*>(data), len, digest);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (unsigned char c : digest) {
        out.push_back(hex[c >> 4]);
        out.push_back(hex[c & 0xf]);
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for hashing: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return sha256_bytes(bytes.data(), bytes.size());
}

std::string sha256_params(const ParamStore& params) {
    SHA256_CTX ctx;
    SHA256_Init(&ctx);
    for (const auto& p : params.all())
        SHA256_Update(&ctx, p.w.data(), static_cast<size_t>(p.w.size()) * sizeof(double));
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256_Final(digest, &ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (unsigned char c : digest) {
        out.push_back(hex[c >> 4]);
        out.push_back(hex[c & 0xf]);
    }
    return out;
}

}  // namespace imae::train
