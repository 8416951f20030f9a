#include "imae/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

namespace imae::mix {

using json = nlohmann::json;

void MixConfig::validate() const {
    if (beta_param <= 0.0) throw ConfigError("mix.beta must be > 0");
    if (fixed_alpha && (*fixed_alpha <= 0.0 || *fixed_alpha > 0.5))
        throw ConfigError("mix.fixed_alpha must lie in (0, 0.5]");
    if (same_class_ratio < 0.0 || same_class_ratio > 1.0)
        throw ConfigError("mix.same_class_ratio must lie in [0, 1]");
}

std::vector<double> sample_alpha(const MixConfig& cfg, i64 B, Rng& rng) {
    std::vector<double> a(static_cast<size_t>(B));
    if (cfg.fixed_alpha) {
        std::fill(a.begin(), a.end(), *cfg.fixed_alpha);
        return a;
    }
    for (auto& v : a) {
        double x = rng.beta(cfg.beta_param, cfg.beta_param);
        // keep both reconstruction targets meaningful
        while (x < 1e-3 || x > 1.0 - 1e-3) x = rng.beta(cfg.beta_param, cfg.beta_param);
        v = x;
    }
    return a;
}

namespace {

/// Random derangement as a single B-cycle over a shuffled order.
std::vector<i64> random_derangement(i64 B, Rng& rng) {
    std::vector<i64> order = rng.permutation(B);
    std::vector<i64> perm(static_cast<size_t>(B));
    if (B == 1) {
        perm[0] = 0;
        return perm;
    }
    for (i64 i = 0; i < B; ++i)
        perm[static_cast<size_t>(order[static_cast<size_t>(i)])] =
            order[static_cast<size_t>((i + 1) % B)];
    return perm;
}

struct CrossGroup {
    int label;
    std::vector<i64> sources;
    std::vector<i64> targets;
};

/// Match src[i] -> tgt[i] within one class avoiding fixed points. Entries are
/// distinct, so swapping a colliding target with its successor never creates
/// a new collision (including at the wrap-around).
void match_without_fixed_points(const std::vector<i64>& src, std::vector<i64>& tgt,
                                const std::vector<i64>& members) {
    const size_t q = src.size();
    for (size_t i = 0; i < q; ++i) {
        if (src[i] != tgt[i]) continue;
        if (q == 1) {
            for (i64 m : members)
                if (m != src[0]) {
                    tgt[0] = m;
                    break;
                }
        } else {
            std::swap(tgt[i], tgt[(i + 1) % q]);
        }
    }
}

}  // namespace

std::vector<i64> semantic_pairing(const std::vector<int>& labels, double r, i64 B, Rng& rng,
                                  int* warnings) {
    int warn = 0;
    if (B < 2) throw ConfigError("pairing needs batch size >= 2");
    if (labels.empty()) {
        if (r > 0.0) throw ConfigError("same_class_ratio > 0 requires labels");
        if (warnings) *warnings = 0;
        return random_derangement(B, rng);
    }
    if (static_cast<i64>(labels.size()) != B) throw DimensionError("labels size mismatch");

    i64 k = std::llround(r * static_cast<double>(B));
    k = std::max<i64>(0, std::min(B, k));

    std::map<int, std::vector<i64>> by_class;
    for (i64 i = 0; i < B; ++i) by_class[labels[static_cast<size_t>(i)]].push_back(i);

    // Same-class arrows are only available inside classes with >= 2 members.
    struct Cls {
        int label;
        std::vector<i64> members;
        i64 quota = 0;
        i64 cap() const { return members.size() >= 2 ? static_cast<i64>(members.size()) : 0; }
        i64 leftover() const { return static_cast<i64>(members.size()) - quota; }
    };
    std::vector<Cls> cls;
    i64 total_cap = 0;
    for (auto& [label, members] : by_class) {
        cls.push_back({label, members, 0});
        total_cap += cls.back().cap();
    }
    i64 k_eff = std::min(k, total_cap);
    warn += static_cast<int>(k - k_eff);

    // Water-fill quotas onto the classes with the most unpaired members; that
    // minimizes the largest cross-stage group, which is exactly the
    // feasibility condition for avoiding extra same-class arrows.
    for (i64 t = 0; t < k_eff; ++t) {
        i64 best = -1;
        std::vector<size_t> ties;
        for (size_t c = 0; c < cls.size(); ++c) {
            if (cls[c].quota >= cls[c].cap()) continue;
            if (cls[c].leftover() > best) {
                best = cls[c].leftover();
                ties.clear();
            }
            if (cls[c].leftover() == best) ties.push_back(c);
        }
        cls[ties[static_cast<size_t>(rng.randint(static_cast<i64>(ties.size())))]].quota += 1;
    }

    std::vector<i64> perm(static_cast<size_t>(B), -1);
    std::vector<CrossGroup> cross;
    for (auto& c : cls) {
        std::vector<i64> src = c.members, tgt = c.members;
        rng.shuffle(src);
        rng.shuffle(tgt);
        std::vector<i64> src_used(src.begin(), src.begin() + c.quota);
        std::vector<i64> tgt_used(tgt.begin(), tgt.begin() + c.quota);
        match_without_fixed_points(src_used, tgt_used, c.members);
        for (size_t i = 0; i < src_used.size(); ++i)
            perm[static_cast<size_t>(src_used[i])] = tgt_used[i];
        CrossGroup g;
        g.label = c.label;
        for (i64 m : c.members) {
            if (std::find(src_used.begin(), src_used.end(), m) == src_used.end())
                g.sources.push_back(m);
            if (std::find(tgt_used.begin(), tgt_used.end(), m) == tgt_used.end())
                g.targets.push_back(m);
        }
        if (!g.sources.empty()) cross.push_back(std::move(g));
    }

    // Cross stage: concatenate leftovers grouped by class (largest first) and
    // pair source i with target (i + m_max) mod L. Blocks sit at the same
    // offsets in both lists, so the rotation avoids same-class pairs whenever
    // 2 * m_max <= L; anything beyond that is infeasible and counted.
    i64 L = 0;
    for (auto& g : cross) L += static_cast<i64>(g.sources.size());
    if (L > 0) {
        std::sort(cross.begin(), cross.end(), [](const CrossGroup& a, const CrossGroup& b) {
            if (a.sources.size() != b.sources.size()) return a.sources.size() > b.sources.size();
            return a.label < b.label;
        });
        std::vector<i64> ls, lt;
        std::vector<int> cls_of;
        for (auto& g : cross) {
            rng.shuffle(g.sources);
            rng.shuffle(g.targets);
            ls.insert(ls.end(), g.sources.begin(), g.sources.end());
            lt.insert(lt.end(), g.targets.begin(), g.targets.end());
            cls_of.insert(cls_of.end(), g.sources.size(), g.label);
        }
        const i64 offset = static_cast<i64>(cross.front().sources.size());
        std::vector<i64> tgt_at(static_cast<size_t>(L));
        for (i64 i = 0; i < L; ++i) tgt_at[static_cast<size_t>(i)] = (i + offset) % L;

        auto violated = [&](i64 i) {
            return cls_of[static_cast<size_t>(i)] ==
                   cls_of[static_cast<size_t>(tgt_at[static_cast<size_t>(i)])];
        };

        // Fixed points can only appear inside violated (same-class) pairs of
        // the infeasible case; swap targets with a compatible partner pair.
        for (i64 i = 0; i < L; ++i) {
            if (ls[static_cast<size_t>(i)] != lt[static_cast<size_t>(tgt_at[static_cast<size_t>(i)])])
                continue;
            bool fixed = false;
            for (i64 j = 0; j < L && !fixed; ++j) {
                if (j == i) continue;
                i64 ti = tgt_at[static_cast<size_t>(i)], tj = tgt_at[static_cast<size_t>(j)];
                bool i_ok = ls[static_cast<size_t>(i)] != lt[static_cast<size_t>(tj)];
                bool j_ok = ls[static_cast<size_t>(j)] != lt[static_cast<size_t>(ti)];
                int before = static_cast<int>(violated(i)) + static_cast<int>(violated(j));
                int after = static_cast<int>(cls_of[static_cast<size_t>(i)] ==
                                             cls_of[static_cast<size_t>(tj)]) +
                            static_cast<int>(cls_of[static_cast<size_t>(j)] ==
                                             cls_of[static_cast<size_t>(ti)]);
                if (i_ok && j_ok && after <= before) {
                    std::swap(tgt_at[static_cast<size_t>(i)], tgt_at[static_cast<size_t>(j)]);
                    fixed = true;
                }
            }
            if (!fixed && L == 1) ++warn;  // lone leftover pairs with itself
        }
        for (i64 i = 0; i < L; ++i) {
            if (violated(i)) ++warn;  // unavoidable extra same-class arrows
            perm[static_cast<size_t>(ls[static_cast<size_t>(i)])] =
                lt[static_cast<size_t>(tgt_at[static_cast<size_t>(i)])];
        }
    }

    if (warnings) *warnings = warn;
    return perm;
}

MixSpec make_mix_spec(const std::vector<int>& labels, i64 B, const MixConfig& cfg, Rng& rng,
                      bool label_free_pairing) {
    cfg.validate();
    MixSpec spec;
    spec.alpha = sample_alpha(cfg, B, rng);
    int warn = 0;
    if (label_free_pairing || labels.empty()) {
        if (!label_free_pairing && cfg.same_class_ratio > 0.0)
            throw ConfigError("same_class_ratio > 0 requires labels");
        spec.perm = semantic_pairing({}, 0.0, B, rng, &warn);
    } else {
        spec.perm = semantic_pairing(labels, cfg.same_class_ratio, B, rng, &warn);
    }
    spec.pairing_warnings = warn;
    spec.sub_is_first.resize(static_cast<size_t>(B));
    spec.same_class.resize(static_cast<size_t>(B));
    for (i64 i = 0; i < B; ++i) {
        spec.sub_is_first[static_cast<size_t>(i)] = spec.alpha[static_cast<size_t>(i)] <= 0.5;
        spec.same_class[static_cast<size_t>(i)] =
            !labels.empty() &&
            labels[static_cast<size_t>(i)] ==
                labels[static_cast<size_t>(spec.perm[static_cast<size_t>(i)])];
    }
    return spec;
}

void mix_batch(const data::ImageBatch& batch, const MixSpec& spec, data::ImageBatch& mixed,
               data::ImageBatch& sub, data::ImageBatch& dom) {
    const i64 B = batch.batch();
    if (spec.batch() != B || static_cast<i64>(spec.alpha.size()) != B)
        throw DimensionError("mix spec batch size mismatch");
    const i64 S = batch.height() * batch.width() * batch.channels();

    auto init_like = [&](data::ImageBatch& out) {
        out.pixels = Tensor({B, batch.height(), batch.width(), batch.channels()});
        out.labels.assign(batch.labels.empty() ? 0 : static_cast<size_t>(B), 0);
        out.ids.assign(static_cast<size_t>(B), 0);
    };
    init_like(mixed);
    init_like(sub);
    init_like(dom);

    const double* src = batch.pixels.data();
    for (i64 i = 0; i < B; ++i) {
        const i64 j = spec.perm[static_cast<size_t>(i)];
        if (j < 0 || j >= B) throw DimensionError("mix spec permutation out of range");
        const double a = spec.alpha[static_cast<size_t>(i)];
        const bool first_is_sub = spec.sub_is_first[static_cast<size_t>(i)];
        const double* xi = src + i * S;
        const double* xj = src + j * S;
        double* m = mixed.pixels.data() + i * S;
        for (i64 t = 0; t < S; ++t) m[t] = a * xi[t] + (1.0 - a) * xj[t];
        const i64 sub_idx = first_is_sub ? i : j;
        const i64 dom_idx = first_is_sub ? j : i;
        std::copy(src + sub_idx * S, src + (sub_idx + 1) * S, sub.pixels.data() + i * S);
        std::copy(src + dom_idx * S, src + (dom_idx + 1) * S, dom.pixels.data() + i * S);
        if (!batch.labels.empty()) {
            mixed.labels[static_cast<size_t>(i)] = batch.labels[static_cast<size_t>(i)];
            sub.labels[static_cast<size_t>(i)] = batch.labels[static_cast<size_t>(sub_idx)];
            dom.labels[static_cast<size_t>(i)] = batch.labels[static_cast<size_t>(dom_idx)];
        }
        mixed.ids[static_cast<size_t>(i)] = batch.ids[static_cast<size_t>(i)];
        sub.ids[static_cast<size_t>(i)] = batch.ids[static_cast<size_t>(sub_idx)];
        dom.ids[static_cast<size_t>(i)] = batch.ids[static_cast<size_t>(dom_idx)];
    }
}

std::string MixSpec::to_json() const {
    json j;
    j["perm"] = perm;
    j["alpha"] = alpha;
    j["sub_is_first"] = std::vector<int>(sub_is_first.begin(), sub_is_first.end());
    j["same_class"] = std::vector<int>(same_class.begin(), same_class.end());
    j["pairing_warnings"] = pairing_warnings;
    return j.dump();
}

MixSpec MixSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    MixSpec s;
    s.perm = j.at("perm").get<std::vector<i64>>();
    s.alpha = j.at("alpha").get<std::vector<double>>();
    auto sif = j.at("sub_is_first").get<std::vector<int>>();
    auto sc = j.at("same_class").get<std::vector<int>>();
    s.sub_is_first.assign(sif.begin(), sif.end());
    s.same_class.assign(sc.begin(), sc.end());
    s.pairing_warnings = j.value("pairing_warnings", 0);
    return s;
}

}  // namespace imae::mix
