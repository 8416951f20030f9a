#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imae/patches.hpp"
#include "imae/rng.hpp"

namespace imae::mix {

struct MixConfig {
    double beta_param = 1.0;             // Beta(b, b) sampler
    std::optional<double> fixed_alpha;   // in (0, 0.5] when set
    double same_class_ratio = 0.0;       // r in [0, 1]

    void validate() const;
};

/// Pairing and mix coefficients for one batch; serializable for exact replay.
struct MixSpec {
    std::vector<i64> perm;               // partner index per sample
    std::vector<double> alpha;           // mix coefficient per sample, in (0, 1]
    std::vector<uint8_t> sub_is_first;   // true when batch[i] is the subordinate
    std::vector<uint8_t> same_class;     // labels[i] == labels[perm[i]]
    int pairing_warnings = 0;            // unmet pairing constraints (best effort)

    i64 batch() const { return static_cast<i64>(perm.size()); }
    double sub_coeff(i64 i) const {
        double a = alpha[static_cast<size_t>(i)];
        return a <= 0.5 ? a : 1.0 - a;
    }

    std::string to_json() const;
    static MixSpec from_json(const std::string& text);
};

/// Per-sample mix coefficients. Beta draws within 1e-3 of {0,1} are resampled;
/// fixed_alpha passes through untouched.
std::vector<double> sample_alpha(const MixConfig& cfg, i64 B, Rng& rng);

/// Batch pairing permutation with exactly round(r*B) same-class partners when
/// feasible (best effort plus a warning count otherwise) and no fixed points.
/// Empty labels: plain derangement, only valid with r == 0.
std::vector<i64> semantic_pairing(const std::vector<int>& labels, double r, i64 B, Rng& rng,
                                  int* warnings = nullptr);

/// Full spec for one batch: alpha sampling + pairing + bookkeeping.
MixSpec make_mix_spec(const std::vector<int>& labels, i64 B, const MixConfig& cfg, Rng& rng,
                      bool label_free_pairing = false);

/// mixed[i] = alpha[i] * batch[i] + (1 - alpha[i]) * batch[perm[i]].
/// sub/dom are the pair members with the smaller/larger coefficient
/// (tie at 0.5: batch[i] is the subordinate).
void mix_batch(const data::ImageBatch& batch, const MixSpec& spec, data::ImageBatch& mixed,
               data::ImageBatch& sub, data::ImageBatch& dom);

}  // namespace imae::mix
