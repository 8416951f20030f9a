#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "imae/backbone.hpp"
#include "imae/dataset.hpp"
#include "imae/imae_model.hpp"
#include "imae/mixer.hpp"

namespace imae::cli {

/// Flat key=value configuration validated against a fixed schema. Unknown
/// keys are rejected; values are type-checked on load.
class Config {
public:
    Config();  // schema defaults

    void load_file(const std::string& path);
    void apply_override(const std::string& key_eq_value);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;  // set to a non-empty value
    std::string get_str(const std::string& key) const;
    i64 get_i64(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::optional<double> get_opt_real(const std::string& key) const;
    std::vector<double> get_real_list(const std::string& key) const;

    /// Deterministic one-line dump of all non-default values (manifest hash).
    std::string canonical_string() const;
    const std::map<std::string, std::string>& values() const { return values_; }

    // resolved sub-configs
    data::DatasetConfig dataset(const std::string& split) const;
    model::BackboneConfig backbone() const;
    mix::MixConfig mix() const;
    model::LossConfig loss() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace imae::cli
