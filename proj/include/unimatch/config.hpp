#pragma once

#include "unimatch/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace unimatch {

/// Every tunable of a run. Unknown keys are rejected on load.
struct RunConfig
{
    std::uint64_t seed = 0;
    Index basis_k = 64;
    Index n_energies = 128;
    double tau = 0.07;
    double tau_p = 0.07;
    double lambda_reg = 1.0;
    double lambda_couple = 1.0;
    double lambda_rnc = 1.0;
    double mu_commute = 1e-2;
    Index anchors_per_step = 512;
    int epochs = 15;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    Index zoomout_k0 = 20;
    Index zoomout_step = 4;
    /// 0 means the basis size.
    Index zoomout_k_final = 0;
    Index inference_top_t = 32;
    int blocks = 4;
    Index hidden = 256;
    Index out_dim = 256;
    /// "rnc" or "supcon".
    std::string contrastive = "rnc";
    bool use_semantic = true;
    bool standardize = true;
    bool refine = true;
    bool x100 = false;
    bool allow_disconnected = false;
    int workers = 1;

    nlohmann::json to_json() const;
    /// Starts from `base` and overrides the keys present in `j`.
    static RunConfig from_json(const nlohmann::json& j, const RunConfig& base);
    static RunConfig from_json(const nlohmann::json& j) { return from_json(j, RunConfig{}); }
    /// Throws ConfigError when a field is outside its documented range.
    void validate() const;

    Index zoomout_target() const { return zoomout_k_final == 0 ? basis_k : zoomout_k_final; }
};

/// Reads JSON (.json) or flat TOML (`key = value` lines, `#` comments).
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});

/// Parses the flat TOML subset into a JSON object.
nlohmann::json parse_flat_toml(const std::string& text, const std::string& origin = "<config>");

} // namespace unimatch
