#include "unimatch/config.hpp"
#include "unimatch/error.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace unimatch {

using nlohmann::json;

json RunConfig::to_json() const
{
    return json{
        {"seed", seed},
        {"basis_k", basis_k},
        {"n_energies", n_energies},
        {"tau", tau},
        {"tau_p", tau_p},
        {"lambda_reg", lambda_reg},
        {"lambda_couple", lambda_couple},
        {"lambda_rnc", lambda_rnc},
        {"mu_commute", mu_commute},
        {"anchors_per_step", anchors_per_step},
        {"epochs", epochs},
        {"lr", lr},
        {"weight_decay", weight_decay},
        {"zoomout_k0", zoomout_k0},
        {"zoomout_step", zoomout_step},
        {"zoomout_k_final", zoomout_k_final},
        {"inference_top_t", inference_top_t},
        {"blocks", blocks},
        {"hidden", hidden},
        {"out_dim", out_dim},
        {"contrastive", contrastive},
        {"use_semantic", use_semantic},
        {"standardize", standardize},
        {"refine", refine},
        {"x100", x100},
        {"allow_disconnected", allow_disconnected},
        {"workers", workers},
    };
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& field)
{
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw Error(ErrorCode::ConfigError, std::string(key) + " must be a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw Error(ErrorCode::ConfigError, std::string(key) + " must be an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw Error(ErrorCode::ConfigError, std::string(key) + " must be a number");
        } else {
            if (!it->is_string()) throw Error(ErrorCode::ConfigError, std::string(key) + " must be a string");
        }
        field = it->get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string(key) + ": " + e.what());
    }
}

} // namespace

RunConfig RunConfig::from_json(const json& j, const RunConfig& base)
{
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be an object");
    const json known = base.to_json();
    for (const auto& item : j.items()) {
        if (!known.contains(item.key())) throw Error(ErrorCode::ConfigError, "unknown config key '" + item.key() + "'");
    }

    RunConfig c = base;
    read_field(j, "seed", c.seed);
    read_field(j, "basis_k", c.basis_k);
    read_field(j, "n_energies", c.n_energies);
    read_field(j, "tau", c.tau);
    read_field(j, "tau_p", c.tau_p);
    read_field(j, "lambda_reg", c.lambda_reg);
    read_field(j, "lambda_couple", c.lambda_couple);
    read_field(j, "lambda_rnc", c.lambda_rnc);
    read_field(j, "mu_commute", c.mu_commute);
    read_field(j, "anchors_per_step", c.anchors_per_step);
    read_field(j, "epochs", c.epochs);
    read_field(j, "lr", c.lr);
    read_field(j, "weight_decay", c.weight_decay);
    read_field(j, "zoomout_k0", c.zoomout_k0);
    read_field(j, "zoomout_step", c.zoomout_step);
    read_field(j, "zoomout_k_final", c.zoomout_k_final);
    read_field(j, "inference_top_t", c.inference_top_t);
    read_field(j, "blocks", c.blocks);
    read_field(j, "hidden", c.hidden);
    read_field(j, "out_dim", c.out_dim);
    read_field(j, "contrastive", c.contrastive);
    read_field(j, "use_semantic", c.use_semantic);
    read_field(j, "standardize", c.standardize);
    read_field(j, "refine", c.refine);
    read_field(j, "x100", c.x100);
    read_field(j, "allow_disconnected", c.allow_disconnected);
    read_field(j, "workers", c.workers);
    c.validate();
    return c;
}

void RunConfig::validate() const
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw Error(ErrorCode::ConfigError, what);
    };
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    auto non_negative = [](double v) { return std::isfinite(v) && v >= 0.0; };

    require(basis_k >= 2, "basis_k must be at least 2");
    require(n_energies >= 1, "n_energies must be at least 1");
    require(positive(tau), "tau must be positive");
    require(positive(tau_p), "tau_p must be positive");
    require(non_negative(lambda_reg), "lambda_reg must be non-negative");
    require(non_negative(lambda_couple), "lambda_couple must be non-negative");
    require(non_negative(lambda_rnc), "lambda_rnc must be non-negative");
    require(non_negative(mu_commute), "mu_commute must be non-negative");
    require(anchors_per_step >= 1, "anchors_per_step must be at least 1");
    require(epochs >= 1, "epochs must be at least 1");
    require(positive(lr), "lr must be positive");
    require(non_negative(weight_decay), "weight_decay must be non-negative");
    require(zoomout_k0 >= 1 && zoomout_k0 <= basis_k, "zoomout_k0 must lie in [1, basis_k]");
    require(zoomout_step >= 1, "zoomout_step must be at least 1");
    require(zoomout_k_final == 0 || (zoomout_k_final >= zoomout_k0 && zoomout_k_final <= basis_k),
        "zoomout_k_final must be 0 or lie in [zoomout_k0, basis_k]");
    require(inference_top_t >= 0, "inference_top_t must be non-negative");
    require(blocks >= 0, "blocks must be non-negative");
    require(hidden >= 1 && out_dim >= 1, "hidden and out_dim must be positive");
    require(contrastive == "rnc" || contrastive == "supcon", "contrastive must be \"rnc\" or \"supcon\"");
    require(workers >= 1, "workers must be at least 1");
}

json parse_flat_toml(const std::string& text, const std::string& origin)
{
    json out = json::object();
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& why) {
        throw Error(ErrorCode::ConfigError, origin + ":" + std::to_string(line_no) + ": " + why);
    };
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };

    while (std::getline(in, line)) {
        ++line_no;
        // Strip comments outside of strings.
        bool in_string = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') fail("tables are not supported; use top-level keys");
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) fail("empty key or value");
        if (out.contains(key)) fail("duplicate key '" + key + "'");

        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            out[key] = value.substr(1, value.size() - 2);
        } else if (value == "true" || value == "false") {
            out[key] = value == "true";
        } else {
            std::string digits = value;
            std::erase(digits, '_');
            try {
                size_t used = 0;
                if (digits.find_first_of(".eEni") == std::string::npos) {
                    const long long v = std::stoll(digits, &used);
                    if (used != digits.size()) fail("bad integer '" + value + "'");
                    out[key] = v;
                } else {
                    const double v = std::stod(digits, &used);
                    if (used != digits.size()) fail("bad number '" + value + "'");
                    out[key] = v;
                }
            } catch (const std::logic_error&) {
                fail("cannot parse value '" + value + "'");
            }
        }
    }
    return out;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    json j;
    if (path.extension() == ".json") {
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
        }
    } else {
        j = parse_flat_toml(text, path.string());
    }
    try {
        return RunConfig::from_json(j, base);
    } catch (const Error& e) {
        throw e.within(path.string());
    }
}

} // namespace unimatch
