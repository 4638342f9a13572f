#include "mia/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "mia/error.hpp"
#include "mia/hash.hpp"

namespace mia {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) {
            throw DataError(Errc::config_unknown_key,
                            "unknown config key \"" + key + "\" in " + where);
        }
    }
}

template <typename T>
void read_if(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
    if (corpus_path.empty()) {
        throw DataError(Errc::config_bad_value, "corpus path is required");
    }
    if (window_len < 2) {
        throw DataError(Errc::config_bad_value, "window_len must be >= 2");
    }
    if (member_fraction <= 0.0 || member_fraction >= 1.0) {
        throw DataError(Errc::config_bad_value,
                        "member_fraction must lie in (0, 1)");
    }
    if (shadow_k < 1) {
        throw DataError(Errc::config_bad_value, "shadow_k must be >= 1");
    }
    if (neighbor_k < 1) {
        throw DataError(Errc::config_bad_value, "neighbor_k must be >= 1");
    }
    if (!sigma_auto && (sigma < 0.0 || !std::isfinite(sigma))) {
        throw DataError(Errc::config_bad_value, "sigma must be >= 0");
    }
    if (!(sigma_lo >= 0.0) || !(sigma_lo < sigma_hi) || !(sigma_tol > 0.0)) {
        throw DataError(Errc::config_bad_value,
                        "sigma bracket must satisfy 0 <= lo < hi, tol > 0");
    }
    if (window_len > static_cast<std::size_t>(lm.context_len)) {
        throw DataError(Errc::config_bad_value,
                        "window_len exceeds lm.context_len");
    }
    lm.validate();
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(Errc::config_parse,
                        std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw DataError(Errc::config_parse, "config root must be an object");
    }

    reject_unknown_keys(
        j,
        {"corpus", "out_dir", "window_len", "stride", "member_fraction",
         "shadow_k", "neighbor_k", "sigma", "sigma_bracket", "sigma_tol",
         "sigma_probe_cap", "seed", "threads", "shadow_train_steps", "lm"},
        "config root");

    RunConfig cfg;
    try {
        read_if(j, "corpus", cfg.corpus_path);
        read_if(j, "out_dir", cfg.out_dir);
        read_if(j, "window_len", cfg.window_len);
        read_if(j, "stride", cfg.stride);
        read_if(j, "member_fraction", cfg.member_fraction);
        read_if(j, "shadow_k", cfg.shadow_k);
        read_if(j, "neighbor_k", cfg.neighbor_k);
        if (j.contains("sigma")) {
            const auto& s = j.at("sigma");
            if (s.is_string()) {
                if (s.get<std::string>() != "auto") {
                    throw DataError(Errc::config_bad_value,
                                    "sigma must be a number or \"auto\"");
                }
                cfg.sigma_auto = true;
            } else {
                cfg.sigma_auto = false;
                cfg.sigma = s.get<double>();
            }
        }
        if (j.contains("sigma_bracket")) {
            const auto& b = j.at("sigma_bracket");
            if (!b.is_array() || b.size() != 2) {
                throw DataError(Errc::config_bad_value,
                                "sigma_bracket must be [lo, hi]");
            }
            cfg.sigma_lo = b[0].get<double>();
            cfg.sigma_hi = b[1].get<double>();
        }
        read_if(j, "sigma_tol", cfg.sigma_tol);
        read_if(j, "sigma_probe_cap", cfg.sigma_probe_cap);
        read_if(j, "seed", cfg.master_seed);
        read_if(j, "threads", cfg.threads);
        if (j.contains("shadow_train_steps")) {
            const auto& s = j.at("shadow_train_steps");
            if (s.is_string()) {
                if (s.get<std::string>() != "scaled") {
                    throw DataError(Errc::config_bad_value,
                                    "shadow_train_steps must be a count or "
                                    "\"scaled\"");
                }
                cfg.shadow_train_steps = -1;
            } else {
                cfg.shadow_train_steps = s.get<int>();
                if (cfg.shadow_train_steps < 0) {
                    throw DataError(Errc::config_bad_value,
                                    "shadow_train_steps must be >= 0");
                }
            }
        }
        if (j.contains("lm")) {
            const auto& l = j.at("lm");
            reject_unknown_keys(l,
                                {"vocab_size", "d_model", "n_layers", "n_heads",
                                 "context_len", "learning_rate", "train_steps",
                                 "batch_size"},
                                "lm section");
            read_if(l, "vocab_size", cfg.lm.vocab_size);
            read_if(l, "d_model", cfg.lm.d_model);
            read_if(l, "n_layers", cfg.lm.n_layers);
            read_if(l, "n_heads", cfg.lm.n_heads);
            read_if(l, "context_len", cfg.lm.context_len);
            read_if(l, "learning_rate", cfg.lm.learning_rate);
            read_if(l, "train_steps", cfg.lm.train_steps);
            read_if(l, "batch_size", cfg.lm.batch_size);
        }
    } catch (const json::exception& e) {
        throw DataError(Errc::config_bad_value,
                        std::string("bad config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(Errc::missing_file,
                        "cannot open config: " + path.string());
    }
    std::string text(std::istreambuf_iterator<char>(in), {});
    return parse_run_config(text);
}

std::string run_config_canonical_json(const RunConfig& cfg) {
    ordered_json j;
    j["corpus"] = cfg.corpus_path;
    j["out_dir"] = cfg.out_dir;
    j["window_len"] = cfg.window_len;
    j["stride"] = cfg.stride;
    j["member_fraction"] = cfg.member_fraction;
    j["shadow_k"] = cfg.shadow_k;
    j["neighbor_k"] = cfg.neighbor_k;
    if (cfg.sigma_auto) {
        j["sigma"] = "auto";
    } else {
        j["sigma"] = cfg.sigma;
    }
    j["sigma_bracket"] = {cfg.sigma_lo, cfg.sigma_hi};
    j["sigma_tol"] = cfg.sigma_tol;
    j["sigma_probe_cap"] = cfg.sigma_probe_cap;
    j["seed"] = cfg.master_seed;
    j["threads"] = cfg.threads;
    if (cfg.shadow_train_steps < 0) {
        j["shadow_train_steps"] = "scaled";
    } else {
        j["shadow_train_steps"] = cfg.shadow_train_steps;
    }
    j["lm"] = {{"vocab_size", cfg.lm.vocab_size},
               {"d_model", cfg.lm.d_model},
               {"n_layers", cfg.lm.n_layers},
               {"n_heads", cfg.lm.n_heads},
               {"context_len", cfg.lm.context_len},
               {"learning_rate", cfg.lm.learning_rate},
               {"train_steps", cfg.lm.train_steps},
               {"batch_size", cfg.lm.batch_size}};
    return j.dump(2) + "\n";
}

std::uint64_t run_config_hash(const RunConfig& cfg) {
    return fnv1a64(run_config_canonical_json(cfg));
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::string text = run_config_canonical_json(cfg);
    if (!out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw DataError(Errc::io_failure, "cannot write config: " + path.string());
    }
}

}  // namespace mia
