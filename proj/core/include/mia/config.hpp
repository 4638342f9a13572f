#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mia/lm.hpp"

namespace mia {

// Everything a full audit run needs, loadable from a single JSON document.
// Unknown keys are errors: a typo in an auditing config must not pass
// silently. Defaults follow the reference protocol (60/40 split, 10 shadow
// partitions, 126-token windows, 10 neighbors).
struct RunConfig {
    std::string corpus_path;
    std::string out_dir = "runs/audit";
    std::size_t window_len = kDefaultWindowLen;
    std::size_t stride = 0;  // 0 means window_len: non-overlapping windows
    double member_fraction = 0.6;
    std::size_t shadow_k = 10;
    int neighbor_k = 10;

    bool sigma_auto = true;
    double sigma = 0.0;  // meaningful only when !sigma_auto
    double sigma_lo = 1e-3;
    double sigma_hi = 10.0;
    double sigma_tol = 1e-2;
    // Calibration subsample per class used by each sigma probe (0 = all).
    // Probes only steer the search; the reported audit uses the full
    // evaluation split.
    std::size_t sigma_probe_cap = 384;

    std::uint64_t master_seed = 1;
    int threads = 0;  // 0 = library/runtime default
    // Steps for each shadow model; -1 scales lm.train_steps by the shadow
    // partition fraction so per-window exposure matches the target's.
    int shadow_train_steps = -1;

    LmConfig lm;

    std::size_t effective_stride() const {
        return stride == 0 ? window_len : stride;
    }

    void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text);

// Canonical serialized form: every key explicit, fixed order. Re-parsing
// the dump yields an identical config (lossless round trip).
std::string run_config_canonical_json(const RunConfig& cfg);
std::uint64_t run_config_hash(const RunConfig& cfg);

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace mia
