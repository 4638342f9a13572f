#include "mia/corpus.hpp"

#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mia/error.hpp"
#include "mia/hash.hpp"
#include "mia/rng.hpp"

namespace mia {

namespace {

std::vector<std::uint8_t> normalize_newlines(std::vector<std::uint8_t> raw) {
    std::vector<std::uint8_t> out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;  // CRLF -> LF
        } else {
            out.push_back(raw[i]);
        }
    }
    return out;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec) || ec) {
        throw DataError(Errc::missing_file,
                        "corpus file does not exist: " + path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(Errc::unreadable_file,
                        "cannot open corpus file: " + path.string());
    }
    std::vector<std::uint8_t> raw(std::istreambuf_iterator<char>(in), {});
    if (in.bad()) {
        throw DataError(Errc::unreadable_file,
                        "read failure on corpus file: " + path.string());
    }
    raw = normalize_newlines(std::move(raw));
    if (raw.empty()) {
        throw DataError(Errc::empty_corpus,
                        "empty corpus: " + path.string());
    }
    Corpus c;
    c.raw_bytes = std::move(raw);
    c.source_id = path.filename().string();
    c.content_hash = fnv1a64(c.raw_bytes);
    return c;
}

std::vector<std::int32_t> tokenize(const Corpus& corpus) {
    if (corpus.raw_bytes.empty()) {
        throw DataError(Errc::empty_corpus, "cannot tokenize an empty corpus");
    }
    std::vector<std::int32_t> ids(corpus.raw_bytes.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = static_cast<std::int32_t>(corpus.raw_bytes[i]);
    }
    return ids;
}

std::vector<TokenSequence> make_windows(const std::vector<std::int32_t>& ids,
                                        std::size_t window_len,
                                        std::size_t stride) {
    if (window_len < 2 || stride < 1) {
        throw DataError(Errc::bad_window_params,
                        "window_len must be >= 2 and stride >= 1");
    }
    if (ids.size() < window_len) {
        throw DataError(Errc::corpus_too_short,
                        "corpus has " + std::to_string(ids.size()) +
                            " tokens, shorter than one window of " +
                            std::to_string(window_len));
    }
    std::vector<TokenSequence> out;
    out.reserve((ids.size() - window_len) / stride + 1);
    for (std::size_t start = 0; start + window_len <= ids.size();
         start += stride) {
        TokenSequence w;
        w.tokens.assign(ids.begin() + static_cast<std::ptrdiff_t>(start),
                        ids.begin() + static_cast<std::ptrdiff_t>(start + window_len));
        out.push_back(std::move(w));
    }
    return out;
}

SplitPlan split(const std::vector<TokenSequence>& windows,
                double member_fraction, std::size_t shadow_k,
                std::uint64_t seed) {
    if (member_fraction <= 0.0 || member_fraction >= 1.0) {
        throw DataError(Errc::bad_split_params,
                        "member_fraction must lie in (0, 1)");
    }
    if (shadow_k < 1) {
        throw DataError(Errc::bad_split_params, "shadow_k must be >= 1");
    }

    // Exact-duplicate windows would receive contradictory membership labels;
    // keep the first occurrence of each distinct window.
    std::vector<std::size_t> kept;
    kept.reserve(windows.size());
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& t = windows[i].tokens;
        std::uint64_t h =
            fnv1a64(t.data(), t.size() * sizeof(std::int32_t));
        auto& bucket = by_hash[h];
        bool dup = false;
        for (std::size_t j : bucket) {
            if (windows[j] == windows[i]) {
                dup = true;
                break;
            }
        }
        if (!dup) {
            bucket.push_back(i);
            kept.push_back(i);
        }
    }

    const std::size_t n = kept.size();
    const auto n_members =
        static_cast<std::size_t>(member_fraction * static_cast<double>(n));
    if (n_members == 0 || n_members == n) {
        throw DataError(Errc::bad_split_params,
                        "split leaves an empty member or non-member side (" +
                            std::to_string(n) + " distinct windows)");
    }
    if (shadow_k > n_members) {
        throw DataError(Errc::shadow_count_exceeds_members,
                        "shadow_k = " + std::to_string(shadow_k) +
                            " exceeds member count " +
                            std::to_string(n_members));
    }

    Rng rng(seed);
    rng.shuffle(kept);

    SplitPlan plan;
    plan.seed = seed;
    plan.member_window_indices.assign(kept.begin(),
                                      kept.begin() + static_cast<std::ptrdiff_t>(n_members));
    plan.nonmember_window_indices.assign(kept.begin() + static_cast<std::ptrdiff_t>(n_members),
                                         kept.end());
    plan.member_samples.reserve(n_members);
    for (std::size_t i : plan.member_window_indices) {
        plan.member_samples.push_back(windows[i]);
    }
    plan.nonmember_samples.reserve(n - n_members);
    for (std::size_t i : plan.nonmember_window_indices) {
        plan.nonmember_samples.push_back(windows[i]);
    }
    plan.shadow_partitions.assign(shadow_k, {});
    for (std::size_t i = 0; i < n_members; ++i) {
        plan.shadow_partitions[i % shadow_k].push_back(i);
    }
    return plan;
}

void save_split_plan(const SplitPlan& plan, const SplitPlanProvenance& prov,
                     const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["seed"] = plan.seed;
    j["corpus_hash"] = hash_hex(prov.corpus_hash);
    j["window_len"] = prov.window_len;
    j["stride"] = prov.stride;
    j["member_fraction"] = prov.member_fraction;
    j["shadow_k"] = prov.shadow_k;
    j["member_windows"] = plan.member_window_indices;
    j["nonmember_windows"] = plan.nonmember_window_indices;
    j["shadow_partitions"] = plan.shadow_partitions;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError(Errc::io_failure,
                        "cannot write split plan: " + path.string());
    }
    out << j.dump(2) << '\n';
}

SplitPlan load_split_plan(const std::filesystem::path& path,
                          const std::vector<TokenSequence>& windows,
                          const SplitPlanProvenance& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(Errc::missing_file,
                        "cannot open split plan: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(Errc::config_parse,
                        "malformed split plan " + path.string() + ": " + e.what());
    }

    if (j.at("corpus_hash").get<std::string>() != hash_hex(expected.corpus_hash)) {
        throw DataError(Errc::config_bad_value,
                        "split plan was derived from a different corpus");
    }
    if (j.at("window_len").get<std::size_t>() != expected.window_len ||
        j.at("stride").get<std::size_t>() != expected.stride) {
        throw DataError(Errc::config_bad_value,
                        "split plan window parameters disagree with config");
    }

    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.member_window_indices =
        j.at("member_windows").get<std::vector<std::size_t>>();
    plan.nonmember_window_indices =
        j.at("nonmember_windows").get<std::vector<std::size_t>>();
    plan.shadow_partitions =
        j.at("shadow_partitions").get<std::vector<std::vector<std::size_t>>>();
    for (std::size_t i : plan.member_window_indices) {
        if (i >= windows.size()) {
            throw DataError(Errc::config_bad_value,
                            "split plan references window " + std::to_string(i) +
                                " beyond corpus end");
        }
        plan.member_samples.push_back(windows[i]);
    }
    for (std::size_t i : plan.nonmember_window_indices) {
        if (i >= windows.size()) {
            throw DataError(Errc::config_bad_value,
                            "split plan references window " + std::to_string(i) +
                                " beyond corpus end");
        }
        plan.nonmember_samples.push_back(windows[i]);
    }
    return plan;
}

}  // namespace mia
