#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mia {

// Raw ingested text. Line endings are normalized to '\n' at load time so the
// same logical text hashes identically regardless of platform of origin.
struct Corpus {
    std::vector<std::uint8_t> raw_bytes;
    std::string source_id;
    std::uint64_t content_hash = 0;  // fnv1a64(raw_bytes)
};

// A fixed-length window of token ids; the unit sample of the audit.
struct TokenSequence {
    std::vector<std::int32_t> tokens;

    std::size_t window_len() const { return tokens.size(); }
    bool operator==(const TokenSequence&) const = default;
};

// Member/non-member split plus the shadow partitioning of the member set.
// Window indices refer to positions in the make_windows() output, which is
// what gets serialized; token contents are re-derived from the corpus.
struct SplitPlan {
    std::vector<TokenSequence> member_samples;
    std::vector<TokenSequence> nonmember_samples;
    std::vector<std::size_t> member_window_indices;
    std::vector<std::size_t> nonmember_window_indices;
    // shadow_partitions[k] holds indices into member_samples. Pairwise
    // disjoint, covering, sizes differing by at most one.
    std::vector<std::vector<std::size_t>> shadow_partitions;
    std::uint64_t seed = 0;
};

// Parameters a serialized plan carries so it can be re-derived and verified.
struct SplitPlanProvenance {
    std::uint64_t corpus_hash = 0;
    std::size_t window_len = 0;
    std::size_t stride = 0;
    double member_fraction = 0.0;
    std::size_t shadow_k = 0;
};

inline constexpr std::size_t kDefaultWindowLen = 126;
inline constexpr int kByteVocabSize = 256;

Corpus load_corpus(const std::filesystem::path& path);

// Byte-level tokenization: each byte is its own id, vocab_size = 256.
std::vector<std::int32_t> tokenize(const Corpus& corpus);

// Cut fixed windows in corpus order; the trailing remainder is dropped.
// Non-overlapping when stride == window_len (the default protocol).
std::vector<TokenSequence> make_windows(const std::vector<std::int32_t>& ids,
                                        std::size_t window_len,
                                        std::size_t stride);

// Deduplicate, shuffle with a seeded RNG, cut at floor(fraction * N), and
// round-robin the members into shadow_k partitions.
SplitPlan split(const std::vector<TokenSequence>& windows,
                double member_fraction, std::size_t shadow_k,
                std::uint64_t seed);

void save_split_plan(const SplitPlan& plan, const SplitPlanProvenance& prov,
                     const std::filesystem::path& path);

// Loads a plan and rebuilds the sample contents from `windows`, verifying
// the stored provenance (corpus hash, window parameters) first.
SplitPlan load_split_plan(const std::filesystem::path& path,
                          const std::vector<TokenSequence>& windows,
                          const SplitPlanProvenance& expected);

}  // namespace mia
