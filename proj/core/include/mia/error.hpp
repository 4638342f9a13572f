#pragma once

#include <stdexcept>
#include <string>

namespace mia {

// Machine-checkable failure reasons. Tests and the CLI dispatch on these
// rather than on message text.
enum class Errc {
    // corpus / files
    missing_file,
    unreadable_file,
    empty_corpus,
    corpus_too_short,
    bad_window_params,
    bad_split_params,
    shadow_count_exceeds_members,
    // lm
    bad_config,
    sequence_too_long,
    sequence_too_short,
    token_out_of_range,
    non_finite_input,
    length_mismatch,
    empty_train_set,
    training_diverged,
    // checkpoint
    checkpoint_magic,
    checkpoint_version,
    checkpoint_checksum,
    checkpoint_truncated,
    checkpoint_malformed,
    // attack
    negative_sigma,
    empty_shadow_list,
    invalid_bracket,
    calibration_overlap,
    bad_strategy,
    // metrics
    single_class_input,
    bad_interval_params,
    // config / pipeline
    config_parse,
    config_unknown_key,
    config_bad_value,
    missing_resource,
    report_malformed,
    io_failure,
};

const char* errc_name(Errc code);

// Base type for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

// Bad or missing input data: files, corpora, checkpoints, configs.
// The CLI maps these to exit code 2.
class DataError : public Error {
public:
    using Error::Error;
};

// Numerical failure at runtime (divergence, invalid brackets).
// The CLI maps these to exit code 3.
class NumericError : public Error {
public:
    using Error::Error;
};

// Command-line misuse. Exit code 1.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace mia
