#include "mia/error.hpp"

namespace mia {

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::missing_file: return "missing_file";
        case Errc::unreadable_file: return "unreadable_file";
        case Errc::empty_corpus: return "empty_corpus";
        case Errc::corpus_too_short: return "corpus_too_short";
        case Errc::bad_window_params: return "bad_window_params";
        case Errc::bad_split_params: return "bad_split_params";
        case Errc::shadow_count_exceeds_members: return "shadow_count_exceeds_members";
        case Errc::bad_config: return "bad_config";
        case Errc::sequence_too_long: return "sequence_too_long";
        case Errc::sequence_too_short: return "sequence_too_short";
        case Errc::token_out_of_range: return "token_out_of_range";
        case Errc::non_finite_input: return "non_finite_input";
        case Errc::length_mismatch: return "length_mismatch";
        case Errc::empty_train_set: return "empty_train_set";
        case Errc::training_diverged: return "training_diverged";
        case Errc::checkpoint_magic: return "checkpoint_magic";
        case Errc::checkpoint_version: return "checkpoint_version";
        case Errc::checkpoint_checksum: return "checkpoint_checksum";
        case Errc::checkpoint_truncated: return "checkpoint_truncated";
        case Errc::checkpoint_malformed: return "checkpoint_malformed";
        case Errc::negative_sigma: return "negative_sigma";
        case Errc::empty_shadow_list: return "empty_shadow_list";
        case Errc::invalid_bracket: return "invalid_bracket";
        case Errc::calibration_overlap: return "calibration_overlap";
        case Errc::bad_strategy: return "bad_strategy";
        case Errc::single_class_input: return "single_class_input";
        case Errc::bad_interval_params: return "bad_interval_params";
        case Errc::config_parse: return "config_parse";
        case Errc::config_unknown_key: return "config_unknown_key";
        case Errc::config_bad_value: return "config_bad_value";
        case Errc::missing_resource: return "missing_resource";
        case Errc::report_malformed: return "report_malformed";
        case Errc::io_failure: return "io_failure";
    }
    return "unknown";
}

}  // namespace mia
