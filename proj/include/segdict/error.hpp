#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segdict {

enum class ErrorKind {
    invalid_argument,
    index_out_of_range,
    shape_mismatch,
    mismatched_k,
    duplicate_segment,
    missing_segment,
    parse_error,
    empty_dataset,
    degenerate_beat,
    mixed_channel_count,
    singular_active_gram,
    insufficient_distinct_columns,
    indefinite_system,
    insufficient_points,
    single_class_input,
    class_too_small_for_folds,
    insufficient_class_samples,
    length_mismatch,
    empty_sample,
    io_error,
    config_error,
};

inline std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::index_out_of_range: return "index-out-of-range";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::mismatched_k: return "mismatched-k";
    case ErrorKind::duplicate_segment: return "duplicate-segment";
    case ErrorKind::missing_segment: return "missing-segment";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::empty_dataset: return "empty-dataset";
    case ErrorKind::degenerate_beat: return "degenerate-beat";
    case ErrorKind::mixed_channel_count: return "mixed-channel-count";
    case ErrorKind::singular_active_gram: return "singular-active-gram";
    case ErrorKind::insufficient_distinct_columns: return "insufficient-distinct-columns";
    case ErrorKind::indefinite_system: return "indefinite-system";
    case ErrorKind::insufficient_points: return "insufficient-points";
    case ErrorKind::single_class_input: return "single-class-input";
    case ErrorKind::class_too_small_for_folds: return "class-with-fewer-samples-than-folds";
    case ErrorKind::insufficient_class_samples: return "insufficient-class-samples";
    case ErrorKind::length_mismatch: return "length-mismatch";
    case ErrorKind::empty_sample: return "empty-sample";
    case ErrorKind::io_error: return "io-error";
    case ErrorKind::config_error: return "config-error";
    }
    return "unknown";
}

/// Library-wide exception. `kind()` is stable and meant for programmatic checks;
/// the message carries context such as row numbers or segment indices.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

}  // namespace segdict
