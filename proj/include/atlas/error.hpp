#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace atlas {

enum class ErrorCode {
    invalid_argument,
    duplicate_name,
    reserved_character,
    missing_price,
    unknown_model,
    unknown_tool,
    unknown_pair,
    dimension_mismatch,
    non_finite,
    too_few_points,
    no_observations,
    empty_pool,
    empty_query,
    encoder_failure,
    http_error,
    timeout,
    parse_error,
    render_error,
    budget_exhausted,
    sandbox_disabled,
    schema_error,
    io_error,
    out_of_range,
    unknown_matcher,
    empty_batch,
    missing_dependency,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::duplicate_name: return "duplicate_name";
    case ErrorCode::reserved_character: return "reserved_character";
    case ErrorCode::missing_price: return "missing_price";
    case ErrorCode::unknown_model: return "unknown_model";
    case ErrorCode::unknown_tool: return "unknown_tool";
    case ErrorCode::unknown_pair: return "unknown_pair";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::too_few_points: return "too_few_points";
    case ErrorCode::no_observations: return "no_observations";
    case ErrorCode::empty_pool: return "empty_pool";
    case ErrorCode::empty_query: return "empty_query";
    case ErrorCode::encoder_failure: return "encoder_failure";
    case ErrorCode::http_error: return "http_error";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::render_error: return "render_error";
    case ErrorCode::budget_exhausted: return "budget_exhausted";
    case ErrorCode::sandbox_disabled: return "sandbox_disabled";
    case ErrorCode::schema_error: return "schema_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::unknown_matcher: return "unknown_matcher";
    case ErrorCode::empty_batch: return "empty_batch";
    case ErrorCode::missing_dependency: return "missing_dependency";
    }
    return "unknown";
}

/// Library-wide exception. `code()` identifies the failure class so callers
/// can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace atlas
