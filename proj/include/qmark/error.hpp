#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qmark {

enum class Errc {
    invalid_argument,
    degenerate_tensor,
    degenerate_activation_profile,
    pool_shortfall,
    signature_length,
    bad_magic,
    unsupported_version,
    bad_header,
    truncated_payload,
    shape_mismatch,
    hash_mismatch,
    wrong_original_bundle,
    malformed_key,
    io_error,
};

/// Stable machine-readable name, used in CLI error JSON.
std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace qmark
