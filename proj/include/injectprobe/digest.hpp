#pragma once

#include <string>
#include <string_view>

namespace injectprobe {

/// SHA-256 of `data` truncated to 128 bits, rendered as 32 lowercase hex
/// characters. Stable across platforms; used for case and config ids.
std::string digest_hex128(std::string_view data);

/// Shortest round-trip decimal rendering of a double (std::to_chars), so the
/// same value always serializes to the same bytes on every platform.
std::string format_double(double value);

}  // namespace injectprobe
