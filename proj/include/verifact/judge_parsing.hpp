#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace verifact {

/// Final YES/NO verdict in free-form judge output. Uppercase YES/NO words
/// take precedence (the last one wins); otherwise a leading "yes"/"no"
/// (any case) is accepted.
std::optional<bool> parse_yes_no(std::string_view text);

/// Contents of the first markdown code fence. When the prompt itself opened
/// the fence, a completion containing only the closing fence is accepted and
/// everything before it is returned.
std::optional<std::string> extract_fenced(std::string_view text);

}  // namespace verifact
