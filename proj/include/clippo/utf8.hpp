#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clippo {

// Decodes UTF-8; ill-formed sequences become U+FFFD, one per offending byte.
std::u32string decode_utf8(std::string_view bytes);

std::string encode_utf8(std::u32string_view text);

}  // namespace clippo
