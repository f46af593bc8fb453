#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace iasr::utf8 {

/// One decoded Unicode scalar value and its byte range in the source.
struct Scalar {
    char32_t value;
    std::size_t begin;
    std::size_t end;
};

/// Decodes UTF-8. Ill-formed sequences decode to U+FFFD one byte at a time.
std::vector<Scalar> decode(std::string_view text);

void append(std::string& out, char32_t cp);
std::string encode(char32_t cp);

/// Number of scalar values in `text`.
std::size_t length(std::string_view text);

/// Byte offset of the `index`-th scalar (index == length gives text.size()).
std::size_t byte_offset(std::string_view text, std::size_t index);

/// Scalar index of a byte offset that lies on a scalar boundary.
std::size_t scalar_index(std::string_view text, std::size_t byte_offset);

}  // namespace iasr::utf8
