#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "iasr/error.hpp"

namespace iasr {

class EditError : public Error {
public:
    using Error::Error;
};

/// One Locate–Reason–Modify product: replace the scalar range
/// [start, end) of the current text with `replacement`.
struct EditInstruction {
    std::size_t start = 0;  // Unicode scalar offsets, end exclusive
    std::size_t end = 0;
    std::string rationale;
    std::string replacement;  // empty means delete

    friend bool operator==(const EditInstruction&, const EditInstruction&) = default;
};

/// Splices `edit` into `text`. A splice that leaves two spaces side by side
/// at either seam has the pair collapsed to one. Throws EditError when the
/// span is out of range.
std::string modify(std::string_view text, const EditInstruction& edit);

}  // namespace iasr
