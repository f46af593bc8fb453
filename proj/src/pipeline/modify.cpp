#include "iasr/edit.hpp"
#include "iasr/utf8.hpp"

namespace iasr {

namespace {

void collapse_seam(std::string& s, std::size_t seam) {
    while (seam > 0 && seam < s.size() && s[seam - 1] == ' ' && s[seam] == ' ') {
        s.erase(seam, 1);
    }
}

}  // namespace

std::string modify(std::string_view text, const EditInstruction& edit) {
    const std::size_t len = utf8::length(text);
    if (edit.start > edit.end || edit.end > len) {
        throw EditError("edit span (" + std::to_string(edit.start) + ", " + std::to_string(edit.end) +
                        ") is out of range for a text of " + std::to_string(len) + " characters");
    }
    if (edit.start == edit.end && edit.replacement.empty()) return std::string(text);

    const std::size_t begin = utf8::byte_offset(text, edit.start);
    const std::size_t end = utf8::byte_offset(text, edit.end);
    std::string out;
    out.reserve(text.size() + edit.replacement.size());
    out.append(text.substr(0, begin));
    out.append(edit.replacement);
    const std::size_t right_seam = out.size();
    out.append(text.substr(end));

    collapse_seam(out, right_seam);
    collapse_seam(out, begin);
    return out;
}

}  // namespace iasr
