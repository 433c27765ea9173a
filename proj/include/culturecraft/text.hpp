#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace culturecraft::text {

std::string trim(std::string_view s);
std::string lower(std::string_view s);
/// Trim, ASCII case-fold and collapse internal whitespace runs to one space.
std::string canonicalize(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);
/// Non-empty lines with list markers ("- ", "* ", "1. ", "1) ") removed.
std::vector<std::string> parse_bullets(std::string_view s);

std::size_t word_count(std::string_view s);
/// Whitespace word count scaled by 4/3, rounded up.
std::size_t estimate_tokens(std::string_view s);

/// Cuts `s` to at most `max_bytes` without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool contains(std::string_view haystack, std::string_view needle);
bool icontains(std::string_view haystack, std::string_view needle);

/// Lower-case slug of ASCII alphanumerics joined by underscores.
std::string slug(std::string_view s);
/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s);

}  // namespace culturecraft::text
