#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cbe::text {

// Decoded codepoint with its byte range in the source string. Invalid UTF-8
// bytes decode one at a time as U+FFFD so offsets always advance.
struct Codepoint {
  char32_t value;
  std::size_t begin;
  std::size_t end;
};

std::vector<Codepoint> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);

bool is_space(char32_t cp);
bool is_punct(char32_t cp);
// Base emoji codepoints: U+1F300-1F5FF, 1F600-1F64F, 1F680-1F6FF,
// 1F900-1F9FF and U+2600-27BF.
bool is_emoji_base(char32_t cp);
// U+FE0F, U+200D and the skin-tone modifiers.
bool is_emoji_component(char32_t cp);

char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view s);

// Emoji clusters in order of appearance, with the text they were cut from
// replaced by single spaces.
struct EmojiSplit {
  std::string remainder;
  std::vector<std::string> clusters;
};
EmojiSplit extract_emojis(std::string_view s);

std::vector<std::string_view> split_whitespace(std::string_view s);

struct TokenSpan {
  std::string token;
  std::size_t begin;  // byte offsets into the source text
  std::size_t end;
};

// Splits on whitespace and punctuation. '#' survives when it opens a token
// followed by a word character; '-' survives between two word characters.
std::vector<TokenSpan> tokenize_with_spans(std::string_view s);
std::vector<std::string> tokenize(std::string_view s);

}  // namespace cbe::text
