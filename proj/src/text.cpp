#include "cbe/text.hpp"

namespace cbe::text {

std::vector<Codepoint> decode_utf8(std::string_view s) {
  std::vector<Codepoint> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (!ok) {
      out.push_back({U'�', i, i + 1});
      ++i;
      continue;
    }
    out.push_back({cp, i, i + len});
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_space(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punct(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60 && cp != U'_') || (cp >= 0x7B && cp <= 0x7E);
  }
  if (cp >= 0xA1 && cp <= 0xBF) {
    // Latin-1 symbols, except the superscripts and fractions.
    return cp != 0xAA && cp != 0xB2 && cp != 0xB3 && cp != 0xB9 && cp != 0xBA &&
           !(cp >= 0xBC && cp <= 0xBE);
  }
  return cp == 0xD7 || cp == 0xF7 || (cp >= 0x2010 && cp <= 0x205E) ||
         (cp >= 0x3001 && cp <= 0x303F) || cp == 0xFFFD;
}

bool is_emoji_base(char32_t cp) {
  return (cp >= 0x1F300 && cp <= 0x1F5FF) || (cp >= 0x1F600 && cp <= 0x1F64F) ||
         (cp >= 0x1F680 && cp <= 0x1F6FF) || (cp >= 0x1F900 && cp <= 0x1F9FF) ||
         (cp >= 0x2600 && cp <= 0x27BF);
}

bool is_emoji_component(char32_t cp) {
  return cp == 0xFE0F || cp == 0x200D || (cp >= 0x1F3FB && cp <= 0x1F3FF);
}

char32_t to_lower(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 32;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 32;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return U'i';
    if (cp == 0x178) return 0xFF;
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) {
      return (cp % 2 == 1) ? cp + 1 : cp;
    }
    if (cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const auto& c : decode_utf8(s)) {
    if (c.value == U'�' && c.end - c.begin == 1 &&
        static_cast<unsigned char>(s[c.begin]) >= 0x80) {
      out.push_back(s[c.begin]);  // keep invalid bytes untouched
      continue;
    }
    append_utf8(out, to_lower(c.value));
  }
  return out;
}

EmojiSplit extract_emojis(std::string_view s) {
  EmojiSplit split;
  const auto cps = decode_utf8(s);
  std::size_t i = 0;
  std::size_t copied = 0;
  while (i < cps.size()) {
    const char32_t cp = cps[i].value;
    if (!is_emoji_base(cp) && !is_emoji_component(cp)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_emoji_base(cp)) {
      while (j < cps.size()) {
        const char32_t next = cps[j].value;
        if (next == 0xFE0F || (next >= 0x1F3FB && next <= 0x1F3FF)) {
          ++j;
        } else if (next == 0x200D && j + 1 < cps.size() && is_emoji_base(cps[j + 1].value)) {
          j += 2;
        } else {
          break;
        }
      }
    }
    split.remainder.append(s.substr(copied, cps[i].begin - copied));
    split.remainder.push_back(' ');
    split.clusters.emplace_back(s.substr(cps[i].begin, cps[j - 1].end - cps[i].begin));
    copied = cps[j - 1].end;
    i = j;
  }
  split.remainder.append(s.substr(copied));
  return split;
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = std::string_view::npos;
  for (const auto& c : decode_utf8(s)) {
    if (is_space(c.value)) {
      if (start != std::string_view::npos) {
        out.push_back(s.substr(start, c.begin - start));
        start = std::string_view::npos;
      }
    } else if (start == std::string_view::npos) {
      start = c.begin;
    }
  }
  if (start != std::string_view::npos) out.push_back(s.substr(start));
  return out;
}

std::vector<TokenSpan> tokenize_with_spans(std::string_view s) {
  const auto cps = decode_utf8(s);
  auto is_word = [&](std::size_t k) {
    return k < cps.size() && !is_space(cps[k].value) && !is_punct(cps[k].value);
  };
  std::vector<TokenSpan> out;
  std::size_t begin = 0;
  bool open = false;
  auto close = [&](std::size_t end) {
    if (open && end > begin) {
      out.push_back({std::string(s.substr(begin, end - begin)), begin, end});
    }
    open = false;
  };
  for (std::size_t k = 0; k < cps.size(); ++k) {
    const char32_t cp = cps[k].value;
    if (is_word(k)) {
      if (!open) {
        open = true;
        begin = cps[k].begin;
      }
    } else if (cp == U'#' && !open && is_word(k + 1)) {
      open = true;
      begin = cps[k].begin;
    } else if (cp == U'-' && open && k > 0 && is_word(k - 1) && is_word(k + 1)) {
      // hyphen inside a word
    } else {
      close(cps[k].begin);
    }
  }
  close(s.size());
  return out;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  for (auto& t : tokenize_with_spans(s)) out.push_back(std::move(t.token));
  return out;
}

}  // namespace cbe::text
