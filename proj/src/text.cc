#include "kaqa/text.h"

#include "kaqa/error.h"

namespace kaqa {
namespace {

bool IsSpace(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200B;
  }
}

bool IsPunct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
           (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
  }
  return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 ||
         c == 0xBB || c == 0xBF || (c >= 0x2010 && c <= 0x2027) ||
         (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003) ||
         (c >= 0x3008 && c <= 0x3011) || (c >= 0x3014 && c <= 0x301F) ||
         (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
         (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65);
}

}  // namespace

TokenizerMode ParseTokenizerMode(std::string_view name) {
  if (name == "whitespace") return TokenizerMode::kWhitespace;
  if (name == "char") return TokenizerMode::kChar;
  throw UsageError("unknown tokenizer mode '" + std::string(name) +
                   "' (expected whitespace or char)");
}

std::string_view TokenizerModeName(TokenizerMode mode) {
  return mode == TokenizerMode::kChar ? "char" : "whitespace";
}

std::vector<char32_t> DecodeUtf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int extra;
    char32_t cp;
    if (b0 < 0x80) {
      extra = 0;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      extra = 1;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      extra = 2;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      extra = 3;
      cp = b0 & 0x07;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (i + extra >= s.size()) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

void AppendUtf8(char32_t cp, std::string* out) {
  if (cp < 0x80) {
    out->push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out->push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out->push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out->push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out->push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out->push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out->push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out->push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out->push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out->push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::vector<TokenSpan> Tokenize(std::string_view text, TokenizerMode mode) {
  const std::vector<char32_t> cps = DecodeUtf8(text);
  std::vector<TokenSpan> tokens;
  if (mode == TokenizerMode::kChar) {
    for (std::size_t i = 0; i < cps.size(); ++i) {
      if (IsSpace(cps[i])) continue;
      TokenSpan t;
      AppendUtf8(cps[i], &t.text);
      t.start = i;
      t.end = i + 1;
      tokens.push_back(std::move(t));
    }
    return tokens;
  }
  std::size_t i = 0;
  while (i < cps.size()) {
    if (IsSpace(cps[i]) || IsPunct(cps[i])) {
      ++i;
      continue;
    }
    TokenSpan t;
    t.start = i;
    while (i < cps.size() && !IsSpace(cps[i]) && !IsPunct(cps[i])) {
      AppendUtf8(cps[i], &t.text);
      ++i;
    }
    t.end = i;
    tokens.push_back(std::move(t));
  }
  return tokens;
}

std::string CaseFold(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string JoinTokens(const std::vector<TokenSpan>& tokens, std::size_t begin,
                       std::size_t end, TokenizerMode mode) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin && mode == TokenizerMode::kWhitespace) out.push_back(' ');
    out += tokens[i].text;
  }
  return out;
}

std::string SubstringByCodePoints(std::string_view text, std::size_t start,
                                  std::size_t end) {
  const std::vector<char32_t> cps = DecodeUtf8(text);
  std::string out;
  for (std::size_t i = start; i < end && i < cps.size(); ++i) {
    AppendUtf8(cps[i], &out);
  }
  return out;
}

}  // namespace kaqa
