#ifndef KAQA_TEXT_H_
#define KAQA_TEXT_H_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace kaqa {

enum class TokenizerMode {
  kWhitespace,  // split on whitespace and punctuation
  kChar,        // one token per non-space code point
};

TokenizerMode ParseTokenizerMode(std::string_view name);
std::string_view TokenizerModeName(TokenizerMode mode);

// A token with code-point offsets into the source text. [start, end).
struct TokenSpan {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const TokenSpan&) const = default;
};

std::vector<TokenSpan> Tokenize(std::string_view text,
                                TokenizerMode mode = TokenizerMode::kWhitespace);

// ASCII case folding; non-ASCII bytes pass through unchanged.
std::string CaseFold(std::string_view s);

// Joins token texts the way aliases are matched under `mode`: a single space
// for whitespace tokens, nothing for char tokens.
std::string JoinTokens(const std::vector<TokenSpan>& tokens, std::size_t begin,
                       std::size_t end, TokenizerMode mode);

// Substring of `text` covering code points [start, end).
std::string SubstringByCodePoints(std::string_view text, std::size_t start,
                                  std::size_t end);

std::vector<char32_t> DecodeUtf8(std::string_view s);
void AppendUtf8(char32_t cp, std::string* out);

}  // namespace kaqa

#endif  // KAQA_TEXT_H_
