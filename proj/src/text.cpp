#include "promptlens/text.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cctype>

#include "promptlens/error.hpp"

namespace promptlens {
namespace {

struct CodePoint {
  UChar32 value;
  std::size_t begin;
  std::size_t end;
};

// Decodes UTF-8; malformed sequences come back as U_SENTINEL and act as separators.
std::vector<CodePoint> decode(std::string_view text) {
  std::vector<CodePoint> out;
  out.reserve(text.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(bytes, i, length, c);
    out.push_back({c, static_cast<std::size_t>(start), static_cast<std::size_t>(i)});
  }
  return out;
}

bool is_word_char(UChar32 c) {
  if (c < 0) return false;
  if (c < 0x80) return std::isalnum(static_cast<unsigned char>(c)) != 0;
  if (u_hasBinaryProperty(c, UCHAR_ALPHABETIC)) return true;
  switch (u_charType(c)) {
    case U_DECIMAL_DIGIT_NUMBER:
    case U_NON_SPACING_MARK:
    case U_COMBINING_SPACING_MARK:
    case U_ENCLOSING_MARK:
      return true;
    default:
      return false;
  }
}

bool is_connector(UChar32 c) {
  return c == U'\'' || c == 0x2019 || c == U'-' || c == 0x2010;
}

bool has_whitespace(std::string_view s) {
  for (const auto& cp : decode(s)) {
    if (cp.value < 0 || u_isUWhiteSpace(cp.value)) return true;
  }
  return false;
}

void check_glyph(std::string_view glyph) {
  if (glyph.empty()) throw InvalidArgument("mask glyph must not be empty");
  if (has_whitespace(glyph)) throw InvalidArgument("mask glyph must not contain whitespace");
}

std::string stopword_key(std::string_view word) {
  std::string key = to_lower(word);
  // Typographic apostrophe folds onto ASCII so "don’t" matches "don't".
  static constexpr std::string_view kCurly = "\xE2\x80\x99";
  for (auto pos = key.find(kCurly); pos != std::string::npos; pos = key.find(kCurly, pos)) {
    key.replace(pos, kCurly.size(), "'");
  }
  return key;
}

MaskedVariant render(std::string_view prompt, const std::vector<CharSpan>& replaced,
                     std::string_view glyph, std::set<std::size_t> indices) {
  MaskedVariant out;
  out.source_prompt = std::string(prompt);
  out.masked_indices = std::move(indices);
  std::size_t cursor = 0;
  for (const auto& span : replaced) {
    out.rendered.append(prompt.substr(cursor, span.begin - cursor));
    const std::size_t at = out.rendered.size();
    out.rendered.append(glyph);
    out.regions.push_back({span, {at, at + glyph.size()}});
    cursor = span.end;
  }
  out.rendered.append(prompt.substr(cursor));
  return out;
}

}  // namespace

std::string to_lower(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (const auto& cp : decode(text)) {
    if (cp.value < 0x80 && cp.value >= 0) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(cp.value))));
    } else if (cp.value < 0) {
      out.append(text.substr(cp.begin, cp.end - cp.begin));
    } else {
      char buf[U8_MAX_LENGTH];
      int32_t n = 0;
      UBool error = false;
      U8_APPEND(reinterpret_cast<uint8_t*>(buf), n, U8_MAX_LENGTH, u_tolower(cp.value), error);
      if (error) {
        out.append(text.substr(cp.begin, cp.end - cp.begin));
        continue;
      }
      out.append(buf, static_cast<std::size_t>(n));
    }
  }
  return out;
}

std::vector<WordToken> tokenize(std::string_view prompt, const StopwordSet& stopwords) {
  const auto cps = decode(prompt);
  std::vector<WordToken> tokens;
  std::size_t i = 0;
  while (i < cps.size()) {
    if (!is_word_char(cps[i].value)) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    while (i < cps.size()) {
      if (is_word_char(cps[i].value)) {
        ++i;
      } else if (is_connector(cps[i].value) && i + 1 < cps.size() &&
                 is_word_char(cps[i + 1].value)) {
        i += 2;
      } else {
        break;
      }
    }
    WordToken token;
    token.index = tokens.size();
    token.span = {cps[first].begin, cps[i - 1].end};
    token.text = std::string(prompt.substr(token.span.begin, token.span.size()));
    token.is_stopword = !stopwords.empty() && stopwords.contains(stopword_key(token.text));
    tokens.push_back(std::move(token));
  }
  return tokens;
}

std::vector<WordToken> tokenize(std::string_view prompt) {
  static const StopwordSet kNone;
  return tokenize(prompt, kNone);
}

std::size_t count_words(std::string_view text) { return tokenize(text).size(); }

MaskedVariant mask(std::string_view prompt, const std::vector<WordToken>& tokens,
                   const std::set<std::size_t>& indices, std::string_view glyph) {
  check_glyph(glyph);
  if (indices.empty()) throw InvalidArgument("mask requires at least one token index");
  std::vector<CharSpan> spans;
  spans.reserve(indices.size());
  for (const std::size_t index : indices) {
    if (index >= tokens.size()) {
      throw InvalidArgument("token index " + std::to_string(index) + " out of range (" +
                            std::to_string(tokens.size()) + " tokens)");
    }
    const CharSpan span = tokens[index].span;
    if (span.end > prompt.size() || span.begin >= span.end) {
      throw InvalidArgument("token " + std::to_string(index) + " does not fit the prompt");
    }
    spans.push_back(span);
  }
  // std::set iterates in index order, and token spans are ordered by index.
  return render(prompt, spans, glyph, indices);
}

MaskedVariant mask_span(std::string_view prompt, const std::vector<WordToken>& tokens,
                        TokenRange range, std::string_view glyph) {
  check_glyph(glyph);
  if (range.begin >= range.end) throw InvalidArgument("span range must not be empty");
  if (range.end > tokens.size()) {
    throw InvalidArgument("span range [" + std::to_string(range.begin) + ", " +
                          std::to_string(range.end) + ") exceeds " +
                          std::to_string(tokens.size()) + " tokens");
  }
  const CharSpan span{tokens[range.begin].span.begin, tokens[range.end - 1].span.end};
  if (span.end > prompt.size()) throw InvalidArgument("token range does not fit the prompt");
  std::set<std::size_t> indices;
  for (std::size_t k = range.begin; k < range.end; ++k) indices.insert(k);
  return render(prompt, {span}, glyph, std::move(indices));
}

std::string unmask(const MaskedVariant& variant) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& region : variant.regions) {
    out.append(variant.rendered, cursor, region.rendered.begin - cursor);
    out.append(variant.source_prompt, region.source.begin, region.source.size());
    cursor = region.rendered.end;
  }
  out.append(variant.rendered, cursor);
  return out;
}

}  // namespace promptlens
