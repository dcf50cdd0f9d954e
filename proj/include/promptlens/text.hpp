#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace promptlens {

/// Half-open byte range [begin, end) into a UTF-8 string.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const CharSpan&) const = default;
};

/// One maskable word of a prompt.
struct WordToken {
  std::size_t index = 0;  // ordinal among maskable words
  std::string text;
  CharSpan span;
  bool is_stopword = false;

  bool operator==(const WordToken&) const = default;
};

using StopwordSet = std::unordered_set<std::string>;

/// The bundled English stopword list (lowercase).
const StopwordSet& default_stopwords();

/// Splits `prompt` into maskable words.
///
/// A word is a maximal run of letters, digits and combining marks; an apostrophe
/// (' or U+2019) or hyphen (- or U+2010) joins two such runs when it sits directly
/// between them, so "don't" and "state-of-the-art" are single words. Everything else,
/// punctuation and whitespace included, separates words and is never masked.
/// `is_stopword` is set when the lowercased word is in `stopwords`.
std::vector<WordToken> tokenize(std::string_view prompt, const StopwordSet& stopwords);

/// Same word rule with no stopword tagging.
std::vector<WordToken> tokenize(std::string_view prompt);

/// Number of words under the tokenize() rule.
std::size_t count_words(std::string_view text);

/// Lowercases ASCII letters and, through ICU, any other cased code point.
std::string to_lower(std::string_view text);

/// One replaced region of a masked prompt.
struct MaskedRegion {
  CharSpan source;    // region of the source prompt that was replaced
  CharSpan rendered;  // where the glyph sits in the rendered text
};

struct MaskedVariant {
  std::string source_prompt;
  std::set<std::size_t> masked_indices;
  std::string rendered;
  std::vector<MaskedRegion> regions;  // ascending, one per glyph occurrence
};

/// Replaces each selected token in place with `glyph`; all other bytes are preserved.
/// Throws InvalidArgument on an empty selection, an out-of-range index, or a glyph that
/// is empty or contains whitespace.
MaskedVariant mask(std::string_view prompt, const std::vector<WordToken>& tokens,
                   const std::set<std::size_t>& indices, std::string_view glyph = "_");

/// Half-open range of token ordinals.
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const TokenRange&) const = default;
};

/// Masks tokens [range.begin, range.end) and collapses the words together with the text
/// between them into a single glyph: mask_span("Give a detailed answer", t, {1, 4}) gives
/// "Give _".
MaskedVariant mask_span(std::string_view prompt, const std::vector<WordToken>& tokens,
                        TokenRange range, std::string_view glyph = "_");

/// Puts the original text back at every glyph position; reproduces source_prompt.
std::string unmask(const MaskedVariant& variant);

}  // namespace promptlens
