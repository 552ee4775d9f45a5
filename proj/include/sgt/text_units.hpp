#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sgt {

enum class Granularity : std::uint8_t { CjkChar, Word, Number, Punct };

const char* to_string(Granularity g);

inline constexpr int kConnectionUtterance = -1;

struct Token {
  std::string text;  // UTF-8
  Granularity granularity = Granularity::Punct;
  int utterance_index = 0;  // kConnectionUtterance for the connection-word prefix
  int position = 0;         // position within its utterance (or within the prefix)
  int speaker = 0;
  bool separator = false;  // [SEP] sentinel inserted between utterances

  // Matching identity: same surface text within the same granularity class.
  bool same_unit(const Token& other) const {
    return granularity == other.granularity && text == other.text;
  }
};

// Classification of one scalar value. Total: whitespace is reported as Punct
// here; tokenize() drops whitespace before classifying.
Granularity classify_scalar(char32_t c);

bool is_cjk_scalar(char32_t c);
bool is_whitespace_scalar(char32_t c);

// Splits UTF-8 text into mixed-granularity tokens. Invalid UTF-8 bytes are
// replaced by U+FFFD (use is_valid_utf8 to reject such input upstream).
std::vector<Token> tokenize(std::string_view text);

// Joins tokens, inserting one space only between two Word/Number tokens.
std::string detokenize(std::span<const Token> tokens);

// detokenize(tokenize(text)).
std::string normalize_spacing(std::string_view text);

bool is_valid_utf8(std::string_view text);

// NFC normalization. Throws Error(EncodingFailure) on invalid UTF-8.
std::string nfc(std::string_view text);

std::vector<char32_t> decode_utf8(std::string_view text);
void append_utf8(std::string& out, char32_t c);

}  // namespace sgt
