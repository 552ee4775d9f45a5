#include "sgt/text_units.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "sgt/error.hpp"

namespace sgt {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmptyField: return "EmptyField";
    case ErrorCode::EmptyDialogue: return "EmptyDialogue";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EncodingFailure: return "EncodingFailure";
    case ErrorCode::OrderOverflow: return "OrderOverflow";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

const char* to_string(Granularity g) {
  switch (g) {
    case Granularity::CjkChar: return "cjk";
    case Granularity::Word: return "word";
    case Granularity::Number: return "number";
    case Granularity::Punct: return "punct";
  }
  return "?";
}

namespace {

struct Range {
  char32_t lo, hi;
};

// Han ideographs (unified, extensions A-H, compatibility), kana, Hangul.
constexpr Range kCjkRanges[] = {
    {0x1100, 0x11FF},   {0x3040, 0x309F},   {0x30A0, 0x30FF},   {0x3130, 0x318F},
    {0x31F0, 0x31FF},   {0x3400, 0x4DBF},   {0x4E00, 0x9FFF},   {0xA960, 0xA97F},
    {0xAC00, 0xD7AF},   {0xD7B0, 0xD7FF},   {0xF900, 0xFAFF},   {0xFF66, 0xFF9F},
    {0x20000, 0x2A6DF}, {0x2A700, 0x2B73F}, {0x2B740, 0x2B81F}, {0x2B820, 0x2CEAF},
    {0x2CEB0, 0x2EBEF}, {0x2F800, 0x2FA1F}, {0x30000, 0x3134F}, {0x31350, 0x323AF},
};

}  // namespace

bool is_cjk_scalar(char32_t c) {
  for (const auto& r : kCjkRanges) {
    if (c < r.lo) return false;
    if (c <= r.hi) return true;
  }
  return false;
}

bool is_whitespace_scalar(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

Granularity classify_scalar(char32_t c) {
  const auto uc = static_cast<UChar32>(c);
  if (is_cjk_scalar(c)) return Granularity::CjkChar;
  if (u_charType(uc) == U_DECIMAL_DIGIT_NUMBER) return Granularity::Number;
  if (u_hasBinaryProperty(uc, UCHAR_ALPHABETIC)) return Granularity::Word;
  return Granularity::Punct;
}

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    out.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
  }
  return out;
}

void append_utf8(std::string& out, char32_t c) {
  std::uint8_t buf[U8_MAX_LENGTH];
  std::int32_t n = 0;
  UBool error = false;
  U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
  if (error) {
    U8_APPEND_UNSAFE(buf, n, 0xFFFD);
  }
  out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
}

bool is_valid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) return false;
  }
  return true;
}

std::string nfc(std::string_view text) {
  if (!is_valid_utf8(text)) throw Error(ErrorCode::EncodingFailure, "invalid UTF-8 input");
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorCode::EncodingFailure, u_errorName(status));
  const auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
  if (normalizer->isNormalized(source, status) && U_SUCCESS(status)) return std::string(text);
  status = U_ZERO_ERROR;
  const icu::UnicodeString normalized = normalizer->normalize(source, status);
  if (U_FAILURE(status)) throw Error(ErrorCode::EncodingFailure, u_errorName(status));
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  const auto scalars = decode_utf8(text);
  Granularity run_class = Granularity::Punct;
  bool in_run = false;  // open Word or Number run

  for (char32_t c : scalars) {
    if (is_whitespace_scalar(c)) {
      in_run = false;
      continue;
    }
    const Granularity g = classify_scalar(c);
    if ((g == Granularity::Word || g == Granularity::Number) && in_run && run_class == g) {
      append_utf8(tokens.back().text, c);
      continue;
    }
    Token t;
    append_utf8(t.text, c);
    t.granularity = g;
    t.position = static_cast<int>(tokens.size());
    tokens.push_back(std::move(t));
    in_run = g == Granularity::Word || g == Granularity::Number;
    run_class = g;
  }
  return tokens;
}

std::string detokenize(std::span<const Token> tokens) {
  std::string out;
  const Token* prev = nullptr;
  for (const auto& t : tokens) {
    if (prev != nullptr) {
      const bool prev_spaced = prev->granularity == Granularity::Word || prev->granularity == Granularity::Number;
      const bool cur_spaced = t.granularity == Granularity::Word || t.granularity == Granularity::Number;
      if (prev_spaced && cur_spaced) out.push_back(' ');
    }
    out += t.text;
    prev = &t;
  }
  return out;
}

std::string normalize_spacing(std::string_view text) { return detokenize(tokenize(text)); }

}  // namespace sgt
