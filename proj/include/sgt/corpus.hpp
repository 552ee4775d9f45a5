#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgt/text_units.hpp"

namespace sgt {

struct Utterance {
  std::vector<Token> tokens;
  int speaker = 0;
  std::string raw_text;
};

struct Dialogue {
  std::vector<Utterance> utterances;  // last one is the incomplete utterance
  std::optional<std::string> reference;

  const Utterance& current() const { return utterances.back(); }
};

// Builds an utterance whose tokens carry utterance_index/speaker.
Utterance make_utterance(std::string_view text, int utterance_index, int speaker);

// Convenience for tests and tools: alternating speakers from 0.
Dialogue make_dialogue(const std::vector<std::string>& utterances,
                       std::optional<std::string> reference = std::nullopt);

// A contiguous block of H that can be matched against: the connection-word
// prefix or one utterance. Separators are never inside a region.
struct Region {
  std::size_t start = 0;
  std::size_t length = 0;
  int utterance_index = 0;
};

inline constexpr std::string_view kSeparatorText = "[SEP]";

struct AssembledInput {
  std::vector<Token> tokens;
  int speaker_width = 1;
  std::vector<double> speaker_track;  // tokens.size() x speaker_width, row-major
  std::vector<std::size_t> separator_positions;
  std::vector<Region> regions;  // in H order

  std::size_t size() const { return tokens.size(); }
  std::span<const double> speaker_row(std::size_t i) const {
    return {speaker_track.data() + i * static_cast<std::size_t>(speaker_width),
            static_cast<std::size_t>(speaker_width)};
  }
  // Region holding the last utterance U_n.
  const Region& current_region() const { return regions.back(); }
};

// Tab-separated: history utterances..., reference (last field).
// Fields may carry "A:"/"B:" prefixes; they set speakers only when every
// utterance field is prefixed. Text is NFC-normalized.
Dialogue parse_dataset_line(std::string_view line);

struct SkippedLine {
  std::size_t line_number = 0;  // 1-based
  std::string reason;
};

// Single-consumer line stream over a corpus file.
class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& path);

  std::optional<Dialogue> next();

  const std::vector<SkippedLine>& skipped() const { return skipped_; }
  std::size_t lines_read() const { return line_number_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_number_ = 0;
  std::vector<SkippedLine> skipped_;
};

struct LoadedCorpus {
  std::vector<Dialogue> dialogues;
  std::vector<SkippedLine> skipped;
};

LoadedCorpus load_corpus(const std::filesystem::path& path);

// One word per line; '#' comment lines and blank lines are ignored.
std::vector<std::string> load_connection_words(const std::filesystem::path& path);

// Indicator encoding: width 1 -> speaker mod 2; width S >= 2 -> one-hot at
// speaker mod S.
void encode_speaker(int speaker, std::span<double> row);

AssembledInput assemble_input(const Dialogue& d, std::span<const std::string> connection_words,
                              int speaker_width = 1);

}  // namespace sgt
