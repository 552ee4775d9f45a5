#include "sgt/corpus.hpp"

#include <algorithm>

#include "sgt/error.hpp"

namespace sgt {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t begin = 0;
  while (true) {
    const auto tab = line.find('\t', begin);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(begin));
      break;
    }
    fields.push_back(line.substr(begin, tab - begin));
    begin = tab + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\r' || c == '\n' || c == '\t'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<int> speaker_prefix(std::string_view field) {
  if (field.size() >= 2 && field[1] == ':') {
    if (field[0] == 'A') return 0;
    if (field[0] == 'B') return 1;
  }
  return std::nullopt;
}

}  // namespace

Utterance make_utterance(std::string_view text, int utterance_index, int speaker) {
  Utterance u;
  u.raw_text = std::string(text);
  u.speaker = speaker;
  u.tokens = tokenize(text);
  for (auto& t : u.tokens) {
    t.utterance_index = utterance_index;
    t.speaker = speaker;
  }
  return u;
}

Dialogue make_dialogue(const std::vector<std::string>& utterances, std::optional<std::string> reference) {
  Dialogue d;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    d.utterances.push_back(make_utterance(utterances[i], static_cast<int>(i), static_cast<int>(i % 2)));
  }
  d.reference = std::move(reference);
  return d;
}

Dialogue parse_dataset_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto fields = split_tabs(line);
  if (fields.size() < 2) {
    throw Error(ErrorCode::MalformedLine, "expected at least 2 tab-separated fields, got " +
                                              std::to_string(fields.size()));
  }
  const std::size_t n_utt = fields.size() - 1;

  bool all_prefixed = true;
  for (std::size_t i = 0; i < n_utt; ++i) all_prefixed = all_prefixed && speaker_prefix(trim(fields[i])).has_value();

  Dialogue d;
  for (std::size_t i = 0; i < n_utt; ++i) {
    std::string_view field = trim(fields[i]);
    int speaker = static_cast<int>(i % 2);
    if (all_prefixed) {
      speaker = *speaker_prefix(field);
      field = trim(field.substr(2));
    }
    if (field.empty()) throw Error(ErrorCode::EmptyField, "field " + std::to_string(i + 1) + " is empty");
    d.utterances.push_back(make_utterance(nfc(field), static_cast<int>(i), speaker));
  }
  const std::string_view ref = trim(fields.back());
  if (ref.empty()) throw Error(ErrorCode::EmptyField, "reference field is empty");
  d.reference = nfc(ref);
  return d;
}

CorpusReader::CorpusReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
}

std::optional<Dialogue> CorpusReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (trim(line).empty()) continue;
    if (!is_valid_utf8(line)) {
      throw Error(ErrorCode::EncodingFailure,
                  path_.string() + ":" + std::to_string(line_number_) + ": invalid UTF-8");
    }
    try {
      return parse_dataset_line(line);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MalformedLine && e.code() != ErrorCode::EmptyField) throw;
      skipped_.push_back({line_number_, e.what()});
    }
  }
  if (in_.bad()) throw Error(ErrorCode::IoFailure, "read error on " + path_.string());
  return std::nullopt;
}

LoadedCorpus load_corpus(const std::filesystem::path& path) {
  CorpusReader reader(path);
  LoadedCorpus corpus;
  while (auto d = reader.next()) corpus.dialogues.push_back(std::move(*d));
  corpus.skipped = reader.skipped();
  return corpus;
}

std::vector<std::string> load_connection_words(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto word = trim(line);
    if (word.empty() || word.front() == '#') continue;
    words.push_back(nfc(word));
  }
  return words;
}

void encode_speaker(int speaker, std::span<double> row) {
  std::fill(row.begin(), row.end(), 0.0);
  if (row.size() == 1) {
    row[0] = static_cast<double>(speaker % 2);
  } else {
    row[static_cast<std::size_t>(speaker) % row.size()] = 1.0;
  }
}

AssembledInput assemble_input(const Dialogue& d, std::span<const std::string> connection_words,
                              int speaker_width) {
  if (d.utterances.empty()) throw Error(ErrorCode::EmptyDialogue, "dialogue has no utterances");
  if (speaker_width < 1) throw Error(ErrorCode::InvalidArgument, "speaker_width must be >= 1");

  AssembledInput in;
  in.speaker_width = speaker_width;
  const auto width = static_cast<std::size_t>(speaker_width);

  auto push = [&](Token t, bool with_speaker) {
    const std::size_t row = in.tokens.size();
    in.speaker_track.resize((row + 1) * width, 0.0);
    if (with_speaker) encode_speaker(t.speaker, {in.speaker_track.data() + row * width, width});
    in.tokens.push_back(std::move(t));
  };

  Region prefix{0, 0, kConnectionUtterance};
  for (const auto& word : connection_words) {
    for (auto t : tokenize(word)) {
      t.utterance_index = kConnectionUtterance;
      t.position = static_cast<int>(prefix.length++);
      t.speaker = 0;
      push(std::move(t), false);
    }
  }
  if (prefix.length > 0) in.regions.push_back(prefix);

  for (std::size_t u = 0; u < d.utterances.size(); ++u) {
    if (u > 0) {
      Token sep;
      sep.text = std::string(kSeparatorText);
      sep.granularity = Granularity::Punct;
      sep.utterance_index = static_cast<int>(u);
      sep.position = 0;
      sep.separator = true;
      in.separator_positions.push_back(in.tokens.size());
      push(std::move(sep), false);
    }
    const auto& utt = d.utterances[u];
    Region r{in.tokens.size(), utt.tokens.size(), static_cast<int>(u)};
    for (std::size_t p = 0; p < utt.tokens.size(); ++p) {
      Token t = utt.tokens[p];
      t.utterance_index = static_cast<int>(u);
      t.position = static_cast<int>(p);
      t.speaker = utt.speaker;
      push(std::move(t), true);
    }
    in.regions.push_back(r);
  }
  return in;
}

}  // namespace sgt
