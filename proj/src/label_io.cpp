#include "sgt/label_io.hpp"

#include <string>

#include "sgt/error.hpp"

namespace sgt {

using nlohmann::json;

json to_json(const LabeledExample& ex) {
  json tokens = json::array();
  for (const auto& t : ex.input.tokens) {
    tokens.push_back({{"text", t.text},
                      {"granularity", to_string(t.granularity)},
                      {"utterance", t.utterance_index},
                      {"position", t.position},
                      {"speaker", t.speaker},
                      {"separator", t.separator}});
  }
  json sgt = json::array();
  for (const auto tag : ex.y_sgt) sgt.push_back(tag.value);
  json spans = json::array();
  for (const auto& s : ex.spans) {
    spans.push_back({{"order", s.order},
                     {"tag", tag_name(TagLabel::inside(s.order))},
                     {"start", s.start},
                     {"length", s.length},
                     {"source_utterance", s.source_utterance},
                     {"text", splice_spans(std::span(&s, 1), ex.input.tokens)}});
  }
  return {{"tokens", tokens},
          {"speaker_width", ex.input.speaker_width},
          {"speaker_track", ex.input.speaker_track},
          {"y_sgt", sgt},
          {"y_gd", ex.y_gd},
          {"y_ged", ex.y_ged},
          {"spans", spans},
          {"reference", ex.reference}};
}

namespace {

Granularity granularity_from(const std::string& s) {
  for (auto g : {Granularity::CjkChar, Granularity::Word, Granularity::Number, Granularity::Punct}) {
    if (s == to_string(g)) return g;
  }
  throw Error(ErrorCode::CorruptFile, "unknown granularity '" + s + "'");
}

}  // namespace

LabeledExample labeled_example_from_json(const json& j) {
  try {
    LabeledExample ex;
    auto& in = ex.input;
    in.speaker_width = j.at("speaker_width").get<int>();
    in.speaker_track = j.at("speaker_track").get<std::vector<double>>();
    int last_utt = -2;
    for (const auto& jt : j.at("tokens")) {
      Token t;
      t.text = jt.at("text").get<std::string>();
      t.granularity = granularity_from(jt.at("granularity").get<std::string>());
      t.utterance_index = jt.at("utterance").get<int>();
      t.position = jt.at("position").get<int>();
      t.speaker = jt.at("speaker").get<int>();
      t.separator = jt.at("separator").get<bool>();
      const std::size_t i = in.tokens.size();
      if (t.separator) {
        in.separator_positions.push_back(i);
      } else if (t.utterance_index != last_utt) {
        in.regions.push_back({i, 0, t.utterance_index});
        last_utt = t.utterance_index;
      }
      if (!t.separator) ++in.regions.back().length;
      in.tokens.push_back(std::move(t));
    }
    for (const auto& v : j.at("y_sgt")) ex.y_sgt.push_back(TagLabel{v.get<std::uint8_t>()});
    ex.y_gd = j.at("y_gd").get<std::vector<std::uint8_t>>();
    ex.y_ged = j.at("y_ged").get<std::vector<std::uint8_t>>();
    for (const auto& js : j.at("spans")) {
      ex.spans.push_back({js.at("order").get<int>(), js.at("start").get<std::size_t>(),
                          js.at("length").get<std::size_t>(), js.at("source_utterance").get<int>()});
    }
    ex.reference = j.value("reference", std::string());
    const std::size_t m = in.tokens.size();
    if (ex.y_sgt.size() != m || ex.y_gd.size() != m || ex.y_ged.size() != m ||
        in.speaker_track.size() != m * static_cast<std::size_t>(in.speaker_width)) {
      throw Error(ErrorCode::CorruptFile, "label track lengths differ from token count");
    }
    return ex;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, e.what());
  }
}

void write_label_file(std::ostream& out, const std::vector<LabeledExample>& examples) {
  for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

std::vector<LabeledExample> read_label_file(std::istream& in) {
  std::vector<LabeledExample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(labeled_example_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptFile, e.what());
    }
  }
  return out;
}

json to_json(const MetricReport& r) {
  json bleu, rouge, restoration;
  for (const auto& [n, v] : r.bleu) bleu["B" + std::to_string(n)] = v;
  for (const auto& [k, v] : r.rouge) rouge["R" + k] = v;
  for (const auto& [n, p] : r.restoration) {
    restoration[std::to_string(n)] = {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
  }
  return {{"corpus_size", r.corpus_size},
          {"bleu", bleu},
          {"rouge", rouge},
          {"exact_match", r.exact_match},
          {"restoration", restoration}};
}

}  // namespace sgt
