#include "sgt/splicer.hpp"

#include "sgt/error.hpp"

namespace sgt {

RunMap labels_to_runs(std::span<const TagLabel> tags, const AssembledInput& input) {
  if (tags.size() != input.size()) throw Error(ErrorCode::LengthMismatch, "tag count differs from token count");
  RunMap runs;
  TagRun* open = nullptr;
  int open_order = -1;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const Token& tok = input.tokens[i];
    if (tags[i].is_outside() || tok.separator) {
      open = nullptr;
      continue;
    }
    const int k = tags[i].order();
    if (open != nullptr && open_order == k && tok.utterance_index == open->utterance_index) {
      ++open->length;
      continue;
    }
    auto& list = runs[k];
    list.push_back({i, 1, tok.utterance_index});
    open = &list.back();
    open_order = k;
  }
  return runs;
}

namespace {

double mean_probability(const TagRun& run, int order, const Matrix& probabilities) {
  const auto col = static_cast<Eigen::Index>(order + 1);
  double sum = 0.0;
  for (std::size_t i = run.start; i < run.start + run.length; ++i) sum += probabilities(static_cast<Eigen::Index>(i), col);
  return sum / static_cast<double>(run.length);
}

}  // namespace

std::vector<GlcsSpan> resolve_runs(const RunMap& runs, const DecodePolicy& policy, const Matrix* probabilities) {
  if (policy.duplicates == DuplicateResolution::HighestMeanScore && probabilities == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "highest-mean-score resolution needs tag probabilities");
  }
  std::vector<GlcsSpan> spans;
  for (const auto& [order, list] : runs) {
    if (list.empty()) continue;
    const TagRun* chosen = &list.back();  // runs are in H order
    if (policy.duplicates == DuplicateResolution::HighestMeanScore) {
      double best = -1.0;
      for (const auto& run : list) {
        const double score = mean_probability(run, order, *probabilities);
        if (score >= best) {
          best = score;
          chosen = &run;
        }
      }
    }
    spans.push_back({order, chosen->start, chosen->length, chosen->utterance_index});
  }
  return spans;
}

std::string splice(std::span<const GlcsSpan> spans, std::span<const Token> tokens) {
  return splice_spans(spans, tokens);
}

std::string decode_tags(std::span<const TagLabel> tags, const AssembledInput& input, const Dialogue& dialogue,
                        const DecodePolicy& policy, const Matrix* probabilities) {
  const auto spans = resolve_runs(labels_to_runs(tags, input), policy, probabilities);
  if (spans.empty()) {
    return policy.empty == EmptyFallback::CopyLastUtterance ? dialogue.current().raw_text : std::string();
  }
  return splice(spans, input.tokens);
}

std::string rewrite(const Dialogue& d, const TaggerParams& params, const DecodePolicy& policy,
                    std::span<const std::string> connection_words) {
  const auto input = assemble_input(d, connection_words, params.shape.speaker_width);
  const auto trace = forward(input, params, Mode::Infer);
  const auto tags = argmax_tags(trace.logits_sgt);
  if (policy.duplicates == DuplicateResolution::HighestMeanScore) {
    const Matrix probabilities = softmax_rows(trace.logits_sgt);
    return decode_tags(tags, input, d, policy, &probabilities);
  }
  return decode_tags(tags, input, d, policy);
}

}  // namespace sgt
