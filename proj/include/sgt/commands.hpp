#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sgt/splicer.hpp"
#include "sgt/tagger.hpp"

namespace sgt::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path dev_corpus;
  std::filesystem::path connection_words;
  std::filesystem::path model;
  std::filesystem::path out;
  std::filesystem::path predictions;

  std::uint64_t seed = 13;
  int tag_classes = kDefaultTagClasses;
  int speaker_width = 1;
  EncoderConfig encoder;
  TrainConfig train;
  DecodePolicy policy;
  bool gold_inject = false;
  int workers = 1;

  int warmup = 10;
  int repetitions = 1;
  bool decode_only = false;

  ModelShape shape() const { return {encoder, tag_classes, speaker_width}; }
  // Stable digest of every setting, recorded in reports.
  std::string hash() const;
};

// Each command returns an ExitCode; diagnostics go to `err`, reports to `out`.
int cmd_build_labels(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_rewrite(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_roundtrip(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err);

// Coverage of a label build.
struct LabelBuild {
  std::vector<LabeledExample> examples;
  std::size_t total = 0;
  std::size_t skipped_lines = 0;
  std::vector<std::size_t> uncoverable;  // dialogue indices
  std::vector<std::size_t> fragment_histogram;  // [k] = examples with k spans
  double coverage() const { return total == 0 ? 0.0 : static_cast<double>(examples.size()) / static_cast<double>(total); }
};

LabelBuild build_labels(const std::vector<Dialogue>& dialogues, const LabelConfig& config, int workers = 1);

struct BenchReport {
  std::size_t examples = 0;
  std::size_t samples = 0;
  double mean_us = 0.0;
  double median_us = 0.0;
  double p95_us = 0.0;
  double tokens_per_second = 0.0;
};

// Single-example latency, no batching. With params == nullptr the timed
// region is decode-only: argmax over gold one-hot logits plus splicing.
BenchReport run_bench(const std::vector<Dialogue>& dialogues, const TaggerParams* params, const RunConfig& config);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

}  // namespace sgt::cli
