#include "sgt/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "sgt/error.hpp"
#include "sgt/label_io.hpp"
#include "sgt/metrics.hpp"

namespace sgt::cli {

namespace {

// Runs fn(i) for i in [0, n) over `workers` threads; callers write into
// preallocated slots so output order never depends on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::IoFailure:
    case ErrorCode::EncodingFailure:
    case ErrorCode::CorruptFile:
    case ErrorCode::VersionMismatch:
      return kIo;
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteLoss:
      return kNumeric;
    default:
      return kUsage;
  }
}

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

void require(const std::filesystem::path& p, const char* flag) {
  if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string(flag) + " is required");
}

std::vector<std::string> connection_words(const RunConfig& c) {
  return c.connection_words.empty() ? std::vector<std::string>{} : load_connection_words(c.connection_words);
}

LabelConfig label_config(const RunConfig& c) { return {connection_words(c), c.speaker_width, c.tag_classes}; }

std::vector<Dialogue> load_dialogues(const std::filesystem::path& path) {
  auto corpus = load_corpus(path);
  for (const auto& s : corpus.skipped) spdlog::warn("{}:{}: skipped: {}", path.string(), s.line_number, s.reason);
  return std::move(corpus.dialogues);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string RunConfig::hash() const {
  std::ostringstream s;
  s << corpus << dev_corpus << connection_words << model << seed << tag_classes << speaker_width
    << encoder.embedding_dim << encoder.context_window << encoder.hidden_dim << encoder.vocab_buckets
    << encoder.max_positions << train.learning_rate << train.dropout_rate << train.epochs << train.batch_size
    << static_cast<int>(policy.duplicates) << static_cast<int>(policy.empty) << gold_inject;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s.str())));
  return buf;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

LabelBuild build_labels(const std::vector<Dialogue>& dialogues, const LabelConfig& config, int workers) {
  std::vector<LabelOutcome> outcomes(dialogues.size());
  parallel_for(dialogues.size(), workers, [&](std::size_t i) { outcomes[i] = build_labeled_example(dialogues[i], config); });
  LabelBuild build;
  build.total = dialogues.size();
  build.fragment_histogram.assign(static_cast<std::size_t>(config.tag_classes), 0);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].example) {
      build.uncoverable.push_back(i);
      continue;
    }
    ++build.fragment_histogram[outcomes[i].example->spans.size()];
    build.examples.push_back(std::move(*outcomes[i].example));
  }
  return build;
}

int cmd_build_labels(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(config.corpus, "--corpus");
    require(config.out, "--out");
    auto corpus = load_corpus(config.corpus);
    const auto build = build_labels(corpus.dialogues, label_config(config), config.workers);
    std::ofstream file(config.out, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorCode::IoFailure, "cannot write " + config.out.string());
    write_label_file(file, build.examples);
    if (!file) throw Error(ErrorCode::IoFailure, "write failed for " + config.out.string());

    for (const auto& s : corpus.skipped) err << "skipped line " << s.line_number << ": " << s.reason << '\n';
    for (auto i : build.uncoverable) spdlog::warn("dialogue {} is not coverable by history fragments", i + 1);
    out << "dialogues\t" << build.total << '\n';
    out << "skipped_lines\t" << corpus.skipped.size() << '\n';
    out << "coverable\t" << build.examples.size() << '\n';
    out << "coverage\t" << format_double(build.coverage()) << '\n';
    out << "fragments";
    for (std::size_t k = 1; k < build.fragment_histogram.size(); ++k) {
      out << '\t' << k << ':' << build.fragment_histogram[k];
    }
    out << '\n';
    return kOk;
  });
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(config.corpus, "--corpus");
    require(config.model, "--model");
    const auto lc = label_config(config);
    const auto train_set = build_labels(load_dialogues(config.corpus), lc, config.workers);
    if (train_set.examples.empty()) throw Error(ErrorCode::InvalidArgument, "no coverable training examples");
    LabelBuild dev_set;
    if (!config.dev_corpus.empty()) dev_set = build_labels(load_dialogues(config.dev_corpus), lc, config.workers);
    spdlog::info("training on {} examples ({} uncoverable skipped)", train_set.examples.size(),
                 train_set.uncoverable.size());

    TrainConfig tc = config.train;
    tc.seed = config.seed;
    std::vector<std::string> log_lines;
    const auto result = train(train_set.examples, config.shape(), tc, dev_set.examples, [&](const EpochStats& s) {
      std::string line = std::to_string(s.epoch) + '\t' + format_double(s.loss.sgt) + '\t' + format_double(s.loss.gd) +
                         '\t' + format_double(s.loss.ged) + '\t' + format_double(s.loss.total) + '\t' +
                         format_double(s.token_accuracy);
      spdlog::debug("epoch {}", line);
      log_lines.push_back(std::move(line));
    });
    save_params(result.params, config.model);
    const auto log_path = config.out.empty() ? std::filesystem::path(config.model.string() + ".log") : config.out;
    write_lines(log_path, log_lines);
    if (result.aborted) {
      err << "error: non-finite loss; wrote last good checkpoint to " << config.model << '\n';
      return kNumeric;
    }
    out << "best_epoch\t" << result.best_epoch << '\n';
    if (!result.log.empty()) {
      out << "final_token_accuracy\t" << format_double(result.log.back().token_accuracy) << '\n';
    }
    return kOk;
  });
}

int cmd_rewrite(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(config.corpus, "--corpus");
    require(config.out, "--out");
    const auto dialogues = load_dialogues(config.corpus);
    const auto words = connection_words(config);
    std::vector<std::string> predictions(dialogues.size());
    if (config.gold_inject) {
      const LabelConfig lc{words, config.speaker_width, config.tag_classes};
      parallel_for(dialogues.size(), config.workers, [&](std::size_t i) {
        const auto& d = dialogues[i];
        if (!d.reference) {
          predictions[i] = d.current().raw_text;
          return;
        }
        const auto outcome = build_labeled_example(d, lc);
        if (!outcome.example) {
          predictions[i] = d.current().raw_text;
          return;
        }
        predictions[i] = decode_tags(outcome.example->y_sgt, outcome.example->input, d, config.policy);
      });
    } else {
      require(config.model, "--model");
      const TaggerParams params = load_params(config.model);
      parallel_for(dialogues.size(), config.workers,
                   [&](std::size_t i) { predictions[i] = rewrite(dialogues[i], params, config.policy, words); });
    }
    write_lines(config.out, predictions);
    out << "rewrote\t" << predictions.size() << '\n';
    return kOk;
  });
}

int cmd_evaluate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(config.corpus, "--corpus");
    require(config.predictions, "--predictions");
    const auto dialogues = load_dialogues(config.corpus);
    const auto predictions = read_lines(config.predictions);
    const MetricReport report = evaluate_corpus(predictions, dialogues);
    const std::string table = format_report_table(report);
    out << table;
    if (!config.out.empty()) {
      auto json = to_json(report);
      json["config_hash"] = config.hash();
      write_lines(config.out.string() + ".json", {json.dump(2)});
      write_lines(config.out.string() + ".txt", {table});
    }
    return kOk;
  });
}

int cmd_roundtrip(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(config.corpus, "--corpus");
    auto corpus = load_corpus(config.corpus);
    const auto lc = label_config(config);
    const auto& dialogues = corpus.dialogues;
    std::vector<LabelOutcome> outcomes(dialogues.size());
    std::vector<std::string> spliced(dialogues.size());
    parallel_for(dialogues.size(), config.workers, [&](std::size_t i) {
      outcomes[i] = build_labeled_example(dialogues[i], lc);
      if (outcomes[i].example) {
        const auto& ex = *outcomes[i].example;
        spliced[i] = decode_tags(ex.y_sgt, ex.input, dialogues[i], config.policy);
      }
    });
    std::size_t coverable = 0, mismatches = 0;
    for (std::size_t i = 0; i < dialogues.size(); ++i) {
      if (!outcomes[i].example) {
        out << "uncoverable\t" << i + 1 << "\tresidue=" << detokenize(outcomes[i].decomposition.residue) << '\n';
        continue;
      }
      ++coverable;
      if (spliced[i] != outcomes[i].example->reference) {
        ++mismatches;
        out << "mismatch\t" << i + 1 << "\texpected=" << outcomes[i].example->reference << "\tgot=" << spliced[i] << '\n';
      }
    }
    out << "dialogues\t" << dialogues.size() << "\ncoverable\t" << coverable << "\nskipped_lines\t"
        << corpus.skipped.size() << "\nmismatches\t" << mismatches << '\n';
    out << (mismatches == 0 ? "PASS" : "FAIL") << '\n';
    return mismatches == 0 ? kOk : kUsage;
  });
}

BenchReport run_bench(const std::vector<Dialogue>& dialogues, const TaggerParams* params, const RunConfig& config) {
  if (config.repetitions < 1) throw Error(ErrorCode::InvalidArgument, "repetitions must be >= 1");
  if (config.warmup < 0) throw Error(ErrorCode::InvalidArgument, "warmup must be >= 0");
  const auto words = connection_words(config);

  // Untimed preparation: decode-only mode needs gold logits per example.
  struct Prepared {
    const Dialogue* dialogue;
    AssembledInput input;
    Matrix gold_logits;
  };
  std::vector<Prepared> items;
  const int speaker_width = params ? params->shape.speaker_width : config.speaker_width;
  for (const auto& d : dialogues) {
    if (params != nullptr) {
      items.push_back({&d, assemble_input(d, words, speaker_width), Matrix()});
      continue;
    }
    if (!d.reference) continue;
    auto outcome = build_labeled_example(d, {words, speaker_width, config.tag_classes});
    if (!outcome.example) continue;
    Matrix logits = Matrix::Zero(static_cast<Eigen::Index>(outcome.example->y_sgt.size()), config.tag_classes);
    for (std::size_t i = 0; i < outcome.example->y_sgt.size(); ++i) {
      logits(static_cast<Eigen::Index>(i), outcome.example->y_sgt[i].value) = 10.0;
    }
    items.push_back({&d, std::move(outcome.example->input), std::move(logits)});
  }
  if (items.empty()) throw Error(ErrorCode::InvalidArgument, "no benchmarkable examples");

  std::size_t sink = 0;
  auto run_one = [&](const Prepared& p) {
    if (params != nullptr) {
      sink += rewrite(*p.dialogue, *params, config.policy, words).size();
    } else {
      const auto tags = argmax_tags(p.gold_logits);
      sink += decode_tags(tags, p.input, *p.dialogue, config.policy).size();
    }
  };

  for (int w = 0; w < config.warmup; ++w) run_one(items[static_cast<std::size_t>(w) % items.size()]);

  using clock = std::chrono::steady_clock;
  std::vector<double> samples;
  double total_seconds = 0.0;
  std::size_t total_tokens = 0;
  for (const auto& p : items) {
    for (int r = 0; r < config.repetitions; ++r) {
      const auto t0 = clock::now();
      run_one(p);
      const auto t1 = clock::now();
      const double us = std::chrono::duration<double, std::micro>(t1 - t0).count();
      samples.push_back(us);
      total_seconds += us * 1e-6;
      total_tokens += p.input.size();
    }
  }
  if (sink == 0) spdlog::debug("bench produced empty outputs only");

  BenchReport report;
  report.examples = items.size();
  report.samples = samples.size();
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double s : samples) sum += s;
  report.mean_us = sum / static_cast<double>(samples.size());
  const std::size_t n = samples.size();
  report.median_us = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  report.p95_us = samples[std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1)];
  report.tokens_per_second = total_seconds > 0.0 ? static_cast<double>(total_tokens) / total_seconds : 0.0;
  return report;
}

int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(config.corpus, "--corpus");
    if (config.repetitions < 1) throw Error(ErrorCode::InvalidArgument, "--repetitions must be >= 1");
    const auto dialogues = load_dialogues(config.corpus);
    std::optional<TaggerParams> params;
    if (!config.decode_only) {
      require(config.model, "--model");
      params = load_params(config.model);
    }
    const BenchReport r = run_bench(dialogues, params ? &*params : nullptr, config);
    out << "mode\t" << (config.decode_only ? "decode-only" : "end-to-end") << '\n'
        << "examples\t" << r.examples << '\n'
        << "samples\t" << r.samples << '\n'
        << "mean_us\t" << format_double(r.mean_us) << '\n'
        << "median_us\t" << format_double(r.median_us) << '\n'
        << "p95_us\t" << format_double(r.p95_us) << '\n'
        << "tokens_per_second\t" << format_double(r.tokens_per_second) << '\n';
    if (!config.out.empty()) {
      nlohmann::json j = {{"mode", config.decode_only ? "decode-only" : "end-to-end"},
                          {"examples", r.examples},
                          {"samples", r.samples},
                          {"mean_us", r.mean_us},
                          {"median_us", r.median_us},
                          {"p95_us", r.p95_us},
                          {"tokens_per_second", r.tokens_per_second},
                          {"warmup", config.warmup},
                          {"repetitions", config.repetitions}};
      write_lines(config.out, {j.dump(2)});
    }
    return kOk;
  });
}

}  // namespace sgt::cli
