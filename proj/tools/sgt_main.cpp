// sgt: label construction, training, rewriting, evaluation and latency
// benchmarking for sequential greedy tagging.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "sgt/commands.hpp"
#include "sgt/config_file.hpp"
#include "sgt/error.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("sgt");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("SGT_LOG");
  const std::string name = level ? level : "info";
  if (name == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (name == "warn") {
    spdlog::set_level(spdlog::level::warn);
  } else if (name == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

// Value of --config from the raw arguments, if present.
std::string find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sgt::cli;
  setup_logging();

  std::vector<std::string> user_args(argv + 1, argv + argc);
  std::vector<std::string> args;
  try {
    // File values go first; with take-last semantics command-line flags win.
    if (const auto path = find_config(user_args); !path.empty()) {
      for (const auto& [key, value] : read_config_file(path)) args.push_back("--" + key + "=" + value);
    }
  } catch (const sgt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == sgt::ErrorCode::IoFailure ? kIo : kUsage;
  }
  args.insert(args.end(), user_args.begin(), user_args.end());

  RunConfig cfg;
  std::string policy = "latest";
  std::string fallback = "copy";
  std::string config_path;

  CLI::App app{"Sequential greedy tagging for incomplete utterance rewriting", "sgt"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  app.add_option("--config", config_path, "key = value settings file; flags override it");
  app.add_option("--seed", cfg.seed, "seed for every random stream")->capture_default_str();
  app.add_option("--corpus", cfg.corpus, "tab-separated dialogue corpus");
  app.add_option("--dev", cfg.dev_corpus, "dev corpus for checkpoint selection (train)");
  app.add_option("--model", cfg.model, "parameter file");
  app.add_option("--out", cfg.out, "output path");
  app.add_option("--predictions", cfg.predictions, "predictions file (evaluate)");
  app.add_option("--connection-words", cfg.connection_words, "connection-word list, one per line");
  app.add_option("--tag-classes", cfg.tag_classes, "tag classes N (O plus N-1 letters)")
      ->capture_default_str()
      ->check(CLI::Range(2, 255));
  app.add_option("--speaker-width", cfg.speaker_width, "speaker indicator width")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_flag("--gold-inject", cfg.gold_inject, "rewrite from gold labels instead of the model");
  app.add_option("--policy", policy, "duplicate-run resolution")
      ->capture_default_str()
      ->check(CLI::IsMember({"latest", "score"}));
  app.add_option("--fallback", fallback, "output when no fragment is tagged")
      ->capture_default_str()
      ->check(CLI::IsMember({"copy", "empty"}));
  app.add_option("--workers", cfg.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  app.add_option("--epochs", cfg.train.epochs)->capture_default_str();
  app.add_option("--batch-size", cfg.train.batch_size)->capture_default_str();
  app.add_option("--learning-rate", cfg.train.learning_rate)->capture_default_str();
  app.add_option("--dropout", cfg.train.dropout_rate)->capture_default_str();
  app.add_option("--embedding-dim", cfg.encoder.embedding_dim)->capture_default_str();
  app.add_option("--hidden-dim", cfg.encoder.hidden_dim)->capture_default_str();
  app.add_option("--window", cfg.encoder.context_window)->capture_default_str();
  app.add_option("--buckets", cfg.encoder.vocab_buckets)->capture_default_str();
  app.add_option("--max-positions", cfg.encoder.max_positions)->capture_default_str();

  app.add_option("--warmup", cfg.warmup, "untimed warmup iterations (bench)")->capture_default_str();
  app.add_option("--repetitions", cfg.repetitions, "timed runs per example (bench)")->capture_default_str();
  app.add_flag("--decode-only", cfg.decode_only, "bench decoding from gold logits only");

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&, std::ostream&, std::ostream&);
  };
  const Sub subs[] = {
      {"build-labels", "write the JSONL label file and a coverage report", cmd_build_labels},
      {"train", "train the tagger and write the parameter file", cmd_train},
      {"rewrite", "rewrite the last utterance of each dialogue", cmd_rewrite},
      {"evaluate", "score predictions against corpus references", cmd_evaluate},
      {"roundtrip", "check that gold labels splice back into the references", cmd_roundtrip},
      {"bench", "single-example rewrite latency", cmd_bench},
  };
  std::map<CLI::App*, const Sub*> handlers;
  for (const auto& s : subs) handlers[app.add_subcommand(s.name, s.help)->fallthrough()] = &s;

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  cfg.policy.duplicates = policy == "score" ? sgt::DuplicateResolution::HighestMeanScore : sgt::DuplicateResolution::LatestRun;
  cfg.policy.empty = fallback == "empty" ? sgt::EmptyFallback::EmptyOutput : sgt::EmptyFallback::CopyLastUtterance;

  for (const auto& [sub, handler] : handlers) {
    if (sub->parsed()) return handler->run(cfg, std::cout, std::cerr);
  }
  return kUsage;
}
