#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sgt/corpus.hpp"
#include "sgt/glcs_labeler.hpp"

namespace sgt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct EncoderConfig {
  int embedding_dim = 64;
  int context_window = 5;  // odd
  int hidden_dim = 128;
  std::size_t vocab_buckets = std::size_t{1} << 16;
  int max_positions = 512;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct ModelShape {
  EncoderConfig encoder;
  int tag_classes = kDefaultTagClasses;
  int speaker_width = 1;

  void validate() const;  // throws Error(InvalidArgument)
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct LinearHead {
  Matrix weights;  // (hidden_dim + S) x classes
  Vector bias;
};

// Every trainable tensor. Gradients use the same layout.
struct TaggerParams {
  ModelShape shape;
  Matrix token_embeddings;     // V x d
  Matrix position_embeddings;  // P_max x d
  Matrix mixer_weights;        // (w * d) x hidden_dim
  Vector mixer_bias;           // hidden_dim
  LinearHead sgt;              // classes = N
  LinearHead gd;               // classes = 2
  LinearHead ged;              // classes = 2

  static TaggerParams zeros(const ModelShape& shape);
  static TaggerParams random(const ModelShape& shape, std::uint64_t seed);

  // Visits tensors in serialization order as flat (data, size) views.
  void for_each_tensor(const std::function<void(double*, std::size_t)>& fn);
  void for_each_tensor(const std::function<void(const double*, std::size_t)>& fn) const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool bitwise_equal(const TaggerParams& other) const;
};

// Deterministic random stream (shuffles, dropout, init). Conversions are
// done here rather than through <random> distributions so draws do not
// depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();                          // [0, 1)
  std::size_t below(std::size_t n);          // [0, n)
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

enum class Mode { Train, Infer };

// Stable hash bucket of a token's (granularity, text).
std::size_t token_bucket(const Token& token, std::size_t buckets);

// Window-mixing encoder: e_i = tanh(W_mix^T concat_j(tok[x_{i+j}] + pos[i+j]) + b),
// j in [-w/2, w/2], out-of-range slots are zero padding.
Matrix encode(const AssembledInput& input, const TaggerParams& params);

// Inverted-dropout scale mask: 0 with probability rate, else 1 / (1 - rate).
Matrix make_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

// EA = [Dropout(E), SA]. mask may be empty (no dropout).
Matrix apply_speaker(const Matrix& encoded, const AssembledInput& input, const Matrix& mask);
Matrix apply_speaker(const Matrix& encoded, const AssembledInput& input, double dropout_rate, Mode mode, Rng* rng);

struct ForwardTrace {
  std::vector<std::size_t> ids;
  Matrix window_inputs;  // M x (w * d)
  Matrix encoded;        // E
  Matrix dropout_mask;   // empty in Infer mode
  Matrix ea;             // EA
  Matrix logits_sgt;
  Matrix logits_gd;
  Matrix logits_ged;

  Eigen::Index rows() const { return encoded.rows(); }
};

// Train mode draws a dropout mask from rng unless `mask` is given.
ForwardTrace forward(const AssembledInput& input, const TaggerParams& params, Mode mode,
                     double dropout_rate = 0.0, Rng* rng = nullptr, const Matrix* mask = nullptr);

Matrix softmax_rows(const Matrix& logits);

// Mean over tokens of class_weights[target] * CE(softmax(logits_i), target).
double loss_sgt(const Matrix& logits, std::span<const TagLabel> targets, std::span<const double> class_weights);
// Mean over tokens of two-class CE.
double loss_binary(const Matrix& logits, std::span<const std::uint8_t> targets);
inline double loss_gd(const Matrix& logits, std::span<const std::uint8_t> y) { return loss_binary(logits, y); }
inline double loss_ged(const Matrix& logits, std::span<const std::uint8_t> y) { return loss_binary(logits, y); }

struct LossBreakdown {
  double sgt = 0.0;
  double gd = 0.0;
  double ged = 0.0;
  double total = 0.0;  // sgt + gd + ged, unweighted
};

LossBreakdown total_loss(const ForwardTrace& trace, const LabeledExample& labels, std::span<const double> class_weights);

// Accumulates d(total_loss)/d(params) for one forward trace into grad
// (which must have params' shape). Returns the loss.
LossBreakdown accumulate_gradient(const ForwardTrace& trace, const LabeledExample& labels, const TaggerParams& params,
                                  std::span<const double> class_weights, TaggerParams& grad);

// Analytic gradient of total_loss for one example under a fixed dropout
// mask (empty mask = Infer). Throws NonFiniteGradient.
TaggerParams gradient(const LabeledExample& example, const TaggerParams& params,
                      std::span<const double> class_weights, const Matrix& mask = Matrix());

struct TrainConfig {
  double learning_rate = 1e-3;
  double dropout_rate = 0.3;
  std::vector<double> class_weights;  // empty: derived from the training split
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 13;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// weight(O) = 1, weight(I_k) = clamp(freq(O) / freq(I_k), 1, 20); unseen classes 1.
std::vector<double> default_class_weights(std::span<const LabeledExample> examples, int tag_classes);

struct EpochStats {
  int epoch = 0;
  LossBreakdown loss;       // mean over training examples
  double token_accuracy = 0.0;  // SGT tags, Infer mode, training split
  std::optional<double> dev_token_accuracy;
};

struct TrainResult {
  TaggerParams params;       // checkpoint (best dev accuracy, else best training accuracy)
  TaggerParams final_params;
  std::vector<EpochStats> log;
  int best_epoch = 0;
  bool aborted = false;  // NonFiniteLoss hit; params hold the last good checkpoint
};

using EpochCallback = std::function<void(const EpochStats&)>;

TrainResult train(std::span<const LabeledExample> examples, const ModelShape& shape, const TrainConfig& config,
                  std::span<const LabeledExample> dev = {}, const EpochCallback& on_epoch = {});

std::vector<TagLabel> argmax_tags(const Matrix& logits);
std::vector<TagLabel> predict_tags(const AssembledInput& input, const TaggerParams& params);
double token_accuracy(std::span<const LabeledExample> examples, const TaggerParams& params);

inline constexpr std::uint32_t kParamFormatVersion = 1;

void save_params(const TaggerParams& params, const std::filesystem::path& path);
TaggerParams load_params(const std::filesystem::path& path);
// Also rejects files whose shape differs from `expected` (VersionMismatch).
TaggerParams load_params(const std::filesystem::path& path, const ModelShape& expected);

}  // namespace sgt
