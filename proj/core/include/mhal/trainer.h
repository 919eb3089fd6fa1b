#pragma once

#include <string>
#include <vector>

#include "mhal/metrics.h"
#include "mhal/model.h"
#include "mhal/objectives.h"

namespace mhal {

// Dev metric that drives early stopping and best-checkpoint selection.
enum class StoppingMetric { kSentenceF1Star, kTokenF1Star, kMeanBoth };

struct TrainConfig {
  int max_epochs = 200;
  int patience = 7;  // stop after this many epochs without improvement
  int batch_size = 32;
  double learning_rate = 1.0;
  double decay = 0.9;          // AdaDelta rho
  double adadelta_eps = 1e-6;  // AdaDelta numerical constant
  double smoothing_eps = 0.15;
  StoppingMetric stopping = StoppingMetric::kTokenF1Star;
  std::uint64_t seed = 1;
  void validate() const;
};

// Loss-weight presets for the model variants; unknown names are rejected
// with the list of valid ones.
LossWeights preset_variant(const std::string& name);
std::vector<std::string> variant_names();

// AdaDelta with per-parameter accumulators of squared gradients and squared
// updates. step() consumes Parameter::value.grad and applies the update; the
// caller owns zeroing gradients between batches.
class AdaDelta {
 public:
  AdaDelta(double learning_rate, double decay, double eps);
  void step(const std::vector<Parameter*>& params);

 private:
  double lr_, rho_, eps_;
  std::vector<std::vector<double>> sq_grad_, sq_update_;
};

struct EvalResult {
  MetricsReport token;
  MetricsReport sentence;
  SpanScores spans;
  std::vector<std::vector<int>> pred_tokens;
  std::vector<int> pred_sentences;
};

// Deterministic eval-mode pass over the data; tokens without gold labels are
// skipped by the token metrics, sentences without one by the sentence
// metrics.
EvalResult evaluate(Model& model, const std::vector<Sentence>& data, double beta = 1.0);

// Chosen dev score: sentence F1*, token F1*, or their mean. Token-based
// choices require token-labeled dev data.
double stopping_metric_value(double sentence_f1_star, double token_f1_star,
                             bool dev_has_token_labels, StoppingMetric metric);

struct EpochLog {
  int epoch = 0;
  LossBreakdown train_loss;  // summed over the epoch's sentences
  double dev_sentence_accuracy = 0;
  double dev_sentence_f1 = 0;
  double dev_sentence_f1_star = 0;
  double dev_token_f1 = 0;
  double dev_token_f1_star = 0;
  double dev_span_f1 = 0;
  double stopping_value = 0;
  bool improved = false;
};

// One line-delimited structured record per epoch.
std::string epoch_log_json(const EpochLog& log);

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;        // 1-based; 0 when training never improved
  double best_value = 0.0;
};

// Epoch loop: seeded shuffle, per-sentence forward + weighted loss +
// backward with gradients summed over each batch, one AdaDelta step per
// batch, dev evaluation in eval mode after every epoch. Improvement means
// the stopping metric rises by more than 1e-6; metric ties keep the later
// checkpoint (its dev value still equals the maximum over all epochs) but
// do not reset patience. The best parameters are restored into the model
// before returning. Fixed (seed, corpus, config) reproduce bit-identical
// results.
TrainResult train(Model& model, const std::vector<Sentence>& train_split,
                  const std::vector<Sentence>& dev_split, const TrainConfig& config,
                  const LossWeights& weights);

}  // namespace mhal
