#pragma once

#include "mhal/model.h"

namespace mhal {

// Coefficients of the weighted training objective; a model variant is one
// choice of these.
struct LossWeights {
  double sent = 0.0;
  double tok = 0.0;
  double attn = 0.0;
  double rq = 0.0;
  double lm = 0.0;
  void validate() const;  // all >= 0, at least one > 0
};

struct LossBreakdown {
  double sent = 0.0;
  double tok = 0.0;
  double attn = 0.0;
  double rq = 0.0;
  double lm = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
};

// Smoothed one-hot target: (1-eps)*onehot(gold) + eps/num_classes.
std::vector<double> smoothed_targets(int gold, int num_classes, double eps);

// Cross entropy of the predicted sentence distribution against the smoothed
// gold target, computed on the collected scores through log-sum-exp.
Var loss_sentence(Tape& tape, const ForwardOutputs& out, int gold_sentence, double eps);

// Summed smoothed cross entropy over the tokens whose supervision flag is
// set; zero when none is.
Var loss_token(Tape& tape, const ForwardOutputs& out, const Sentence& sentence, double eps);

// Pushes some token's distribution toward the sentence's label head and some
// token's toward the default head:
//   (max_i t[i][l] - 1)^2 + (max_i t[i][d] - 1)^2.
// In binary schemes a non-default sentence scores the first term over all
// non-default heads jointly; a default sentence collapses both terms into
// one.
Var loss_attention(Tape& tape, const ForwardOutputs& out, const LabelScheme& scheme,
                   int gold_sentence);

// Mean pairwise cosine similarity of the pooled per-head queries; penalizing
// it spreads the head subspaces apart. May be negative.
Var regularizer_queries(Tape& tape, const std::vector<Var>& pooled_queries);

// Bidirectional word-level LM: forward states predict the next word,
// backward states the previous one, each through its own projection and
// output layer over the capped LM vocabulary. Zero for length-1 sentences.
Var loss_lm(Tape& tape, Model& model, const ForwardOutputs& out, const Sentence& sentence);

struct TotalLoss {
  Var total;
  LossBreakdown breakdown;
};

// Weighted sum of the active objectives; terms with zero weight are not
// built at all.
TotalLoss total_loss(Tape& tape, Model& model, const ForwardOutputs& out, const Sentence& sentence,
                     const LossWeights& weights, double eps);

}  // namespace mhal
