#include "mhal/objectives.h"

#include "mhal/errors.h"

namespace mhal {

void LossWeights::validate() const {
  const double all[] = {sent, tok, attn, rq, lm};
  bool any = false;
  for (double w : all) {
    if (w < 0.0) throw ConfigError("loss weights must be nonnegative");
    if (w > 0.0) any = true;
  }
  if (!any) throw ConfigError("at least one loss weight must be positive");
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  sent += o.sent;
  tok += o.tok;
  attn += o.attn;
  rq += o.rq;
  lm += o.lm;
  total += o.total;
  return *this;
}

std::vector<double> smoothed_targets(int gold, int num_classes, double eps) {
  if (gold < 0 || gold >= num_classes) {
    throw ShapeError("smoothed_targets: gold " + std::to_string(gold) + " outside [0," +
                     std::to_string(num_classes) + ")");
  }
  std::vector<double> t(static_cast<std::size_t>(num_classes), eps / num_classes);
  t[static_cast<std::size_t>(gold)] += 1.0 - eps;
  return t;
}

Var loss_sentence(Tape& tape, const ForwardOutputs& out, int gold_sentence, double eps) {
  if (gold_sentence < 0) throw DataError("sentence loss needs a gold sentence label");
  return tape.smoothed_cross_entropy(out.collected, gold_sentence, eps);
}

Var loss_token(Tape& tape, const ForwardOutputs& out, const Sentence& sentence, double eps) {
  std::vector<int> targets;
  targets.reserve(sentence.tokens.size());
  for (const Token& t : sentence.tokens) {
    targets.push_back(t.supervised && t.gold_label >= 0 ? t.gold_label : -1);
  }
  return tape.smoothed_cross_entropy_rows(out.scores, targets, eps);
}

Var loss_attention(Tape& tape, const ForwardOutputs& out, const LabelScheme& scheme,
                   int gold_sentence) {
  if (gold_sentence < 0 || gold_sentence >= scheme.num_sentence_labels()) {
    throw DataError("attention loss needs a valid gold sentence label");
  }
  const int d = scheme.default_token;
  auto head_term = [&](Var column_or_all) {
    return tape.square(tape.add_const(tape.reduce_max(column_or_all), -1.0));
  };
  Var default_term = head_term(tape.column(out.token_distr, d));

  if (scheme.mode == SchemeMode::kIdentical) {
    // Sentence labels share the token index space.
    return tape.add(head_term(tape.column(out.token_distr, gold_sentence)), default_term);
  }
  if (gold_sentence == scheme.default_sentence) {
    // Both conditions name the default head; count the term once.
    return default_term;
  }
  // Non-default sentence: any non-default head may carry the evidence.
  std::vector<Var> nondefault_cols;
  for (int h = 0; h < scheme.num_token_labels(); ++h) {
    if (h != d) nondefault_cols.push_back(tape.column(out.token_distr, h));
  }
  return tape.add(head_term(tape.concat(nondefault_cols)), default_term);
}

Var regularizer_queries(Tape& tape, const std::vector<Var>& pooled_queries) {
  const int h = static_cast<int>(pooled_queries.size());
  if (h < 2) throw ShapeError("query regularizer needs at least two heads");
  Var acc = tape.scalar(0.0);
  for (int a = 0; a < h; ++a) {
    for (int b = a + 1; b < h; ++b) {
      acc = tape.add(acc, tape.cosine_similarity(pooled_queries[static_cast<std::size_t>(a)],
                                                 pooled_queries[static_cast<std::size_t>(b)]));
    }
  }
  return tape.scale(acc, 2.0 / (static_cast<double>(h) * (h - 1)));
}

Var loss_lm(Tape& tape, Model& model, const ForwardOutputs& out, const Sentence& sentence) {
  const int n = sentence.length();
  if (n < 2) return tape.scalar(0.0);
  std::vector<int> fwd_targets(static_cast<std::size_t>(n), -1);
  std::vector<int> bwd_targets(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (i + 1 < n) {
      fwd_targets[static_cast<std::size_t>(i)] =
          model.vocabs().lm_id(sentence.tokens[static_cast<std::size_t>(i) + 1].surface);
    }
    if (i > 0) {
      bwd_targets[static_cast<std::size_t>(i)] =
          model.vocabs().lm_id(sentence.tokens[static_cast<std::size_t>(i) - 1].surface);
    }
  }
  Var fwd = tape.smoothed_cross_entropy_rows(model.lm_direction_scores(tape, out.fwd_states, false),
                                             fwd_targets, 0.0);
  Var bwd = tape.smoothed_cross_entropy_rows(model.lm_direction_scores(tape, out.bwd_states, true),
                                             bwd_targets, 0.0);
  return tape.add(fwd, bwd);
}

TotalLoss total_loss(Tape& tape, Model& model, const ForwardOutputs& out, const Sentence& sentence,
                     const LossWeights& weights, double eps) {
  weights.validate();
  TotalLoss result;
  Var total = tape.scalar(0.0);
  auto apply = [&](double w, Var term, double& slot) {
    slot = tape.value(term).data[0];
    total = tape.add(total, tape.scale(term, w));
  };
  if (weights.sent > 0.0) {
    apply(weights.sent, loss_sentence(tape, out, sentence.sentence_label, eps), result.breakdown.sent);
  }
  if (weights.tok > 0.0) {
    apply(weights.tok, loss_token(tape, out, sentence, eps), result.breakdown.tok);
  }
  if (weights.attn > 0.0) {
    apply(weights.attn, loss_attention(tape, out, model.scheme(), sentence.sentence_label),
          result.breakdown.attn);
  }
  if (weights.rq > 0.0) {
    apply(weights.rq, regularizer_queries(tape, out.pooled_queries), result.breakdown.rq);
  }
  if (weights.lm > 0.0) {
    apply(weights.lm, loss_lm(tape, model, out, sentence), result.breakdown.lm);
  }
  result.total = total;
  result.breakdown.total = tape.value(total).data[0];
  return result;
}

}  // namespace mhal
