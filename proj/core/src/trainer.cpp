#include "mhal/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mhal/errors.h"

namespace mhal {

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (decay <= 0.0 || decay >= 1.0) throw ConfigError("decay must lie in (0,1)");
  if (adadelta_eps <= 0.0) throw ConfigError("adadelta_eps must be positive");
  if (smoothing_eps < 0.0 || smoothing_eps >= 1.0) throw ConfigError("smoothing_eps must lie in [0,1)");
}

std::vector<std::string> variant_names() {
  return {"MHAL-joint", "MHAL-joint+", "MHAL-sent", "MHAL-sent+", "MHAL-joint+Rq", "BiLSTM-tok-equiv"};
}

LossWeights preset_variant(const std::string& name) {
  if (name == "MHAL-joint") return {1.0, 1.0, 0.0, 0.0, 0.0};
  if (name == "MHAL-joint+") return {1.0, 1.0, 0.01, 0.5, 0.1};
  if (name == "MHAL-sent") return {1.0, 0.0, 0.0, 0.0, 0.0};
  if (name == "MHAL-sent+") return {1.0, 0.0, 0.01, 0.5, 0.1};
  if (name == "MHAL-joint+Rq") return {1.0, 1.0, 0.0, 0.5, 0.0};
  if (name == "BiLSTM-tok-equiv") return {0.0, 1.0, 0.0, 0.0, 0.0};
  std::string valid;
  for (const auto& v : variant_names()) valid += (valid.empty() ? "" : ", ") + v;
  throw ConfigError("unknown variant '" + name + "'; valid variants: " + valid);
}

AdaDelta::AdaDelta(double learning_rate, double decay, double eps)
    : lr_(learning_rate), rho_(decay), eps_(eps) {}

void AdaDelta::step(const std::vector<Parameter*>& params) {
  if (sq_grad_.empty()) {
    sq_grad_.resize(params.size());
    sq_update_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      sq_grad_[i].assign(params[i]->value.data.size(), 0.0);
      sq_update_[i].assign(params[i]->value.data.size(), 0.0);
    }
  }
  if (sq_grad_.size() != params.size()) throw ShapeError("optimizer bound to a different model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    p.value.ensure_grad();
    auto& eg = sq_grad_[i];
    auto& ex = sq_update_[i];
    for (std::size_t j = 0; j < p.value.data.size(); ++j) {
      const double g = p.value.grad[j];
      eg[j] = rho_ * eg[j] + (1.0 - rho_) * g * g;
      const double delta = -std::sqrt((ex[j] + eps_) / (eg[j] + eps_)) * g;
      ex[j] = rho_ * ex[j] + (1.0 - rho_) * delta * delta;
      p.value.data[j] += lr_ * delta;
    }
  }
}

EvalResult evaluate(Model& model, const std::vector<Sentence>& data, double beta) {
  EvalResult r;
  std::vector<int> tok_pred, tok_gold, sent_pred, sent_gold;
  std::vector<std::vector<int>> span_pred, span_gold;
  for (const Sentence& s : data) {
    Tape tape;
    ForwardOutputs out = model.forward(tape, s, RunMode::kEval, nullptr);
    std::vector<int> pred = out.predicted_tokens();
    const int sent = out.predicted_sentence();
    r.pred_tokens.push_back(pred);
    r.pred_sentences.push_back(sent);

    bool fully_labeled = true;
    std::vector<int> gold;
    gold.reserve(s.tokens.size());
    for (const Token& t : s.tokens) {
      gold.push_back(t.gold_label);
      if (t.gold_label < 0) fully_labeled = false;
    }
    tok_pred.insert(tok_pred.end(), pred.begin(), pred.end());
    tok_gold.insert(tok_gold.end(), gold.begin(), gold.end());
    if (fully_labeled) {
      span_pred.push_back(pred);
      span_gold.push_back(gold);
    }
    if (s.sentence_label >= 0) {
      sent_pred.push_back(sent);
      sent_gold.push_back(s.sentence_label);
    }
  }
  const LabelScheme& sc = model.scheme();
  r.token = token_micro(tok_pred, tok_gold, sc.num_token_labels(), sc.default_token, beta);
  r.sentence = sentence_metrics(sent_pred, sent_gold, sc.num_sentence_labels(), sc.default_sentence, beta);
  r.spans = span_f1(span_pred, span_gold, sc.default_token);
  return r;
}

double stopping_metric_value(double sentence_f1_star, double token_f1_star,
                             bool dev_has_token_labels, StoppingMetric metric) {
  if (metric == StoppingMetric::kSentenceF1Star) return sentence_f1_star;
  if (!dev_has_token_labels) {
    throw ConfigError("token-based stopping needs token-labeled dev data; use the sentence metric");
  }
  if (metric == StoppingMetric::kTokenF1Star) return token_f1_star;
  return 0.5 * (sentence_f1_star + token_f1_star);
}

std::string epoch_log_json(const EpochLog& l) {
  char buf[640];
  std::snprintf(buf, sizeof(buf),
                "{\"epoch\":%d,\"loss_total\":%.17g,\"loss_sent\":%.17g,\"loss_tok\":%.17g,"
                "\"loss_attn\":%.17g,\"loss_rq\":%.17g,\"loss_lm\":%.17g,"
                "\"dev_sentence_accuracy\":%.17g,\"dev_sentence_f1\":%.17g,"
                "\"dev_sentence_f1_star\":%.17g,\"dev_token_f1\":%.17g,\"dev_token_f1_star\":%.17g,"
                "\"dev_span_f1\":%.17g,\"stopping_value\":%.17g,\"improved\":%s}",
                l.epoch, l.train_loss.total, l.train_loss.sent, l.train_loss.tok, l.train_loss.attn,
                l.train_loss.rq, l.train_loss.lm, l.dev_sentence_accuracy, l.dev_sentence_f1,
                l.dev_sentence_f1_star, l.dev_token_f1, l.dev_token_f1_star, l.dev_span_f1,
                l.stopping_value, l.improved ? "true" : "false");
  return buf;
}

TrainResult train(Model& model, const std::vector<Sentence>& train_split,
                  const std::vector<Sentence>& dev_split, const TrainConfig& config,
                  const LossWeights& weights) {
  config.validate();
  weights.validate();
  if (train_split.empty()) throw DataError("training split is empty");
  if (dev_split.empty()) throw DataError("dev split is empty");
  const bool dev_has_tokens = has_token_labels(dev_split);

  const std::vector<Parameter*>& params = model.parameters();
  AdaDelta optimizer(config.learning_rate, config.decay, config.adadelta_eps);

  TrainResult result;
  double best = -1.0;
  int epochs_without_improvement = 0;
  std::vector<std::vector<double>> best_params = model.snapshot_values();

  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng = make_rng(config.seed, 1000 + static_cast<std::uint64_t>(epoch));
    Rng dropout_rng = make_rng(config.seed, 2000 + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), cursor + static_cast<std::size_t>(config.batch_size));
      for (Parameter* p : params) p->value.zero_grad();
      for (; cursor < batch_end; ++cursor) {
        const Sentence& sentence = train_split[order[cursor]];
        Tape tape;
        ForwardOutputs out = model.forward(tape, sentence, RunMode::kTrain, &dropout_rng);
        TotalLoss loss = total_loss(tape, model, out, sentence, weights, config.smoothing_eps);
        if (!std::isfinite(loss.breakdown.total)) {
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
        }
        log.train_loss += loss.breakdown;
        tape.backward(loss.total);
      }
      optimizer.step(params);
    }

    EvalResult dev = evaluate(model, dev_split);
    log.dev_sentence_accuracy = dev.sentence.accuracy;
    log.dev_sentence_f1 = dev.sentence.f1;
    log.dev_sentence_f1_star = dev.sentence.f1_star;
    log.dev_token_f1 = dev.token.f1;
    log.dev_token_f1_star = dev.token.f1_star;
    log.dev_span_f1 = dev.spans.f1;
    log.stopping_value =
        stopping_metric_value(dev.sentence.f1_star, dev.token.f1_star, dev_has_tokens, config.stopping);

    if (log.stopping_value > best + 1e-6 || result.best_epoch == 0) {
      best = log.stopping_value;
      result.best_epoch = epoch;
      result.best_value = best;
      best_params = model.snapshot_values();
      epochs_without_improvement = 0;
      log.improved = true;
    } else {
      // A tie keeps the later (longer-trained) checkpoint but does not
      // count as improvement for patience.
      if (log.stopping_value >= best - 1e-6) {
        result.best_epoch = epoch;
        result.best_value = best;
        best_params = model.snapshot_values();
      }
      ++epochs_without_improvement;
    }
    result.log.push_back(log);
    if (epochs_without_improvement >= config.patience) break;
  }

  model.restore_values(best_params);
  return result;
}

}  // namespace mhal
