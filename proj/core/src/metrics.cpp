#include "mhal/metrics.h"

#include <random>

#include "mhal/errors.h"

namespace mhal {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

double fbeta_score(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double den = b2 * precision + recall;
  return den > 0.0 ? (1.0 + b2) * precision * recall / den : 0.0;
}

MetricsReport token_micro(const std::vector<int>& pred, const std::vector<int>& gold,
                          int num_labels, int default_label, double beta) {
  if (pred.size() != gold.size()) {
    throw ShapeError("metrics: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(gold.size()) + " gold labels");
  }
  MetricsReport r;
  r.beta = beta;
  r.per_label.assign(static_cast<std::size_t>(num_labels), LabelCounts{});
  long correct = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gold[i] < 0) continue;
    ++total;
    if (pred[i] == gold[i]) {
      ++r.per_label[static_cast<std::size_t>(gold[i])].tp;
      ++correct;
    } else {
      ++r.per_label[static_cast<std::size_t>(pred[i])].fp;
      ++r.per_label[static_cast<std::size_t>(gold[i])].fn;
    }
  }
  long tp = 0, fp = 0, fn = 0, tp_s = 0, fp_s = 0, fn_s = 0;
  for (int l = 0; l < num_labels; ++l) {
    const auto& c = r.per_label[static_cast<std::size_t>(l)];
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    if (l != default_label) {
      tp_s += c.tp;
      fp_s += c.fp;
      fn_s += c.fn;
    }
  }
  r.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  r.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  r.f1 = fbeta_score(r.precision, r.recall, 1.0);
  r.precision_star = ratio(static_cast<double>(tp_s), static_cast<double>(tp_s + fp_s));
  r.recall_star = ratio(static_cast<double>(tp_s), static_cast<double>(tp_s + fn_s));
  r.f1_star = fbeta_score(r.precision_star, r.recall_star, 1.0);
  r.accuracy = ratio(static_cast<double>(correct), static_cast<double>(total));
  r.fbeta = fbeta_score(r.precision, r.recall, beta);
  r.fbeta_star = fbeta_score(r.precision_star, r.recall_star, beta);
  return r;
}

MetricsReport sentence_metrics(const std::vector<int>& pred, const std::vector<int>& gold,
                               int num_labels, int default_label, double beta) {
  return token_micro(pred, gold, num_labels, default_label, beta);
}

std::vector<Span> extract_spans(const std::vector<int>& labels, int default_label) {
  std::vector<Span> spans;
  const int n = static_cast<int>(labels.size());
  int i = 0;
  while (i < n) {
    if (labels[static_cast<std::size_t>(i)] == default_label || labels[static_cast<std::size_t>(i)] < 0) {
      ++i;
      continue;
    }
    const int label = labels[static_cast<std::size_t>(i)];
    int j = i + 1;
    while (j < n && labels[static_cast<std::size_t>(j)] == label) ++j;
    spans.push_back(Span{label, i, j});
    i = j;
  }
  return spans;
}

SpanScores span_f1(const std::vector<std::vector<int>>& pred,
                   const std::vector<std::vector<int>>& gold, int default_label) {
  if (pred.size() != gold.size()) {
    throw ShapeError("span_f1: " + std::to_string(pred.size()) + " prediction sequences for " +
                     std::to_string(gold.size()) + " gold sequences");
  }
  SpanScores s;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k].size() != gold[k].size()) {
      throw ShapeError("span_f1: sequence " + std::to_string(k) + " length mismatch");
    }
    const auto ps = extract_spans(pred[k], default_label);
    const auto gs = extract_spans(gold[k], default_label);
    std::vector<bool> gold_used(gs.size(), false);
    for (const Span& p : ps) {
      bool matched = false;
      for (std::size_t g = 0; g < gs.size(); ++g) {
        if (!gold_used[g] && gs[g] == p) {
          gold_used[g] = true;
          matched = true;
          break;
        }
      }
      matched ? ++s.tp : ++s.fp;
    }
    for (std::size_t g = 0; g < gs.size(); ++g) {
      if (!gold_used[g]) ++s.fn;
    }
  }
  s.precision = ratio(static_cast<double>(s.tp), static_cast<double>(s.tp + s.fp));
  s.recall = ratio(static_cast<double>(s.tp), static_cast<double>(s.tp + s.fn));
  s.f1 = fbeta_score(s.precision, s.recall, 1.0);
  return s;
}

MetricsReport random_baseline(const std::vector<std::vector<int>>& gold, int num_labels,
                              int default_label, double beta, Rng& rng, int trials) {
  if (trials < 1) throw ShapeError("random_baseline: trials must be >= 1");
  std::vector<int> flat_gold;
  for (const auto& seq : gold) flat_gold.insert(flat_gold.end(), seq.begin(), seq.end());
  std::uniform_int_distribution<int> dist(0, num_labels - 1);
  MetricsReport mean;
  mean.beta = beta;
  std::vector<int> assigned(flat_gold.size());
  for (int t = 0; t < trials; ++t) {
    for (auto& a : assigned) a = dist(rng);
    const MetricsReport r = token_micro(assigned, flat_gold, num_labels, default_label, beta);
    mean.precision += r.precision;
    mean.recall += r.recall;
    mean.f1 += r.f1;
    mean.precision_star += r.precision_star;
    mean.recall_star += r.recall_star;
    mean.f1_star += r.f1_star;
    mean.accuracy += r.accuracy;
    mean.fbeta += r.fbeta;
    mean.fbeta_star += r.fbeta_star;
  }
  const double inv = 1.0 / trials;
  mean.precision *= inv;
  mean.recall *= inv;
  mean.f1 *= inv;
  mean.precision_star *= inv;
  mean.recall_star *= inv;
  mean.f1_star *= inv;
  mean.accuracy *= inv;
  mean.fbeta *= inv;
  mean.fbeta_star *= inv;
  return mean;
}

}  // namespace mhal
