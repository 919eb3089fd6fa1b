#pragma once

#include <vector>

#include "mhal/rng.h"

namespace mhal {

struct LabelCounts {
  long tp = 0, fp = 0, fn = 0;
};

// Micro-averaged scores over one prediction/gold pairing. Plain metrics pool
// counts over every label; starred ones pool only the non-default labels.
// All values live in [0,1]; 0/0 ratios resolve to 0.
struct MetricsReport {
  std::vector<LabelCounts> per_label;
  double precision = 0, recall = 0, f1 = 0;
  double precision_star = 0, recall_star = 0, f1_star = 0;
  double accuracy = 0;
  double beta = 1.0;
  double fbeta = 0, fbeta_star = 0;
};

// `pred` and `gold` must have equal lengths; entries with a negative gold are
// ignored (unlabeled input tokens).
MetricsReport token_micro(const std::vector<int>& pred, const std::vector<int>& gold,
                          int num_labels, int default_label, double beta = 1.0);

// Same computation at the sentence level.
MetricsReport sentence_metrics(const std::vector<int>& pred, const std::vector<int>& gold,
                               int num_labels, int default_label, double beta = 1.0);

// Entity-level scores under the IO scheme: maximal runs of one non-default
// label form spans, and a predicted span counts only when label, start and
// end all match a gold span.
struct Span {
  int label = 0;
  int begin = 0;  // inclusive
  int end = 0;    // exclusive
  bool operator==(const Span&) const = default;
};

std::vector<Span> extract_spans(const std::vector<int>& labels, int default_label);

struct SpanScores {
  long tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
};

SpanScores span_f1(const std::vector<std::vector<int>>& pred,
                   const std::vector<std::vector<int>>& gold, int default_label);

// Expected metrics of labels assigned uniformly at random, averaged over
// `trials` seeded draws. per_label counts are left empty.
MetricsReport random_baseline(const std::vector<std::vector<int>>& gold, int num_labels,
                              int default_label, double beta, Rng& rng, int trials);

double fbeta_score(double precision, double recall, double beta);

}  // namespace mhal
