#pragma once

// Naive reference scorers, deliberately written as direct loops (O(L*n)
// counting, O(n^2) span enumeration) and kept independent of the library's
// metric code paths.

#include <vector>

namespace testutil {

struct RefMicro {
  double p = 0, r = 0, f1 = 0;
  double p_star = 0, r_star = 0, f1_star = 0;
  double acc = 0;
  double fbeta = 0, fbeta_star = 0;
};

inline double ref_fbeta(double p, double r, double beta) {
  const double b2 = beta * beta;
  if (b2 * p + r <= 0.0) return 0.0;
  return (1.0 + b2) * p * r / (b2 * p + r);
}

inline RefMicro ref_micro(const std::vector<int>& pred, const std::vector<int>& gold,
                          int num_labels, int default_label, double beta) {
  long tp = 0, fp = 0, fn = 0, tps = 0, fps = 0, fns = 0, correct = 0, total = 0;
  for (int l = 0; l < num_labels; ++l) {
    long tpl = 0, fpl = 0, fnl = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (gold[i] < 0) continue;
      if (pred[i] == l && gold[i] == l) ++tpl;
      if (pred[i] == l && gold[i] != l) ++fpl;
      if (pred[i] != l && gold[i] == l) ++fnl;
    }
    tp += tpl;
    fp += fpl;
    fn += fnl;
    if (l != default_label) {
      tps += tpl;
      fps += fpl;
      fns += fnl;
    }
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gold[i] < 0) continue;
    ++total;
    if (pred[i] == gold[i]) ++correct;
  }
  RefMicro m;
  m.p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.r = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = ref_fbeta(m.p, m.r, 1.0);
  m.p_star = tps + fps > 0 ? static_cast<double>(tps) / (tps + fps) : 0.0;
  m.r_star = tps + fns > 0 ? static_cast<double>(tps) / (tps + fns) : 0.0;
  m.f1_star = ref_fbeta(m.p_star, m.r_star, 1.0);
  m.acc = total > 0 ? static_cast<double>(correct) / total : 0.0;
  m.fbeta = ref_fbeta(m.p, m.r, beta);
  m.fbeta_star = ref_fbeta(m.p_star, m.r_star, beta);
  return m;
}

struct RefSpan {
  int label, begin, end;
  bool operator==(const RefSpan&) const = default;
};

// Enumerates every (begin, end) pair and keeps those that form a maximal
// same-label non-default run.
inline std::vector<RefSpan> ref_extract_spans(const std::vector<int>& labels, int default_label) {
  std::vector<RefSpan> spans;
  const int n = static_cast<int>(labels.size());
  for (int b = 0; b < n; ++b) {
    for (int e = b + 1; e <= n; ++e) {
      const int l = labels[static_cast<std::size_t>(b)];
      if (l == default_label || l < 0) continue;
      bool uniform = true;
      for (int k = b; k < e; ++k) {
        if (labels[static_cast<std::size_t>(k)] != l) uniform = false;
      }
      if (!uniform) continue;
      if (b > 0 && labels[static_cast<std::size_t>(b - 1)] == l) continue;
      if (e < n && labels[static_cast<std::size_t>(e)] == l) continue;
      spans.push_back(RefSpan{l, b, e});
    }
  }
  return spans;
}

struct RefSpanScores {
  long tp = 0, fp = 0, fn = 0;
  double p = 0, r = 0, f1 = 0;
};

inline RefSpanScores ref_span_f1(const std::vector<std::vector<int>>& pred,
                                 const std::vector<std::vector<int>>& gold, int default_label) {
  RefSpanScores s;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const auto ps = ref_extract_spans(pred[k], default_label);
    const auto gs = ref_extract_spans(gold[k], default_label);
    for (const RefSpan& a : ps) {
      bool hit = false;
      for (const RefSpan& b : gs) {
        if (a == b) hit = true;
      }
      hit ? ++s.tp : ++s.fp;
    }
    for (const RefSpan& b : gs) {
      bool hit = false;
      for (const RefSpan& a : ps) {
        if (a == b) hit = true;
      }
      if (!hit) ++s.fn;
    }
  }
  s.p = s.tp + s.fp > 0 ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
  s.r = s.tp + s.fn > 0 ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
  s.f1 = ref_fbeta(s.p, s.r, 1.0);
  return s;
}

}  // namespace testutil
