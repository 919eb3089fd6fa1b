#pragma once

#include <string>
#include <vector>

namespace mhal {

// How the token tagset relates to the sentence tagset.
//  kIdentical: the two tagsets are the same list (sentiment-style tasks).
//  kBinary:    tokens are multi-class, sentences are {default, non-default}.
enum class SchemeMode { kIdentical, kBinary };

// Token tagset of size H, sentence tagset of size S, and the shared default
// label ("nothing of interest") present in both.
struct LabelScheme {
  std::vector<std::string> token_labels;
  std::vector<std::string> sentence_labels;
  int default_token = 0;
  int default_sentence = 0;
  SchemeMode mode = SchemeMode::kIdentical;

  int num_token_labels() const { return static_cast<int>(token_labels.size()); }
  int num_sentence_labels() const { return static_cast<int>(sentence_labels.size()); }

  int token_id(const std::string& name) const;     // -1 when unknown
  int sentence_id(const std::string& name) const;  // -1 when unknown

  // Validates and classifies the tagsets. Identical label sets (canonicalized
  // to the token order) give kIdentical; otherwise the sentence tagset must
  // be binary. The default label must appear in both sets.
  static LabelScheme make(std::vector<std::string> token_labels,
                          std::vector<std::string> sentence_labels,
                          const std::string& default_label);
};

}  // namespace mhal
