#include "mhal/labels.h"

#include <algorithm>
#include <set>

#include "mhal/errors.h"

namespace mhal {

namespace {

int index_of(const std::vector<std::string>& xs, const std::string& x) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] == x) return static_cast<int>(i);
  }
  return -1;
}

void check_unique(const std::vector<std::string>& labels, const char* what) {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw ConfigError(std::string(what) + " labels contain an empty name");
    if (!seen.insert(l).second) {
      throw ConfigError(std::string(what) + " label '" + l + "' listed twice");
    }
  }
}

}  // namespace

int LabelScheme::token_id(const std::string& name) const { return index_of(token_labels, name); }

int LabelScheme::sentence_id(const std::string& name) const {
  return index_of(sentence_labels, name);
}

LabelScheme LabelScheme::make(std::vector<std::string> token_labels,
                              std::vector<std::string> sentence_labels,
                              const std::string& default_label) {
  if (token_labels.size() < 2) throw ConfigError("need at least two token labels");
  if (sentence_labels.size() < 2) throw ConfigError("need at least two sentence labels");
  check_unique(token_labels, "token");
  check_unique(sentence_labels, "sentence");

  LabelScheme s;
  s.token_labels = std::move(token_labels);
  const std::set<std::string> tok_set(s.token_labels.begin(), s.token_labels.end());
  const std::set<std::string> sent_set(sentence_labels.begin(), sentence_labels.end());
  if (tok_set == sent_set) {
    s.mode = SchemeMode::kIdentical;
    s.sentence_labels = s.token_labels;  // one shared order for the H=S case
  } else if (sentence_labels.size() == 2) {
    s.mode = SchemeMode::kBinary;
    s.sentence_labels = std::move(sentence_labels);
  } else {
    throw ConfigError("unsupported label scheme: tagsets differ and the sentence tagset has " +
                      std::to_string(sentence_labels.size()) + " labels (only 2 is supported)");
  }
  s.default_token = s.token_id(default_label);
  s.default_sentence = s.sentence_id(default_label);
  if (s.default_token < 0 || s.default_sentence < 0) {
    throw ConfigError("default label '" + default_label +
                      "' must appear in both the token and the sentence tagset");
  }
  return s;
}

}  // namespace mhal
