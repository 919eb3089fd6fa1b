#pragma once

// Small shared fixtures: desk-size model configs and corpora.

#include <sstream>
#include <string>
#include <vector>

#include "mhal/corpus.h"
#include "mhal/model.h"

namespace testutil {

inline mhal::ModelConfig toy_config() {
  mhal::ModelConfig c;
  c.word_emb_dim = 6;
  c.char_emb_dim = 4;
  c.word_rnn_dim = 6;
  c.char_rnn_dim = 4;
  c.word_hidden_dim = 6;
  c.char_hidden_dim = 4;
  c.attention_evidence_dim = 5;
  c.sentence_hidden_dim = 6;
  c.input_dropout = 0.0;
  c.attention_dropout = 0.0;
  return c;
}

inline mhal::LabelScheme toy_scheme() {
  return mhal::LabelScheme::make({"O", "A", "B"}, {"O", "NON_O"}, "O");
}

// "surface/LABEL surface/LABEL ..." -> Sentence (labels all supervised)
inline mhal::Sentence make_sentence(const std::string& text, const mhal::LabelScheme& scheme) {
  mhal::Sentence s;
  std::istringstream in(text);
  std::string item;
  while (in >> item) {
    const auto slash = item.rfind('/');
    mhal::Token t;
    t.surface = item.substr(0, slash);
    t.gold_label = scheme.token_id(item.substr(slash + 1));
    t.supervised = t.gold_label >= 0;
    s.tokens.push_back(t);
  }
  s.sentence_label = mhal::derive_sentence_label(s, scheme);
  s.provenance = mhal::LabelProvenance::kDerived;
  return s;
}

inline std::vector<mhal::Sentence> toy_corpus(const mhal::LabelScheme& scheme) {
  return {
      make_sentence("the/O cat/O qa/A sat/O", scheme),
      make_sentence("dogs/O qb/B run/O", scheme),
      make_sentence("all/O quiet/O here/O", scheme),
      make_sentence("qa/A qb/B mixed/O case/O now/O", scheme),
      make_sentence("one/O", scheme),
  };
}

inline std::unique_ptr<mhal::Model> toy_model(std::uint64_t seed = 1) {
  const mhal::LabelScheme scheme = toy_scheme();
  const auto corpus = toy_corpus(scheme);
  const mhal::Vocabs vocabs = mhal::build_vocabs(corpus, 7500);
  return std::make_unique<mhal::Model>(toy_config(), scheme, vocabs, seed);
}

}  // namespace testutil
