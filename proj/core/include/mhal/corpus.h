#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mhal/labels.h"
#include "mhal/rng.h"
#include "mhal/tensor.h"

namespace mhal {

struct Token {
  std::string surface;
  int word_id = -1;            // index into Vocabs::words, OOV row when unseen
  std::vector<int> char_ids;   // byte-level, OOV char when unseen
  int lm_id = -1;              // index into Vocabs::lm_words, OOV bucket when capped out
  int gold_label = -1;         // token-label id, -1 when the input carried none
  bool supervised = false;     // whether this token contributes to the token loss
};

enum class LabelProvenance { kAnnotated, kDerived };

struct Sentence {
  std::vector<Token> tokens;
  int sentence_label = -1;
  LabelProvenance provenance = LabelProvenance::kAnnotated;

  int length() const { return static_cast<int>(tokens.size()); }
};

// Vocabularies built from the training split. Ids 0..n-1 follow first
// occurrence; the OOV id comes right after the known entries.
struct Vocabs {
  std::vector<std::string> words;
  std::vector<int> chars;          // byte values 0..255
  std::vector<std::string> lm_words;  // most frequent words first

  int word_oov_id() const { return static_cast<int>(words.size()); }
  int char_oov_id() const { return static_cast<int>(chars.size()); }
  int lm_oov_id() const { return static_cast<int>(lm_words.size()); }

  // Case-sensitive lookup with a lowercase fallback, then OOV.
  int word_id(const std::string& surface) const;
  int char_id(unsigned char c) const;
  int lm_id(const std::string& surface) const;

  void rebuild_index();  // restores the lookup maps after deserialization

 private:
  std::unordered_map<std::string, int> word_index_;
  std::unordered_map<std::string, int> lm_index_;
  std::unordered_map<int, int> char_index_;
  friend Vocabs build_vocabs(const std::vector<Sentence>&, int);
};

// --- file formats -----------------------------------------------------------

// One token per line as `surface<TAB>token_label`; a blank line ends the
// sentence. An optional `#label=<sentence_label>` line before the first token
// of a sentence carries an annotated sentence label; without it the label is
// derived (binary mode). With allow_unlabeled, bare-surface lines and missing
// sentence labels are accepted (prediction inputs).
std::vector<Sentence> parse_conll(const std::string& path, const LabelScheme& scheme,
                                  bool allow_unlabeled = false);
std::vector<Sentence> parse_conll_text(const std::string& text, const LabelScheme& scheme,
                                       bool allow_unlabeled = false,
                                       const std::string& origin = "<string>");
std::string serialize_conll(const std::vector<Sentence>& sentences, const LabelScheme& scheme);

// Default sentence label iff every token carries the default token label.
// Only meaningful in binary mode; identical-mode sentence labels must be
// annotated.
int derive_sentence_label(const Sentence& sentence, const LabelScheme& scheme);

Vocabs build_vocabs(const std::vector<Sentence>& train, int lm_vocab_cap);

// Fills word/char/lm ids on every token from the given vocabularies.
void index_corpus(std::vector<Sentence>& sentences, const Vocabs& vocabs);

// --- pretrained embeddings ----------------------------------------------------

struct EmbeddingTable {
  Tensor table;   // [words + 1 x dim], last row is the shared OOV row
  int coverage = 0;  // vocabulary words found in the file
};

// Text format: one entry per line, token followed by `dim` reals. Rows for
// words absent from the file (and the OOV row) are Glorot-initialized.
EmbeddingTable load_embeddings(const std::string& path, const std::vector<std::string>& vocab_words,
                               int dim, Rng& rng);

// --- supervision masking ----------------------------------------------------

// Grants token supervision to ceil(p * n) whole sentences chosen uniformly
// at random; all other token flags are cleared. Sentence labels stay fully
// supervised. Selection takes a prefix of one seeded permutation, so growing
// p with the same generator state yields nested supervised sets.
void mask_token_supervision(std::vector<Sentence>& sentences, double p, Rng& rng);

// --- statistics ---------------------------------------------------------------

struct LevelStats {
  int unique_labels = 0;
  double prop_default = 0.0;
  double full_entropy = 0.0;        // bits
  double nondefault_entropy = 0.0;  // bits, distribution renormalized over non-default labels
  std::vector<long> label_counts;   // indexed by label id
};

struct CorpusStats {
  long sentence_count = 0;
  long token_count = 0;
  LevelStats sentence;
  LevelStats token;
};

CorpusStats corpus_stats(const std::vector<Sentence>& sentences, const LabelScheme& scheme);
std::string format_stats(const CorpusStats& stats, const LabelScheme& scheme);

// --- synthetic corpora --------------------------------------------------------

// Desk-scale generator: sentences of filler words (default label) with marker
// tokens carrying designated non-default labels. Binary-mode sentence labels
// are derived from marker presence; identical-mode labels take the majority
// marker label (default when none).
struct SyntheticSpec {
  int token_label_count = 5;  // H, default label first
  SchemeMode mode = SchemeMode::kBinary;
  int filler_vocab = 40;
  int markers_per_label = 3;  // used when marker_table is empty
  int min_len = 4;
  int max_len = 9;
  double marker_sentence_prob = 0.5;  // chance a sentence draws markers at all
  double marker_rate = 0.35;          // per-position marker chance inside such sentences
  int train_count = 2000;
  int dev_count = 500;
  int test_count = 500;
  // Optional explicit surface -> non-default label id mapping.
  std::vector<std::pair<std::string, int>> marker_table;
};

struct SyntheticCorpus {
  LabelScheme scheme;
  std::vector<Sentence> train, dev, test;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, Rng& rng);

bool has_token_labels(const std::vector<Sentence>& sentences);

}  // namespace mhal
