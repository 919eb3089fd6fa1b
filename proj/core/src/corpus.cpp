#include "mhal/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mhal/errors.h"

namespace mhal {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

constexpr const char* kLabelDirective = "#label=";

}  // namespace

int Vocabs::word_id(const std::string& surface) const {
  auto it = word_index_.find(surface);
  if (it != word_index_.end()) return it->second;
  it = word_index_.find(lowercase(surface));
  if (it != word_index_.end()) return it->second;
  return word_oov_id();
}

int Vocabs::char_id(unsigned char c) const {
  auto it = char_index_.find(static_cast<int>(c));
  return it != char_index_.end() ? it->second : char_oov_id();
}

int Vocabs::lm_id(const std::string& surface) const {
  auto it = lm_index_.find(surface);
  return it != lm_index_.end() ? it->second : lm_oov_id();
}

void Vocabs::rebuild_index() {
  word_index_.clear();
  lm_index_.clear();
  char_index_.clear();
  for (std::size_t i = 0; i < words.size(); ++i) word_index_[words[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < lm_words.size(); ++i) lm_index_[lm_words[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < chars.size(); ++i) char_index_[chars[i]] = static_cast<int>(i);
}

// --- parsing ----------------------------------------------------------------

namespace {

void finish_sentence(std::vector<Sentence>& out, Sentence& cur, bool have_directive,
                     int directive_label, const LabelScheme& scheme, bool allow_unlabeled,
                     const std::string& origin, int line_no) {
  if (cur.tokens.empty()) return;
  if (have_directive) {
    cur.sentence_label = directive_label;
    cur.provenance = LabelProvenance::kAnnotated;
  } else {
    const bool fully_labeled =
        std::all_of(cur.tokens.begin(), cur.tokens.end(),
                    [](const Token& t) { return t.gold_label >= 0; });
    if (scheme.mode == SchemeMode::kBinary && fully_labeled) {
      cur.sentence_label = derive_sentence_label(cur, scheme);
      cur.provenance = LabelProvenance::kDerived;
    } else if (allow_unlabeled) {
      cur.sentence_label = -1;
    } else {
      throw DataError(origin + ":" + std::to_string(line_no) +
                      ": sentence needs an annotated #label= line under this scheme");
    }
  }
  out.push_back(std::move(cur));
  cur = Sentence{};
}

}  // namespace

std::vector<Sentence> parse_conll_text(const std::string& text, const LabelScheme& scheme,
                                       bool allow_unlabeled, const std::string& origin) {
  std::vector<Sentence> out;
  Sentence cur;
  bool have_directive = false;
  int directive_label = -1;
  int line_no = 0;

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) {
      finish_sentence(out, cur, have_directive, directive_label, scheme, allow_unlabeled, origin,
                      line_no);
      have_directive = false;
      directive_label = -1;
      continue;
    }
    if (line.rfind(kLabelDirective, 0) == 0) {
      if (!cur.tokens.empty()) {
        throw DataError(origin + ":" + std::to_string(line_no) +
                        ": #label= must precede the sentence's first token");
      }
      if (have_directive) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": duplicate #label= line");
      }
      const std::string name = trim(line.substr(std::string(kLabelDirective).size()));
      directive_label = scheme.sentence_id(name);
      if (directive_label < 0) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": unknown sentence label '" +
                        name + "'");
      }
      have_directive = true;
      continue;
    }
    Token tok;
    const std::size_t tab = raw.find('\t');
    if (tab == std::string::npos) {
      if (!allow_unlabeled) {
        throw DataError(origin + ":" + std::to_string(line_no) +
                        ": expected `surface<TAB>label`, got '" + line + "'");
      }
      tok.surface = line;
    } else {
      tok.surface = trim(raw.substr(0, tab));
      const std::string label = trim(raw.substr(tab + 1));
      tok.gold_label = scheme.token_id(label);
      if (tok.gold_label < 0) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": unknown token label '" + label +
                        "'");
      }
    }
    if (tok.surface.empty()) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": empty token surface");
    }
    tok.supervised = tok.gold_label >= 0;
    cur.tokens.push_back(std::move(tok));
  }
  finish_sentence(out, cur, have_directive, directive_label, scheme, allow_unlabeled, origin,
                  line_no + 1);
  return out;
}

std::vector<Sentence> parse_conll(const std::string& path, const LabelScheme& scheme,
                                  bool allow_unlabeled) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_conll_text(buf.str(), scheme, allow_unlabeled, path);
}

std::string serialize_conll(const std::vector<Sentence>& sentences, const LabelScheme& scheme) {
  std::ostringstream out;
  bool first = true;
  for (const Sentence& s : sentences) {
    if (!first) out << "\n";
    first = false;
    if (s.provenance == LabelProvenance::kAnnotated && s.sentence_label >= 0) {
      out << kLabelDirective << scheme.sentence_labels[s.sentence_label] << "\n";
    }
    for (const Token& t : s.tokens) {
      out << t.surface;
      if (t.gold_label >= 0) out << "\t" << scheme.token_labels[t.gold_label];
      out << "\n";
    }
  }
  return out.str();
}

int derive_sentence_label(const Sentence& sentence, const LabelScheme& scheme) {
  if (scheme.mode != SchemeMode::kBinary) {
    throw DataError("sentence labels cannot be derived when the tagsets are identical; annotate them");
  }
  if (sentence.tokens.empty()) throw DataError("cannot derive a label for an empty sentence");
  for (const Token& t : sentence.tokens) {
    if (t.gold_label < 0) throw DataError("cannot derive a sentence label from unlabeled tokens");
    if (t.gold_label != scheme.default_token) return 1 - scheme.default_sentence;
  }
  return scheme.default_sentence;
}

// --- vocabularies -------------------------------------------------------------

Vocabs build_vocabs(const std::vector<Sentence>& train, int lm_vocab_cap) {
  if (train.empty()) throw DataError("cannot build vocabularies from an empty training split");
  Vocabs v;
  std::unordered_map<std::string, long> freq;
  std::vector<std::string> order;  // first occurrence
  for (const Sentence& s : train) {
    for (const Token& t : s.tokens) {
      if (v.word_index_.emplace(t.surface, static_cast<int>(v.words.size())).second) {
        v.words.push_back(t.surface);
        order.push_back(t.surface);
      }
      ++freq[t.surface];
      for (unsigned char c : t.surface) {
        const int code = static_cast<int>(c);
        if (v.char_index_.emplace(code, static_cast<int>(v.chars.size())).second) {
          v.chars.push_back(code);
        }
      }
    }
  }
  // LM vocabulary: top lm_vocab_cap by frequency, ties broken by first
  // occurrence; the OOV bucket comes after.
  std::vector<int> ranked(order.size());
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](int a, int b) { return freq[order[a]] > freq[order[b]]; });
  const int lm_n = std::min<int>(lm_vocab_cap, static_cast<int>(ranked.size()));
  for (int i = 0; i < lm_n; ++i) {
    v.lm_words.push_back(order[ranked[i]]);
    v.lm_index_[order[ranked[i]]] = i;
  }
  return v;
}

void index_corpus(std::vector<Sentence>& sentences, const Vocabs& vocabs) {
  for (Sentence& s : sentences) {
    for (Token& t : s.tokens) {
      t.word_id = vocabs.word_id(t.surface);
      t.lm_id = vocabs.lm_id(t.surface);
      t.char_ids.clear();
      t.char_ids.reserve(t.surface.size());
      for (unsigned char c : t.surface) t.char_ids.push_back(vocabs.char_id(c));
    }
  }
}

// --- pretrained embeddings ------------------------------------------------------

EmbeddingTable load_embeddings(const std::string& path, const std::vector<std::string>& vocab_words,
                               int dim, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file: " + path);

  std::unordered_map<std::string, int> wanted;
  for (std::size_t i = 0; i < vocab_words.size(); ++i) {
    wanted[vocab_words[i]] = static_cast<int>(i);
  }

  EmbeddingTable out;
  out.table = glorot_uniform({static_cast<int>(vocab_words.size()) + 1, dim}, rng);

  std::string line;
  int line_no = 0;
  std::vector<bool> filled(vocab_words.size(), false);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    auto it = wanted.find(token);
    std::vector<double> vec;
    vec.reserve(static_cast<std::size_t>(dim));
    double x;
    while (ls >> x) vec.push_back(x);
    if (static_cast<int>(vec.size()) != dim) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                      " values, got " + std::to_string(vec.size()));
    }
    if (it == wanted.end() || filled[static_cast<std::size_t>(it->second)]) continue;
    std::copy(vec.begin(), vec.end(),
              out.table.data.begin() + static_cast<std::size_t>(it->second) * dim);
    filled[static_cast<std::size_t>(it->second)] = true;
    ++out.coverage;
  }
  return out;
}

// --- supervision masking ---------------------------------------------------------

void mask_token_supervision(std::vector<Sentence>& sentences, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) {
    throw ConfigError("supervision proportion must lie in [0,1], got " + std::to_string(p));
  }
  const std::size_t n = sentences.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto selected = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
  for (std::size_t i = 0; i < n; ++i) {
    const bool on = i < selected;
    for (Token& t : sentences[perm[i]].tokens) t.supervised = on && t.gold_label >= 0;
  }
}

// --- statistics ---------------------------------------------------------------

namespace {

double entropy_bits(const std::vector<long>& counts, long total) {
  if (total <= 0) return 0.0;
  double h = 0.0;
  for (long c : counts) {
    if (c <= 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

LevelStats level_stats(const std::vector<long>& counts, int default_label) {
  LevelStats s;
  s.label_counts = counts;
  long total = 0;
  for (long c : counts) {
    total += c;
    if (c > 0) ++s.unique_labels;
  }
  if (total > 0) {
    s.prop_default = static_cast<double>(counts[default_label]) / static_cast<double>(total);
  }
  s.full_entropy = entropy_bits(counts, total);
  std::vector<long> nd = counts;
  nd[default_label] = 0;
  long nd_total = total - counts[default_label];
  s.nondefault_entropy = entropy_bits(nd, nd_total);
  return s;
}

}  // namespace

CorpusStats corpus_stats(const std::vector<Sentence>& sentences, const LabelScheme& scheme) {
  if (sentences.empty()) throw DataError("cannot compute statistics of an empty corpus");
  CorpusStats st;
  std::vector<long> sent_counts(static_cast<std::size_t>(scheme.num_sentence_labels()), 0);
  std::vector<long> tok_counts(static_cast<std::size_t>(scheme.num_token_labels()), 0);
  for (const Sentence& s : sentences) {
    ++st.sentence_count;
    if (s.sentence_label >= 0) ++sent_counts[static_cast<std::size_t>(s.sentence_label)];
    for (const Token& t : s.tokens) {
      ++st.token_count;
      if (t.gold_label >= 0) ++tok_counts[static_cast<std::size_t>(t.gold_label)];
    }
  }
  st.sentence = level_stats(sent_counts, scheme.default_sentence);
  st.token = level_stats(tok_counts, scheme.default_token);
  return st;
}

std::string format_stats(const CorpusStats& stats, const LabelScheme& scheme) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "sentences=" << stats.sentence_count << " tokens=" << stats.token_count << "\n";
  auto emit = [&out](const char* level, const LevelStats& s) {
    out << "level=" << level << " no_labels=" << s.unique_labels << " prop_default=" << s.prop_default
        << " full_entropy=" << s.full_entropy << " nondefault_entropy=" << s.nondefault_entropy
        << "\n";
  };
  emit("sentence", stats.sentence);
  emit("token", stats.token);
  for (std::size_t i = 0; i < stats.sentence.label_counts.size(); ++i) {
    out << "count level=sentence label=" << scheme.sentence_labels[i]
        << " n=" << stats.sentence.label_counts[i] << "\n";
  }
  for (std::size_t i = 0; i < stats.token.label_counts.size(); ++i) {
    out << "count level=token label=" << scheme.token_labels[i]
        << " n=" << stats.token.label_counts[i] << "\n";
  }
  return out.str();
}

// --- synthetic corpora ------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, int>> default_marker_table(const SyntheticSpec& spec) {
  std::vector<std::pair<std::string, int>> table;
  for (int label = 1; label < spec.token_label_count; ++label) {
    for (int k = 0; k < spec.markers_per_label; ++k) {
      table.emplace_back("q" + std::to_string(label) + static_cast<char>('a' + k % 26), label);
    }
  }
  return table;
}

Sentence synth_sentence(const SyntheticSpec& spec,
                        const std::vector<std::pair<std::string, int>>& markers,
                        const LabelScheme& scheme, Rng& rng) {
  std::uniform_int_distribution<int> len_dist(spec.min_len, spec.max_len);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> filler_dist(0, spec.filler_vocab - 1);
  std::uniform_int_distribution<int> marker_dist(0, static_cast<int>(markers.size()) - 1);

  Sentence s;
  const int len = len_dist(rng);
  const bool marked = u01(rng) < spec.marker_sentence_prob;
  std::vector<long> marker_counts(static_cast<std::size_t>(spec.token_label_count), 0);
  for (int i = 0; i < len; ++i) {
    Token t;
    if (marked && u01(rng) < spec.marker_rate) {
      const auto& m = markers[static_cast<std::size_t>(marker_dist(rng))];
      t.surface = m.first;
      t.gold_label = m.second;
      ++marker_counts[static_cast<std::size_t>(m.second)];
    } else {
      t.surface = "w" + std::to_string(filler_dist(rng));
      t.gold_label = 0;
    }
    t.supervised = true;
    s.tokens.push_back(std::move(t));
  }
  if (spec.mode == SchemeMode::kBinary) {
    s.sentence_label = derive_sentence_label(s, scheme);
    s.provenance = LabelProvenance::kDerived;
  } else {
    int best = 0;
    long best_count = 0;
    for (int l = 1; l < spec.token_label_count; ++l) {
      if (marker_counts[static_cast<std::size_t>(l)] > best_count) {
        best = l;
        best_count = marker_counts[static_cast<std::size_t>(l)];
      }
    }
    s.sentence_label = best;
    s.provenance = LabelProvenance::kAnnotated;
  }
  return s;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  if (spec.token_label_count < 2) throw ConfigError("synthetic corpus needs at least two token labels");
  if (spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw ConfigError("synthetic corpus has an empty sentence-length range");
  }
  if (spec.filler_vocab < 1) throw ConfigError("synthetic corpus needs filler words");

  std::vector<std::string> token_labels{"O"};
  for (int l = 1; l < spec.token_label_count; ++l) token_labels.push_back("M" + std::to_string(l));

  SyntheticCorpus out;
  if (spec.mode == SchemeMode::kBinary) {
    out.scheme = LabelScheme::make(token_labels, {"O", "NON_O"}, "O");
  } else {
    out.scheme = LabelScheme::make(token_labels, token_labels, "O");
  }

  auto markers = spec.marker_table.empty() ? default_marker_table(spec) : spec.marker_table;
  for (const auto& [surface, label] : markers) {
    if (label <= 0 || label >= spec.token_label_count) {
      throw ConfigError("marker '" + surface + "' maps to label " + std::to_string(label) +
                        " outside the non-default range [1," +
                        std::to_string(spec.token_label_count) + ")");
    }
  }

  auto fill = [&](std::vector<Sentence>& split, int count) {
    split.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) split.push_back(synth_sentence(spec, markers, out.scheme, rng));
  };
  fill(out.train, spec.train_count);
  fill(out.dev, spec.dev_count);
  fill(out.test, spec.test_count);
  return out;
}

bool has_token_labels(const std::vector<Sentence>& sentences) {
  for (const Sentence& s : sentences) {
    for (const Token& t : s.tokens) {
      if (t.gold_label >= 0) return true;
    }
  }
  return false;
}

}  // namespace mhal
