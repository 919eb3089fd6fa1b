#include "mhal/model.h"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mhal/errors.h"

namespace mhal {

void ModelConfig::validate() const {
  const int dims[] = {word_emb_dim,    char_emb_dim,    word_rnn_dim,
                      char_rnn_dim,    word_hidden_dim, char_hidden_dim,
                      attention_evidence_dim, sentence_hidden_dim};
  for (int d : dims) {
    if (d < 1) throw ConfigError("model dimensions must be >= 1");
  }
  if (input_dropout < 0 || input_dropout >= 1 || attention_dropout < 0 || attention_dropout >= 1) {
    throw ConfigError("dropout rates must lie in [0,1)");
  }
}

namespace {

int argmax(const double* x, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

}  // namespace

std::vector<int> ForwardOutputs::predicted_tokens() const {
  const Tensor& t = token_distr.tape->value(token_distr);
  std::vector<int> out(static_cast<std::size_t>(t.rows()));
  for (int i = 0; i < t.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = argmax(t.data.data() + static_cast<std::size_t>(i) * t.cols(), t.cols());
  }
  return out;
}

int ForwardOutputs::predicted_sentence() const {
  const Tensor& t = sentence_distr.tape->value(sentence_distr);
  return argmax(t.data.data(), static_cast<int>(t.size()));
}

Var collect_sentence_scores(Tape& tape, Var head_scores, const LabelScheme& scheme) {
  const Tensor& o = tape.value(head_scores);
  const int h = scheme.num_token_labels();
  const int s = scheme.num_sentence_labels();
  if (o.rank() != 1 || o.shape[0] != h) {
    throw ShapeError("collect_sentence_scores: expected " + std::to_string(h) + " head scores, got " +
                     shape_str(o.shape));
  }
  if (scheme.mode == SchemeMode::kIdentical) {
    if (h != s) {
      throw ShapeError("collect_sentence_scores: identical scheme with " + std::to_string(h) +
                       " heads but " + std::to_string(s) + " sentence labels is unsupported");
    }
    return head_scores;
  }
  if (s != 2) {
    throw ShapeError("collect_sentence_scores: binary scheme needs 2 sentence labels, got " +
                     std::to_string(s));
  }
  std::vector<int> nondefault;
  for (int i = 0; i < h; ++i) {
    if (i != scheme.default_token) nondefault.push_back(i);
  }
  Var def = tape.gather(head_scores, {scheme.default_token});
  Var nd = tape.reduce_max(tape.gather(head_scores, nondefault));
  return scheme.default_sentence == 0 ? tape.concat({def, nd}) : tape.concat({nd, def});
}

Model::Model(ModelConfig cfg, LabelScheme scheme, Vocabs vocabs, std::uint64_t init_seed)
    : cfg_(cfg), scheme_(std::move(scheme)), vocabs_(std::move(vocabs)) {
  cfg_.validate();
  vocabs_.rebuild_index();
  Rng rng = make_rng(init_seed, 10);

  auto mat = [&rng](std::string name, int r, int c) {
    return Parameter(std::move(name), glorot_uniform({r, c}, rng));
  };
  auto vec = [](std::string name, int n) { return Parameter(std::move(name), Tensor({n})); };
  auto lstm = [&](const std::string& prefix, int in_dim, int hidden) {
    LstmParams p;
    p.wx = mat(prefix + ".wx", in_dim, 4 * hidden);
    p.wh = mat(prefix + ".wh", hidden, 4 * hidden);
    p.b = vec(prefix + ".b", 4 * hidden);
    return p;
  };

  const int w = static_cast<int>(vocabs_.words.size());
  const int c = static_cast<int>(vocabs_.chars.size());
  const int lm = static_cast<int>(vocabs_.lm_words.size());
  const int x_dim = cfg_.word_emb_dim + cfg_.char_hidden_dim;

  word_embeddings_ = mat("word_embeddings", w + 1, cfg_.word_emb_dim);
  char_embeddings_ = mat("char_embeddings", c + 1, cfg_.char_emb_dim);
  char_fwd_ = lstm("char_fwd", cfg_.char_emb_dim, cfg_.char_rnn_dim);
  char_bwd_ = lstm("char_bwd", cfg_.char_emb_dim, cfg_.char_rnn_dim);
  char_proj_w_ = mat("char_proj_w", 2 * cfg_.char_rnn_dim, cfg_.char_hidden_dim);
  char_proj_b_ = vec("char_proj_b", cfg_.char_hidden_dim);
  word_fwd_ = lstm("word_fwd", x_dim, cfg_.word_rnn_dim);
  word_bwd_ = lstm("word_bwd", x_dim, cfg_.word_rnn_dim);
  repr_w_ = mat("repr_w", 2 * cfg_.word_rnn_dim, cfg_.word_hidden_dim);
  repr_b_ = vec("repr_b", cfg_.word_hidden_dim);

  const int h = scheme_.num_token_labels();
  heads_.reserve(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    const std::string p = "heads." + std::to_string(i) + ".";
    HeadParams hp;
    hp.key_w = mat(p + "key_w", cfg_.word_hidden_dim, cfg_.attention_evidence_dim);
    hp.key_b = vec(p + "key_b", cfg_.attention_evidence_dim);
    hp.query_w = mat(p + "query_w", cfg_.word_hidden_dim, cfg_.attention_evidence_dim);
    hp.query_b = vec(p + "query_b", cfg_.attention_evidence_dim);
    hp.value_w = mat(p + "value_w", cfg_.word_hidden_dim, cfg_.attention_evidence_dim);
    hp.value_b = vec(p + "value_b", cfg_.attention_evidence_dim);
    heads_.push_back(std::move(hp));
  }

  sent_hidden_w_ = mat("sent_hidden_w", cfg_.attention_evidence_dim, cfg_.sentence_hidden_dim);
  sent_hidden_b_ = vec("sent_hidden_b", cfg_.sentence_hidden_dim);
  sent_out_w_ = mat("sent_out_w", cfg_.sentence_hidden_dim, 1);
  sent_out_b_ = vec("sent_out_b", 1);

  lm_fwd_proj_w_ = mat("lm_fwd_proj_w", cfg_.word_rnn_dim, cfg_.word_hidden_dim);
  lm_fwd_proj_b_ = vec("lm_fwd_proj_b", cfg_.word_hidden_dim);
  lm_fwd_out_w_ = mat("lm_fwd_out_w", cfg_.word_hidden_dim, lm + 1);
  lm_fwd_out_b_ = vec("lm_fwd_out_b", lm + 1);
  lm_bwd_proj_w_ = mat("lm_bwd_proj_w", cfg_.word_rnn_dim, cfg_.word_hidden_dim);
  lm_bwd_proj_b_ = vec("lm_bwd_proj_b", cfg_.word_hidden_dim);
  lm_bwd_out_w_ = mat("lm_bwd_out_w", cfg_.word_hidden_dim, lm + 1);
  lm_bwd_out_b_ = vec("lm_bwd_out_b", lm + 1);

  build_registry();
}

void Model::build_registry() {
  registry_.clear();
  auto add = [this](Parameter& p) { registry_.push_back(&p); };
  auto add_lstm = [&](LstmParams& l) {
    add(l.wx);
    add(l.wh);
    add(l.b);
  };
  add(word_embeddings_);
  add(char_embeddings_);
  add_lstm(char_fwd_);
  add_lstm(char_bwd_);
  add(char_proj_w_);
  add(char_proj_b_);
  add_lstm(word_fwd_);
  add_lstm(word_bwd_);
  add(repr_w_);
  add(repr_b_);
  for (HeadParams& h : heads_) {
    add(h.key_w);
    add(h.key_b);
    add(h.query_w);
    add(h.query_b);
    add(h.value_w);
    add(h.value_b);
  }
  add(sent_hidden_w_);
  add(sent_hidden_b_);
  add(sent_out_w_);
  add(sent_out_b_);
  add(lm_fwd_proj_w_);
  add(lm_fwd_proj_b_);
  add(lm_fwd_out_w_);
  add(lm_fwd_out_b_);
  add(lm_bwd_proj_w_);
  add(lm_bwd_proj_b_);
  add(lm_bwd_out_w_);
  add(lm_bwd_out_b_);
}

Parameter* Model::find_parameter(const std::string& name) {
  for (Parameter* p : registry_) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void Model::set_word_embeddings(const Tensor& table) {
  if (table.shape != word_embeddings_.value.shape) {
    throw ShapeError("embedding table " + shape_str(table.shape) + " does not match model table " +
                     shape_str(word_embeddings_.value.shape));
  }
  word_embeddings_.value.data = table.data;
}

Var Model::embed_token(Tape& tape, const std::string& surface) {
  if (surface.empty()) throw DataError("cannot embed an empty token surface");
  const int wid = vocabs_.word_id(surface);
  Var word_vec = tape.row(tape.lookup(word_embeddings_, {wid}), 0);

  std::vector<int> cids;
  cids.reserve(surface.size());
  for (unsigned char c : surface) cids.push_back(vocabs_.char_id(c));
  Var cemb = tape.lookup(char_embeddings_, cids);
  Var fwd = tape.lstm_sequence(cemb, tape.parameter(char_fwd_.wx), tape.parameter(char_fwd_.wh),
                               tape.parameter(char_fwd_.b), false);
  Var bwd = tape.lstm_sequence(cemb, tape.parameter(char_bwd_.wx), tape.parameter(char_bwd_.wh),
                               tape.parameter(char_bwd_.b), true);
  Var finals = tape.concat({tape.row(fwd, static_cast<int>(cids.size()) - 1), tape.row(bwd, 0)});
  Var char_vec = tape.tanh(
      tape.add(tape.matmul(finals, tape.parameter(char_proj_w_)), tape.parameter(char_proj_b_)));
  return tape.concat({word_vec, char_vec});
}

Var Model::embed_sentence(Tape& tape, const Sentence& sentence) {
  if (sentence.tokens.empty()) throw DataError("cannot embed an empty sentence");
  std::vector<Var> rows;
  rows.reserve(sentence.tokens.size());
  for (const Token& t : sentence.tokens) rows.push_back(embed_token(tape, t.surface));
  return tape.stack_rows(rows);
}

Model::EncodeOut Model::encode(Tape& tape, Var embedded) {
  EncodeOut out;
  out.fwd_states = tape.lstm_sequence(embedded, tape.parameter(word_fwd_.wx),
                                      tape.parameter(word_fwd_.wh), tape.parameter(word_fwd_.b), false);
  out.bwd_states = tape.lstm_sequence(embedded, tape.parameter(word_bwd_.wx),
                                      tape.parameter(word_bwd_.wh), tape.parameter(word_bwd_.b), true);
  Var cat = tape.hconcat(out.fwd_states, out.bwd_states);
  out.reprs = tape.tanh(
      tape.add_rowwise(tape.matmul(cat, tape.parameter(repr_w_)), tape.parameter(repr_b_)));
  return out;
}

Model::HeadProjection Model::head_projections(Tape& tape, Var reprs, int head) {
  if (head < 0 || head >= static_cast<int>(heads_.size())) {
    throw ShapeError("head index " + std::to_string(head) + " outside [0," +
                     std::to_string(heads_.size()) + ")");
  }
  HeadParams& hp = heads_[static_cast<std::size_t>(head)];
  const bool matrix = tape.value(reprs).rank() == 2;
  auto project = [&](Parameter& w, Parameter& b) {
    Var lin = tape.matmul(reprs, tape.parameter(w));
    Var biased = matrix ? tape.add_rowwise(lin, tape.parameter(b)) : tape.add(lin, tape.parameter(b));
    return tape.tanh(biased);
  };
  HeadProjection out;
  out.key = project(hp.key_w, hp.key_b);
  out.query = project(hp.query_w, hp.query_b);
  out.value = project(hp.value_w, hp.value_b);
  return out;
}

ForwardOutputs Model::attention_stage(Tape& tape, Var reprs, RunMode mode, Rng* dropout_rng) {
  const int h = scheme_.num_token_labels();
  ForwardOutputs out;
  out.length = tape.value(reprs).rows();
  out.token_reprs = reprs;

  std::vector<Var> score_cols;
  score_cols.reserve(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    HeadProjection hp = head_projections(tape, reprs, i);
    out.keys.push_back(hp.key);
    out.queries.push_back(hp.query);
    out.values.push_back(hp.value);
    Var pooled = tape.reduce_mean(hp.query, 0);
    out.pooled_queries.push_back(pooled);
    score_cols.push_back(tape.matmul(hp.key, pooled));
  }
  Var scores = tape.stack_cols(score_cols);
  if (mode == RunMode::kTrain && cfg_.attention_dropout > 0.0) {
    scores = tape.dropout(scores, cfg_.attention_dropout, *dropout_rng);
  }
  out.scores = scores;
  out.token_distr = tape.softmax(scores, 1);

  Var sig = tape.sigmoid(scores);
  out.attn_weights = tape.colwise_div(sig, tape.reduce_sum(sig, 0));

  std::vector<Var> head_score_list;
  head_score_list.reserve(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    Var rep = tape.matmul(tape.transpose(out.values[static_cast<std::size_t>(i)]),
                          tape.column(out.attn_weights, i));
    out.head_reprs.push_back(rep);
    Var hidden = tape.tanh(
        tape.add(tape.matmul(rep, tape.parameter(sent_hidden_w_)), tape.parameter(sent_hidden_b_)));
    head_score_list.push_back(
        tape.add(tape.matmul(hidden, tape.parameter(sent_out_w_)), tape.parameter(sent_out_b_)));
  }
  out.head_scores = tape.concat(head_score_list);
  out.collected = collect_sentence_scores(tape, out.head_scores, scheme_);
  out.sentence_distr = tape.softmax(out.collected);
  return out;
}

ForwardOutputs Model::forward(Tape& tape, const Sentence& sentence, RunMode mode, Rng* dropout_rng) {
  if (sentence.tokens.empty()) throw DataError("cannot run the model on an empty sentence");
  if (mode == RunMode::kTrain && dropout_rng == nullptr) {
    throw ShapeError("train-mode forward needs a dropout generator");
  }
  Var x = embed_sentence(tape, sentence);
  EncodeOut enc = encode(tape, x);
  Var reprs = enc.reprs;
  if (mode == RunMode::kTrain && cfg_.input_dropout > 0.0) {
    reprs = tape.dropout(reprs, cfg_.input_dropout, *dropout_rng);
  }
  ForwardOutputs out = attention_stage(tape, reprs, mode, dropout_rng);
  out.fwd_states = enc.fwd_states;
  out.bwd_states = enc.bwd_states;
  return out;
}

Var Model::lm_direction_scores(Tape& tape, Var states, bool backward_dir) {
  Parameter& pw = backward_dir ? lm_bwd_proj_w_ : lm_fwd_proj_w_;
  Parameter& pb = backward_dir ? lm_bwd_proj_b_ : lm_fwd_proj_b_;
  Parameter& ow = backward_dir ? lm_bwd_out_w_ : lm_fwd_out_w_;
  Parameter& ob = backward_dir ? lm_bwd_out_b_ : lm_fwd_out_b_;
  Var proj = tape.tanh(tape.add_rowwise(tape.matmul(states, tape.parameter(pw)), tape.parameter(pb)));
  return tape.add_rowwise(tape.matmul(proj, tape.parameter(ow)), tape.parameter(ob));
}

std::vector<std::vector<double>> Model::snapshot_values() const {
  std::vector<std::vector<double>> snap;
  snap.reserve(registry_.size());
  for (const Parameter* p : registry_) snap.push_back(p->value.data);
  return snap;
}

void Model::restore_values(const std::vector<std::vector<double>>& snap) {
  if (snap.size() != registry_.size()) throw ShapeError("snapshot does not match this model");
  for (std::size_t i = 0; i < snap.size(); ++i) {
    if (snap[i].size() != registry_[i]->value.data.size()) {
      throw ShapeError("snapshot entry " + std::to_string(i) + " does not match " + registry_[i]->name);
    }
    registry_[i]->value.data = snap[i];
  }
}

// --- checkpoint io ------------------------------------------------------------

namespace {

constexpr const char* kMagic = "mhal-checkpoint";
constexpr int kVersion = 1;

std::string hex_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == nullptr || *end != '\0' || s.empty()) {
    throw DataError(path + ": bad numeric literal '" + s + "'");
  }
  return v;
}

}  // namespace

void Model::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << kMagic << " " << kVersion << "\n";
  out << "dims " << cfg_.word_emb_dim << " " << cfg_.char_emb_dim << " " << cfg_.word_rnn_dim << " "
      << cfg_.char_rnn_dim << " " << cfg_.word_hidden_dim << " " << cfg_.char_hidden_dim << " "
      << cfg_.attention_evidence_dim << " " << cfg_.sentence_hidden_dim << "\n";
  out << "dropout " << hex_double(cfg_.input_dropout) << " " << hex_double(cfg_.attention_dropout)
      << "\n";
  out << "labels token " << scheme_.token_labels.size() << "\n";
  for (const auto& l : scheme_.token_labels) out << l << "\n";
  out << "labels sentence " << scheme_.sentence_labels.size() << "\n";
  for (const auto& l : scheme_.sentence_labels) out << l << "\n";
  out << "default_label " << scheme_.token_labels[static_cast<std::size_t>(scheme_.default_token)]
      << "\n";
  out << "vocab words " << vocabs_.words.size() << "\n";
  for (const auto& w : vocabs_.words) out << w << "\n";
  out << "vocab chars " << vocabs_.chars.size() << "\n";
  for (std::size_t i = 0; i < vocabs_.chars.size(); ++i) {
    out << vocabs_.chars[i] << (i + 1 == vocabs_.chars.size() ? "" : " ");
  }
  out << "\n";
  out << "vocab lm " << vocabs_.lm_words.size() << "\n";
  for (const auto& w : vocabs_.lm_words) out << w << "\n";
  out << "params " << registry_.size() << "\n";
  for (const Parameter* p : registry_) {
    out << "param " << p->name << " " << p->value.rank();
    for (int d : p->value.shape) out << " " << d;
    out << "\n";
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      out << hex_double(p->value.data[i]);
      out << ((i % 8 == 7 || i + 1 == p->value.data.size()) ? "\n" : " ");
    }
  }
  out << "end\n";
  if (!out) throw DataError("failed while writing checkpoint: " + path);
}

std::unique_ptr<Model> Model::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  auto expect = [&path](std::istream& s, const std::string& what) {
    std::string tok;
    if (!(s >> tok) || tok != what) {
      throw DataError(path + ": malformed checkpoint (expected '" + what + "', got '" + tok + "')");
    }
  };
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic || version != kVersion) {
    throw DataError(path + ": not a version-" + std::to_string(kVersion) + " checkpoint");
  }

  ModelConfig cfg;
  expect(in, "dims");
  in >> cfg.word_emb_dim >> cfg.char_emb_dim >> cfg.word_rnn_dim >> cfg.char_rnn_dim >>
      cfg.word_hidden_dim >> cfg.char_hidden_dim >> cfg.attention_evidence_dim >>
      cfg.sentence_hidden_dim;
  expect(in, "dropout");
  std::string d1, d2;
  in >> d1 >> d2;
  cfg.input_dropout = parse_double(d1, path);
  cfg.attention_dropout = parse_double(d2, path);

  auto read_lines = [&](std::istream& s, std::size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    std::string line;
    std::getline(s, line);  // finish current line
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(s, line)) throw DataError(path + ": truncated checkpoint");
      out.push_back(line);
    }
    return out;
  };

  expect(in, "labels");
  expect(in, "token");
  std::size_t n_tok = 0;
  in >> n_tok;
  auto token_labels = read_lines(in, n_tok);
  expect(in, "labels");
  expect(in, "sentence");
  std::size_t n_sent = 0;
  in >> n_sent;
  auto sentence_labels = read_lines(in, n_sent);
  expect(in, "default_label");
  std::string default_label;
  in >> default_label;

  Vocabs vocabs;
  expect(in, "vocab");
  expect(in, "words");
  std::size_t n_words = 0;
  in >> n_words;
  vocabs.words = read_lines(in, n_words);
  expect(in, "vocab");
  expect(in, "chars");
  std::size_t n_chars = 0;
  in >> n_chars;
  vocabs.chars.resize(n_chars);
  for (auto& c : vocabs.chars) in >> c;
  expect(in, "vocab");
  expect(in, "lm");
  std::size_t n_lm = 0;
  in >> n_lm;
  vocabs.lm_words = read_lines(in, n_lm);

  LabelScheme scheme = LabelScheme::make(token_labels, sentence_labels, default_label);
  auto model = std::unique_ptr<Model>(new Model(cfg, scheme, vocabs, 0));

  expect(in, "params");
  std::size_t n_params = 0;
  in >> n_params;
  if (n_params != model->registry_.size()) {
    throw DataError(path + ": checkpoint has " + std::to_string(n_params) + " parameters, model needs " +
                    std::to_string(model->registry_.size()));
  }
  for (Parameter* p : model->registry_) {
    expect(in, "param");
    std::string name;
    int rank = 0;
    in >> name >> rank;
    if (name != p->name) {
      throw DataError(path + ": parameter order mismatch (expected " + p->name + ", got " + name + ")");
    }
    Shape shape(static_cast<std::size_t>(rank));
    for (int& d : shape) in >> d;
    if (shape != p->value.shape) {
      throw DataError(path + ": parameter " + name + " has shape " + shape_str(shape) +
                      ", model needs " + shape_str(p->value.shape));
    }
    std::string tok;
    for (double& v : p->value.data) {
      if (!(in >> tok)) throw DataError(path + ": truncated checkpoint in " + name);
      v = parse_double(tok, path);
    }
  }
  expect(in, "end");
  return model;
}

}  // namespace mhal
