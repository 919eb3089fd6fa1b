#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mhal/corpus.h"
#include "mhal/labels.h"
#include "mhal/tape.h"

namespace mhal {

struct ModelConfig {
  int word_emb_dim = 300;
  int char_emb_dim = 100;
  int word_rnn_dim = 300;
  int char_rnn_dim = 100;
  int word_hidden_dim = 50;
  int char_hidden_dim = 50;
  int attention_evidence_dim = 100;
  int sentence_hidden_dim = 200;
  double input_dropout = 0.5;      // on token representations, after the BiLSTM
  double attention_dropout = 0.5;  // on attention evidence scores, before normalization
  void validate() const;
};

enum class RunMode { kTrain, kEval };

// Everything one forward pass produces. Distributions normalize to 1 within
// 1e-6: token_distr across heads per token, attn_weights across tokens per
// head, sentence_distr across sentence labels.
struct ForwardOutputs {
  int length = 0;
  Var token_reprs;                 // [N x word_hidden], dropped out in train mode
  std::vector<Var> keys;           // per head, [N x evidence]
  std::vector<Var> queries;        // per head, [N x evidence]
  std::vector<Var> values;         // per head, [N x evidence]
  std::vector<Var> pooled_queries; // per head, [evidence]
  Var scores;                      // [N x H] attention evidence, dropped out in train mode
  Var token_distr;                 // [N x H]
  Var attn_weights;                // [N x H]
  std::vector<Var> head_reprs;     // per head, [evidence]
  Var head_scores;                 // [H]
  Var collected;                   // [S]
  Var sentence_distr;              // [S]
  Var fwd_states;                  // [N x word_rnn]
  Var bwd_states;                  // [N x word_rnn]

  std::vector<int> predicted_tokens() const;  // argmax per row, lowest index wins ties
  int predicted_sentence() const;
};

struct LstmParams {
  Parameter wx, wh, b;
};

struct HeadParams {
  Parameter key_w, key_b, query_w, query_b, value_w, value_b;
};

// Maps the per-head sentence scores [H] onto the sentence tagset [S].
// Identical tagsets concatenate directly; binary schemes pair the default
// head's score with the maximum over the non-default heads. Any other
// combination is rejected.
Var collect_sentence_scores(Tape& tape, Var head_scores, const LabelScheme& scheme);

// The labeller: word+char embeddings, BiLSTM encoder, one attention head per
// token label, joint token/sentence outputs, and bidirectional LM heads.
//
// Parameter shapes (W = word vocab, C = char vocab, L = LM vocab, H = heads):
//   word_embeddings      [W+1, word_emb]          char_embeddings  [C+1, char_emb]
//   char_{fwd,bwd}.wx    [char_emb, 4*char_rnn]   .wh [char_rnn, 4*char_rnn]  .b [4*char_rnn]
//   char_proj_w          [2*char_rnn, char_hidden]                 char_proj_b [char_hidden]
//   word_{fwd,bwd}.wx    [word_emb+char_hidden, 4*word_rnn]  .wh [word_rnn, 4*word_rnn]  .b [4*word_rnn]
//   repr_w               [2*word_rnn, word_hidden]                 repr_b [word_hidden]
//   heads[h].{key,query,value}_w [word_hidden, evidence]           *_b [evidence]
//   sent_hidden_w        [evidence, sentence_hidden]               sent_hidden_b [sentence_hidden]
//   sent_out_w           [sentence_hidden, 1]                      sent_out_b [1]
//   lm_{fwd,bwd}_proj_w  [word_rnn, word_hidden]                   *_proj_b [word_hidden]
//   lm_{fwd,bwd}_out_w   [word_hidden, L+1]                        *_out_b [L+1]
class Model {
 public:
  Model(ModelConfig cfg, LabelScheme scheme, Vocabs vocabs, std::uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const LabelScheme& scheme() const { return scheme_; }
  const Vocabs& vocabs() const { return vocabs_; }
  const std::vector<Parameter*>& parameters() { return registry_; }
  Parameter* find_parameter(const std::string& name);

  // Replaces the word embedding table (rows + shared OOV row).
  void set_word_embeddings(const Tensor& table);

  // Word-embedding row (case-sensitive lookup, lowercase fallback, then the
  // OOV row) concatenated with the char-BiLSTM encoding of the surface.
  Var embed_token(Tape& tape, const std::string& surface);
  Var embed_sentence(Tape& tape, const Sentence& sentence);  // [N x (word_emb+char_hidden)]

  struct EncodeOut {
    Var reprs;       // [N x word_hidden], before dropout
    Var fwd_states;  // [N x word_rnn]
    Var bwd_states;  // [N x word_rnn]
  };
  EncodeOut encode(Tape& tape, Var embedded);

  struct HeadProjection {
    Var key, query, value;
  };
  // Three tanh projections of token representations for head h.
  HeadProjection head_projections(Tape& tape, Var reprs, int head);

  // Attention mechanism onward, starting from (possibly dropped-out) token
  // representations. Exposed separately so properties downstream of the
  // encoder can be exercised on injected inputs.
  ForwardOutputs attention_stage(Tape& tape, Var reprs, RunMode mode, Rng* dropout_rng);

  ForwardOutputs forward(Tape& tape, const Sentence& sentence, RunMode mode, Rng* dropout_rng);

  // LM scores [N x lm_vocab+1] from one direction's LSTM states.
  Var lm_direction_scores(Tape& tape, Var states, bool backward_dir);

  // Parameter value snapshot / restore (same registry order).
  std::vector<std::vector<double>> snapshot_values() const;
  void restore_values(const std::vector<std::vector<double>>& snap);

  // Versioned text checkpoint; doubles are stored as hex floats and
  // round-trip bit-exactly.
  void save(const std::string& path) const;
  static std::unique_ptr<Model> load(const std::string& path);

 private:
  ModelConfig cfg_;
  LabelScheme scheme_;
  Vocabs vocabs_;

  Parameter word_embeddings_;
  Parameter char_embeddings_;
  LstmParams char_fwd_, char_bwd_;
  Parameter char_proj_w_, char_proj_b_;
  LstmParams word_fwd_, word_bwd_;
  Parameter repr_w_, repr_b_;
  std::vector<HeadParams> heads_;
  Parameter sent_hidden_w_, sent_hidden_b_;
  Parameter sent_out_w_, sent_out_b_;
  Parameter lm_fwd_proj_w_, lm_fwd_proj_b_, lm_fwd_out_w_, lm_fwd_out_b_;
  Parameter lm_bwd_proj_w_, lm_bwd_proj_b_, lm_bwd_out_w_, lm_bwd_out_b_;

  std::vector<Parameter*> registry_;
  void build_registry();
};

}  // namespace mhal
