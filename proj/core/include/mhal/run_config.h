#pragma once

#include <string>
#include <vector>

#include "mhal/labels.h"
#include "mhal/model.h"
#include "mhal/objectives.h"
#include "mhal/trainer.h"

namespace mhal {

// Flat key=value run configuration ('#' lines are comments). Unknown keys
// are rejected; omitted keys keep the defaults below.
struct RunConfig {
  int word_embedding_size = 300;
  int char_embedding_size = 100;
  int word_recurrent_size = 300;
  int char_recurrent_size = 100;
  int word_hidden_layer_size = 50;
  int char_hidden_layer_size = 50;
  int attention_evidence_size = 100;
  int hidden_layer_size = 200;
  int max_batch_size = 32;
  int epochs = 200;
  int stop_if_no_improvement = 7;
  double learning_rate = 1.0;
  double decay = 0.9;
  double input_dropout = 0.5;
  double attention_dropout = 0.5;
  int lm_max_vocab_size = 7500;
  double smoothing_epsilon = 0.15;
  std::string stopping_criterion = "auto";  // auto | sent | tok | mean
  std::string variant = "MHAL-joint";
  double p = 1.0;  // fraction of training sentences with token supervision
  std::vector<std::uint64_t> seeds = {1};
  std::vector<std::string> token_labels;
  std::vector<std::string> sentence_labels;
  std::string default_label = "O";
  std::string train_path, dev_path, test_path, embeddings_path;
  std::string output_path = "out";

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text, const std::string& origin = "<config>");

  void set(const std::string& key, const std::string& value);
  std::string serialize() const;
  void validate_for_training() const;

  ModelConfig model_config() const;
  TrainConfig train_config(std::uint64_t seed) const;
  LabelScheme scheme() const;
  LossWeights weights() const { return preset_variant(variant); }
  // `auto` resolves to the token metric when token supervision exists
  // (positive token weight and p > 0) and the sentence metric otherwise.
  StoppingMetric resolved_stopping() const;
};

std::vector<std::string> split_csv(const std::string& text);
std::string join_csv(const std::vector<std::string>& parts);

}  // namespace mhal
