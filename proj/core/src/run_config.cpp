#include "mhal/run_config.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
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

int parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long v = std::strtol(value.c_str(), &end, 10);
  if (value.empty() || end == nullptr || *end != '\0') {
    throw ConfigError("config key " + key + ": expected an integer, got '" + value + "'");
  }
  return static_cast<int>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end == nullptr || *end != '\0') {
    throw ConfigError("config key " + key + ": expected a number, got '" + value + "'");
  }
  return v;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string join_csv(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ",";
    out += p;
  }
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "word_embedding_size") word_embedding_size = parse_int(key, value);
  else if (key == "char_embedding_size") char_embedding_size = parse_int(key, value);
  else if (key == "word_recurrent_size") word_recurrent_size = parse_int(key, value);
  else if (key == "char_recurrent_size") char_recurrent_size = parse_int(key, value);
  else if (key == "word_hidden_layer_size") word_hidden_layer_size = parse_int(key, value);
  else if (key == "char_hidden_layer_size") char_hidden_layer_size = parse_int(key, value);
  else if (key == "attention_evidence_size") attention_evidence_size = parse_int(key, value);
  else if (key == "hidden_layer_size") hidden_layer_size = parse_int(key, value);
  else if (key == "max_batch_size") max_batch_size = parse_int(key, value);
  else if (key == "epochs") epochs = parse_int(key, value);
  else if (key == "stop_if_no_improvement") stop_if_no_improvement = parse_int(key, value);
  else if (key == "learning_rate") learning_rate = parse_real(key, value);
  else if (key == "decay") decay = parse_real(key, value);
  else if (key == "input_dropout") input_dropout = parse_real(key, value);
  else if (key == "attention_dropout") attention_dropout = parse_real(key, value);
  else if (key == "lm_max_vocab_size") lm_max_vocab_size = parse_int(key, value);
  else if (key == "smoothing_epsilon") smoothing_epsilon = parse_real(key, value);
  else if (key == "stopping_criterion") {
    if (value != "auto" && value != "sent" && value != "tok" && value != "mean") {
      throw ConfigError("stopping_criterion must be auto, sent, tok or mean; got '" + value + "'");
    }
    stopping_criterion = value;
  } else if (key == "variant") {
    preset_variant(value);  // validates the name
    variant = value;
  } else if (key == "p") {
    p = parse_real(key, value);
    if (p < 0.0 || p > 1.0) throw ConfigError("p must lie in [0,1]");
  } else if (key == "seeds") {
    seeds.clear();
    for (const auto& s : split_csv(value)) {
      seeds.push_back(static_cast<std::uint64_t>(parse_int(key, s)));
    }
    if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  } else if (key == "token_labels") {
    token_labels = split_csv(value);
  } else if (key == "sentence_labels") {
    sentence_labels = split_csv(value);
  } else if (key == "default_label") {
    default_label = value;
  } else if (key == "train_path") {
    train_path = value;
  } else if (key == "dev_path") {
    dev_path = value;
  } else if (key == "test_path") {
    test_path = value;
  } else if (key == "embeddings_path") {
    embeddings_path = value;
  } else if (key == "output_path") {
    output_path = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" +
                        line + "'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path);
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out << "word_embedding_size=" << word_embedding_size << "\n";
  out << "char_embedding_size=" << char_embedding_size << "\n";
  out << "word_recurrent_size=" << word_recurrent_size << "\n";
  out << "char_recurrent_size=" << char_recurrent_size << "\n";
  out << "word_hidden_layer_size=" << word_hidden_layer_size << "\n";
  out << "char_hidden_layer_size=" << char_hidden_layer_size << "\n";
  out << "attention_evidence_size=" << attention_evidence_size << "\n";
  out << "hidden_layer_size=" << hidden_layer_size << "\n";
  out << "max_batch_size=" << max_batch_size << "\n";
  out << "epochs=" << epochs << "\n";
  out << "stop_if_no_improvement=" << stop_if_no_improvement << "\n";
  out << "learning_rate=" << format_real(learning_rate) << "\n";
  out << "decay=" << format_real(decay) << "\n";
  out << "input_dropout=" << format_real(input_dropout) << "\n";
  out << "attention_dropout=" << format_real(attention_dropout) << "\n";
  out << "lm_max_vocab_size=" << lm_max_vocab_size << "\n";
  out << "smoothing_epsilon=" << format_real(smoothing_epsilon) << "\n";
  out << "stopping_criterion=" << stopping_criterion << "\n";
  out << "variant=" << variant << "\n";
  out << "p=" << format_real(p) << "\n";
  std::string seed_list;
  for (auto s : seeds) seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
  out << "seeds=" << seed_list << "\n";
  out << "token_labels=" << join_csv(token_labels) << "\n";
  out << "sentence_labels=" << join_csv(sentence_labels) << "\n";
  out << "default_label=" << default_label << "\n";
  out << "train_path=" << train_path << "\n";
  out << "dev_path=" << dev_path << "\n";
  out << "test_path=" << test_path << "\n";
  out << "embeddings_path=" << embeddings_path << "\n";
  out << "output_path=" << output_path << "\n";
  return out.str();
}

void RunConfig::validate_for_training() const {
  if (train_path.empty()) throw ConfigError("train_path is required");
  if (dev_path.empty()) throw ConfigError("dev_path is required");
  if (token_labels.empty()) throw ConfigError("token_labels is required");
  if (sentence_labels.empty()) throw ConfigError("sentence_labels is required");
  scheme();           // validates labels
  weights();          // validates the variant
  model_config().validate();
  train_config(seeds.front()).validate();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.word_emb_dim = word_embedding_size;
  m.char_emb_dim = char_embedding_size;
  m.word_rnn_dim = word_recurrent_size;
  m.char_rnn_dim = char_recurrent_size;
  m.word_hidden_dim = word_hidden_layer_size;
  m.char_hidden_dim = char_hidden_layer_size;
  m.attention_evidence_dim = attention_evidence_size;
  m.sentence_hidden_dim = hidden_layer_size;
  m.input_dropout = input_dropout;
  m.attention_dropout = attention_dropout;
  return m;
}

TrainConfig RunConfig::train_config(std::uint64_t seed) const {
  TrainConfig t;
  t.max_epochs = epochs;
  t.patience = stop_if_no_improvement;
  t.batch_size = max_batch_size;
  t.learning_rate = learning_rate;
  t.decay = decay;
  t.smoothing_eps = smoothing_epsilon;
  t.stopping = resolved_stopping();
  t.seed = seed;
  return t;
}

LabelScheme RunConfig::scheme() const {
  return LabelScheme::make(token_labels, sentence_labels, default_label);
}

StoppingMetric RunConfig::resolved_stopping() const {
  if (stopping_criterion == "sent") return StoppingMetric::kSentenceF1Star;
  if (stopping_criterion == "tok") return StoppingMetric::kTokenF1Star;
  if (stopping_criterion == "mean") return StoppingMetric::kMeanBoth;
  const bool token_supervision = weights().tok > 0.0 && p > 0.0;
  return token_supervision ? StoppingMetric::kTokenF1Star : StoppingMetric::kSentenceF1Star;
}

}  // namespace mhal
