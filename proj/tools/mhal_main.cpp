// mhal: joint sentence classification and sequence labeling with one
// attention head per token label.
//
// Subcommands: train, eval, predict, inspect, stats.
// Exit codes: 0 ok, 2 usage/config/data error, 3 numeric failure.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mhal/corpus.h"
#include "mhal/errors.h"
#include "mhal/metrics.h"
#include "mhal/model.h"
#include "mhal/objectives.h"
#include "mhal/run_config.h"
#include "mhal/trainer.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainCliOptions {
  std::string config_path;
  std::string variant;
  std::string stopping;
  std::string out;
  std::string seeds;
  double p = -1.0;  // unset
  bool p_set = false;
};

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw mhal::DataError("cannot write " + path.string());
  out << content;
}

std::string beta_label(double beta) {
  std::ostringstream tag;
  tag << "F" << beta << "*";
  return tag.str();
}

std::string metrics_text(const mhal::EvalResult& ev) {
  std::ostringstream out;
  out << "token: P=" << percent(ev.token.precision) << " R=" << percent(ev.token.recall)
      << " F1=" << percent(ev.token.f1) << " P*=" << percent(ev.token.precision_star)
      << " R*=" << percent(ev.token.recall_star) << " F1*=" << percent(ev.token.f1_star)
      << " Acc=" << percent(ev.token.accuracy);
  if (ev.token.beta != 1.0) {
    out << " " << beta_label(ev.token.beta) << "=" << percent(ev.token.fbeta_star);
  }
  out << "\n";
  out << "span: P=" << percent(ev.spans.precision) << " R=" << percent(ev.spans.recall)
      << " F1=" << percent(ev.spans.f1) << "\n";
  out << "sentence: Acc=" << percent(ev.sentence.accuracy) << " S-F1=" << percent(ev.sentence.f1)
      << " S-F1*=" << percent(ev.sentence.f1_star) << "\n";
  return out.str();
}

json metrics_json(const mhal::EvalResult& ev) {
  return json{{"token_f1", ev.token.f1},
              {"token_f1_star", ev.token.f1_star},
              {"token_precision_star", ev.token.precision_star},
              {"token_recall_star", ev.token.recall_star},
              {"token_accuracy", ev.token.accuracy},
              {"token_fbeta_star", ev.token.fbeta_star},
              {"span_f1", ev.spans.f1},
              {"sentence_accuracy", ev.sentence.accuracy},
              {"sentence_f1", ev.sentence.f1},
              {"sentence_f1_star", ev.sentence.f1_star}};
}

// --- train ---------------------------------------------------------------

struct SeedOutcome {
  std::uint64_t seed = 0;
  mhal::TrainResult result;
  mhal::EvalResult dev;
  mhal::EvalResult test;
  bool has_test = false;
};

int run_train(const TrainCliOptions& opts) {
  mhal::RunConfig cfg = mhal::RunConfig::from_file(opts.config_path);
  if (!opts.variant.empty()) cfg.set("variant", opts.variant);
  if (opts.p_set) cfg.set("p", std::to_string(opts.p));
  if (!opts.seeds.empty()) cfg.set("seeds", opts.seeds);
  if (!opts.stopping.empty()) cfg.set("stopping_criterion", opts.stopping);
  if (!opts.out.empty()) cfg.set("output_path", opts.out);
  cfg.validate_for_training();

  const mhal::LabelScheme scheme = cfg.scheme();
  auto train_split = mhal::parse_conll(cfg.train_path, scheme);
  auto dev_split = mhal::parse_conll(cfg.dev_path, scheme);
  std::vector<mhal::Sentence> test_split;
  if (!cfg.test_path.empty()) test_split = mhal::parse_conll(cfg.test_path, scheme);
  const mhal::Vocabs vocabs = mhal::build_vocabs(train_split, cfg.lm_max_vocab_size);

  const fs::path out_dir(cfg.output_path);
  fs::create_directories(out_dir);
  write_file(out_dir / "effective.cfg", cfg.serialize());

  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  std::mutex io_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      try {
        const std::uint64_t seed = cfg.seeds[i];
        mhal::Model model(cfg.model_config(), scheme, vocabs, seed);
        if (!cfg.embeddings_path.empty()) {
          mhal::Rng emb_rng = mhal::make_rng(seed, 11);
          auto table = mhal::load_embeddings(cfg.embeddings_path, vocabs.words,
                                             cfg.word_embedding_size, emb_rng);
          model.set_word_embeddings(table.table);
          std::lock_guard<std::mutex> lock(io_mutex);
          std::cout << "seed " << seed << ": pretrained embeddings cover " << table.coverage << "/"
                    << vocabs.words.size() << " words\n";
        }
        std::vector<mhal::Sentence> masked = train_split;
        mhal::Rng mask_rng = mhal::make_rng(seed, 12);
        mhal::mask_token_supervision(masked, cfg.p, mask_rng);

        SeedOutcome& so = outcomes[i];
        so.seed = seed;
        so.result = mhal::train(model, masked, dev_split, cfg.train_config(seed), cfg.weights());
        so.dev = mhal::evaluate(model, dev_split);
        if (!test_split.empty()) {
          so.test = mhal::evaluate(model, test_split);
          so.has_test = true;
        }

        const fs::path seed_dir = out_dir / ("seed_" + std::to_string(seed));
        fs::create_directories(seed_dir);
        model.save((seed_dir / "checkpoint.mhal").string());
        std::ostringstream log;
        for (const auto& entry : so.result.log) log << mhal::epoch_log_json(entry) << "\n";
        write_file(seed_dir / "train_log.jsonl", log.str());

        std::lock_guard<std::mutex> lock(io_mutex);
        std::cout << "seed " << seed << ": best epoch " << so.result.best_epoch << " stopping="
                  << percent(so.result.best_value) << " dev_f1_star=" << percent(so.dev.token.f1_star)
                  << (so.has_test ? " test_f1_star=" + percent(so.test.token.f1_star) : "") << "\n";
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_workers = std::min<std::size_t>(hw, cfg.seeds.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  json summary;
  summary["variant"] = cfg.variant;
  summary["p"] = cfg.p;
  summary["seeds"] = cfg.seeds;
  json per_seed = json::array();
  auto mean_of = [&](auto select) {
    double acc = 0.0;
    for (const auto& so : outcomes) acc += select(so);
    return acc / static_cast<double>(outcomes.size());
  };
  for (const auto& so : outcomes) {
    json entry{{"seed", so.seed},
               {"best_epoch", so.result.best_epoch},
               {"best_stopping_value", so.result.best_value},
               {"dev", metrics_json(so.dev)}};
    if (so.has_test) entry["test"] = metrics_json(so.test);
    per_seed.push_back(entry);
  }
  summary["per_seed"] = per_seed;
  summary["dev_mean"] = {
      {"token_f1_star", mean_of([](const SeedOutcome& s) { return s.dev.token.f1_star; })},
      {"token_f1", mean_of([](const SeedOutcome& s) { return s.dev.token.f1; })},
      {"sentence_f1", mean_of([](const SeedOutcome& s) { return s.dev.sentence.f1; })},
      {"sentence_f1_star", mean_of([](const SeedOutcome& s) { return s.dev.sentence.f1_star; })},
      {"sentence_accuracy", mean_of([](const SeedOutcome& s) { return s.dev.sentence.accuracy; })}};
  if (!test_split.empty()) {
    summary["test_mean"] = {
        {"token_f1_star", mean_of([](const SeedOutcome& s) { return s.test.token.f1_star; })},
        {"token_f1", mean_of([](const SeedOutcome& s) { return s.test.token.f1; })},
        {"span_f1", mean_of([](const SeedOutcome& s) { return s.test.spans.f1; })},
        {"sentence_f1", mean_of([](const SeedOutcome& s) { return s.test.sentence.f1; })},
        {"sentence_f1_star", mean_of([](const SeedOutcome& s) { return s.test.sentence.f1_star; })},
        {"sentence_accuracy", mean_of([](const SeedOutcome& s) { return s.test.sentence.accuracy; })}};
  }
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "summary written to " << (out_dir / "summary.json").string() << "\n";
  return 0;
}

// --- eval ----------------------------------------------------------------

int run_eval(const std::string& checkpoint, const std::string& data_path, double beta) {
  auto model = mhal::Model::load(checkpoint);
  auto data = mhal::parse_conll(data_path, model->scheme());
  const mhal::EvalResult ev = mhal::evaluate(*model, data, beta);
  std::cout << metrics_text(ev);
  return 0;
}

// --- predict ---------------------------------------------------------------

int run_predict(const std::string& checkpoint, const std::string& input_path,
                const std::string& out_path) {
  auto model = mhal::Model::load(checkpoint);
  auto data = mhal::parse_conll(input_path, model->scheme(), /*allow_unlabeled=*/true);
  const mhal::LabelScheme& scheme = model->scheme();
  std::ostringstream out;
  bool first = true;
  for (const mhal::Sentence& s : data) {
    if (!first) out << "\n";
    first = false;
    mhal::Tape tape;
    mhal::ForwardOutputs fw = model->forward(tape, s, mhal::RunMode::kEval, nullptr);
    const std::vector<int> pred = fw.predicted_tokens();
    out << "#label=" << scheme.sentence_labels[static_cast<std::size_t>(fw.predicted_sentence())]
        << "\n";
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out << s.tokens[i].surface << "\t" << scheme.token_labels[static_cast<std::size_t>(pred[i])]
          << "\n";
    }
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    write_file(out_path, out.str());
  }
  return 0;
}

// --- inspect ----------------------------------------------------------------

std::string attention_svg(const mhal::Sentence& sentence, const std::vector<int>& pred,
                          const mhal::Tensor& distr, const mhal::LabelScheme& scheme) {
  const int n = sentence.length();
  const int h = scheme.num_token_labels();
  const int cell_w = 34, cell_h = 20, left = 110, top = 26;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + h * cell_w + 10
      << "\" height=\"" << top + n * cell_h + 6 << "\" font-family=\"monospace\" font-size=\"11\">\n";
  for (int j = 0; j < h; ++j) {
    svg << "<text x=\"" << left + j * cell_w + 4 << "\" y=\"" << top - 8 << "\">"
        << scheme.token_labels[static_cast<std::size_t>(j)] << "</text>\n";
  }
  for (int i = 0; i < n; ++i) {
    svg << "<text x=\"4\" y=\"" << top + i * cell_h + 14 << "\">"
        << sentence.tokens[static_cast<std::size_t>(i)].surface << "</text>\n";
    for (int j = 0; j < h; ++j) {
      const int gray = 255 - static_cast<int>(std::lround(255.0 * distr.at(i, j)));
      svg << "<rect x=\"" << left + j * cell_w << "\" y=\"" << top + i * cell_h << "\" width=\""
          << cell_w - 2 << "\" height=\"" << cell_h - 2 << "\" fill=\"rgb(" << gray << "," << gray
          << "," << gray << ")\"";
      if (pred[static_cast<std::size_t>(i)] == j) svg << " stroke=\"red\"";
      svg << "/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

int run_inspect(const std::string& checkpoint, const std::string& input_path,
                const std::string& svg_dir) {
  auto model = mhal::Model::load(checkpoint);
  auto data = mhal::parse_conll(input_path, model->scheme(), /*allow_unlabeled=*/true);
  const mhal::LabelScheme& scheme = model->scheme();
  std::cout << "# token\tgold\tpredicted";
  for (const auto& l : scheme.token_labels) std::cout << "\t" << l;
  std::cout << "\n";
  if (!svg_dir.empty()) fs::create_directories(svg_dir);
  int sentence_index = 0;
  for (const mhal::Sentence& s : data) {
    mhal::Tape tape;
    mhal::ForwardOutputs fw = model->forward(tape, s, mhal::RunMode::kEval, nullptr);
    const std::vector<int> pred = fw.predicted_tokens();
    const mhal::Tensor& distr = tape.value(fw.token_distr);
    for (int i = 0; i < s.length(); ++i) {
      const mhal::Token& t = s.tokens[static_cast<std::size_t>(i)];
      std::cout << t.surface << "\t"
                << (t.gold_label >= 0 ? scheme.token_labels[static_cast<std::size_t>(t.gold_label)]
                                      : "-")
                << "\t" << scheme.token_labels[static_cast<std::size_t>(pred[static_cast<std::size_t>(i)])];
      for (int j = 0; j < scheme.num_token_labels(); ++j) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%.9f", distr.at(i, j));
        std::cout << "\t" << buf;
      }
      std::cout << "\n";
    }
    std::cout << "\n";
    if (!svg_dir.empty()) {
      write_file(fs::path(svg_dir) / ("sentence_" + std::to_string(sentence_index) + ".svg"),
                 attention_svg(s, pred, distr, scheme));
    }
    ++sentence_index;
  }
  return 0;
}

// --- stats -----------------------------------------------------------------

mhal::LabelScheme infer_scheme(const std::string& path, const std::string& default_label) {
  std::ifstream in(path);
  if (!in) throw mhal::DataError("cannot open corpus file: " + path);
  std::vector<std::string> token_labels, sentence_labels;
  std::set<std::string> tok_seen, sent_seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#label=", 0) == 0) {
      std::string name = line.substr(7);
      while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
      if (sent_seen.insert(name).second) sentence_labels.push_back(name);
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) continue;
    std::string name = line.substr(tab + 1);
    while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
    if (!name.empty() && tok_seen.insert(name).second) token_labels.push_back(name);
  }
  if (!tok_seen.count(default_label)) token_labels.insert(token_labels.begin(), default_label);
  if (sentence_labels.empty()) sentence_labels = {default_label, "NON_" + default_label};
  if (!sent_seen.empty() && !sent_seen.count(default_label)) {
    sentence_labels.insert(sentence_labels.begin(), default_label);
  }
  return mhal::LabelScheme::make(token_labels, sentence_labels, default_label);
}

int run_stats(const std::string& data_path, const std::string& config_path,
              const std::string& default_label) {
  mhal::LabelScheme scheme = [&] {
    if (!config_path.empty()) {
      return mhal::RunConfig::from_file(config_path).scheme();
    }
    return infer_scheme(data_path, default_label);
  }();
  auto data = mhal::parse_conll(data_path, scheme, /*allow_unlabeled=*/true);
  std::cout << mhal::format_stats(mhal::corpus_stats(data, scheme), scheme);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint sentence classifier and sequence labeler with label-tied attention heads"};
  app.require_subcommand(1);

  TrainCliOptions train_opts;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one model per seed and summarize");
  train_cmd->add_option("--config", train_opts.config_path, "Run configuration file")->required();
  train_cmd->add_option("--variant", train_opts.variant, "Loss-weight preset");
  train_cmd->add_option("--p", train_opts.p, "Fraction of training sentences with token supervision")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--seeds", train_opts.seeds, "Comma-separated seed list");
  train_cmd->add_option("--stopping", train_opts.stopping, "Stopping criterion: auto|sent|tok|mean");
  train_cmd->add_option("--out", train_opts.out, "Output directory");

  std::string checkpoint, data_path, input_path, out_path, svg_dir, config_path;
  std::string default_label = "O";
  double beta = 1.0;

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled file");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--data", data_path, "Labeled corpus file")->required();
  eval_cmd->add_option("--beta", beta, "Beta for the F-beta metrics");

  CLI::App* predict_cmd = app.add_subcommand("predict", "Annotate a file with predicted labels");
  predict_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  predict_cmd->add_option("--input", input_path, "Input corpus file (labels optional)")->required();
  predict_cmd->add_option("--out", out_path, "Output file (stdout when omitted)");

  CLI::App* inspect_cmd = app.add_subcommand("inspect", "Dump per-token head distributions");
  inspect_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  inspect_cmd->add_option("--input", input_path, "Input corpus file (labels optional)")->required();
  inspect_cmd->add_option("--svg-dir", svg_dir, "Directory for per-sentence heatmaps");

  CLI::App* stats_cmd = app.add_subcommand("stats", "Corpus label statistics");
  stats_cmd->add_option("--data", data_path, "Corpus file")->required();
  stats_cmd->add_option("--config", config_path, "Config providing the label scheme");
  stats_cmd->add_option("--default-label", default_label, "Default label when inferring the scheme");

  try {
    app.parse(argc, argv);
    if (*train_cmd) return run_train(train_opts);
    if (*eval_cmd) return run_eval(checkpoint, data_path, beta);
    if (*predict_cmd) return run_predict(checkpoint, input_path, out_path);
    if (*inspect_cmd) return run_inspect(checkpoint, input_path, svg_dir);
    if (*stats_cmd) return run_stats(data_path, config_path, default_label);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mhal::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
