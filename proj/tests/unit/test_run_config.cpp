#include <doctest.h>

#include "mhal/errors.h"
#include "mhal/run_config.h"

using namespace mhal;

TEST_CASE("defaults match the published hyperparameter table") {
  const RunConfig c;
  CHECK(c.word_embedding_size == 300);
  CHECK(c.char_embedding_size == 100);
  CHECK(c.word_recurrent_size == 300);
  CHECK(c.char_recurrent_size == 100);
  CHECK(c.word_hidden_layer_size == 50);
  CHECK(c.char_hidden_layer_size == 50);
  CHECK(c.attention_evidence_size == 100);
  CHECK(c.hidden_layer_size == 200);
  CHECK(c.max_batch_size == 32);
  CHECK(c.epochs == 200);
  CHECK(c.stop_if_no_improvement == 7);
  CHECK(c.learning_rate == 1.0);
  CHECK(c.decay == 0.9);
  CHECK(c.input_dropout == 0.5);
  CHECK(c.attention_dropout == 0.5);
  CHECK(c.lm_max_vocab_size == 7500);
  CHECK(c.smoothing_epsilon == 0.15);
}

TEST_CASE("parsing") {
  SUBCASE("comments, blanks, and values") {
    const RunConfig c = RunConfig::from_text(
        "# a comment\n"
        "\n"
        "epochs = 12\n"
        "variant=MHAL-sent+\n"
        "token_labels=O,A,B\n"
        "sentence_labels = O , NON_O\n"
        "seeds=3,5,8\n"
        "p=0.25\n");
    CHECK(c.epochs == 12);
    CHECK(c.variant == "MHAL-sent+");
    CHECK(c.token_labels == std::vector<std::string>{"O", "A", "B"});
    CHECK(c.sentence_labels == std::vector<std::string>{"O", "NON_O"});
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 5, 8});
    CHECK(c.p == 0.25);
  }
  SUBCASE("unknown keys are rejected with the line number") {
    try {
      RunConfig::from_text("epochs=3\nnot_a_key=1\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(":2") != std::string::npos);
      CHECK(msg.find("not_a_key") != std::string::npos);
    }
  }
  SUBCASE("malformed lines and values") {
    CHECK_THROWS_AS(RunConfig::from_text("epochs\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("epochs=abc\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("p=1.5\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("variant=bogus\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("stopping_criterion=maybe\n"), ConfigError);
  }
}

TEST_CASE("serialization round-trips") {
  RunConfig c;
  c.set("epochs", "9");
  c.set("variant", "MHAL-joint+Rq");
  c.set("token_labels", "O,X");
  c.set("sentence_labels", "O,NON_O");
  c.set("train_path", "train.tsv");
  c.set("p", "0.5");
  const RunConfig back = RunConfig::from_text(c.serialize());
  CHECK(back.serialize() == c.serialize());
  CHECK(back.epochs == 9);
  CHECK(back.variant == "MHAL-joint+Rq");
  CHECK(back.p == 0.5);
}

TEST_CASE("derived configs") {
  RunConfig c;
  c.set("token_labels", "O,A,B");
  c.set("sentence_labels", "O,NON_O");
  const ModelConfig m = c.model_config();
  CHECK(m.word_emb_dim == 300);
  CHECK(m.sentence_hidden_dim == 200);
  const TrainConfig t = c.train_config(7);
  CHECK(t.seed == 7);
  CHECK(t.patience == 7);
  CHECK(t.smoothing_eps == 0.15);
  const LabelScheme s = c.scheme();
  CHECK(s.mode == SchemeMode::kBinary);
  CHECK(c.weights().sent == 1.0);
}

TEST_CASE("auto stopping resolution") {
  RunConfig c;
  CHECK(c.resolved_stopping() == StoppingMetric::kTokenF1Star);  // MHAL-joint, p=1
  c.set("variant", "MHAL-sent+");
  CHECK(c.resolved_stopping() == StoppingMetric::kSentenceF1Star);  // no token weight
  c.set("variant", "MHAL-joint");
  c.set("p", "0");
  CHECK(c.resolved_stopping() == StoppingMetric::kSentenceF1Star);  // no supervised tokens
  c.set("p", "1");
  c.set("stopping_criterion", "mean");
  CHECK(c.resolved_stopping() == StoppingMetric::kMeanBoth);
}

TEST_CASE("training validation names the missing pieces") {
  RunConfig c;
  CHECK_THROWS_AS(c.validate_for_training(), ConfigError);
  c.set("train_path", "a.tsv");
  c.set("dev_path", "b.tsv");
  c.set("token_labels", "O,A");
  CHECK_THROWS_AS(c.validate_for_training(), ConfigError);  // sentence labels missing
  c.set("sentence_labels", "O,NON_O");
  c.validate_for_training();
}
