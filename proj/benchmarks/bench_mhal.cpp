#include <benchmark/benchmark.h>

#include "mhal/corpus.h"
#include "mhal/model.h"
#include "mhal/objectives.h"
#include "mhal/trainer.h"

using namespace mhal;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = uniform(rng, -1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng = make_rng(1);
  Tensor a = random_tensor({n, n}, rng);
  Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    Tape tape;
    Var c = tape.matmul(tape.input(a), tape.input(b));
    benchmark::DoNotOptimize(tape.value(c).data.data());
  }
  state.SetItemsProcessed(state.iterations() * 2L * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_LstmSequenceForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int h = 32, in = 32;
  Rng rng = make_rng(2);
  Parameter wx("wx", random_tensor({in, 4 * h}, rng));
  Parameter wh("wh", random_tensor({h, 4 * h}, rng));
  Parameter b("b", Tensor({4 * h}));
  Tensor x = random_tensor({n, in}, rng);
  for (auto _ : state) {
    for (Parameter* p : {&wx, &wh, &b}) p->value.zero_grad();
    Tape tape;
    Var out = tape.lstm_sequence(tape.input(x), tape.parameter(wx), tape.parameter(wh),
                                 tape.parameter(b), false);
    tape.backward(tape.reduce_sum(out));
    benchmark::DoNotOptimize(wx.value.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_LstmSequenceForwardBackward)->Arg(8)->Arg(32);

struct ModelFixture {
  SyntheticCorpus corpus;
  std::unique_ptr<Model> model;

  ModelFixture() {
    SyntheticSpec spec;
    spec.token_label_count = 5;
    spec.train_count = 64;
    spec.dev_count = 1;
    spec.test_count = 1;
    Rng rng = make_rng(3);
    corpus = generate_synthetic(spec, rng);
    ModelConfig cfg;
    cfg.word_emb_dim = 16;
    cfg.char_emb_dim = 8;
    cfg.word_rnn_dim = 16;
    cfg.char_rnn_dim = 8;
    cfg.word_hidden_dim = 12;
    cfg.char_hidden_dim = 8;
    cfg.attention_evidence_dim = 8;
    cfg.sentence_hidden_dim = 12;
    cfg.input_dropout = 0.0;
    cfg.attention_dropout = 0.0;
    model = std::make_unique<Model>(cfg, corpus.scheme, build_vocabs(corpus.train, 7500), 5);
  }
};

void BM_ForwardEval(benchmark::State& state) {
  ModelFixture fx;
  std::size_t i = 0;
  for (auto _ : state) {
    const Sentence& s = fx.corpus.train[i++ % fx.corpus.train.size()];
    Tape tape;
    ForwardOutputs out = fx.model->forward(tape, s, RunMode::kEval, nullptr);
    benchmark::DoNotOptimize(out.predicted_sentence());
  }
}
BENCHMARK(BM_ForwardEval);

void BM_TrainStep(benchmark::State& state) {
  ModelFixture fx;
  const LossWeights weights = preset_variant("MHAL-joint+");
  Rng drop_rng = make_rng(7);
  std::size_t i = 0;
  for (auto _ : state) {
    const Sentence& s = fx.corpus.train[i++ % fx.corpus.train.size()];
    for (Parameter* p : fx.model->parameters()) p->value.zero_grad();
    Tape tape;
    ForwardOutputs out = fx.model->forward(tape, s, RunMode::kTrain, &drop_rng);
    TotalLoss loss = total_loss(tape, *fx.model, out, s, weights, 0.15);
    tape.backward(loss.total);
    benchmark::DoNotOptimize(loss.breakdown.total);
  }
}
BENCHMARK(BM_TrainStep);

void BM_AdaDeltaStep(benchmark::State& state) {
  ModelFixture fx;
  AdaDelta opt(1.0, 0.9, 1e-6);
  Rng rng = make_rng(11);
  for (Parameter* p : fx.model->parameters()) {
    p->value.ensure_grad();
    for (double& g : p->value.grad) g = uniform(rng, -0.1, 0.1);
  }
  for (auto _ : state) {
    opt.step(fx.model->parameters());
  }
}
BENCHMARK(BM_AdaDeltaStep);

}  // namespace

BENCHMARK_MAIN();
