#include "cbe/trainer.hpp"

#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cbe/error.hpp"
#include "cbe/synthesize.hpp"

namespace cbe {
namespace {

BottleneckParams scalar_params(double alpha) {
  ModelConfig c = default_model_config(2, 1, 2);
  BottleneckParams p = init_params(1, c);
  p.tensors[TensorId::alpha].data[0] = alpha;
  return p;
}

TrainConfig alpha_only(OptimizerKind kind, double lr, double wd) {
  TrainConfig cfg;
  cfg.optimizer = kind;
  cfg.lr = lr;
  cfg.weight_decay = wd;
  cfg.trainable = {};
  cfg.trainable[static_cast<std::size_t>(TensorId::alpha)] = true;
  return cfg;
}

TEST(Optimizer, AdamStepsMatchReference) {
  BottleneckParams p = scalar_params(0.0);
  TensorSet g = p.tensors.zeros_like();
  g[TensorId::alpha].data[0] = 0.5;
  const TrainConfig cfg = alpha_only(OptimizerKind::adam, 0.1, 0.0);
  OptState state = make_opt_state(p);
  optimizer_step(p, g, state, cfg);
  EXPECT_NEAR(p.alpha(), -0.09999999800000003, 1e-15);
  EXPECT_NEAR(p.alpha(), -0.1, 1e-7);
  optimizer_step(p, g, state, cfg);
  EXPECT_NEAR(p.alpha(), -0.19999999599999935, 1e-15);
  EXPECT_EQ(state.step, 2u);
}

TEST(Optimizer, AdamwDecaysBeforeTheMomentStep) {
  BottleneckParams p = scalar_params(1.0);
  TensorSet g = p.tensors.zeros_like();
  const TrainConfig cfg = alpha_only(OptimizerKind::adamw, 0.1, 0.01);
  OptState state = make_opt_state(p);
  optimizer_step(p, g, state, cfg);
  EXPECT_DOUBLE_EQ(p.alpha(), 0.999);

  BottleneckParams q = scalar_params(1.0);
  g[TensorId::alpha].data[0] = 0.5;
  OptState s2 = make_opt_state(q);
  optimizer_step(q, g, s2, cfg);
  EXPECT_NEAR(q.alpha(), 0.899000002, 1e-15);
  optimizer_step(q, g, s2, cfg);
  EXPECT_NEAR(q.alpha(), 0.7981010039980005, 1e-15);
}

TEST(Optimizer, ZeroGradientWithoutDecayIsAFixpoint) {
  for (OptimizerKind kind : {OptimizerKind::adam, OptimizerKind::adamw}) {
    BottleneckParams p = scalar_params(0.3);
    const BottleneckParams before = p;
    TrainConfig cfg = default_face_train_config();
    cfg.optimizer = kind;
    cfg.weight_decay = 0.0;
    OptState state = make_opt_state(p);
    optimizer_step(p, p.tensors.zeros_like(), state, cfg);
    EXPECT_EQ(p, before);
  }
}

TEST(Optimizer, NonFiniteGradientNamesTheTensor) {
  BottleneckParams p = scalar_params(0.3);
  TensorSet g = p.tensors.zeros_like();
  g[TensorId::w_agg].data[1] = std::numeric_limits<double>::quiet_NaN();
  OptState state = make_opt_state(p);
  try {
    optimizer_step(p, g, state, default_face_train_config());
    FAIL() << "expected NumericsError";
  } catch (const NumericsError& e) {
    EXPECT_NE(std::string(e.what()).find("w_agg"), std::string::npos);
  }
}

TEST(EpochOrder, PurePermutation) {
  const auto a = epoch_order(50, 9, 0);
  EXPECT_EQ(a, epoch_order(50, 9, 0));
  EXPECT_NE(a, epoch_order(50, 9, 1));
  EXPECT_NE(a, epoch_order(50, 10, 0));
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(50);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
}

struct FaceRun {
  ConceptSet set = builtin_concepts(Domain::face);
  ConceptTextEmbeddings text;
  std::optional<Dataset> data;
  ModelConfig model;

  FaceRun() {
    SynthConfig cfg;
    cfg.identities = 6;
    cfg.images_per_identity = 5;
    cfg.dim = 16;
    cfg.noise = 0.05;
    text = bind_text_embeddings(set, synthesize_text_embeddings(set, cfg.dim, 3));
    auto synth = synthesize_dataset(cfg, 3, set, text);
    data.emplace(std::move(synth.embeddings), std::move(synth.manifest));
    model = default_model_config(cfg.dim, set.size(), class_labels(*data, Split::train).size());
    model.m = 24;
  }

  TrainResult train(const TrainConfig& tc, const LossConfig& loss = LossConfig{}) const {
    return train_face(*data, set, text, init_params(5, model), model, loss, tc);
  }
};

TrainConfig quick(std::size_t epochs = 3) {
  TrainConfig tc = default_face_train_config();
  tc.epochs = epochs;
  tc.batch_size = 7;
  tc.lr = 3e-3;
  tc.seed = 11;
  return tc;
}

TEST(TrainFace, LossDecreases) {
  const FaceRun run;
  const TrainResult r = run.train(quick(6));
  ASSERT_EQ(r.log.size(), 6u);
  EXPECT_LT(r.log.back().mean_loss, r.log.front().mean_loss);
  EXPECT_GT(r.params.norm_ema.updates, 0u);
  for (const auto& e : r.log) EXPECT_EQ(e.concept_loss, 0.0);
}

TEST(TrainFace, DeterministicAndThreadCountInvariant) {
  const FaceRun run;
  const TrainResult a = run.train(quick());
  const TrainResult b = run.train(quick());
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.log, b.log);
  TrainConfig threaded = quick();
  threaded.threads = 3;
  const TrainResult c = run.train(threaded);
  EXPECT_EQ(a.params, c.params);
  EXPECT_EQ(a.log, c.log);
}

TEST(TrainFace, ZeroLearningRateIsAFixpoint) {
  const FaceRun run;
  TrainConfig tc = quick();
  tc.lr = 0.0;
  tc.weight_decay = 0.0;
  LossConfig loss;
  loss.variant = MarginVariant::cosface;
  const TrainResult r = run.train(tc, loss);
  EXPECT_EQ(r.params.tensors, init_params(5, run.model).tensors);
  for (const auto& e : r.log) EXPECT_EQ(e.mean_loss, r.log.front().mean_loss);
}

TEST(TrainFace, FrozenTensorsAreBitwiseUnchanged) {
  const FaceRun run;
  TrainConfig tc = quick();
  tc.trainable[static_cast<std::size_t>(TensorId::w_agg)] = false;
  tc.trainable[static_cast<std::size_t>(TensorId::adapter_b2)] = false;
  const BottleneckParams init = init_params(5, run.model);
  const TrainResult r = run.train(tc);
  EXPECT_EQ(r.params.w_agg(), init.w_agg());
  EXPECT_EQ(r.params.b2(), init.b2());
  EXPECT_EQ(r.params.alpha(), init.alpha());
  EXPECT_NE(r.params.head(), init.head());
}

TEST(TrainFace, TrainedParamsAreSinglePrecisionValues) {
  const FaceRun run;
  const TrainResult r = run.train(quick(1));
  for (TensorId id : kAllTensors) {
    for (double v : r.params.tensors[id].data) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
}

TEST(TrainFace, RejectsWrongClassCountAndTooFewIdentities) {
  const FaceRun run;
  ModelConfig wrong = run.model;
  wrong.k_classes += 1;
  EXPECT_THROW(train_face(*run.data, run.set, run.text, init_params(1, wrong), wrong, LossConfig{}, quick()),
               ConfigError);

  std::vector<RecordMeta> one_id = run.data->records();
  for (auto& r : one_id) r.label = "same";
  const Dataset single(run.data->embeddings(), one_id);
  ModelConfig k1 = run.model;
  k1.k_classes = 1;
  EXPECT_THROW(train_face(single, run.set, run.text, init_params(1, k1), k1, LossConfig{}, quick()), ConfigError);
}

struct XrayRun {
  ConceptSet set = builtin_concepts(Domain::xray);
  ConceptTextEmbeddings text;
  std::optional<Dataset> data;
  ConceptLabelSet labels;
  ModelConfig model;

  XrayRun() {
    SynthConfig cfg;
    cfg.mode = Domain::xray;
    cfg.images = 120;
    cfg.dim = 24;
    text = bind_text_embeddings(set, synthesize_text_embeddings(set, cfg.dim, 4));
    auto synth = synthesize_dataset(cfg, 4, set, text);
    data.emplace(std::move(synth.embeddings), std::move(synth.manifest));
    labels = std::move(synth.concept_labels);
    model = default_model_config(cfg.dim, set.size(), 2);
    model.m = 16;
  }
};

TEST(TrainXray, RunsAndReportsComponents) {
  const XrayRun run;
  TrainConfig tc = default_xray_train_config();
  tc.epochs = 3;
  tc.batch_size = 16;
  const TrainResult r =
      train_xray(*run.data, run.labels, run.set, run.text, init_params(2, run.model), run.model, LossConfig{}, tc);
  ASSERT_EQ(r.log.size(), 3u);
  for (const auto& e : r.log) EXPECT_NEAR(e.mean_loss, e.cls_loss + 2.0 * e.concept_loss, 1e-12);
  EXPECT_LT(r.log.back().mean_loss, r.log.front().mean_loss);
  EXPECT_EQ(r.params.norm_ema.updates, 0u);
}

TEST(TrainXray, ZeroConceptWeightStillTrains) {
  const XrayRun run;
  TrainConfig tc = default_xray_train_config();
  tc.epochs = 1;
  LossConfig loss;
  loss.w_concept = 0.0;
  const TrainResult r =
      train_xray(*run.data, run.labels, run.set, run.text, init_params(2, run.model), run.model, loss, tc);
  EXPECT_EQ(r.log.front().mean_loss, r.log.front().cls_loss);
}

TEST(TrainXray, MissingConceptLabelsWarn) {
  const XrayRun run;
  ConceptLabelSet partial = run.labels;
  partial.erase(run.data->records()[0].id);
  partial.erase(run.data->records()[1].id);
  TrainConfig tc = default_xray_train_config();
  tc.epochs = 1;
  std::ostringstream warnings;
  train_xray(*run.data, partial, run.set, run.text, init_params(2, run.model), run.model, LossConfig{}, tc,
             &warnings);
  std::size_t missing_train = 0;
  for (std::size_t i = 0; i < 2; ++i) missing_train += run.data->records()[i].split == Split::train ? 1 : 0;
  if (missing_train > 0) {
    EXPECT_NE(warnings.str().find(std::to_string(missing_train) + " train record"), std::string::npos);
  } else {
    EXPECT_TRUE(warnings.str().empty());
  }
}

TEST(PresentIndices, SortedUniqueAndChecked) {
  const ConceptSet set = builtin_concepts(Domain::xray);
  const ConceptLabelSet labels = {{"a", {set.concept_at(3).id, set.concept_at(0).id, set.concept_at(3).id}},
                                  {"b", {"no.such"}}};
  bool found = false;
  EXPECT_EQ(present_indices(labels, "a", set, &found), (std::vector<std::size_t>{0, 3}));
  EXPECT_TRUE(found);
  EXPECT_TRUE(present_indices(labels, "zz", set, &found).empty());
  EXPECT_FALSE(found);
  EXPECT_THROW(present_indices(labels, "b", set), DataError);
}

TEST(LossLog, OneRecordPerLine) {
  const std::vector<EpochLog> log = {{1, 0.5, 0.25, 0.125}, {2, 0.25, 0.25, 0.0}};
  EXPECT_EQ(format_loss_log(log),
            "{\"cls_loss\":0.25,\"concept_loss\":0.125,\"epoch\":1,\"mean_loss\":0.5}\n"
            "{\"cls_loss\":0.25,\"concept_loss\":0.0,\"epoch\":2,\"mean_loss\":0.25}\n");
}

TEST(TrainConfig, Defaults) {
  const TrainConfig face = default_face_train_config();
  EXPECT_EQ(face.optimizer, OptimizerKind::adamw);
  EXPECT_EQ(face.lr, 3e-4);
  EXPECT_EQ(face.epochs, 5u);
  EXPECT_EQ(face.batch_size, 64u);
  EXPECT_FALSE(flag(face.trainable, TensorId::alpha));
  EXPECT_TRUE(flag(face.trainable, TensorId::head));
  const TrainConfig xray = default_xray_train_config();
  EXPECT_EQ(xray.optimizer, OptimizerKind::adam);
  EXPECT_EQ(xray.lr, 5e-3);
  EXPECT_EQ(xray.epochs, 10u);
  TrainConfig bad = face;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

}  // namespace
}  // namespace cbe
