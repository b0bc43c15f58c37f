#include "cbe/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbe/checkpoint.hpp"
#include "cbe/error.hpp"
#include "cbe/eval.hpp"
#include "cbe/explainer.hpp"
#include "cbe/grad_check.hpp"
#include "cbe/rng.hpp"
#include "cbe/synthesize.hpp"
#include "cbe/trainer.hpp"
#include "io_util.hpp"

namespace cbe::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

enum StreamTag : std::uint64_t { kInitStream = 101, kShuffleStream = 102 };

// ---------------------------------------------------------------------------
// Option blocks shared between subcommands.

struct DataOptions {
  std::string embeddings;
  std::string manifest;
  std::string concepts;
  std::string text;
};

void add_data_options(CLI::App* app, DataOptions& o) {
  app->add_option("--embeddings", o.embeddings, "Image embeddings (CBE)")->required()->check(CLI::ExistingFile);
  app->add_option("--manifest", o.manifest, "Manifest (JSONL)")->required()->check(CLI::ExistingFile);
  app->add_option("--concepts", o.concepts, "Concept file (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("--text", o.text, "Concept text embeddings (CBE)")->required()->check(CLI::ExistingFile);
}

struct ModelOptions {
  bool no_adapter = false;
  bool no_group_softmax = false;
  bool no_linear = false;
  double tau = 100.0;
  double alpha = 0.8;
  std::size_t m = 512;
  std::size_t hidden = 0;
};

void add_model_options(CLI::App* app, ModelOptions& o) {
  app->add_flag("--no-adapter", o.no_adapter, "Disable the residual adapter");
  app->add_flag("--no-group-softmax", o.no_group_softmax, "Aggregate raw concept scores");
  app->add_flag("--no-linear", o.no_linear, "Pass concept scores through as X_emb (m = N)");
  app->add_option("--tau", o.tau, "Group softmax temperature")->capture_default_str();
  app->add_option("--alpha", o.alpha, "Residual blend factor in [0, 1]")->capture_default_str();
  app->add_option("--m", o.m, "X_emb width")->capture_default_str();
  app->add_option("--hidden", o.hidden, "Adapter hidden width (default d/4)");
}

const std::map<std::string, MarginVariant> kVariants = {{"adaface", MarginVariant::adaface},
                                                         {"arcface", MarginVariant::arcface},
                                                         {"cosface", MarginVariant::cosface},
                                                         {"plain", MarginVariant::plain}};

const std::map<std::string, OptimizerKind> kOptimizers = {{"adam", OptimizerKind::adam},
                                                          {"adamw", OptimizerKind::adamw}};

struct TrainOptions {
  DataOptions data;
  ModelOptions model;
  LossConfig loss;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string trainable = "default";
  std::string out;
  std::string log;
  std::string labels;  // xray only
};

void add_train_options(CLI::App* app, TrainOptions& o, bool face) {
  add_data_options(app, o.data);
  add_model_options(app, o.model);
  if (face) {
    app->add_option("--variant", o.loss.variant, "Margin variant")
        ->transform(CLI::CheckedTransformer(kVariants, CLI::ignore_case))
        ->default_str("adaface");
    app->add_option("--margin", o.loss.margin, "Margin m")->capture_default_str();
    app->add_option("--scale", o.loss.scale, "Logit scale s")->capture_default_str();
    app->add_option("--adaface-h", o.loss.h, "Quality indicator concentration")->capture_default_str();
    app->add_option("--ema-momentum", o.loss.ema_momentum, "Norm EMA momentum")->capture_default_str();
  } else {
    app->add_option("--labels", o.labels, "Concept labels (JSONL)")->required()->check(CLI::ExistingFile);
    app->add_option("--w-cls", o.loss.w_cls, "Classification loss weight")->capture_default_str();
    app->add_option("--w-concept", o.loss.w_concept, "Concept loss weight")->capture_default_str();
  }
  app->add_option("--optimizer", o.train.optimizer, "adam or adamw")
      ->transform(CLI::CheckedTransformer(kOptimizers, CLI::ignore_case))
      ->default_str(to_string(o.train.optimizer));
  app->add_option("--lr", o.train.lr, "Learning rate")->capture_default_str();
  app->add_option("--weight-decay", o.train.weight_decay, "Weight decay")->capture_default_str();
  app->add_option("--epochs", o.train.epochs, "Epochs")->capture_default_str();
  app->add_option("--batch-size", o.train.batch_size, "Batch size")->capture_default_str();
  app->add_option("--threads", o.train.threads, "Worker threads (results do not depend on it)")
      ->capture_default_str();
  app->add_option("--seed", o.seed, "Seed for initialization and shuffling")->capture_default_str();
  app->add_option("--trainable", o.trainable,
                  "Comma-separated tensors to train, 'default' or 'none' "
                  "(alpha, adapter_w1, adapter_b1, adapter_w2, adapter_b2, w_agg, head)")
      ->capture_default_str();
  app->add_option("--out", o.out, "Checkpoint output path (CBCK)")->required();
  app->add_option("--log", o.log, "Also write the loss log to this file");
}

struct ModelInput {
  DataOptions data;
  std::string checkpoint;
};

void add_model_input(CLI::App* app, ModelInput& o) {
  add_data_options(app, o.data);
  app->add_option("--checkpoint", o.checkpoint, "Trained model (CBCK)")->required()->check(CLI::ExistingFile);
}

// ---------------------------------------------------------------------------
// Loading and shared computation.

struct Workspace {
  ConceptSet set;
  ConceptTextEmbeddings text;
  std::optional<Dataset> dataset;
};

Workspace load_workspace(const DataOptions& o) {
  Workspace ws;
  ws.set = load_concepts(o.concepts);
  ws.text = bind_text_embeddings(ws.set, read_cbe(o.text));
  ws.dataset.emplace(read_cbe(o.embeddings), load_manifest(o.manifest));
  if (ws.dataset->embeddings().dim() != ws.text.dim()) {
    throw ShapeError("image embeddings have d=" + std::to_string(ws.dataset->embeddings().dim()) +
                     " but concept text embeddings have d=" + std::to_string(ws.text.dim()));
  }
  return ws;
}

struct Bound {
  Workspace ws;
  Checkpoint ck;

  std::vector<double> input(std::size_t row) const { return to_double(ws.dataset->embeddings().row(row)); }
  ForwardCache forward_row(std::size_t row) const { return forward(input(row), ws.text, ws.set, ck.params, ck.model); }
};

Bound load_bound(const ModelInput& o) {
  Bound b{load_workspace(o.data), read_checkpoint(o.checkpoint)};
  check_concepts(b.ck, b.ws.set);
  if (b.ck.model.d != b.ws.text.dim()) {
    throw ShapeError("checkpoint expects d=" + std::to_string(b.ck.model.d) + " but embeddings have d=" +
                     std::to_string(b.ws.text.dim()));
  }
  return b;
}

TensorFlags parse_trainable(const std::string& spec, const TensorFlags& defaults) {
  if (spec == "default") return defaults;
  TensorFlags flags{};
  if (spec == "none") return flags;
  std::stringstream ss(spec);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto id = parse_tensor_name(name);
    if (!id) throw ConfigError("unknown tensor '" + name + "' in --trainable");
    flags[static_cast<std::size_t>(*id)] = true;
  }
  return flags;
}

ModelConfig build_model(const ModelOptions& o, std::size_t d, std::size_t n, std::size_t k) {
  ModelConfig m = default_model_config(d, n, k);
  m.use_adapter = !o.no_adapter;
  m.use_group_softmax = !o.no_group_softmax;
  m.use_linear = !o.no_linear;
  m.tau = o.tau;
  m.alpha = o.alpha;
  m.m = m.use_linear ? o.m : n;
  if (o.hidden > 0) m.h = o.hidden;
  m.validate();
  return m;
}

void emit(std::ostream& out, const json& report, bool csv) {
  if (!csv) {
    out << report.dump() << '\n';
    return;
  }
  std::string header;
  std::string values;
  for (const auto& [key, value] : report.items()) {
    if (!header.empty()) {
      header += ',';
      values += ',';
    }
    header += key;
    values += value.is_string() ? value.get<std::string>() : value.dump();
  }
  out << header << '\n' << values << '\n';
}

std::vector<std::size_t> rows_in_split(const Dataset& dataset, const std::string& split) {
  std::vector<std::size_t> rows;
  const std::optional<Split> wanted = split == "all" ? std::nullopt : std::optional<Split>(parse_split(split));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!wanted || dataset.records()[i].split == *wanted) rows.push_back(i);
  }
  if (rows.empty()) throw DataError("no records in split '" + split + "'");
  return rows;
}

std::size_t predict_class(const Checkpoint& ck, const ForwardCache& cache) {
  const auto logits = ck.task == "face" ? margin_logits(cache.x_emb, 0, ck.params.head(),
                                                        LossConfig{MarginVariant::plain}, 0.0)
                                        : linear_logits(cache.x_emb, ck.params.head());
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::size_t label_index(const Checkpoint& ck, const RecordMeta& r) {
  if (!r.label) throw DataError("record '" + r.id + "' has no label");
  const auto it = std::find(ck.class_labels.begin(), ck.class_labels.end(), *r.label);
  if (it == ck.class_labels.end()) throw DataError("record '" + r.id + "' has unknown label '" + *r.label + "'");
  return static_cast<std::size_t>(it - ck.class_labels.begin());
}

// ---------------------------------------------------------------------------
// Subcommands.

struct SynthOptions {
  SynthConfig config;
  std::string mode = "face";
  std::uint64_t seed = 0;
  std::string out;
  std::string concepts;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  SynthConfig cfg = o.config;
  cfg.mode = o.mode == "face" ? Domain::face : Domain::xray;
  const ConceptSet set = o.concepts.empty() ? builtin_concepts(cfg.mode) : load_concepts(o.concepts);
  const EmbeddingMatrix text_rows = synthesize_text_embeddings(set, cfg.dim, o.seed);
  const ConceptTextEmbeddings text = bind_text_embeddings(set, text_rows);
  const SyntheticDataset data = synthesize_dataset(cfg, o.seed, set, text);

  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_concepts(set, dir / "concepts.json");
  write_cbe(text_rows, dir / "text.cbe");
  write_cbe(data.embeddings, dir / "embeddings.cbe");
  write_manifest(data.manifest, dir / "manifest.jsonl");
  json report = {{"command", "synth"},   {"mode", o.mode},        {"seed", o.seed},
                 {"dim", cfg.dim},       {"concepts", set.size()}, {"records", data.manifest.size()},
                 {"out", dir.string()}};
  if (cfg.mode == Domain::face) {
    write_pairs(data.pairs, dir / "pairs.jsonl");
    report["pairs"] = data.pairs.size();
  } else {
    write_concept_labels(data.concept_labels, data.manifest, dir / "concept_labels.jsonl");
    report["labelled"] = data.concept_labels.size();
  }
  out << report.dump() << '\n';
  return kExitOk;
}

int cmd_train(const TrainOptions& o, bool face, std::ostream& out, std::ostream& err) {
  Workspace ws = load_workspace(o.data);
  const Dataset& dataset = *ws.dataset;
  const auto labels = class_labels(dataset, Split::train);
  const ModelConfig model = build_model(o.model, ws.text.dim(), ws.set.size(), labels.size());

  TrainConfig train = o.train;
  const TensorFlags defaults = face ? default_face_train_config().trainable : default_xray_train_config().trainable;
  train.trainable = parse_trainable(o.trainable, defaults);
  train.seed = derive_seed(o.seed, kShuffleStream);
  BottleneckParams params = init_params(derive_seed(o.seed, kInitStream), model);

  TrainResult result;
  if (face) {
    result = train_face(dataset, ws.set, ws.text, std::move(params), model, o.loss, train);
  } else {
    const ConceptLabelSet concept_labels = load_concept_labels(o.labels);
    result = train_xray(dataset, concept_labels, ws.set, ws.text, std::move(params), model, o.loss, train, &err);
  }

  Checkpoint ck{face ? "face" : "xray", model, o.loss, ws.set.ids(), labels, std::move(result.params)};
  write_checkpoint(ck, o.out);
  const std::string log = format_loss_log(result.log);
  if (!o.log.empty()) io::spill(log, o.log);
  out << log;
  return kExitOk;
}

struct VerifyOptions {
  ModelInput input;
  std::string pairs;
  bool raw = false;
  bool csv = false;
};

int cmd_eval_verify(const VerifyOptions& o, std::ostream& out) {
  const Bound b = load_bound(o.input);
  const PairList pairs = load_pairs(o.pairs);
  validate_pairs(pairs, *b.ws.dataset);
  EmbeddingLookup embs;
  for (const auto& p : pairs) {
    for (const std::string* id : {&p.a, &p.b}) {
      if (embs.contains(*id)) continue;
      const std::size_t row = b.ws.dataset->index_of(*id);
      embs[*id] = o.raw ? b.input(row) : b.forward_row(row).x_emb;
    }
  }
  const VerifyResult r = verify_accuracy(embs, pairs);
  emit(out,
       {{"metric", "verify"},
        {"embedding", o.raw ? "raw" : "x_emb"},
        {"accuracy", r.accuracy},
        {"best_threshold", r.threshold},
        {"pairs", r.pairs}},
       o.csv);
  return kExitOk;
}

struct ClassifyOptions {
  ModelInput input;
  std::string split = "test";
  std::string positive;
  std::string labels;
  bool csv = false;
};

int cmd_eval_classify(const ClassifyOptions& o, std::ostream& out) {
  const Bound b = load_bound(o.input);
  const auto& labels = b.ck.class_labels;
  std::string positive = o.positive;
  if (positive.empty()) {
    positive = std::find(labels.begin(), labels.end(), "1") != labels.end() ? "1" : labels.back();
  }
  const auto pos_it = std::find(labels.begin(), labels.end(), positive);
  if (pos_it == labels.end()) throw ConfigError("positive class '" + positive + "' is not a checkpoint class");
  const auto pos = static_cast<std::size_t>(pos_it - labels.begin());

  std::optional<ConceptLabelSet> concept_labels;
  if (!o.labels.empty()) concept_labels = load_concept_labels(o.labels);
  double present_sum = 0.0, absent_sum = 0.0;
  std::size_t present_n = 0, absent_n = 0;

  std::vector<bool> predictions, truth;
  for (std::size_t row : rows_in_split(*b.ws.dataset, o.split)) {
    const auto& record = b.ws.dataset->records()[row];
    const ForwardCache cache = b.forward_row(row);
    predictions.push_back(predict_class(b.ck, cache) == pos);
    truth.push_back(label_index(b.ck, record) == pos);
    if (concept_labels) {
      const auto present = present_indices(*concept_labels, record.id, b.ws.set);
      const std::set<std::size_t> on(present.begin(), present.end());
      for (std::size_t j = 0; j < cache.scores.raw.size(); ++j) {
        if (on.contains(j)) {
          present_sum += cache.scores.raw[j];
          ++present_n;
        } else {
          absent_sum += cache.scores.raw[j];
          ++absent_n;
        }
      }
    }
  }
  const ClassificationReport r = classification_metrics(predictions, truth);
  json report = {{"metric", "classify"},
                 {"split", o.split},
                 {"positive", positive},
                 {"accuracy", r.accuracy},
                 {"precision", r.precision},
                 {"recall", r.recall},
                 {"f1", r.f1},
                 {"precision_undefined", r.precision_undefined},
                 {"recall_undefined", r.recall_undefined},
                 {"tp", r.tp},
                 {"fp", r.fp},
                 {"tn", r.tn},
                 {"fn", r.fn}};
  if (concept_labels && present_n > 0 && absent_n > 0) {
    report["concept_gap"] =
        present_sum / static_cast<double>(present_n) - absent_sum / static_cast<double>(absent_n);
  }
  emit(out, report, o.csv);
  return kExitOk;
}

struct TextOptions {
  ModelInput input;
  std::string split = "test";
  std::string labels;
  std::string reports;
  double theta = kDefaultDiagnosisThreshold;
  bool calibrate = false;
  std::size_t k = kDefaultExplanationK;
  bool csv = false;
};

std::map<std::string, std::string> load_reports(const std::string& path) {
  std::map<std::string, std::string> reports;
  std::istringstream in(io::slurp(path));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      reports[j.at("id").get<std::string>()] = j.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return reports;
}

std::string reference_from_labels(const ConceptLabelSet& labels, const std::string& id, const ConceptSet& set) {
  std::string text;
  for (std::size_t j : present_indices(labels, id, set)) {
    if (!text.empty()) text += "; ";
    text += set.concept_at(j).text;
  }
  return text;
}

int cmd_eval_text(const TextOptions& o, std::ostream& out) {
  if (o.labels.empty() && o.reports.empty()) throw ConfigError("eval text needs --labels or --reports");
  if (o.calibrate && o.labels.empty()) throw ConfigError("--calibrate needs --labels");
  const Bound b = load_bound(o.input);
  const Dataset& dataset = *b.ws.dataset;
  std::optional<ConceptLabelSet> labels;
  if (!o.labels.empty()) labels = load_concept_labels(o.labels);
  std::map<std::string, std::string> reports;
  if (!o.reports.empty()) reports = load_reports(o.reports);

  double theta = o.theta;
  if (o.calibrate) {
    std::vector<ConceptScores> scores;
    std::vector<std::vector<std::size_t>> present;
    for (std::size_t row : rows_in_split(dataset, "train")) {
      scores.push_back(b.forward_row(row).scores);
      present.push_back(present_indices(*labels, dataset.records()[row].id, b.ws.set));
    }
    theta = calibrate_diagnosis_threshold(scores, present, b.ws.set);
  }

  double rouge_sum = 0.0, meteor_sum = 0.0;
  std::size_t count = 0, empty = 0;
  for (std::size_t row : rows_in_split(dataset, o.split)) {
    const auto& record = dataset.records()[row];
    std::string reference;
    if (!o.reports.empty()) {
      const auto it = reports.find(record.id);
      if (it == reports.end()) continue;
      reference = it->second;
    } else {
      reference = reference_from_labels(*labels, record.id, b.ws.set);
    }
    const ForwardCache cache = b.forward_row(row);
    const std::string prediction = b.ck.class_labels[predict_class(b.ck, cache)];
    const std::string candidate = explanation_text(explain_diagnosis(cache.scores, b.ws.set, theta, prediction, o.k));
    const TextScore r = rouge_l(candidate, reference);
    const TextScore m = meteor(candidate, reference);
    rouge_sum += r.score;
    meteor_sum += m.score;
    if (r.empty_input) ++empty;
    ++count;
  }
  if (count == 0) throw DataError("no records with a reference text in split '" + o.split + "'");
  const auto n = static_cast<double>(count);
  emit(out,
       {{"metric", "text"},
        {"split", o.split},
        {"theta", theta},
        {"k", o.k},
        {"records", count},
        {"empty_inputs", empty},
        {"rouge_l", rouge_sum / n},
        {"meteor", meteor_sum / n}},
       o.csv);
  return kExitOk;
}

struct ExplainPairOptions {
  ModelInput input;
  std::string ref;
  std::string probe;
  double threshold = 0.5;
  std::string pairs;
  std::size_t k = kDefaultExplanationK;
  bool jsonl = false;
};

int cmd_explain_pair(const ExplainPairOptions& o, std::ostream& out) {
  const Bound b = load_bound(o.input);
  const Dataset& dataset = *b.ws.dataset;
  const ForwardCache ref = b.forward_row(dataset.index_of(o.ref));
  const ForwardCache probe = b.forward_row(dataset.index_of(o.probe));
  double threshold = o.threshold;
  if (!o.pairs.empty()) {
    const PairList pairs = load_pairs(o.pairs);
    validate_pairs(pairs, dataset);
    EmbeddingLookup embs;
    for (const auto& p : pairs) {
      for (const std::string* id : {&p.a, &p.b}) {
        if (!embs.contains(*id)) embs[*id] = b.forward_row(dataset.index_of(*id)).x_emb;
      }
    }
    threshold = verify_accuracy(embs, pairs).threshold;
  }
  const double sim = cosine(ref.x_emb, probe.x_emb);
  Explanation x = sim >= threshold ? explain_match(ref.scores, probe.scores, b.ws.set, o.k)
                                   : explain_nonmatch(ref.scores, probe.scores, b.ws.set, o.k);
  x.similarity = sim;
  out << (o.jsonl ? explanation_record(x) + "\n" : render_explanation(x));
  return kExitOk;
}

struct ExplainImageOptions {
  ModelInput input;
  std::string id;
  double theta = kDefaultDiagnosisThreshold;
  std::size_t k = kDefaultExplanationK;
  bool jsonl = false;
};

int cmd_explain_image(const ExplainImageOptions& o, std::ostream& out) {
  const Bound b = load_bound(o.input);
  const ForwardCache cache = b.forward_row(b.ws.dataset->index_of(o.id));
  const std::string prediction = b.ck.class_labels[predict_class(b.ck, cache)];
  const Explanation x = explain_diagnosis(cache.scores, b.ws.set, o.theta, prediction, o.k);
  out << (o.jsonl ? explanation_record(x) + "\n" : render_explanation(x));
  return kExitOk;
}

struct ZeroShotOptions {
  std::string embeddings;
  std::string manifest;
  std::string class_text;
  std::string classes;
  std::string split = "all";
  std::string checkpoint;
  std::string concepts;
  std::string text;
  bool csv = false;
};

int cmd_zeroshot(const ZeroShotOptions& o, std::ostream& out) {
  const Dataset dataset(read_cbe(o.embeddings), load_manifest(o.manifest));
  const EmbeddingMatrix class_rows = read_cbe(o.class_text);
  std::vector<std::string> classes;
  std::stringstream ss(o.classes);
  for (std::string c; std::getline(ss, c, ',');) classes.push_back(c);
  if (classes.size() != class_rows.rows()) {
    throw BindError("--classes names " + std::to_string(classes.size()) + " classes but the class text file has " +
                    std::to_string(class_rows.rows()) + " rows");
  }
  Matrix class_text(class_rows.rows(), class_rows.dim());
  for (std::size_t r = 0; r < class_rows.rows(); ++r) {
    const auto v = to_double(class_rows.row(r));
    const double norm = l2_norm(v);
    if (!(norm > 0.0)) throw DataError("class text row " + std::to_string(r) + " has zero norm");
    for (std::size_t c = 0; c < v.size(); ++c) class_text(r, c) = v[c] / norm;
  }

  std::optional<Bound> bound;
  if (!o.checkpoint.empty()) {
    if (o.concepts.empty() || o.text.empty()) throw ConfigError("--checkpoint needs --concepts and --text");
    bound = load_bound({{o.embeddings, o.manifest, o.concepts, o.text}, o.checkpoint});
  }

  std::vector<std::vector<double>> images;
  std::vector<std::size_t> labels;
  for (std::size_t row : rows_in_split(dataset, o.split)) {
    const auto& record = dataset.records()[row];
    if (!record.label) throw DataError("record '" + record.id + "' has no label");
    const auto it = std::find(classes.begin(), classes.end(), *record.label);
    if (it == classes.end()) throw DataError("record '" + record.id + "' has label outside --classes");
    labels.push_back(static_cast<std::size_t>(it - classes.begin()));
    std::vector<double> e = to_double(dataset.embeddings().row(row));
    images.push_back(bound ? adapt_embedding(e, bound->ck.params, bound->ck.model) : std::move(e));
  }
  const ZeroShotResult r = zero_shot_eval(images, class_text, labels);
  emit(out,
       {{"metric", "zeroshot"},
        {"embedding", bound ? "adapted" : "raw"},
        {"split", o.split},
        {"images", images.size()},
        {"accuracy", r.accuracy}},
       o.csv);
  return kExitOk;
}

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 100;
  std::string loss;
  bool verbose = false;
};

int cmd_gradcheck(const GradCheckOptions& o, std::ostream& out) {
  std::optional<CheckedLoss> only;
  if (!o.loss.empty()) only = parse_checked_loss(o.loss);
  const GradCheckReport report = grad_check(o.seed, o.instances, only);
  if (o.verbose) {
    for (const auto& inst : report.instances) {
      json tensors = json::object();
      for (const auto& t : inst.tensors) tensors[std::string(tensor_name(t.tensor))] = t.max_rel_error;
      out << json{{"seed", inst.seed}, {"loss", to_string(inst.loss)}, {"max_rel_error", inst.max_rel_error},
                  {"tensors", tensors}}
                 .dump()
          << '\n';
    }
  }
  const bool pass = report.max_rel_error <= 1e-4;
  out << json{{"command", "gradcheck"},
              {"seed", o.seed},
              {"instances", report.instances.size()},
              {"max_rel_error", report.max_rel_error},
              {"pass", pass}}
             .dump()
      << '\n';
  return pass ? kExitOk : kExitFailure;
}

void add_config(CLI::App* app) {
  app->add_option("--config", "Read options from a TOML/INI file; command-line flags take precedence")
      ->check(CLI::ExistingFile);
}

// CLI11 only reads config files for the root app, so a subcommand's --config
// file is expanded into flags here. Keys at the top level or in a section
// named after the command path ([train.face]) apply; explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || !fs::is_regular_file(path)) return args;

  std::vector<std::string> command;
  for (const auto& a : args) {
    if (a.empty() || a[0] == '-') break;
    command.push_back(a);
  }
  std::set<std::string> given;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') - 2));
  }

  std::vector<std::string> out = args;
  for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_file(path)) {
    if (item.name == "++" || item.name == "--" || item.name.empty()) continue;
    if (!item.parents.empty() && item.parents != command) continue;
    if (given.contains(item.name)) continue;
    given.insert(item.name);
    if (item.inputs.size() == 1) {
      out.push_back("--" + item.name + "=" + item.inputs.front());
    } else {
      out.push_back("--" + item.name);
      out.insert(out.end(), item.inputs.begin(), item.inputs.end());
    }
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept-bottleneck explainability engine"};
  app.name("cbe");
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_config(synth_cmd);
  synth_cmd->add_option("--mode", synth.mode, "face or xray")->check(CLI::IsMember({"face", "xray"}))
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--concepts", synth.concepts, "Concept file (default: built-in set for the mode)")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--dim", synth.config.dim, "Embedding dimension")->capture_default_str();
  synth_cmd->add_option("--noise", synth.config.noise, "Gaussian noise sigma")->capture_default_str();
  synth_cmd->add_option("--identities", synth.config.identities, "face: identities")->capture_default_str();
  synth_cmd->add_option("--images-per-identity", synth.config.images_per_identity, "face: images per identity")
      ->capture_default_str();
  synth_cmd->add_option("--test-identity-fraction", synth.config.test_identity_fraction,
                        "face: fraction of identities held out")
      ->capture_default_str();
  synth_cmd->add_option("--pairs-per-class", synth.config.pairs_per_class, "face: same and different pairs each")
      ->capture_default_str();
  synth_cmd->add_option("--images", synth.config.images, "xray: images")->capture_default_str();
  synth_cmd->add_option("--test-fraction", synth.config.test_fraction, "xray: held-out fraction")
      ->capture_default_str();
  synth_cmd->add_option("--concept-rate", synth.config.concept_rate, "xray: rate of non-marker concepts")
      ->capture_default_str();
  synth_cmd->add_option("--positive-rate", synth.config.positive_rate, "xray: rate of the marker concept")
      ->capture_default_str();
  synth_cmd->add_option("--marker", synth.config.marker, "xray: marker concept id (default: first concept)");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->require_subcommand(1);
  TrainOptions face;
  face.train = default_face_train_config();
  auto* face_cmd = train_cmd->add_subcommand("face", "Verification training with a margin-softmax head");
  add_config(face_cmd);
  add_train_options(face_cmd, face, true);
  TrainOptions xray;
  xray.train = default_xray_train_config();
  auto* xray_cmd = train_cmd->add_subcommand("xray", "Concept-supervised diagnosis training");
  add_config(xray_cmd);
  add_train_options(xray_cmd, xray, false);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained model");
  eval_cmd->require_subcommand(1);
  VerifyOptions verify;
  auto* verify_cmd = eval_cmd->add_subcommand("verify", "1:1 verification accuracy over pairs");
  add_config(verify_cmd);
  add_model_input(verify_cmd, verify.input);
  verify_cmd->add_option("--pairs", verify.pairs, "Pairs (JSONL)")->required()->check(CLI::ExistingFile);
  verify_cmd->add_flag("--raw", verify.raw, "Use raw image embeddings instead of X_emb");
  verify_cmd->add_flag("--csv", verify.csv, "Tabular output");
  ClassifyOptions classify;
  auto* classify_cmd = eval_cmd->add_subcommand("classify", "Classification metrics on a split");
  add_config(classify_cmd);
  add_model_input(classify_cmd, classify.input);
  classify_cmd->add_option("--split", classify.split, "train, test or all")->capture_default_str();
  classify_cmd->add_option("--positive", classify.positive, "Positive class (default '1' or the last class)");
  classify_cmd->add_option("--labels", classify.labels, "Concept labels; adds the present/absent score gap")
      ->check(CLI::ExistingFile);
  classify_cmd->add_flag("--csv", classify.csv, "Tabular output");
  TextOptions text;
  auto* text_cmd = eval_cmd->add_subcommand("text", "ROUGE-L and METEOR of diagnosis explanations");
  add_config(text_cmd);
  add_model_input(text_cmd, text.input);
  text_cmd->add_option("--split", text.split, "train, test or all")->capture_default_str();
  text_cmd->add_option("--labels", text.labels, "Concept labels; references are present concept texts")
      ->check(CLI::ExistingFile);
  text_cmd->add_option("--reports", text.reports, "Reference reports (JSONL {id, text})")->check(CLI::ExistingFile);
  text_cmd->add_option("--theta", text.theta, "Diagnosis score threshold")->capture_default_str();
  text_cmd->add_flag("--calibrate", text.calibrate, "Pick theta by concept-set F1 on the train split");
  text_cmd->add_option("--k", text.k, "Entries per explanation")->capture_default_str();
  text_cmd->add_flag("--csv", text.csv, "Tabular output");

  auto* explain_cmd = app.add_subcommand("explain", "Explain decisions");
  explain_cmd->require_subcommand(1);
  ExplainPairOptions pair;
  auto* pair_cmd = explain_cmd->add_subcommand("pair", "Explain a verification decision");
  add_config(pair_cmd);
  add_model_input(pair_cmd, pair.input);
  pair_cmd->add_option("--ref", pair.ref, "Reference id")->required();
  pair_cmd->add_option("--probe", pair.probe, "Probe id")->required();
  pair_cmd->add_option("--threshold", pair.threshold, "Match threshold on X_emb cosine")->capture_default_str();
  pair_cmd->add_option("--pairs", pair.pairs, "Calibrate the threshold on these pairs")->check(CLI::ExistingFile);
  pair_cmd->add_option("--k", pair.k, "Entries")->capture_default_str();
  pair_cmd->add_flag("--jsonl", pair.jsonl, "Structured record instead of text");
  ExplainImageOptions image;
  auto* image_cmd = explain_cmd->add_subcommand("image", "Explain a diagnosis");
  add_config(image_cmd);
  add_model_input(image_cmd, image.input);
  image_cmd->add_option("--id", image.id, "Image id")->required();
  image_cmd->add_option("--theta", image.theta, "Raw score threshold")->capture_default_str();
  image_cmd->add_option("--k", image.k, "Entries")->capture_default_str();
  image_cmd->add_flag("--jsonl", image.jsonl, "Structured record instead of text");

  ZeroShotOptions zs;
  auto* zs_cmd = app.add_subcommand("zeroshot", "Zero-shot accuracy against class text embeddings");
  add_config(zs_cmd);
  zs_cmd->add_option("--embeddings", zs.embeddings, "Image embeddings (CBE)")->required()->check(CLI::ExistingFile);
  zs_cmd->add_option("--manifest", zs.manifest, "Manifest (JSONL)")->required()->check(CLI::ExistingFile);
  zs_cmd->add_option("--class-text", zs.class_text, "Class text embeddings (CBE)")
      ->required()
      ->check(CLI::ExistingFile);
  zs_cmd->add_option("--classes", zs.classes, "Comma-separated class labels, one per class text row")->required();
  zs_cmd->add_option("--split", zs.split, "train, test or all")->capture_default_str();
  zs_cmd->add_option("--checkpoint", zs.checkpoint, "Score adapted image encodings of this model")
      ->check(CLI::ExistingFile);
  zs_cmd->add_option("--concepts", zs.concepts, "Concept file (with --checkpoint)")->check(CLI::ExistingFile);
  zs_cmd->add_option("--text", zs.text, "Concept text embeddings (with --checkpoint)")->check(CLI::ExistingFile);
  zs_cmd->add_flag("--csv", zs.csv, "Tabular output");

  GradCheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  add_config(gc_cmd);
  gc_cmd->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  gc_cmd->add_option("--instances", gc.instances, "Random instances")->capture_default_str();
  gc_cmd->add_option("--loss", gc.loss, "Restrict to one loss")
      ->check(CLI::IsMember({"adaface", "arcface", "cosface", "plain", "supervised"}));
  gc_cmd->add_flag("--verbose", gc.verbose, "One record per instance");

  try {
    const std::vector<std::string> expanded = expand_config(args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*face_cmd) return cmd_train(face, true, out, err);
    if (*xray_cmd) return cmd_train(xray, false, out, err);
    if (*verify_cmd) return cmd_eval_verify(verify, out);
    if (*classify_cmd) return cmd_eval_classify(classify, out);
    if (*text_cmd) return cmd_eval_text(text, out);
    if (*pair_cmd) return cmd_explain_pair(pair, out);
    if (*image_cmd) return cmd_explain_image(image, out);
    if (*zs_cmd) return cmd_zeroshot(zs, out);
    if (*gc_cmd) return cmd_gradcheck(gc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << "error: no command\n";
  return kExitUsage;
}

}  // namespace cbe::cli
