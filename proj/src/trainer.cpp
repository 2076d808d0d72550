#include "ulfine/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ulfine/binary_io.hpp"
#include "ulfine/error.hpp"
#include "ulfine/fusion.hpp"
#include "ulfine/kernels.hpp"

namespace ulfine {

namespace {

constexpr std::uint64_t kParamStream = 10;
constexpr std::uint64_t kTrainStream = 11;

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
  a.labeled += b.labeled;
  a.unlabeled += b.unlabeled;
  a.orthogonal += b.orthogonal;
  a.orthogonal_weight = b.orthogonal_weight;
  a.total += b.total;
  return a;
}

LossBreakdown mean_of(const LossBreakdown& sum, std::uint64_t steps) {
  if (steps == 0) return LossBreakdown{0.0, 0.0, 0.0, sum.orthogonal_weight, 0.0};
  const double inv = 1.0 / static_cast<double>(steps);
  return LossBreakdown{sum.labeled * inv, sum.unlabeled * inv, sum.orthogonal * inv, sum.orthogonal_weight,
                       sum.total * inv};
}

}  // namespace

std::vector<std::size_t> TrainData::labeled_counts() const {
  std::vector<std::size_t> counts(labeled.class_count(), 0);
  for (auto y : labeled.labels()) ++counts[y];
  return counts;
}

SyntheticCorpus synthesize_corpus(const DataConfig& cfg, std::uint64_t seed) {
  const Matrix means = synthetic_class_means(cfg.classes, cfg.dim, derive_seed(seed, 0));
  const std::size_t per_pool = cfg.split.head_labeled + cfg.split.head_unlabeled;
  const std::vector<std::size_t> pool_counts(cfg.classes, per_pool);
  const std::vector<std::size_t> test_counts(cfg.classes, cfg.test_per_class);
  SyntheticCorpus corpus;
  corpus.pool = sample_embeddings(means, pool_counts, cfg.separation, cfg.noise_sigma, derive_seed(seed, 1));
  corpus.test = sample_embeddings(means, test_counts, cfg.separation, cfg.noise_sigma, derive_seed(seed, 2));
  if (cfg.text_mode == TextPrototypeMode::kOrthonormal) {
    corpus.text = synthetic_text_prototypes(cfg.classes, cfg.dim, derive_seed(seed, 3));
  } else {
    Rng rng(derive_seed(seed, 3));
    Matrix rows = means;
    for (std::size_t k = 0; k < rows.rows(); ++k) {
      auto row = rows.row(k);
      for (double& v : row) v += cfg.text_noise * rng.normal();
      normalize_inplace(row);
    }
    corpus.text = TextPrototypes{std::move(rows), PrototypeSource::kSynthetic};
  }
  return corpus;
}

TrainData make_train_data(const SyntheticCorpus& corpus, const LongTailSpec& spec, std::uint64_t seed) {
  const SplitIndices split = build_split(corpus.pool, spec, derive_seed(seed, 4));
  return TrainData{subset(corpus.pool, split.labeled), subset(corpus.pool, split.unlabeled), corpus.test, corpus.text};
}

Trainer::Trainer(TrainConfig cfg, TrainData data) : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  const std::size_t classes = data_.labeled.class_count();
  const std::size_t dim = data_.labeled.dim();
  if (!data_.labeled.has_labels()) throw ConfigError("labeled set carries no labels");
  if (data_.labeled.rows() == 0 || data_.unlabeled.rows() == 0) throw ConfigError("labeled and unlabeled sets must be non-empty");
  for (const EmbeddingSet* s : {&data_.unlabeled, &data_.test}) {
    if (s->dim() != dim) throw DimensionError("dataset dimension mismatch: expected D=" + std::to_string(dim));
    if (s->class_count() != classes) throw DimensionError("dataset class-count mismatch: expected C=" + std::to_string(classes));
  }
  if (!data_.test.has_labels()) throw ConfigError("test set carries no labels");
  if (data_.text.rows.rows() != classes || data_.text.rows.cols() != dim) {
    throw DimensionError("text prototypes do not match the embedding shape");
  }
  if (!cfg_.model.freeze_adapter && cfg_.model.rank >= dim) throw ConfigError("model.rank must be smaller than D");
  labeled_counts_ = data_.labeled_counts();
  for (std::size_t k = 0; k < classes; ++k) {
    if (labeled_counts_[k] == 0) throw ConfigError("class " + std::to_string(k) + " has no labeled samples");
  }
  cfg_.fusion.class_prior = class_prior_from_counts(labeled_counts_);
  cfg_.fusion.validate(classes);
  objective_ = ObjectiveConfig{cfg_.fusion.class_prior, cfg_.fusion.la_strength, cfg_.paf.orthogonal_weight};
  provenance_ = config_map(cfg_);
}

TrainState Trainer::initial_state() const {
  const std::size_t classes = data_.labeled.class_count();
  const std::size_t dim = data_.labeled.dim();
  TrainState s;
  s.params = ModelParams::initialize(classes, dim, cfg_.model.rank, cfg_.model.adapter_scale, cfg_.model.probe_init,
                                     derive_seed(cfg_.seed, kParamStream));
  s.optimizer = OptimizerState::for_params(s.params, cfg_.learning_rate, cfg_.momentum, cfg_.weight_decay);
  s.prototypes = PrototypeState::from_text(data_.text);
  s.rng = Rng(derive_seed(cfg_.seed, kTrainStream));
  s.loss_sum.orthogonal_weight = cfg_.paf.orthogonal_weight;
  return s;
}

StepMetrics Trainer::train_step(TrainState& state) const {
  std::vector<Vector> labeled(cfg_.batch_labeled);
  std::vector<std::uint32_t> labels(cfg_.batch_labeled);
  for (std::size_t i = 0; i < cfg_.batch_labeled; ++i) {
    const auto idx = state.rng.index(data_.labeled.rows());
    labeled[i] = data_.labeled.row_as_double(idx);
    labels[i] = data_.labeled.label(idx);
  }
  std::vector<Vector> unlabeled(cfg_.batch_unlabeled);
  for (std::size_t j = 0; j < cfg_.batch_unlabeled; ++j) {
    unlabeled[j] = data_.unlabeled.row_as_double(state.rng.index(data_.unlabeled.rows()));
  }
  return step_on_batch(state, labeled, labels, unlabeled);
}

StepMetrics Trainer::step_on_batch(TrainState& state, std::span<const Vector> labeled,
                                   std::span<const std::uint32_t> labels, std::span<const Vector> unlabeled,
                                   StepTrace* trace) const {
  const std::size_t classes = state.params.classes();
  auto& protos = state.prototypes;

  // (1) augmentation
  TrainingBatch batch;
  batch.labels.assign(labels.begin(), labels.end());
  for (const auto& x : labeled) batch.labeled.push_back(augment(x, AugmentKind::kWeak, cfg_.augment, state.rng));
  std::vector<Vector> unlabeled_weak;
  for (const auto& u : unlabeled) unlabeled_weak.push_back(augment(u, AugmentKind::kWeak, cfg_.augment, state.rng));
  for (const auto& u : unlabeled) batch.unlabeled_strong.push_back(augment(u, AugmentKind::kStrong, cfg_.augment, state.rng));

  // (2) features
  std::vector<Vector> labeled_z;
  for (const auto& x : batch.labeled) labeled_z.push_back(forward_features(state.params, x));
  std::vector<Vector> weak_z;
  for (const auto& u : unlabeled_weak) weak_z.push_back(forward_features(state.params, u));

  // (3)-(4) class means and visual EMA
  BatchMeans means = batch_class_means(labeled_z, batch.labels, classes);
  update_visual(protos.visual, means, cfg_.paf.visual_momentum);

  // (5) DLF on the weak branch
  StepMetrics metrics;
  metrics.pseudo_label_histogram.assign(classes, 0);
  std::vector<LogitBundle> bundles;
  std::vector<Vector> fused_probs;
  std::size_t passed = 0;
  for (const auto& z : weak_z) {
    LogitBundle b = dual_logits(z, state.params, protos.text.rows, cfg_.fusion);
    batch.pseudo_labels.push_back(b.pseudo_label);
    batch.mask.push_back(b.mask_pass);
    if (b.mask_pass) {
      ++passed;
      ++metrics.pseudo_label_histogram[b.pseudo_label];
    }
    fused_probs.push_back(softmax(b.fused));
    bundles.push_back(std::move(b));
  }
  metrics.mask_pass_rate = unlabeled.empty() ? 0.0 : static_cast<double>(passed) / static_cast<double>(unlabeled.size());

  // (6) pseudo-label distribution, α, text prototypes
  Vector alpha;
  if (cfg_.paf.update_dist_before_alpha) {
    update_pseudo_distribution(protos.dist, fused_probs, cfg_.paf.dist_momentum);
    alpha = alpha_coefficients(protos.dist.probs, cfg_.paf.mu);
  } else {
    alpha = alpha_coefficients(protos.dist.probs, cfg_.paf.mu);
    update_pseudo_distribution(protos.dist, fused_probs, cfg_.paf.dist_momentum);
  }
  protos.degenerate_text_updates += paf_update_text(protos.text, protos.visual, alpha);

  // (7) loss and gradients
  const Gradients grads = backward(batch, state.params, objective_);
  metrics.loss = grads.loss;

  // (8) update
  sgd_step(state.params, grads.grad, state.optimizer, !cfg_.model.freeze_adapter);
  if (!state.params.all_finite()) throw NumericError("parameters became non-finite after SGD");
  ++state.iteration;
  state.loss_sum += metrics.loss;
  ++state.steps_since_eval;

  if (trace) {
    trace->labeled_z = std::move(labeled_z);
    trace->unlabeled_weak_z = std::move(weak_z);
    trace->means = std::move(means);
    trace->bundles = std::move(bundles);
    trace->alpha = std::move(alpha);
    trace->batch = std::move(batch);
    trace->loss = metrics.loss;
  }
  return metrics;
}

RunReport Trainer::evaluate(const TrainState& state) const {
  const std::size_t classes = data_.labeled.class_count();
  RunReport r;
  r.arm = cfg_.arm;
  r.seed = cfg_.seed;
  r.iteration = state.iteration;
  r.config = provenance_;
  r.loss = mean_of(state.loss_sum, state.steps_since_eval);

  const auto test = kernels::infer(data_.test, state.params, state.prototypes.text.rows, cfg_.fusion);
  const GroupAccuracy acc = group_accuracy(test.predictions, data_.test.labels(), labeled_counts_, cfg_.groups);
  r.overall_accuracy = acc.overall;
  r.head_accuracy = acc.head;
  r.medium_accuracy = acc.medium;
  r.tail_accuracy = acc.tail;
  r.stability = classification_stability(true_class_scores(test.logits, data_.test.labels(), cfg_.stability_mode));

  const auto unl = kernels::infer(data_.unlabeled, state.params, state.prototypes.text.rows, cfg_.fusion);
  std::vector<bool> mask(unl.predictions.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double gate = cfg_.fusion.mask_source == MaskSource::kFused ? unl.confidence[i] : unl.probe_confidence[i];
    mask[i] = gate > cfg_.fusion.mask_threshold;
  }
  if (data_.unlabeled.has_labels()) {
    const PseudoLabelStats stats =
        pseudo_label_stats(unl.predictions, unl.confidence, data_.unlabeled.labels(), mask, classes);
    r.pseudo_label_histogram = stats.histogram;
    r.masked_in = stats.masked_in;
    r.false_pseudo_labels = stats.false_count;
    r.mean_false_confidence = stats.mean_false_confidence;
  } else {
    r.pseudo_label_histogram.assign(classes, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) {
        ++r.masked_in;
        ++r.pseudo_label_histogram[unl.predictions[i]];
      }
    }
  }
  r.mask_pass_rate = static_cast<double>(r.masked_in) / static_cast<double>(data_.unlabeled.rows());
  return r;
}

RunResult Trainer::run(std::optional<TrainState> resume, const std::function<void(const RunReport&)>& on_report) const {
  RunResult result;
  TrainState state = resume ? std::move(*resume) : initial_state();
  auto record = [&] {
    RunReport r = evaluate(state);
    state.loss_sum = LossBreakdown{};
    state.loss_sum.orthogonal_weight = cfg_.paf.orthogonal_weight;
    state.steps_since_eval = 0;
    if (on_report) on_report(r);
    result.reports.push_back(std::move(r));
  };
  if (!resume) record();
  while (state.iteration < cfg_.iterations) {
    try {
      train_step(state);
    } catch (const NumericError& e) {
      throw TrainingAborted("iteration " + std::to_string(state.iteration) + ": " + e.what(), state);
    }
    if (state.iteration % cfg_.eval_every == 0 || state.iteration == cfg_.iterations) record();
  }
  result.final_state = std::move(state);
  return result;
}

namespace {

constexpr char kCheckpointMagic[] = "ULFC";
constexpr std::uint32_t kCheckpointVersion = 1;

void write_tensor(std::ostream& os, std::span<const double> t) {
  for (double v : t) binio::write_f64(os, v);
}

void read_tensor(binio::Reader& in, std::span<double> t) {
  for (double& v : t) v = in.read_f64();
}

void write_params(std::ostream& os, const ModelParams& p) {
  binio::write_f64(os, p.adapter_scale);
  for (auto t : p.tensors()) write_tensor(os, t);
}

void read_params(binio::Reader& in, ModelParams& p) {
  p.adapter_scale = in.read_f64();
  for (auto t : p.tensors()) read_tensor(in, t);
}

void write_loss(std::ostream& os, const LossBreakdown& l) {
  for (double v : {l.labeled, l.unlabeled, l.orthogonal, l.orthogonal_weight, l.total}) binio::write_f64(os, v);
}

LossBreakdown read_loss(binio::Reader& in) {
  LossBreakdown l;
  l.labeled = in.read_f64();
  l.unlabeled = in.read_f64();
  l.orthogonal = in.read_f64();
  l.orthogonal_weight = in.read_f64();
  l.total = in.read_f64();
  return l;
}

}  // namespace

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const auto& p = state.params;
  binio::write_magic(os, std::string_view(kCheckpointMagic, 4));
  binio::write_le<std::uint32_t>(os, kCheckpointVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.classes()));
  binio::write_le<std::uint64_t>(os, p.dim());
  binio::write_le<std::uint64_t>(os, p.rank());
  binio::write_le<std::uint64_t>(os, state.iteration);
  write_params(os, p);
  binio::write_f64(os, state.optimizer.learning_rate);
  binio::write_f64(os, state.optimizer.momentum);
  binio::write_f64(os, state.optimizer.weight_decay);
  write_params(os, state.optimizer.velocity);
  const auto& pr = state.prototypes;
  binio::write_le<std::uint8_t>(os, pr.text.source == PrototypeSource::kFile ? 1 : 0);
  write_tensor(os, pr.text.rows.data());
  write_tensor(os, pr.visual.rows.data());
  for (bool seen : pr.visual.seen) binio::write_le<std::uint8_t>(os, seen ? 1 : 0);
  write_tensor(os, pr.dist.probs);
  binio::write_le<std::uint64_t>(os, pr.degenerate_text_updates);
  write_loss(os, state.loss_sum);
  binio::write_le<std::uint64_t>(os, state.steps_since_eval);
  binio::write_string(os, state.rng.serialize());
  const auto cmap = config_map(cfg);
  binio::write_le<std::uint64_t>(os, cmap.size());
  for (const auto& [k, v] : cmap) {
    binio::write_string(os, k);
    binio::write_string(os, v);
  }
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  binio::Reader in(is, path.string());
  in.expect_magic(std::string_view(kCheckpointMagic, 4));
  const auto version = in.read_le<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError(path.string() + ": unsupported checkpoint version");
  const auto classes = in.read_le<std::uint32_t>();
  const auto dim = in.read_le<std::uint64_t>();
  const auto rank = in.read_le<std::uint64_t>();
  if (classes < 1 || dim < 2 || classes > (1u << 20) || dim > (1u << 24) || rank > dim) {
    throw DimensionError(path.string() + ": implausible checkpoint dimensions");
  }
  Checkpoint ck;
  auto& s = ck.state;
  s.iteration = in.read_le<std::uint64_t>();
  s.params = ModelParams::zeros(classes, dim, rank);
  read_params(in, s.params);
  s.optimizer.learning_rate = in.read_f64();
  s.optimizer.momentum = in.read_f64();
  s.optimizer.weight_decay = in.read_f64();
  s.optimizer.velocity = ModelParams::zeros(classes, dim, rank);
  read_params(in, s.optimizer.velocity);
  auto& pr = s.prototypes;
  pr.text.source = in.read_le<std::uint8_t>() ? PrototypeSource::kFile : PrototypeSource::kSynthetic;
  pr.text.rows = Matrix(classes, dim);
  read_tensor(in, pr.text.rows.data());
  pr.visual.rows = Matrix(classes, dim);
  read_tensor(in, pr.visual.rows.data());
  pr.visual.seen.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) pr.visual.seen[k] = in.read_le<std::uint8_t>() != 0;
  pr.dist.probs.resize(classes);
  read_tensor(in, pr.dist.probs);
  pr.degenerate_text_updates = in.read_le<std::uint64_t>();
  s.loss_sum = read_loss(in);
  s.steps_since_eval = in.read_le<std::uint64_t>();
  s.rng = Rng::deserialize(in.read_string());
  const auto n_keys = in.read_le<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_keys; ++i) {
    std::string k = in.read_string();
    ck.config[k] = in.read_string();
  }
  return ck;
}

TrainConfig arm_config(const TrainConfig& base, const std::string& arm) {
  TrainConfig cfg = base;
  cfg.arm = arm;
  if (arm == "lp" || arm == "lp_adapter") {
    cfg.model.freeze_adapter = arm == "lp";
    cfg.fusion.eta = 1.0;
    cfg.paf.mu = 0.0;
    cfg.paf.orthogonal_weight = 0.0;
    cfg.fusion.la_strength = 0.0;
  } else if (arm == "paf") {
    cfg.fusion.eta = 1.0;
  } else if (arm == "dlf") {
    cfg.paf.mu = 0.0;
    cfg.paf.orthogonal_weight = 0.0;
  } else if (arm != "full") {
    throw ConfigError("unknown ablation arm '" + arm + "' (expected lp|lp_adapter|paf|dlf|full)");
  }
  return cfg;
}

std::vector<ArmResult> ablation_matrix(const TrainConfig& base, const TrainData& data, std::span<const std::string> arms) {
  std::vector<ArmResult> out;
  for (const auto& arm : arms) {
    Trainer trainer(arm_config(base, arm), data);
    out.push_back(ArmResult{arm, trainer.run().reports});
  }
  return out;
}

std::string ablation_table(std::span<const ArmResult> results) {
  std::ostringstream os;
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) {
      s << std::fixed << std::setprecision(2) << 100.0 * *v;
    } else {
      s << "-";
    }
    return s.str();
  };
  os << std::left << std::setw(12) << "arm" << std::right << std::setw(9) << "overall" << std::setw(9) << "head"
     << std::setw(9) << "medium" << std::setw(9) << "tail" << std::setw(11) << "stability" << std::setw(9) << "falsePL"
     << std::setw(11) << "falseConf" << '\n';
  for (const auto& r : results) {
    const RunReport& last = r.reports.back();
    os << std::left << std::setw(12) << r.arm << std::right << std::setw(9) << opt(last.overall_accuracy)
       << std::setw(9) << opt(last.head_accuracy) << std::setw(9) << opt(last.medium_accuracy) << std::setw(9)
       << opt(last.tail_accuracy) << std::setw(11) << std::fixed << std::setprecision(4) << last.stability
       << std::setw(9) << last.false_pseudo_labels << std::setw(11) << std::setprecision(4)
       << last.mean_false_confidence << '\n';
  }
  return os.str();
}

}  // namespace ulfine
