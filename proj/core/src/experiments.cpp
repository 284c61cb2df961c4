// SPDX-License-Identifier: Apache-2.0
#include "coslearn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "coslearn/error.hpp"
#include "coslearn/io.hpp"
#include "coslearn/random.hpp"
#include "log.hpp"

namespace coslearn {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitTag = 0x696e6974;
constexpr std::uint64_t kHeadTag = 0x68656164;
constexpr std::uint64_t kEpochTag = 0x65706f6368;
constexpr std::uint64_t kSubsampleTag = 0x737562;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t argmax(std::span<const double> xs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) best = i;
  }
  return best;
}

}  // namespace

std::string_view to_string(Metric m) { return m == Metric::best ? "best" : "final"; }

std::vector<std::size_t> predict_labels(const Tensor& outputs, LossKind kind,
                                        const EmbeddingMatrix* embeddings) {
  if (outputs.rank() != 2) throw DimensionError("predict_labels expects a batch of outputs");
  std::vector<std::size_t> out(outputs.rows());
  if (kind == LossKind::cross_entropy) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(outputs.row(i));
    return out;
  }
  if (embeddings == nullptr) throw ValidationError("loss '" + std::string(to_string(kind)) + "' needs embeddings");
  if (embeddings->dim() != outputs.cols()) {
    throw DimensionError("outputs of width " + std::to_string(outputs.cols()) + " vs embeddings of dim " +
                         std::to_string(embeddings->dim()));
  }
  const Tensor scores = kernels::matmul_nt(outputs, embeddings->matrix());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(scores.row(i));
  return out;
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
  if (predicted.size() != labels.size()) {
    throw DimensionError(std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ValidationError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double accuracy(const ModelState& model, LossKind kind, const EmbeddingMatrix* embeddings,
                const Dataset& test) {
  return accuracy(predict_labels(predict(model, test.features), kind, embeddings), test.labels);
}

double head_accuracy(const ModelState& model, const AuxHead& head, const Dataset& test) {
  const Tensor f = kernels::l2_normalize(predict(model, test.features));
  Tensor logits = kernels::matmul(f, head.weight);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += head.bias[j];
  }
  return accuracy(predict_labels(logits, LossKind::cross_entropy, nullptr), test.labels);
}

RunRecord run_training(const Dataset& train, const Dataset& test, const LossConfig& loss,
                       const EmbeddingMatrix* embeddings, const TrainingConfig& cfg,
                       std::uint64_t seed, double lr_max, TrainedModel* trained) {
  const auto start = std::chrono::steady_clock::now();
  train.validate();
  test.validate();
  if (train.dim() != test.dim()) {
    throw DimensionError("train features have " + std::to_string(train.dim()) + " columns, test " +
                         std::to_string(test.dim()));
  }
  if (train.num_classes() != test.num_classes()) {
    throw DimensionError("train and test disagree on the number of classes");
  }
  const std::size_t n = train.num_classes();
  LossSpec spec = loss.spec;
  spec.num_classes = n;
  spec.validate();
  const bool needs_emb = uses_embeddings(spec.kind);
  if (needs_emb) {
    if (embeddings == nullptr) {
      throw ValidationError("loss '" + loss.name + "' needs class embeddings");
    }
    if (embeddings->num_classes() != n) {
      throw DimensionError("embeddings cover " + std::to_string(embeddings->num_classes()) +
                           " classes, dataset has " + std::to_string(n));
    }
  }
  SgdrSchedule sched = cfg.schedule;
  sched.lr_max = lr_max;
  sched.validate();
  if (cfg.batch_size == 0) throw ValidationError("batch_size must be at least 1");

  const std::size_t out_dim = needs_emb ? embeddings->dim() : n;
  ModelState model = init_model({train.dim(), cfg.hidden, out_dim, derive_seed(seed, {kInitTag})});
  std::optional<AuxHead> head;
  if (spec.kind == LossKind::cosine_plus_xent) {
    Rng hr(derive_seed(seed, {kHeadTag}));
    head = AuxHead::init(out_dim, n, hr);
  }
  std::vector<Tensor*> params = parameter_tensors(model);
  if (head) {
    params.push_back(&head->weight);
    params.push_back(&head->bias);
  }
  Sgd sgd(cfg.momentum);

  RunRecord rec;
  rec.loss = loss.name;
  rec.kind = spec.kind;
  rec.k = train.size() == train.source_size ? 0 : train.size() / std::max<std::size_t>(n, 1);
  rec.seed = seed;
  rec.lr_max = lr_max;
  double best = -1.0;
  std::optional<double> head_best;
  try {
    for (int epoch = 0; epoch < sched.total_epochs(); ++epoch) {
      const auto idx =
          batch_indices(train, cfg.batch_size, derive_seed(seed, {kEpochTag, static_cast<std::uint64_t>(epoch)}));
      EpochLog log;
      log.epoch = epoch;
      double loss_sum = 0.0;
      std::vector<Tensor> grads;
      for (std::size_t step = 0; step < idx.size(); ++step) {
        const double lr = lr_at(sched, epoch, step, idx.size());
        if (step == 0) log.lr = lr;
        Batch b = gather(train, idx[step]);
        Tape tape;
        BoundModel bm = bind_parameters(model, tape);
        Var hw, hb;
        if (head) {
          hw = tape.parameter(head->weight);
          hb = tape.parameter(head->bias);
        }
        Var out = forward(bm, tape.constant(std::move(b.features)));
        Var l = compute_loss(spec, out, b.labels, embeddings, head ? &hw : nullptr, head ? &hb : nullptr);
        const double lv = l.value().item();
        if (!std::isfinite(lv) || lv > cfg.divergence_threshold) {
          throw DivergenceError("loss " + format_double(lv) + " at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(step));
        }
        tape.backward(l);
        grads.clear();
        for (std::size_t i = 0; i < bm.weights.size(); ++i) {
          grads.push_back(bm.weights[i].grad());
          grads.push_back(bm.biases[i].grad());
        }
        if (head) {
          grads.push_back(hw.grad());
          grads.push_back(hb.grad());
        }
        clip_gradients(grads, cfg.clip);
        sgd.step(params, grads, lr);
        loss_sum += lv;
      }
      if (!model.all_finite()) {
        throw DivergenceError("non-finite parameters after epoch " + std::to_string(epoch));
      }
      log.train_loss = loss_sum / static_cast<double>(idx.size());
      log.test_accuracy = accuracy(model, spec.kind, embeddings, test);
      if (head) log.head_accuracy = head_accuracy(model, *head, test);
      if (log.test_accuracy > best) {
        best = log.test_accuracy;
        rec.best_epoch = epoch;
      }
      if (log.head_accuracy && (!head_best || *log.head_accuracy > *head_best)) head_best = log.head_accuracy;
      rec.epochs.push_back(log);
      rec.last_finite_epoch = epoch;
    }
  } catch (const NumericError& e) {
    rec.failed = true;
    rec.diagnostic = e.what();
    detail::log().info("run {} seed {} lr {} failed: {}", loss.name, seed, lr_max, e.what());
  }
  if (!rec.epochs.empty()) {
    rec.best_accuracy = best;
    rec.final_accuracy = rec.epochs.back().test_accuracy;
    rec.head_best_accuracy = head_best;
    rec.head_final_accuracy = rec.epochs.back().head_accuracy;
  }
  if (trained != nullptr) *trained = TrainedModel{std::move(model), std::move(head)};
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

// ---- configuration ----

void ExperimentConfig::validate() const {
  if (losses.empty()) throw ValidationError("config lists no losses");
  std::set<std::string> names;
  for (const auto& l : losses) {
    if (l.name.empty()) throw ValidationError("loss entry without a name");
    if (!names.insert(l.name).second) throw ValidationError("duplicate loss name '" + l.name + "'");
    if (l.lr_max && !(*l.lr_max > 0.0)) throw ValidationError("lr_max of '" + l.name + "' must be positive");
    if (!l.lr_max && lr_grid.empty()) {
      throw ValidationError("loss '" + l.name + "' has no lr_max and the lr grid is empty");
    }
    if (l.embedding == EmbeddingKind::semantic && dataset.branching.empty() &&
        dataset.hierarchy_file.empty()) {
      throw ValidationError("loss '" + l.name + "' uses semantic embeddings but the dataset has no hierarchy");
    }
  }
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) throw ValidationError("lr grid values must be positive");
  }
  if (samples_per_class.empty()) throw ValidationError("config lists no samples_per_class values");
  if (seeds.empty()) throw ValidationError("config lists no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ValidationError("duplicate seeds");
  }
  if (std::set<std::size_t>(samples_per_class.begin(), samples_per_class.end()).size() !=
      samples_per_class.size()) {
    throw ValidationError("duplicate samples_per_class values");
  }
  for (const auto& [a, b] : comparisons) {
    if (!names.contains(a) || !names.contains(b)) {
      throw ValidationError("comparison names unknown loss '" + (names.contains(a) ? b : a) + "'");
    }
  }
  if (training.batch_size == 0) throw ValidationError("batch_size must be at least 1");
  if (!(training.momentum >= 0.0 && training.momentum < 1.0)) {
    throw ValidationError("momentum must lie in [0, 1)");
  }
  if (!(training.clip.max_norm > 0.0)) throw ValidationError("clip norm must be positive");
  // The peak rate is per loss; check the rest of the schedule with a placeholder.
  SgdrSchedule s = training.schedule;
  s.lr_max = std::max(1.0, s.lr_min);
  s.validate();
}

namespace {

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ValidationError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

LossConfig parse_loss(const json& j) {
  check_keys(j, "loss entry", {"name", "loss", "embedding", "lr_max", "label_smoothing", "lambda"});
  LossConfig l;
  const std::string kind = j.at("loss").get<std::string>();
  l.spec.kind = parse_loss_kind(kind);
  l.name = get_or<std::string>(j, "name", kind);
  l.embedding = parse_embedding_kind(get_or<std::string>(j, "embedding", "onehot"));
  if (j.contains("lr_max")) l.lr_max = j.at("lr_max").get<double>();
  l.spec.label_smoothing = get_or<double>(j, "label_smoothing", 0.0);
  l.spec.lambda = get_or<double>(j, "lambda", 0.1);
  return l;
}

DatasetConfig parse_dataset(const json& j, const std::filesystem::path& base) {
  check_keys(j, "dataset", {"source", "num_classes", "dim", "samples_per_class", "spread", "seed",
                            "hierarchy", "train", "test", "classes", "standardize"});
  DatasetConfig d;
  const std::string source = get_or<std::string>(j, "source", "blobs");
  if (source == "blobs") {
    d.source = DatasetConfig::Source::blobs;
  } else if (source == "csv") {
    d.source = DatasetConfig::Source::csv;
  } else {
    throw ValidationError("unknown dataset source '" + source + "'");
  }
  d.standardize = get_or<bool>(j, "standardize", false);
  if (j.contains("classes")) d.class_list_file = resolve(base, j.at("classes").get<std::string>());
  if (j.contains("hierarchy")) {
    const json& h = j.at("hierarchy");
    check_keys(h, "dataset.hierarchy", {"branching", "file", "classes"});
    if (h.contains("branching") == h.contains("file")) {
      throw ValidationError("dataset.hierarchy needs exactly one of 'branching' or 'file'");
    }
    if (h.contains("branching")) d.branching = h.at("branching").get<std::vector<std::size_t>>();
    if (h.contains("file")) d.hierarchy_file = resolve(base, h.at("file").get<std::string>());
    if (h.contains("classes")) d.class_list_file = resolve(base, h.at("classes").get<std::string>());
  }
  if (d.source == DatasetConfig::Source::blobs) {
    if (j.contains("train") || j.contains("test")) {
      throw ValidationError("blob datasets take no 'train'/'test' files");
    }
    std::size_t implied = 0;
    if (!d.branching.empty()) {
      implied = 1;
      for (std::size_t b : d.branching) implied *= b;
    }
    d.blobs.num_classes = get_or<std::size_t>(j, "num_classes", implied != 0 ? implied : d.blobs.num_classes);
    if (implied != 0 && d.blobs.num_classes != implied) {
      throw ValidationError("num_classes " + std::to_string(d.blobs.num_classes) +
                            " disagrees with the branching product " + std::to_string(implied));
    }
    d.blobs.dim = get_or<std::size_t>(j, "dim", d.blobs.dim);
    d.blobs.samples_per_class = get_or<std::size_t>(j, "samples_per_class", d.blobs.samples_per_class);
    d.blobs.spread = get_or<double>(j, "spread", d.blobs.spread);
    d.blobs.seed = get_or<std::uint64_t>(j, "seed", d.blobs.seed);
  } else {
    for (const char* key : {"num_classes", "dim", "samples_per_class", "spread", "seed"}) {
      if (j.contains(key)) throw ValidationError(std::string("csv datasets take no '") + key + "'");
    }
    if (!d.branching.empty()) throw ValidationError("csv datasets need a hierarchy file, not branching");
    d.train_file = resolve(base, j.at("train").get<std::string>());
    d.test_file = resolve(base, j.at("test").get<std::string>());
  }
  return d;
}

TrainingConfig parse_training(const json& root) {
  TrainingConfig t;
  if (root.contains("schedule")) {
    const json& s = root.at("schedule");
    check_keys(s, "schedule", {"profile", "base_cycle_epochs", "num_cycles", "lr_min"});
    if (s.contains("profile")) t.schedule = SgdrSchedule::profile(s.at("profile").get<std::string>(), 0.1);
    t.schedule.base_cycle_epochs = get_or<int>(s, "base_cycle_epochs", t.schedule.base_cycle_epochs);
    t.schedule.num_cycles = get_or<int>(s, "num_cycles", t.schedule.num_cycles);
    t.schedule.lr_min = get_or<double>(s, "lr_min", t.schedule.lr_min);
  }
  if (root.contains("training")) {
    const json& tr = root.at("training");
    check_keys(tr, "training", {"hidden", "batch_size", "momentum", "clip_norm", "divergence_threshold"});
    t.hidden = get_or<std::vector<std::size_t>>(tr, "hidden", t.hidden);
    t.batch_size = get_or<std::size_t>(tr, "batch_size", t.batch_size);
    t.momentum = get_or<double>(tr, "momentum", t.momentum);
    t.clip.max_norm = get_or<double>(tr, "clip_norm", t.clip.max_norm);
    t.divergence_threshold = get_or<double>(tr, "divergence_threshold", t.divergence_threshold);
  }
  return t;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed experiment config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    check_keys(root, "experiment config",
               {"dataset", "losses", "samples_per_class", "seeds", "num_seeds", "lr_grid", "schedule",
                "training", "metric", "failed_as_zero", "comparisons"});
    cfg.dataset = parse_dataset(root.at("dataset"), base_dir);
    for (const json& l : root.at("losses")) cfg.losses.push_back(parse_loss(l));
    cfg.samples_per_class = root.at("samples_per_class").get<std::vector<std::size_t>>();
    if (root.contains("seeds") == root.contains("num_seeds")) {
      throw ValidationError("config needs exactly one of 'seeds' or 'num_seeds'");
    }
    if (root.contains("seeds")) {
      cfg.seeds = root.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      const auto n = root.at("num_seeds").get<std::uint64_t>();
      for (std::uint64_t s = 0; s < n; ++s) cfg.seeds.push_back(s);
    }
    if (root.contains("lr_grid")) cfg.lr_grid = root.at("lr_grid").get<std::vector<double>>();
    cfg.training = parse_training(root);
    const std::string metric = get_or<std::string>(root, "metric", "best");
    if (metric == "best") {
      cfg.metric = Metric::best;
    } else if (metric == "final") {
      cfg.metric = Metric::final;
    } else {
      throw ValidationError("metric must be 'best' or 'final', got '" + metric + "'");
    }
    cfg.failed_as_zero = get_or<bool>(root, "failed_as_zero", false);
    if (root.contains("comparisons")) {
      for (const json& p : root.at("comparisons")) {
        const auto pair = p.get<std::vector<std::string>>();
        if (pair.size() != 2) throw ValidationError("each comparison names exactly two losses");
        cfg.comparisons.emplace_back(pair[0], pair[1]);
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_text_file(path), path.parent_path());
}

PreparedData prepare_data(const DatasetConfig& cfg) {
  PreparedData p;
  if (!cfg.branching.empty()) {
    p.hierarchy = make_balanced_hierarchy(cfg.branching);
  } else if (!cfg.hierarchy_file.empty()) {
    p.hierarchy = load_hierarchy(cfg.hierarchy_file, cfg.class_list_file.empty()
                                                         ? std::nullopt
                                                         : std::optional(cfg.class_list_file));
  }
  const ClassHierarchy* h = p.hierarchy ? &*p.hierarchy : nullptr;
  if (cfg.source == DatasetConfig::Source::blobs) {
    auto [train, test] = make_blobs(cfg.blobs, h);
    p.train = std::move(train);
    p.test = std::move(test);
  } else {
    std::optional<std::vector<std::string>> classes;
    if (h != nullptr) {
      classes = h->class_names();
    } else if (!cfg.class_list_file.empty()) {
      classes = load_class_list(cfg.class_list_file);
    }
    p.train = load_csv(cfg.train_file, classes, Split::train);
    p.test = load_csv(cfg.test_file, p.train.class_names, Split::test);
  }
  p.train.validate();
  p.test.validate();
  if (cfg.standardize) {
    const Standardizer s = Standardizer::fit(p.train);
    p.train = s.apply(std::move(p.train));
    p.test = s.apply(std::move(p.test));
  }
  return p;
}

// ---- aggregation ----

double metric_of(const RunRecord& r, Metric m) {
  return m == Metric::best ? r.best_accuracy : r.final_accuracy;
}

namespace {

std::vector<double> metric_values(std::span<const RunRecord> runs, const std::string& loss, std::size_t k,
                                  Metric metric, bool failed_as_zero, std::size_t* n_failed = nullptr) {
  std::vector<double> out;
  std::size_t failed = 0;
  for (const auto& r : runs) {
    if (r.loss != loss || r.k != k) continue;
    if (r.failed) {
      ++failed;
      if (failed_as_zero) out.push_back(0.0);
      continue;
    }
    out.push_back(metric_of(r, metric));
  }
  if (n_failed != nullptr) *n_failed = failed;
  return out;
}

}  // namespace

std::vector<Aggregate> aggregate_runs(std::span<const RunRecord> runs, std::span<const std::string> loss_names,
                                      std::span<const std::size_t> ks, Metric metric, bool failed_as_zero) {
  std::vector<Aggregate> out;
  for (const auto& loss : loss_names) {
    for (std::size_t k : ks) {
      Aggregate a;
      a.loss = loss;
      a.k = k;
      const auto values = metric_values(runs, loss, k, metric, failed_as_zero, &a.n_failed);
      a.n_runs = values.size();
      a.mean = values.empty() ? kNaN : mean(values);
      a.std = values.size() < 2 ? (values.empty() ? kNaN : 0.0) : sample_std(values);
      out.push_back(a);
    }
  }
  return out;
}

std::vector<Comparison> compare_runs(std::span<const RunRecord> runs,
                                     std::span<const std::pair<std::string, std::string>> pairs,
                                     std::span<const std::size_t> ks, Metric metric, bool failed_as_zero) {
  std::vector<Comparison> out;
  for (const auto& [a, b] : pairs) {
    for (std::size_t k : ks) {
      Comparison c;
      c.a = a;
      c.b = b;
      c.k = k;
      const auto va = metric_values(runs, a, k, metric, failed_as_zero);
      const auto vb = metric_values(runs, b, k, metric, failed_as_zero);
      c.mean_a = va.empty() ? kNaN : mean(va);
      c.mean_b = vb.empty() ? kNaN : mean(vb);
      if (va.size() >= 2 && vb.size() >= 2) {
        c.two_sided = welch_t_test(va, vb, Tail::two_sided);
        c.p_greater = welch_t_test(va, vb, Tail::greater).p;
        c.p_less = welch_t_test(va, vb, Tail::less).p;
      }
      out.push_back(c);
    }
  }
  return out;
}

// ---- sweep ----

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the
// exception of the lowest failing index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Job {
  std::size_t loss;
  std::size_t k;
  std::uint64_t seed;
  double lr;
};

}  // namespace

ExperimentResult size_sweep(const ExperimentConfig& cfg, std::size_t workers) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg.dataset);
  const std::size_t n = data.train.num_classes();

  std::vector<std::optional<EmbeddingMatrix>> embeddings(cfg.losses.size());
  for (std::size_t i = 0; i < cfg.losses.size(); ++i) {
    const auto& l = cfg.losses[i];
    if (!uses_embeddings(l.spec.kind)) continue;
    if (l.embedding == EmbeddingKind::semantic) {
      if (!data.hierarchy) throw ValidationError("loss '" + l.name + "' needs a hierarchy");
      embeddings[i] = semantic_embeddings(semantic_similarity(*data.hierarchy));
    } else {
      embeddings[i] = onehot_embeddings(n, data.train.class_names);
    }
  }

  // k = 0 stands for the full training set.
  auto train_for = [&](std::size_t k, std::uint64_t seed) {
    if (k == 0) return data.train;
    return subsample(data.train, {k, derive_seed(seed, {kSubsampleTag, k})});
  };
  auto run_job = [&](const Job& j) {
    const Dataset train = train_for(j.k, j.seed);
    const auto& l = cfg.losses[j.loss];
    RunRecord r = run_training(train, data.test, l, embeddings[j.loss] ? &*embeddings[j.loss] : nullptr,
                               cfg.training, j.seed, j.lr);
    r.k = j.k;
    detail::log().info("{} k={} seed={} lr={} best={}", l.name, j.k, j.seed, j.lr, r.best_accuracy);
    return r;
  };

  ExperimentResult res;
  res.metric = cfg.metric;
  res.failed_as_zero = cfg.failed_as_zero;
  for (const auto& l : cfg.losses) res.loss_names.push_back(l.name);
  res.ks = cfg.samples_per_class;

  // Learning-rate grid, evaluated at the largest k (0 = full set counts as largest).
  const std::size_t k_grid = std::ranges::find(res.ks, std::size_t{0}) != res.ks.end()
                                 ? 0
                                 : *std::ranges::max_element(res.ks);
  std::vector<Job> grid_jobs;
  for (std::size_t li = 0; li < cfg.losses.size(); ++li) {
    if (cfg.losses[li].lr_max) continue;
    for (double lr : cfg.lr_grid) {
      for (std::uint64_t seed : cfg.seeds) grid_jobs.push_back({li, k_grid, seed, lr});
    }
  }
  res.grid_runs.resize(grid_jobs.size());
  parallel_for(grid_jobs.size(), workers, [&](std::size_t i) { res.grid_runs[i] = run_job(grid_jobs[i]); });

  std::vector<double> chosen(cfg.losses.size());
  for (std::size_t li = 0; li < cfg.losses.size(); ++li) {
    const auto& l = cfg.losses[li];
    LrChoice choice{l.name, 0.0, {}};
    if (l.lr_max) {
      choice.lr = *l.lr_max;
    } else {
      // Diverged grid runs count as zero so that unstable rates lose.
      double best = -1.0;
      for (double lr : cfg.lr_grid) {
        std::vector<double> vals;
        for (const auto& r : res.grid_runs) {
          if (r.loss == l.name && r.lr_max == lr) vals.push_back(r.failed ? 0.0 : metric_of(r, cfg.metric));
        }
        const double m = mean(vals);
        choice.grid_means.emplace_back(lr, m);
        if (m > best) {
          best = m;
          choice.lr = lr;
        }
      }
    }
    chosen[li] = choice.lr;
    res.lr_choices.push_back(std::move(choice));
  }

  std::vector<Job> jobs;
  for (std::size_t li = 0; li < cfg.losses.size(); ++li) {
    for (std::size_t k : res.ks) {
      for (std::uint64_t seed : cfg.seeds) jobs.push_back({li, k, seed, chosen[li]});
    }
  }
  res.runs.resize(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) { res.runs[i] = run_job(jobs[i]); });

  res.aggregates = aggregate_runs(res.runs, res.loss_names, res.ks, cfg.metric, cfg.failed_as_zero);
  for (const auto& a : res.aggregates) {
    if (a.n_failed > 0 && !cfg.failed_as_zero) {
      detail::log().warn("{} k={}: {} failed run(s) excluded from the mean", a.loss, a.k, a.n_failed);
    }
  }
  std::vector<std::pair<std::string, std::string>> pairs = cfg.comparisons;
  if (pairs.empty()) {
    for (std::size_t i = 1; i < res.loss_names.size(); ++i) pairs.emplace_back(res.loss_names[0], res.loss_names[i]);
  }
  res.comparisons = compare_runs(res.runs, pairs, res.ks, cfg.metric, cfg.failed_as_zero);
  return res;
}

// ---- serialization ----

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }
double to_num(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }
std::optional<double> to_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json run_to_json(const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json je{{"epoch", e.epoch}, {"lr", num(e.lr)}, {"train_loss", num(e.train_loss)},
            {"test_accuracy", num(e.test_accuracy)}};
    if (e.head_accuracy) je["head_accuracy"] = num(*e.head_accuracy);
    epochs.push_back(std::move(je));
  }
  json j{{"loss", r.loss},
         {"kind", std::string(to_string(r.kind))},
         {"k", r.k},
         {"seed", r.seed},
         {"lr_max", num(r.lr_max)},
         {"failed", r.failed},
         {"diagnostic", r.diagnostic},
         {"last_finite_epoch", r.last_finite_epoch},
         {"best_accuracy", num(r.best_accuracy)},
         {"best_epoch", r.best_epoch},
         {"final_accuracy", num(r.final_accuracy)},
         {"epochs", std::move(epochs)}};
  if (r.head_best_accuracy) j["head_best_accuracy"] = opt_num(r.head_best_accuracy);
  if (r.head_final_accuracy) j["head_final_accuracy"] = opt_num(r.head_final_accuracy);
  return j;
}

RunRecord run_from_json(const json& j) {
  RunRecord r;
  r.loss = j.at("loss").get<std::string>();
  r.kind = parse_loss_kind(j.at("kind").get<std::string>());
  r.k = j.at("k").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.lr_max = to_num(j.at("lr_max"));
  r.failed = j.at("failed").get<bool>();
  r.diagnostic = j.at("diagnostic").get<std::string>();
  r.last_finite_epoch = j.at("last_finite_epoch").get<int>();
  r.best_accuracy = to_num(j.at("best_accuracy"));
  r.best_epoch = j.at("best_epoch").get<int>();
  r.final_accuracy = to_num(j.at("final_accuracy"));
  r.head_best_accuracy = to_opt(j, "head_best_accuracy");
  r.head_final_accuracy = to_opt(j, "head_final_accuracy");
  for (const json& je : j.at("epochs")) {
    EpochLog e;
    e.epoch = je.at("epoch").get<int>();
    e.lr = to_num(je.at("lr"));
    e.train_loss = to_num(je.at("train_loss"));
    e.test_accuracy = to_num(je.at("test_accuracy"));
    e.head_accuracy = to_opt(je, "head_accuracy");
    r.epochs.push_back(e);
  }
  return r;
}

}  // namespace

std::string results_to_json(const ExperimentResult& r) {
  json root;
  root["metric"] = std::string(to_string(r.metric));
  root["failed_as_zero"] = r.failed_as_zero;
  root["losses"] = r.loss_names;
  root["ks"] = r.ks;
  json lr = json::array();
  for (const auto& c : r.lr_choices) {
    json grid = json::array();
    for (const auto& [v, m] : c.grid_means) grid.push_back({{"lr", num(v)}, {"mean", num(m)}});
    lr.push_back({{"loss", c.loss}, {"lr", num(c.lr)}, {"grid", std::move(grid)}});
  }
  root["lr_selection"] = std::move(lr);
  root["grid_runs"] = json::array();
  for (const auto& run : r.grid_runs) root["grid_runs"].push_back(run_to_json(run));
  root["runs"] = json::array();
  for (const auto& run : r.runs) root["runs"].push_back(run_to_json(run));
  root["aggregates"] = json::array();
  for (const auto& a : r.aggregates) {
    root["aggregates"].push_back({{"loss", a.loss},
                                  {"k", a.k},
                                  {"mean", num(a.mean)},
                                  {"std", num(a.std)},
                                  {"n_runs", a.n_runs},
                                  {"n_failed", a.n_failed}});
  }
  root["comparisons"] = json::array();
  for (const auto& c : r.comparisons) {
    json jc{{"a", c.a}, {"b", c.b}, {"k", c.k}, {"mean_a", num(c.mean_a)}, {"mean_b", num(c.mean_b)}};
    jc["t"] = c.two_sided ? num(c.two_sided->t) : json(nullptr);
    jc["df"] = c.two_sided ? num(c.two_sided->df) : json(nullptr);
    jc["p_two_sided"] = c.two_sided ? num(c.two_sided->p) : json(nullptr);
    jc["p_greater"] = opt_num(c.p_greater);
    jc["p_less"] = opt_num(c.p_less);
    root["comparisons"].push_back(std::move(jc));
  }
  return root.dump(2) + "\n";
}

ExperimentResult results_from_json(std::string_view text) {
  ExperimentResult r;
  try {
    const json root = json::parse(text);
    const std::string metric = root.at("metric").get<std::string>();
    if (metric != "best" && metric != "final") throw ValidationError("unknown metric '" + metric + "'");
    r.metric = metric == "best" ? Metric::best : Metric::final;
    r.failed_as_zero = root.at("failed_as_zero").get<bool>();
    r.loss_names = root.at("losses").get<std::vector<std::string>>();
    r.ks = root.at("ks").get<std::vector<std::size_t>>();
    for (const json& c : root.at("lr_selection")) {
      LrChoice choice{c.at("loss").get<std::string>(), to_num(c.at("lr")), {}};
      for (const json& g : c.at("grid")) choice.grid_means.emplace_back(to_num(g.at("lr")), to_num(g.at("mean")));
      r.lr_choices.push_back(std::move(choice));
    }
    for (const json& j : root.at("grid_runs")) r.grid_runs.push_back(run_from_json(j));
    for (const json& j : root.at("runs")) r.runs.push_back(run_from_json(j));
    for (const json& j : root.at("aggregates")) {
      r.aggregates.push_back({j.at("loss").get<std::string>(), j.at("k").get<std::size_t>(), to_num(j.at("mean")),
                              to_num(j.at("std")), j.at("n_runs").get<std::size_t>(),
                              j.at("n_failed").get<std::size_t>()});
    }
    for (const json& j : root.at("comparisons")) {
      Comparison c;
      c.a = j.at("a").get<std::string>();
      c.b = j.at("b").get<std::string>();
      c.k = j.at("k").get<std::size_t>();
      c.mean_a = to_num(j.at("mean_a"));
      c.mean_b = to_num(j.at("mean_b"));
      if (!j.at("p_two_sided").is_null()) {
        c.two_sided = WelchResult{to_num(j.at("t")), to_num(j.at("df")), to_num(j.at("p_two_sided"))};
      }
      c.p_greater = to_opt(j, "p_greater");
      c.p_less = to_opt(j, "p_less");
      r.comparisons.push_back(c);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed results file: ") + e.what());
  }
  return r;
}

ExperimentResult load_results(const std::filesystem::path& path) {
  try {
    return results_from_json(read_text_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string summary_csv(const ExperimentResult& r) {
  std::ostringstream out;
  out << "loss,k,mean_acc,std_acc,n_runs\n";
  for (const auto& a : r.aggregates) {
    out << a.loss << ',' << a.k << ',' << format_double(a.mean) << ',' << format_double(a.std) << ','
        << a.n_runs << '\n';
  }
  return out.str();
}

std::string curve_csv(const ExperimentResult& r) {
  std::map<std::pair<std::string, std::size_t>, const Aggregate*> by_key;
  for (const auto& a : r.aggregates) by_key[{a.loss, a.k}] = &a;
  std::ostringstream out;
  out << 'k';
  for (const auto& l : r.loss_names) out << ',' << l << "_mean," << l << "_std";
  out << '\n';
  std::vector<std::size_t> ks = r.ks;
  std::sort(ks.begin(), ks.end());
  for (std::size_t k : ks) {
    out << k;
    for (const auto& l : r.loss_names) {
      const auto it = by_key.find({l, k});
      if (it == by_key.end()) {
        out << ",nan,nan";
      } else {
        out << ',' << format_double(it->second->mean) << ',' << format_double(it->second->std);
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string run_log_csv(const RunRecord& r) {
  std::ostringstream out;
  const bool head = r.head_best_accuracy.has_value();
  out << "epoch,lr,train_loss,test_accuracy" << (head ? ",head_accuracy" : "") << '\n';
  for (const auto& e : r.epochs) {
    out << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.train_loss) << ','
        << format_double(e.test_accuracy);
    if (head) out << ',' << format_double(e.head_accuracy.value_or(kNaN));
    out << '\n';
  }
  return out.str();
}

std::string run_key(const RunRecord& r) {
  std::string name;
  for (char c : r.loss) name += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return name + "_k" + std::to_string(r.k) + "_s" + std::to_string(r.seed);
}

void write_report(const ExperimentResult& r, const std::filesystem::path& out_dir) {
  if (r.runs.empty()) throw ValidationError("refusing to write a report without run records");
  write_text_file(out_dir / "results.json", results_to_json(r));
  write_text_file(out_dir / "summary.csv", summary_csv(r));
  write_text_file(out_dir / "curve.csv", curve_csv(r));
  std::ostringstream timings;
  timings << "phase,loss,k,seed,lr_max,wall_seconds\n";
  for (const auto& run : r.grid_runs) {
    timings << "grid," << run.loss << ',' << run.k << ',' << run.seed << ',' << format_double(run.lr_max) << ','
            << format_double(run.wall_seconds) << '\n';
    write_text_file(out_dir / "runs" / "grid" / (run_key(run) + "_lr" + format_double(run.lr_max) + ".csv"),
                    run_log_csv(run));
  }
  for (const auto& run : r.runs) {
    timings << "sweep," << run.loss << ',' << run.k << ',' << run.seed << ',' << format_double(run.lr_max) << ','
            << format_double(run.wall_seconds) << '\n';
    write_text_file(out_dir / "runs" / (run_key(run) + ".csv"), run_log_csv(run));
  }
  write_text_file(out_dir / "timings.csv", timings.str());
}

}  // namespace coslearn
