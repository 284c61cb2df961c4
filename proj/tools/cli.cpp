// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "coslearn/data.hpp"
#include "coslearn/embeddings.hpp"
#include "coslearn/error.hpp"
#include "coslearn/experiments.hpp"
#include "coslearn/gradcheck.hpp"
#include "coslearn/hierarchy.hpp"
#include "coslearn/io.hpp"
#include "coslearn/losses.hpp"
#include "coslearn/model.hpp"
#include "coslearn/optim.hpp"

namespace coslearn::cli {

namespace {

std::vector<std::size_t> parse_size_list(const std::string& text, std::string_view what) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  for (auto field : split(text, ',')) {
    const double v = parse_double(trim(field), what);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ValidationError(std::string(what) + " must be a list of non-negative integers");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text, std::string_view what) {
  std::vector<double> out;
  for (auto field : split(text, ',')) out.push_back(parse_double(trim(field), what));
  return out;
}

// ---- embed ----

struct EmbedArgs {
  std::string hierarchy;
  std::string classes;
  std::string out;
  std::string kind = "semantic";
  std::string similarity_out;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  const ClassHierarchy h =
      load_hierarchy(a.hierarchy, a.classes.empty() ? std::nullopt : std::optional<std::filesystem::path>(a.classes));
  const EmbeddingKind kind = parse_embedding_kind(a.kind);
  const SimilarityMatrix s = kind == EmbeddingKind::semantic
                                 ? semantic_similarity(h)
                                 : SimilarityMatrix(Tensor::identity(h.num_classes()), h.class_names());
  const EmbeddingMatrix e =
      kind == EmbeddingKind::semantic ? semantic_embeddings(s) : onehot_embeddings(h.num_classes(), h.class_names());
  const EmbeddingDeviation dev = verify_embeddings(e, s);
  save_embeddings_csv(a.out, e);
  if (!a.similarity_out.empty()) {
    std::ostringstream csv;
    write_similarity_csv(csv, s);
    write_text_file(a.similarity_out, csv.str());
  }
  out << "classes: " << e.num_classes() << "\n"
      << "dim: " << e.dim() << "\n"
      << "kind: " << to_string(kind) << "\n"
      << "max_gram_deviation: " << format_double(dev.max_gram_deviation) << "\n"
      << "max_norm_deviation: " << format_double(dev.max_norm_deviation) << "\n";
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string test;
  std::string classes;
  bool blobs = false;
  std::size_t num_classes = 4;
  std::size_t dim = 8;
  std::size_t samples_per_class = 100;
  double spread = 0.1;
  std::uint64_t data_seed = 0;
  std::string branching;
  std::string hierarchy;
  std::size_t k = 0;
  bool standardize = false;

  std::string loss = "cosine";
  std::string embeddings;
  bool onehot = false;
  bool semantic = false;
  std::optional<double> lambda;
  double label_smoothing = 0.0;

  double lr_max = 0.1;
  std::string profile = "quick";
  std::uint64_t seed = 0;
  std::string hidden = "64";
  std::size_t batch_size = 32;
  double momentum = 0.0;
  double clip_norm = 10.0;
  std::string checkpoint_out;
  std::string log;
};

// Reorders loaded embedding rows to the dataset's class order.
EmbeddingMatrix align_embeddings(const EmbeddingMatrix& e, const std::vector<std::string>& names) {
  if (e.class_names() == names) return e;
  if (e.num_classes() != names.size()) {
    throw DimensionError("embeddings cover " + std::to_string(e.num_classes()) + " classes, dataset has " +
                         std::to_string(names.size()));
  }
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t i = 0; i < e.num_classes(); ++i) index.emplace(e.class_names()[i], i);
  Tensor m(Shape{names.size(), e.dim()});
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto it = index.find(names[c]);
    if (it == index.end()) throw LookupError("class '" + names[c] + "' missing from the embeddings file");
    const auto src = e.row(it->second);
    std::copy(src.begin(), src.end(), m.row(c).begin());
  }
  return EmbeddingMatrix(std::move(m), names, e.kind());
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  LossConfig loss;
  loss.spec.kind = parse_loss_kind(a.loss);
  loss.name = std::string(to_string(loss.spec.kind));
  loss.spec.label_smoothing = a.label_smoothing;
  if (loss.spec.kind == LossKind::cosine_plus_xent) {
    if (!a.lambda) throw ValidationError("--loss cosine_xent requires --lambda");
    if (a.embeddings.empty() && !a.onehot && !a.semantic) {
      throw ValidationError("--loss cosine_xent requires --embeddings, --onehot or --semantic");
    }
  }
  if (a.lambda) loss.spec.lambda = *a.lambda;
  if (static_cast<int>(!a.embeddings.empty()) + static_cast<int>(a.onehot) + static_cast<int>(a.semantic) > 1) {
    throw ValidationError("--embeddings, --onehot and --semantic are mutually exclusive");
  }

  DatasetConfig dc;
  dc.standardize = a.standardize;
  if (!a.branching.empty()) dc.branching = parse_size_list(a.branching, "--branching");
  dc.hierarchy_file = a.hierarchy;
  dc.class_list_file = a.classes;
  if (!dc.branching.empty() && !dc.hierarchy_file.empty()) {
    throw ValidationError("--branching and --hierarchy are mutually exclusive");
  }
  if (a.blobs) {
    if (!a.data.empty() || !a.test.empty()) throw ValidationError("--blobs excludes --data/--test");
    dc.source = DatasetConfig::Source::blobs;
    dc.blobs = {a.num_classes, a.dim, a.samples_per_class, a.spread, a.data_seed};
    if (!dc.branching.empty()) {
      dc.blobs.num_classes = 1;
      for (std::size_t b : dc.branching) dc.blobs.num_classes *= b;
    }
  } else {
    if (a.data.empty() || a.test.empty()) throw ValidationError("train needs --data and --test, or --blobs");
    dc.source = DatasetConfig::Source::csv;
    dc.train_file = a.data;
    dc.test_file = a.test;
  }
  PreparedData data = prepare_data(dc);
  if (a.k > 0) data.train = subsample(data.train, {a.k, derive_seed(a.seed, {0x737562, a.k})});

  std::optional<EmbeddingMatrix> emb;
  if (uses_embeddings(loss.spec.kind)) {
    if (!a.embeddings.empty()) {
      emb = align_embeddings(load_embeddings_csv(a.embeddings), data.train.class_names);
      loss.embedding = emb->kind();
    } else if (a.semantic) {
      if (!data.hierarchy) throw ValidationError("--semantic needs --hierarchy or --branching");
      emb = semantic_embeddings(semantic_similarity(*data.hierarchy));
      loss.embedding = EmbeddingKind::semantic;
    } else {
      emb = onehot_embeddings(data.train.num_classes(), data.train.class_names);
    }
  }

  TrainingConfig tc;
  tc.hidden = parse_size_list(a.hidden, "--hidden");
  tc.schedule = SgdrSchedule::profile(a.profile, a.lr_max);
  tc.batch_size = a.batch_size;
  tc.momentum = a.momentum;
  tc.clip.max_norm = a.clip_norm;

  TrainedModel trained;
  RunRecord r = run_training(data.train, data.test, loss, emb ? &*emb : nullptr, tc, a.seed, a.lr_max, &trained);
  r.k = a.k;
  const std::string log = run_log_csv(r);
  if (a.log.empty()) {
    out << log;
  } else {
    write_text_file(a.log, log);
  }
  if (r.failed) {
    err << "error: training diverged: " << r.diagnostic << "; last finite epoch "
        << r.last_finite_epoch << "\n";
    return kExitNumeric;
  }
  if (!a.checkpoint_out.empty()) {
    save_checkpoint(a.checkpoint_out, trained.model, trained.head ? &*trained.head : nullptr);
  }
  if (!a.log.empty()) {
    out << "best_accuracy: " << format_double(r.best_accuracy) << "\n"
        << "best_epoch: " << r.best_epoch << "\n"
        << "final_accuracy: " << format_double(r.final_accuracy) << "\n";
  }
  return kExitOk;
}

// ---- experiment ----

int cmd_experiment(const std::string& config, const std::string& out_dir, std::size_t workers, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment_config(config);
  const ExperimentResult res = size_sweep(cfg, workers);
  write_report(res, out_dir);
  out << summary_csv(res);
  for (const auto& c : res.comparisons) {
    out << c.a << " vs " << c.b << " k=" << c.k << ": mean " << format_double(c.mean_a) << " vs "
        << format_double(c.mean_b);
    if (c.two_sided) {
      out << ", t=" << format_double(c.two_sided->t) << ", df=" << format_double(c.two_sided->df)
          << ", p=" << format_double(c.two_sided->p) << ", p(greater)=" << format_double(*c.p_greater);
    }
    out << "\n";
  }
  return kExitOk;
}

// ---- gradcheck ----

int cmd_gradcheck(const std::string& ops, std::size_t trials, std::uint64_t seed, std::ostream& out) {
  auto cases = standard_gradcheck_cases();
  if (ops != "all") {
    std::vector<GradCheckCase> picked;
    for (auto name : split(ops, ',')) {
      const auto it = std::find_if(cases.begin(), cases.end(), [&](const auto& c) { return c.name == trim(name); });
      if (it == cases.end()) throw LookupError("unknown gradcheck case '" + std::string(trim(name)) + "'");
      picked.push_back(*it);
    }
    cases = std::move(picked);
  }
  GradCheckOptions opt;
  opt.trials = trials;
  opt.seed = seed;
  bool all_passed = true;
  out << "op,trials,max_rel_error,status\n";
  for (const auto& c : cases) {
    const GradCheckResult r = gradcheck_case(c, opt);
    all_passed = all_passed && r.passed;
    out << r.name << ',' << r.trials << ',' << format_double(r.max_rel_error) << ','
        << (r.passed ? "pass" : "FAIL") << "\n";
  }
  return all_passed ? kExitOk : kExitNumeric;
}

// ---- surface ----

int cmd_surface(const std::string& loss_name, std::size_t resolution, const std::string& target,
                const std::string& out_path, double label_smoothing, std::ostream& out) {
  LossSpec spec;
  spec.kind = parse_loss_kind(loss_name);
  spec.num_classes = 2;
  spec.label_smoothing = label_smoothing;
  const auto t = parse_double_list(target, "--target");
  const auto cells = loss_surface_grid(spec, t, GridBounds{}, resolution);
  std::ostringstream csv;
  write_surface_csv(csv, cells);
  if (out_path.empty()) {
    out << csv.str();
  } else {
    write_text_file(out_path, csv.str());
  }
  return kExitOk;
}

// ---- report ----

int cmd_report(const std::string& results, const std::string& out_dir, const std::string& schedule,
               double lr_max, std::size_t steps_per_epoch, std::ostream& out) {
  if (results.empty() == schedule.empty()) {
    throw ValidationError("report needs exactly one of --results or --schedule");
  }
  if (!results.empty()) {
    ExperimentResult r = load_results(results);
    // Aggregates are recomputed from the records, never trusted from the file.
    r.aggregates = aggregate_runs(r.runs, r.loss_names, r.ks, r.metric, r.failed_as_zero);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& c : r.comparisons) {
      if (std::find(pairs.begin(), pairs.end(), std::pair(c.a, c.b)) == pairs.end()) pairs.emplace_back(c.a, c.b);
    }
    r.comparisons = compare_runs(r.runs, pairs, r.ks, r.metric, r.failed_as_zero);
    if (r.runs.empty()) throw ValidationError("results file has no run records");
    if (out_dir.empty()) {
      out << summary_csv(r);
    } else {
      write_text_file(std::filesystem::path(out_dir) / "summary.csv", summary_csv(r));
      write_text_file(std::filesystem::path(out_dir) / "curve.csv", curve_csv(r));
    }
    return kExitOk;
  }
  const SgdrSchedule s = SgdrSchedule::profile(schedule, lr_max);
  if (steps_per_epoch == 0) throw ValidationError("--steps-per-epoch must be positive");
  std::ostringstream csv;
  csv << "step,lr\n";
  std::size_t step = 0;
  for (int e = 0; e < s.total_epochs(); ++e) {
    for (std::size_t i = 0; i < steps_per_epoch; ++i) {
      csv << step++ << ',' << format_double(lr_at(s, e, i, steps_per_epoch)) << '\n';
    }
  }
  if (out_dir.empty()) {
    out << csv.str();
  } else {
    write_text_file(std::filesystem::path(out_dir) / "lr_schedule.csv", csv.str());
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"coslearn: cosine-loss training toolkit", "coslearn"};
  app.require_subcommand(1);

  EmbedArgs ea;
  auto* embed = app.add_subcommand("embed", "Build class embeddings from a hierarchy");
  embed->add_option("--hierarchy", ea.hierarchy, "Edge-list file (parent<TAB>child)")->required();
  embed->add_option("--classes", ea.classes, "Class list, one name per line");
  embed->add_option("--out", ea.out, "Output embedding CSV")->required();
  embed->add_option("--kind", ea.kind, "onehot or semantic")->capture_default_str();
  embed->add_option("--similarity-out", ea.similarity_out, "Also write the similarity matrix CSV");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one model and log per-epoch metrics");
  train->add_option("--data", ta.data, "Training CSV");
  train->add_option("--test", ta.test, "Test CSV");
  train->add_option("--classes", ta.classes, "Class list for CSV label order");
  train->add_flag("--blobs", ta.blobs, "Use synthetic Gaussian blobs");
  train->add_option("--num-classes", ta.num_classes, "Blob classes")->capture_default_str();
  train->add_option("--dim", ta.dim, "Blob feature dimension")->capture_default_str();
  train->add_option("--samples-per-class", ta.samples_per_class, "Blob samples per class before the split")
      ->capture_default_str();
  train->add_option("--spread", ta.spread, "Blob noise standard deviation")->capture_default_str();
  train->add_option("--data-seed", ta.data_seed, "Blob generator seed")->capture_default_str();
  train->add_option("--branching", ta.branching, "Balanced hierarchy branching, e.g. 4,4");
  train->add_option("--hierarchy", ta.hierarchy, "Hierarchy edge-list file");
  train->add_option("--k", ta.k, "Subsample k training samples per class (0 = all)")->capture_default_str();
  train->add_flag("--standardize", ta.standardize, "Standardize features with train statistics");
  train->add_option("--loss", ta.loss, "cosine, cross_entropy, mse or cosine_xent")->capture_default_str();
  train->add_option("--embeddings", ta.embeddings, "Embedding CSV from `embed`");
  train->add_flag("--onehot", ta.onehot, "One-hot class embeddings");
  train->add_flag("--semantic", ta.semantic, "Semantic embeddings from the hierarchy");
  train->add_option("--lambda", ta.lambda, "Weight of the auxiliary cross-entropy term");
  train->add_option("--label-smoothing", ta.label_smoothing, "Label smoothing epsilon")->capture_default_str();
  train->add_option("--lr-max", ta.lr_max, "Peak learning rate")->capture_default_str();
  train->add_option("--epochs-profile", ta.profile, "paper, quick or smoke")->capture_default_str();
  train->add_option("--seed", ta.seed, "Run seed")->capture_default_str();
  train->add_option("--hidden", ta.hidden, "Hidden widths, e.g. 64,64")->capture_default_str();
  train->add_option("--batch-size", ta.batch_size, "Batch size")->capture_default_str();
  train->add_option("--momentum", ta.momentum, "SGD momentum")->capture_default_str();
  train->add_option("--clip-norm", ta.clip_norm, "Gradient clipping norm")->capture_default_str();
  train->add_option("--checkpoint-out", ta.checkpoint_out, "Write the trained model here");
  train->add_option("--log", ta.log, "Write the per-epoch CSV log here instead of stdout");

  std::string config, exp_out;
  std::size_t workers = 1;
  auto* experiment = app.add_subcommand("experiment", "Run a dataset-size sweep from a JSON config");
  experiment->add_option("--config", config, "Experiment config JSON")->required();
  experiment->add_option("--out", exp_out, "Output directory")->required();
  experiment->add_option("--workers", workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  std::string gc_ops = "all";
  std::size_t gc_trials = 100;
  std::uint64_t gc_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--ops", gc_ops, "all or a comma-separated list of case names")->capture_default_str();
  gradcheck->add_option("--trials", gc_trials, "Random inputs per case")->capture_default_str()->check(
      CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc_seed, "Seed")->capture_default_str();

  std::string sf_loss, sf_out, sf_target = "1,0";
  std::size_t sf_resolution = 41;
  double sf_smoothing = 0.0;
  auto* surface = app.add_subcommand("surface", "Loss value grid over [-2,2]^2 for a fixed 2-d target");
  surface->add_option("--loss", sf_loss, "cosine, cross_entropy or mse")->required();
  surface->add_option("--resolution", sf_resolution, "Grid points per axis")->capture_default_str();
  surface->add_option("--out", sf_out, "Output CSV (stdout when omitted)");
  surface->add_option("--target", sf_target, "Target vector")->capture_default_str();
  surface->add_option("--label-smoothing", sf_smoothing, "Cross-entropy label smoothing")->capture_default_str();

  std::string rp_results, rp_out, rp_schedule;
  double rp_lr = 0.1;
  std::size_t rp_steps = 1;
  auto* report = app.add_subcommand("report", "Re-aggregate results.json or emit a schedule curve");
  report->add_option("--results", rp_results, "results.json from `experiment`");
  report->add_option("--out", rp_out, "Output directory (stdout when omitted)");
  report->add_option("--schedule", rp_schedule, "Emit the learning-rate curve of a profile");
  report->add_option("--lr-max", rp_lr, "Peak learning rate for --schedule")->capture_default_str();
  report->add_option("--steps-per-epoch", rp_steps, "Steps per epoch for --schedule")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*embed) return cmd_embed(ea, out);
    if (*train) return cmd_train(ta, out, err);
    if (*experiment) return cmd_experiment(config, exp_out, workers, out);
    if (*gradcheck) return cmd_gradcheck(gc_ops, gc_trials, gc_seed, out);
    if (*surface) return cmd_surface(sf_loss, sf_resolution, sf_target, sf_out, sf_smoothing, out);
    if (*report) return cmd_report(rp_results, rp_out, rp_schedule, rp_lr, rp_steps, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitValidation;
}

}  // namespace coslearn::cli
