// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "coslearn/error.hpp"
#include "coslearn/experiments.hpp"
#include "coslearn/io.hpp"

namespace coslearn {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / "coslearn_tests" / info->name();
  fs::create_directories(dir);
  return dir / name;
}

LossConfig loss_of(LossKind kind, std::string name = "") {
  LossConfig l;
  l.spec.kind = kind;
  l.name = name.empty() ? std::string(to_string(kind)) : name;
  return l;
}

TrainingConfig tiny_training(const char* profile = "smoke") {
  TrainingConfig t;
  t.hidden = {8};
  t.batch_size = 8;
  t.schedule = SgdrSchedule::profile(profile, 0.1);
  return t;
}

// Small sweep: 3 classes in 4-D, fixed learning rates.
ExperimentConfig tiny_sweep() {
  ExperimentConfig cfg;
  cfg.dataset.blobs = {.num_classes = 3, .dim = 4, .samples_per_class = 24, .spread = 0.6, .seed = 1};
  auto cos = loss_of(LossKind::cosine, "cosine");
  cos.lr_max = 0.5;
  auto ce = loss_of(LossKind::cross_entropy, "xent");
  ce.lr_max = 0.1;
  cfg.losses = {cos, ce};
  cfg.samples_per_class = {2, 5, 0};
  for (std::uint64_t s = 0; s < 10; ++s) cfg.seeds.push_back(s);
  cfg.training = tiny_training();
  return cfg;
}

TEST(Accuracy, Examples) {
  const auto e = onehot_embeddings(3);
  const std::vector<std::size_t> labels{0, 1, 1, 2};
  EXPECT_EQ(accuracy(predict_labels(e.gather(labels), LossKind::cosine, &e), labels), 1.0);

  const Tensor constant = Tensor::matrix({{1, 0, 0}, {1, 0, 0}, {1, 0, 0}, {1, 0, 0}});
  EXPECT_EQ(accuracy(predict_labels(constant, LossKind::cosine, &e), labels), 0.25);

  const auto e2 = onehot_embeddings(2);
  const Tensor out = Tensor::matrix({{1, 0}, {0, 1}, {2, 1}, {1, 3}});
  const std::vector<std::size_t> y2{0, 1, 1, 1};
  EXPECT_EQ(accuracy(predict_labels(out, LossKind::cross_entropy, nullptr), y2), 0.75);
  EXPECT_EQ(accuracy(predict_labels(out, LossKind::mse, &e2), y2), 0.75);
}

TEST(Accuracy, ScaleOfFeaturesDoesNotMatter) {
  // Argmax of <f, phi> equals argmax of <f/|f|, phi>.
  const SimilarityMatrix s(Tensor::matrix({{1, .5, 0}, {.5, 1, 0}, {0, 0, 1}}), {"a", "b", "c"});
  const auto e = semantic_embeddings(s);
  const Tensor f = Tensor::matrix({{0.2, 0.9, 0.1}, {-3, 1, 0.5}, {0.01, 0.0, 0.05}});
  Tensor g = f;
  for (std::size_t i = 0; i < 3; ++i) {
    for (double& v : g.row(i)) v *= 1.0 + 100.0 * static_cast<double>(i);
  }
  EXPECT_EQ(predict_labels(f, LossKind::cosine, &e), predict_labels(g, LossKind::cosine, &e));
  EXPECT_THROW(predict_labels(f, LossKind::cosine, nullptr), ValidationError);
}

TEST(RunTraining, DeterministicPerSeed) {
  const auto [train, test] = make_blobs({.num_classes = 3, .dim = 4, .samples_per_class = 20, .spread = 0.5, .seed = 2});
  const auto e = onehot_embeddings(3);
  const auto a = run_training(train, test, loss_of(LossKind::cosine), &e, tiny_training(), 7, 0.5);
  const auto b = run_training(train, test, loss_of(LossKind::cosine), &e, tiny_training(), 7, 0.5);
  ASSERT_FALSE(a.failed);
  ASSERT_EQ(a.epochs.size(), 7u);
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    EXPECT_EQ(a.epochs[i].train_loss, b.epochs[i].train_loss);
    EXPECT_EQ(a.epochs[i].test_accuracy, b.epochs[i].test_accuracy);
    EXPECT_EQ(a.epochs[i].lr, b.epochs[i].lr);
  }
  EXPECT_EQ(a.best_accuracy, b.best_accuracy);
  const auto c = run_training(train, test, loss_of(LossKind::cosine), &e, tiny_training(), 8, 0.5);
  EXPECT_NE(a.epochs.back().train_loss, c.epochs.back().train_loss);
  EXPECT_EQ(a.epochs.front().lr, 0.5);
}

TEST(RunTraining, SeparableBlobsReachPerfectAccuracy) {
  const auto [train, test] = make_blobs({.num_classes = 4, .dim = 8, .samples_per_class = 20, .spread = 0.0, .seed = 3});
  const auto e = onehot_embeddings(4);
  auto combined = loss_of(LossKind::cosine_plus_xent);
  for (const auto& loss : {loss_of(LossKind::cosine), loss_of(LossKind::cross_entropy), loss_of(LossKind::mse), combined}) {
    const auto r = run_training(train, test, loss, &e, tiny_training("quick"), 1, 0.1);
    ASSERT_FALSE(r.failed) << r.diagnostic;
    EXPECT_EQ(r.best_accuracy, 1.0) << loss.name;
    EXPECT_GE(r.best_epoch, 0);
    EXPECT_LE(r.best_accuracy, 1.0);
    if (loss.spec.kind == LossKind::cosine_plus_xent) {
      ASSERT_TRUE(r.head_best_accuracy.has_value());
    } else {
      EXPECT_FALSE(r.head_best_accuracy.has_value());
    }
  }
}

TEST(RunTraining, HugeLearningRateFailsWithDiagnostic) {
  const auto [train, test] = make_blobs({.num_classes = 3, .dim = 4, .samples_per_class = 20, .spread = 0.5, .seed = 2});
  const auto r = run_training(train, test, loss_of(LossKind::cross_entropy), nullptr, tiny_training(), 1, 1e6);
  EXPECT_TRUE(r.failed);
  EXPECT_FALSE(r.diagnostic.empty());
  EXPECT_LT(r.last_finite_epoch, 7);
}

TEST(RunTraining, ReturnsTrainedModel) {
  const auto [train, test] = make_blobs({.num_classes = 3, .dim = 4, .samples_per_class = 20, .spread = 0.5, .seed = 2});
  const auto e = onehot_embeddings(3);
  TrainedModel tm;
  auto l = loss_of(LossKind::cosine_plus_xent);
  const auto r = run_training(train, test, l, &e, tiny_training(), 4, 0.2, &tm);
  ASSERT_TRUE(tm.head.has_value());
  EXPECT_EQ(accuracy(tm.model, LossKind::cosine_plus_xent, &e, test), r.final_accuracy);
  EXPECT_EQ(head_accuracy(tm.model, *tm.head, test), *r.head_final_accuracy);
  EXPECT_THROW(run_training(train, test, l, nullptr, tiny_training(), 4, 0.2), ValidationError);
}

TEST(Sweep, CardinalityAndAggregates) {
  const auto cfg = tiny_sweep();
  const auto res = size_sweep(cfg, 2);
  EXPECT_EQ(res.runs.size(), 60u);
  EXPECT_TRUE(res.grid_runs.empty());
  EXPECT_EQ(res.aggregates.size(), 6u);
  for (const auto& r : res.runs) {
    EXPECT_GE(r.best_accuracy, 0.0);
    EXPECT_LE(r.best_accuracy, 1.0);
    EXPECT_GE(r.best_accuracy, r.final_accuracy);
  }
  const auto again = aggregate_runs(res.runs, res.loss_names, res.ks, res.metric, res.failed_as_zero);
  ASSERT_EQ(again.size(), res.aggregates.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    EXPECT_EQ(again[i].mean, res.aggregates[i].mean);
    EXPECT_EQ(again[i].std, res.aggregates[i].std);
    EXPECT_EQ(again[i].n_runs + again[i].n_failed, 10u);
  }
  // One default comparison (first loss vs the other) per k.
  EXPECT_EQ(res.comparisons.size(), 3u);
}

TEST(Sweep, WorkerCountDoesNotChangeResults) {
  auto cfg = tiny_sweep();
  cfg.seeds = {0, 1, 2};
  EXPECT_EQ(results_to_json(size_sweep(cfg, 1)), results_to_json(size_sweep(cfg, 4)));
}

TEST(Sweep, FullSizeOnlyIsPlainComparison) {
  auto cfg = tiny_sweep();
  cfg.samples_per_class = {0};
  cfg.seeds = {0, 1};
  const auto res = size_sweep(cfg, 1);
  EXPECT_EQ(res.runs.size(), 4u);
  for (const auto& r : res.runs) EXPECT_EQ(r.k, 0u);
}

TEST(Sweep, LearningRateGrid) {
  auto cfg = tiny_sweep();
  cfg.losses[0].lr_max.reset();
  cfg.lr_grid = {1e6, 0.5, 0.05};
  cfg.samples_per_class = {2, 12};
  cfg.seeds = {0, 1};
  const auto res = size_sweep(cfg, 1);
  ASSERT_EQ(res.lr_choices.size(), 2u);
  const auto& choice = res.lr_choices[0];
  EXPECT_EQ(choice.loss, "cosine");
  ASSERT_EQ(choice.grid_means.size(), 3u);
  EXPECT_EQ(res.grid_runs.size(), 6u);
  for (const auto& r : res.grid_runs) EXPECT_EQ(r.k, 12u);
  double best = -1;
  for (const auto& [lr, m] : choice.grid_means) best = std::max(best, m);
  for (const auto& [lr, m] : choice.grid_means) {
    if (m == best) {
      EXPECT_EQ(choice.lr, lr);
      break;
    }
  }
  EXPECT_TRUE(res.lr_choices[1].grid_means.empty());
  EXPECT_EQ(res.lr_choices[1].lr, 0.1);
}

TEST(Results, JsonRoundTripReaggregates) {
  auto cfg = tiny_sweep();
  cfg.seeds = {0, 1, 2};
  const auto res = size_sweep(cfg, 1);
  const auto back = results_from_json(results_to_json(res));
  EXPECT_EQ(results_to_json(back), results_to_json(res));
  const auto agg = aggregate_runs(back.runs, back.loss_names, back.ks, back.metric, back.failed_as_zero);
  for (std::size_t i = 0; i < agg.size(); ++i) {
    EXPECT_EQ(agg[i].mean, res.aggregates[i].mean);
    EXPECT_EQ(agg[i].std, res.aggregates[i].std);
  }
}

TEST(Results, FailedRunsExcludedOrZero) {
  RunRecord ok{.loss = "a", .k = 5, .best_accuracy = 0.6};
  RunRecord ok2{.loss = "a", .k = 5, .best_accuracy = 0.8};
  RunRecord bad{.loss = "a", .k = 5, .failed = true};
  const std::vector<RunRecord> runs{ok, ok2, bad};
  const std::vector<std::string> names{"a"};
  const std::vector<std::size_t> ks{5};
  auto excluded = aggregate_runs(runs, names, ks, Metric::best, false);
  EXPECT_NEAR(excluded[0].mean, 0.7, 1e-15);
  EXPECT_EQ(excluded[0].n_runs, 2u);
  EXPECT_EQ(excluded[0].n_failed, 1u);
  auto zero = aggregate_runs(runs, names, ks, Metric::best, true);
  EXPECT_NEAR(zero[0].mean, 1.4 / 3, 1e-15);
  EXPECT_EQ(zero[0].n_runs, 3u);
}

TEST(Report, FilesAndSchema) {
  auto cfg = tiny_sweep();
  cfg.seeds = {0, 1};
  cfg.samples_per_class = {2, 5};
  const auto res = size_sweep(cfg, 1);
  const auto dir = scratch("out");
  write_report(res, dir);
  for (const char* f : {"results.json", "summary.csv", "curve.csv", "timings.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir / "runs" / "cosine_k2_s0.csv"));
  const std::string summary = read_text_file(dir / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "loss,k,mean_acc,std_acc,n_runs");
  const std::string curve = read_text_file(dir / "curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "k,cosine_mean,cosine_std,xent_mean,xent_std");
  EXPECT_EQ(load_results(dir / "results.json").runs.size(), res.runs.size());
  const std::string log = run_log_csv(res.runs[0]);
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,lr,train_loss,test_accuracy");

  EXPECT_THROW(write_report(ExperimentResult{}, scratch("empty")), ValidationError);
}

TEST(Config, ParsesAndRejects) {
  const char* good = R"({
    "dataset": {"source": "blobs", "dim": 16, "spread": 0.3, "seed": 7,
                "hierarchy": {"branching": [2, 4]}},
    "losses": [{"name": "cos", "loss": "cosine", "lr_max": 1.0},
               {"name": "sem", "loss": "cosine_xent", "embedding": "semantic", "lambda": 0.1},
               {"loss": "cross_entropy", "label_smoothing": 0.1}],
    "samples_per_class": [1, 5],
    "num_seeds": 3,
    "schedule": {"profile": "quick"},
    "training": {"hidden": [32], "batch_size": 16},
    "comparisons": [["cos", "cross_entropy"]]
  })";
  const auto cfg = parse_experiment_config(good);
  EXPECT_EQ(cfg.dataset.blobs.num_classes, 8u);
  EXPECT_EQ(cfg.losses.size(), 3u);
  EXPECT_EQ(cfg.losses[2].name, "cross_entropy");
  EXPECT_EQ(cfg.losses[2].spec.label_smoothing, 0.1);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(cfg.training.schedule.total_epochs(), 30);
  EXPECT_EQ(cfg.lr_grid, (std::vector<double>{2.5, 1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001}));

  EXPECT_THROW(parse_experiment_config("{"), FormatError);
  EXPECT_THROW(parse_experiment_config(R"({"dataset": {}, "losses": [{"loss": "hinge"}],
      "samples_per_class": [1], "num_seeds": 1})"), ValidationError);
  EXPECT_THROW(parse_experiment_config(R"({"dataset": {}, "losses": [{"loss": "cosine"}],
      "samples_per_class": [1], "num_seeds": 1, "epochs": 3})"), ValidationError);
  EXPECT_THROW(parse_experiment_config(R"({"dataset": {}, "losses": [{"loss": "cosine", "embedding": "semantic"}],
      "samples_per_class": [1], "num_seeds": 1})"), ValidationError);
  EXPECT_THROW(parse_experiment_config(R"({"dataset": {}, "losses": [{"loss": "cosine"}],
      "samples_per_class": [1], "seeds": [1, 1]})"), ValidationError);
  EXPECT_THROW(parse_experiment_config(R"({"dataset": {}, "losses": [{"loss": "cosine"}, {"loss": "cosine"}],
      "samples_per_class": [1], "num_seeds": 1})"), ValidationError);
}

TEST(Config, ShippedConfigsParse) {
  for (const auto& entry : fs::directory_iterator(COSLEARN_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_experiment_config(entry.path())) << entry.path();
  }
}

}  // namespace
}  // namespace coslearn
