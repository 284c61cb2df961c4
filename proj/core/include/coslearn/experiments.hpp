// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coslearn/data.hpp"
#include "coslearn/embeddings.hpp"
#include "coslearn/hierarchy.hpp"
#include "coslearn/losses.hpp"
#include "coslearn/model.hpp"
#include "coslearn/optim.hpp"
#include "coslearn/stats.hpp"

namespace coslearn {

/// A loss to train with, under a display name used as the run key.
struct LossConfig {
  std::string name;
  LossSpec spec;
  EmbeddingKind embedding = EmbeddingKind::onehot;
  /// Fixed peak learning rate; when absent the sweep selects one from the grid.
  std::optional<double> lr_max;
};

struct TrainingConfig {
  std::vector<std::size_t> hidden{64};
  SgdrSchedule schedule;
  ClipSpec clip;
  std::size_t batch_size = 32;
  double momentum = 0.0;
  /// A batch loss above this (or non-finite) marks the run as diverged.
  double divergence_threshold = 1e6;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;  ///< learning rate at the first step of the epoch
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> head_accuracy;
};

struct RunRecord {
  std::string loss;
  LossKind kind = LossKind::cosine;
  std::size_t k = 0;  ///< samples per class; 0 means the full training set
  std::uint64_t seed = 0;
  double lr_max = 0.0;
  bool failed = false;
  std::string diagnostic;
  int last_finite_epoch = -1;
  double best_accuracy = 0.0;
  int best_epoch = -1;
  double final_accuracy = 0.0;
  std::optional<double> head_best_accuracy;
  std::optional<double> head_final_accuracy;
  std::vector<EpochLog> epochs;
  double wall_seconds = 0.0;
};

/// Label predictions from network outputs. Embedding losses pick
/// argmax_c <f, phi_c> (the normalization of f does not change the argmax);
/// cross-entropy picks the largest logit. Ties go to the lowest index.
std::vector<std::size_t> predict_labels(const Tensor& outputs, LossKind kind,
                                        const EmbeddingMatrix* embeddings);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels);

double accuracy(const ModelState& model, LossKind kind, const EmbeddingMatrix* embeddings,
                const Dataset& test);

/// Accuracy of the auxiliary classification head applied to normalized features.
double head_accuracy(const ModelState& model, const AuxHead& head, const Dataset& test);

struct TrainedModel {
  ModelState model;
  std::optional<AuxHead> head;
};

/// Trains one model through the full schedule, evaluating the test set after
/// every epoch. Divergence is reported through RunRecord::failed rather than
/// thrown. `embeddings` is required for every loss except cross-entropy.
RunRecord run_training(const Dataset& train, const Dataset& test, const LossConfig& loss,
                       const EmbeddingMatrix* embeddings, const TrainingConfig& cfg,
                       std::uint64_t seed, double lr_max, TrainedModel* trained = nullptr);

// ---- experiment configuration ----

struct DatasetConfig {
  enum class Source { blobs, csv } source = Source::blobs;
  BlobSpec blobs;
  /// Balanced hierarchy for blobs, as branching factors from the root.
  std::vector<std::size_t> branching;
  std::filesystem::path hierarchy_file;
  std::filesystem::path class_list_file;
  std::filesystem::path train_file;
  std::filesystem::path test_file;
  bool standardize = false;
};

enum class Metric { best, final };

struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<LossConfig> losses;
  std::vector<std::size_t> samples_per_class;
  std::vector<std::uint64_t> seeds;
  std::vector<double> lr_grid{2.5, 1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001};
  TrainingConfig training;
  Metric metric = Metric::best;
  bool failed_as_zero = false;
  /// Pairs of loss names to compare with Welch's test; empty compares the
  /// first loss against every other.
  std::vector<std::pair<std::string, std::string>> comparisons;

  void validate() const;
};

/// Parses the JSON config. Relative paths resolve against base_dir. Throws
/// ValidationError (FormatError for malformed JSON) on schema violations.
ExperimentConfig parse_experiment_config(std::string_view json_text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct PreparedData {
  Dataset train;
  Dataset test;
  std::optional<ClassHierarchy> hierarchy;
};

PreparedData prepare_data(const DatasetConfig& cfg);

// ---- results ----

struct Aggregate {
  std::string loss;
  std::size_t k = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n_runs = 0;  ///< runs entering the mean
  std::size_t n_failed = 0;
};

struct Comparison {
  std::string a;
  std::string b;
  std::size_t k = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  /// Absent when a side has fewer than 2 usable runs.
  std::optional<WelchResult> two_sided;
  std::optional<double> p_greater;  ///< one-sided, mean_a > mean_b
  std::optional<double> p_less;
};

struct LrChoice {
  std::string loss;
  double lr = 0.0;
  /// (lr, mean metric) per grid value; empty for fixed rates.
  std::vector<std::pair<double, double>> grid_means;
};

struct ExperimentResult {
  Metric metric = Metric::best;
  bool failed_as_zero = false;
  std::vector<std::string> loss_names;
  std::vector<std::size_t> ks;
  std::vector<LrChoice> lr_choices;
  std::vector<RunRecord> grid_runs;
  std::vector<RunRecord> runs;
  std::vector<Aggregate> aggregates;
  std::vector<Comparison> comparisons;
};

double metric_of(const RunRecord& r, Metric m);

/// Per (loss, k) mean and sample std of the metric, ordered by loss_names then ks.
std::vector<Aggregate> aggregate_runs(std::span<const RunRecord> runs,
                                      std::span<const std::string> loss_names,
                                      std::span<const std::size_t> ks, Metric metric,
                                      bool failed_as_zero);

std::vector<Comparison> compare_runs(std::span<const RunRecord> runs,
                                     std::span<const std::pair<std::string, std::string>> pairs,
                                     std::span<const std::size_t> ks, Metric metric,
                                     bool failed_as_zero);

/// Runs every (loss, k, seed) combination on up to `workers` threads. Results
/// are collected by run key, so the output does not depend on `workers`.
ExperimentResult size_sweep(const ExperimentConfig& cfg, std::size_t workers = 1);

std::string results_to_json(const ExperimentResult& r);
ExperimentResult results_from_json(std::string_view text);
ExperimentResult load_results(const std::filesystem::path& path);

/// Writes results.json, summary.csv, curve.csv, timings.csv and runs/*.csv.
void write_report(const ExperimentResult& r, const std::filesystem::path& out_dir);

std::string summary_csv(const ExperimentResult& r);
std::string curve_csv(const ExperimentResult& r);
std::string run_log_csv(const RunRecord& r);
std::string run_key(const RunRecord& r);

std::string_view to_string(Metric m);

}  // namespace coslearn
