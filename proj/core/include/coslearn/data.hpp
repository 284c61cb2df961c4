// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coslearn/hierarchy.hpp"
#include "coslearn/tensor.hpp"

namespace coslearn {

enum class Split { train, test };

/// Labeled feature matrix. Labels are class indices in [0, class_names.size()).
struct Dataset {
  Tensor features;  ///< N x input_dim
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
  Split split = Split::train;
  /// Size of the dataset this one was subsampled from (equals size() when not
  /// subsampled). Drives the per-epoch repetition in batches().
  std::size_t source_size = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;

  /// Throws ValidationError on shape mismatch, label out of range,
  /// non-finite features, or (for train splits) a class without samples.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// CSV with header; first column `label` holds the class name, remaining
/// columns are numeric features. Class indices come from `class_list` when
/// given, else from first-appearance order.
Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<std::vector<std::string>>& class_list = std::nullopt,
                 Split which = Split::train);
Dataset parse_csv(std::string_view text,
                  const std::optional<std::vector<std::string>>& class_list = std::nullopt,
                  Split which = Split::train);
void save_csv(const std::filesystem::path& path, const Dataset& d);

struct BlobSpec {
  std::size_t num_classes = 4;
  std::size_t dim = 8;
  /// Samples generated per class before the 50/50 train/test split.
  std::size_t samples_per_class = 100;
  /// Standard deviation of the isotropic Gaussian noise around class means.
  double spread = 0.1;
  std::uint64_t seed = 0;
};

/// Gaussian clusters with a fixed 50/50 train/test split per class.
///
/// Without a hierarchy the class means are random unit vectors (orthonormal
/// when num_classes <= dim). With a hierarchy, the means are the semantic
/// class embeddings rotated into feature space by a random orthonormal map,
/// so the squared distance between two means is 2 (1 - similarity) and
/// siblings sit closer than cousins; this needs dim >= num_classes. The
/// sibling-vs-non-sibling geometry is checked before returning.
std::pair<Dataset, Dataset> make_blobs(const BlobSpec& spec,
                                       const ClassHierarchy* hierarchy = nullptr);

/// Class means produced by make_blobs for the same spec (num_classes x dim).
Tensor blob_means(const BlobSpec& spec, const ClassHierarchy* hierarchy = nullptr);

struct SubsampleSpec {
  std::size_t samples_per_class = 1;
  std::uint64_t seed = 0;
};

/// Exactly k samples per class, drawn without replacement. Throws
/// ValidationError when k exceeds the smallest class.
Dataset subsample(const Dataset& d, const SubsampleSpec& s);

/// ceil(source_size / size): how often one epoch passes over the data so the
/// number of iterations per epoch stays roughly constant.
std::size_t repeats_per_epoch(const Dataset& d);

struct Batch {
  Tensor features;
  std::vector<std::size_t> labels;
};

/// Sample indices per batch for one epoch. Each pass over the data is
/// shuffled independently and split into batches of batch_size (the last
/// batch of a pass may be smaller); repeats_per_epoch(d) passes are made.
std::vector<std::vector<std::size_t>> batch_indices(const Dataset& d, std::size_t batch_size,
                                                    std::uint64_t epoch_seed);

std::vector<Batch> batches(const Dataset& d, std::size_t batch_size, std::uint64_t epoch_seed);

Batch gather(const Dataset& d, std::span<const std::size_t> indices);

/// Per-feature standardization fit on a training split.
class Standardizer {
 public:
  static Standardizer fit(const Dataset& train);
  Dataset apply(Dataset d) const;

 private:
  std::vector<double> mean_;
  std::vector<double> scale_;
};

}  // namespace coslearn
