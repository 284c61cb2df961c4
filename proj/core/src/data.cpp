// SPDX-License-Identifier: Apache-2.0
#include "coslearn/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "coslearn/embeddings.hpp"
#include "coslearn/error.hpp"
#include "coslearn/io.hpp"
#include "coslearn/random.hpp"

namespace coslearn {

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (std::size_t y : labels) {
    if (y >= counts.size()) throw LabelError("label " + std::to_string(y) + " out of range");
    ++counts[y];
  }
  return counts;
}

void Dataset::validate() const {
  if (labels.empty()) throw ValidationError("dataset is empty");
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw DimensionError("dataset features " + shape_to_string(features.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  if (!features.all_finite()) throw ValidationError("dataset contains non-finite features");
  const auto counts = class_counts();
  if (split == Split::train) {
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] == 0) {
        throw ValidationError("class '" + class_names[c] + "' has no training samples");
      }
    }
  }
}

Dataset parse_csv(std::string_view text, const std::optional<std::vector<std::string>>& class_list,
                  Split which) {
  const auto lines = lines_of(text);
  std::size_t first = 0;
  while (first < lines.size() && trim(lines[first]).empty()) ++first;
  if (first == lines.size()) throw FormatError("dataset CSV is empty");

  const auto header = split(lines[first], ',');
  if (header.size() < 2 || trim(header[0]) != "label") {
    throw FormatError("dataset CSV header must start with 'label' followed by feature columns");
  }
  const std::size_t dim = header.size() - 1;

  Dataset d;
  d.split = which;
  std::map<std::string, std::size_t, std::less<>> index;
  if (class_list) {
    d.class_names = *class_list;
    for (std::size_t i = 0; i < class_list->size(); ++i) index.emplace((*class_list)[i], i);
  }
  std::vector<double> values;
  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto fields = split(lines[li], ',');
    const std::string where = "line " + std::to_string(li + 1);
    if (fields.size() != header.size()) {
      throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    const std::string name(trim(fields[0]));
    auto it = index.find(name);
    if (it == index.end()) {
      if (class_list) throw LookupError(where + ": class '" + name + "' not in class list");
      it = index.emplace(name, d.class_names.size()).first;
      d.class_names.push_back(name);
    }
    d.labels.push_back(it->second);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      values.push_back(parse_double(trim(fields[j]), where + " feature"));
    }
  }
  if (d.labels.empty()) throw FormatError("dataset CSV has no data rows");
  d.features = Tensor(Shape{d.labels.size(), dim}, std::move(values));
  d.source_size = d.labels.size();
  return d;
}

Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<std::vector<std::string>>& class_list, Split which) {
  try {
    return parse_csv(read_text_file(path), class_list, which);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const LookupError& e) {
    throw LookupError(path.string() + ": " + e.what());
  }
}

void save_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ostringstream out;
  out << "label";
  for (std::size_t j = 0; j < d.dim(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.class_names.at(d.labels[i]);
    for (double v : d.features.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
  write_text_file(path, out.str());
}

namespace {

// dim x n matrix with orthonormal columns (Gram-Schmidt on Gaussian draws).
Tensor random_orthonormal(std::size_t dim, std::size_t n, Rng& rng) {
  Tensor q(Shape{dim, n});
  std::vector<double> v(dim);
  for (std::size_t c = 0; c < n; ++c) {
    for (;;) {
      for (double& x : v) x = rng.normal();
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t p = 0; p < c; ++p) {
          double proj = 0.0;
          for (std::size_t i = 0; i < dim; ++i) proj += v[i] * q.at(i, p);
          for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * q.at(i, p);
        }
      }
      const double norm = l2_norm(v);
      if (norm > 1e-6) {
        for (std::size_t i = 0; i < dim; ++i) q.at(i, c) = v[i] / norm;
        break;
      }
    }
  }
  return q;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

void check_sibling_geometry(const Tensor& means, const ClassHierarchy& h) {
  const std::size_t n = h.num_classes();
  for (std::size_t a = 0; a < n; ++a) {
    const auto pa = h.parent(h.class_node(a));
    double max_sib = -1.0;
    double min_other = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a) continue;
      const double d2 = squared_distance(means.row(a), means.row(b));
      if (h.parent(h.class_node(b)) == pa) {
        max_sib = std::max(max_sib, d2);
      } else {
        min_other = std::min(min_other, d2);
      }
    }
    if (max_sib >= 0.0 && !(max_sib < min_other)) {
      throw NumericError("blob means violate sibling geometry at class '" + h.class_names()[a] + "'");
    }
  }
}

}  // namespace

Tensor blob_means(const BlobSpec& spec, const ClassHierarchy* hierarchy) {
  if (spec.num_classes < 2) throw ValidationError("blobs need at least 2 classes");
  if (spec.dim == 0) throw ValidationError("blob dim must be positive");
  if (hierarchy != nullptr && hierarchy->num_classes() != spec.num_classes) {
    throw ValidationError("hierarchy has " + std::to_string(hierarchy->num_classes()) +
                          " classes, blob spec asks for " + std::to_string(spec.num_classes));
  }
  const std::size_t n = spec.num_classes;
  Rng rng(derive_seed(spec.seed, {0x6d65616e73ULL}));
  Tensor means(Shape{n, spec.dim});
  if (hierarchy == nullptr && n > spec.dim) {
    for (std::size_t c = 0; c < n; ++c) {
      auto row = means.row(c);
      double norm = 0.0;
      do {
        for (double& x : row) x = rng.normal();
        norm = l2_norm(row);
      } while (norm < 1e-6);
      for (double& x : row) x /= norm;
    }
    return means;
  }
  if (spec.dim < n) {
    throw ValidationError("hierarchical blobs need dim >= num_classes (" + std::to_string(spec.dim) +
                          " < " + std::to_string(n) + ")");
  }
  const Tensor base = hierarchy != nullptr
                          ? semantic_embeddings(semantic_similarity(*hierarchy)).matrix()
                          : Tensor::identity(n);
  const Tensor q = random_orthonormal(spec.dim, n, rng);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < spec.dim; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += q.at(i, j) * base.at(c, j);
      means.at(c, i) = s;
    }
  }
  if (hierarchy != nullptr) check_sibling_geometry(means, *hierarchy);
  return means;
}

std::pair<Dataset, Dataset> make_blobs(const BlobSpec& spec, const ClassHierarchy* hierarchy) {
  if (spec.samples_per_class < 2) throw ValidationError("blobs need at least 2 samples per class");
  if (!(spec.spread >= 0.0) || !std::isfinite(spec.spread)) {
    throw ValidationError("blob spread must be finite and non-negative");
  }
  const Tensor means = blob_means(spec, hierarchy);
  const std::size_t n = spec.num_classes;
  const std::size_t n_train = spec.samples_per_class / 2;
  const std::size_t n_test = spec.samples_per_class - n_train;

  std::vector<std::string> names;
  if (hierarchy != nullptr) {
    names = hierarchy->class_names();
  } else {
    const std::size_t width = std::to_string(n - 1).size();
    for (std::size_t c = 0; c < n; ++c) {
      std::string s = std::to_string(c);
      names.push_back("class" + std::string(width - s.size(), '0') + s);
    }
  }

  Rng rng(derive_seed(spec.seed, {0x73616d706c65ULL}));
  auto make_split = [&](std::size_t per_class, Split which) {
    Dataset d;
    d.split = which;
    d.class_names = names;
    std::vector<double> values;
    values.reserve(per_class * n * spec.dim);
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t s = 0; s < per_class; ++s) {
        for (double m : means.row(c)) values.push_back(m + spec.spread * rng.normal());
        d.labels.push_back(c);
      }
    }
    d.features = Tensor(Shape{d.labels.size(), spec.dim}, std::move(values));
    d.source_size = d.labels.size();
    return d;
  };
  Dataset train = make_split(n_train, Split::train);
  Dataset test = make_split(n_test, Split::test);
  return {std::move(train), std::move(test)};
}

Batch gather(const Dataset& d, std::span<const std::size_t> indices) {
  Batch b;
  std::vector<double> values;
  values.reserve(indices.size() * d.dim());
  for (std::size_t i : indices) {
    if (i >= d.size()) throw LabelError("sample index " + std::to_string(i) + " out of range");
    const auto r = d.features.row(i);
    values.insert(values.end(), r.begin(), r.end());
    b.labels.push_back(d.labels[i]);
  }
  b.features = Tensor(Shape{indices.size(), d.dim()}, std::move(values));
  return b;
}

Dataset subsample(const Dataset& d, const SubsampleSpec& s) {
  if (s.samples_per_class == 0) throw ValidationError("samples_per_class must be at least 1");
  std::vector<std::vector<std::size_t>> by_class(d.num_classes());
  for (std::size_t i = 0; i < d.size(); ++i) by_class.at(d.labels[i]).push_back(i);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < s.samples_per_class) {
      throw ValidationError("cannot take " + std::to_string(s.samples_per_class) +
                            " samples from class '" + d.class_names[c] + "' with " +
                            std::to_string(by_class[c].size()));
    }
  }
  Rng rng(derive_seed(s.seed, {0x737562ULL}));
  std::vector<std::size_t> picked;
  for (auto& idx : by_class) {
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(s.samples_per_class);
    std::sort(idx.begin(), idx.end());
    picked.insert(picked.end(), idx.begin(), idx.end());
  }
  std::sort(picked.begin(), picked.end());
  Batch b = gather(d, picked);
  Dataset out;
  out.features = std::move(b.features);
  out.labels = std::move(b.labels);
  out.class_names = d.class_names;
  out.split = d.split;
  out.source_size = d.source_size;
  return out;
}

std::size_t repeats_per_epoch(const Dataset& d) {
  if (d.size() == 0) throw ValidationError("dataset is empty");
  const std::size_t full = std::max(d.source_size, d.size());
  return (full + d.size() - 1) / d.size();
}

std::vector<std::vector<std::size_t>> batch_indices(const Dataset& d, std::size_t batch_size,
                                                    std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
  const std::size_t reps = repeats_per_epoch(d);
  Rng rng(epoch_seed);
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> order(d.size());
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return out;
}

std::vector<Batch> batches(const Dataset& d, std::size_t batch_size, std::uint64_t epoch_seed) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(d, batch_size, epoch_seed)) out.push_back(gather(d, idx));
  return out;
}

Standardizer Standardizer::fit(const Dataset& train) {
  if (train.size() == 0) throw ValidationError("cannot fit a standardizer on an empty dataset");
  Standardizer s;
  const std::size_t dim = train.dim();
  s.mean_.assign(dim, 0.0);
  s.scale_.assign(dim, 0.0);
  const double n = static_cast<double>(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto r = train.features.row(i);
    for (std::size_t j = 0; j < dim; ++j) s.mean_[j] += r[j] / n;
  }
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto r = train.features.row(i);
    for (std::size_t j = 0; j < dim; ++j) s.scale_[j] += (r[j] - s.mean_[j]) * (r[j] - s.mean_[j]) / n;
  }
  for (double& v : s.scale_) {
    v = std::sqrt(v);
    if (v < 1e-12) v = 1.0;  // constant feature: centre only
  }
  return s;
}

Dataset Standardizer::apply(Dataset d) const {
  if (d.dim() != mean_.size()) {
    throw DimensionError("standardizer fit on " + std::to_string(mean_.size()) +
                         " features, applied to " + std::to_string(d.dim()));
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto r = d.features.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - mean_[j]) / scale_[j];
  }
  return d;
}

}  // namespace coslearn
