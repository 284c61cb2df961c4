// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "coslearn/data.hpp"
#include "coslearn/error.hpp"
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

TEST(Csv, ParseSmallFile) {
  const auto d = parse_csv("label,x1,x2\ncat,1,2\ndog,3.5,-4\n");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_EQ(d.class_names, (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(d.features, Tensor::matrix({{1, 2}, {3.5, -4}}));
  EXPECT_EQ(d.source_size, 2u);
}

TEST(Csv, ClassListDefinesIndices) {
  const auto d = parse_csv("label,x1\ncat,1\ndog,3\n", std::vector<std::string>{"dog", "eel", "cat"});
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{2, 0}));
  EXPECT_EQ(d.num_classes(), 3u);
  EXPECT_THROW(parse_csv("label,x1\nfox,1\n", std::vector<std::string>{"dog"}), LookupError);
}

TEST(Csv, Errors) {
  EXPECT_THROW(parse_csv(""), FormatError);
  EXPECT_THROW(parse_csv("label,x1\n"), FormatError);
  EXPECT_THROW(parse_csv("name,x1\na,1\n"), FormatError);
  EXPECT_THROW(parse_csv("label,x1,x2\na,1\n"), FormatError);
  EXPECT_THROW(parse_csv("label,x1\na,one\n"), FormatError);
}

TEST(Csv, LoadErrorsNameThePath) {
  const auto path = scratch("ragged.csv");
  write_text_file(path, "label,x1,x2\na,1,2,3\n");
  try {
    (void)load_csv(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
  EXPECT_THROW(load_csv(scratch("absent.csv")), IoError);
}

TEST(Csv, RoundTrip) {
  const auto [train, test] = make_blobs({.num_classes = 3, .dim = 4, .samples_per_class = 10, .spread = 0.3, .seed = 1});
  const auto path = scratch("train.csv");
  save_csv(path, train);
  EXPECT_EQ(load_csv(path), train);
  save_csv(path, test);
  EXPECT_EQ(load_csv(path, std::nullopt, Split::test), test);
}

TEST(Blobs, ShapeSplitAndDeterminism) {
  const BlobSpec spec{.num_classes = 5, .dim = 6, .samples_per_class = 9, .spread = 0.2, .seed = 3};
  const auto [train, test] = make_blobs(spec);
  EXPECT_EQ(train.size(), 5u * 4);
  EXPECT_EQ(test.size(), 5u * 5);
  EXPECT_EQ(train.split, Split::train);
  EXPECT_EQ(test.split, Split::test);
  EXPECT_EQ(train.class_names.front(), "class0");
  EXPECT_EQ(train.class_counts(), (std::vector<std::size_t>(5, 4)));
  const auto again = make_blobs(spec);
  EXPECT_EQ(again.first, train);
  EXPECT_EQ(again.second, test);
  auto other = spec;
  other.seed = 4;
  EXPECT_FALSE(make_blobs(other).first == train);
}

TEST(Blobs, ZeroSpreadPutsSamplesOnMeans) {
  const BlobSpec spec{.num_classes = 4, .dim = 8, .samples_per_class = 6, .spread = 0.0, .seed = 2};
  const Tensor means = blob_means(spec);
  const auto [train, test] = make_blobs(spec);
  for (const Dataset* d : {&train, &test}) {
    for (std::size_t i = 0; i < d->size(); ++i) {
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(d->features.at(i, j), means.at(d->labels[i], j));
    }
  }
  // Orthonormal when n <= dim.
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) EXPECT_NEAR(dot(means.row(a), means.row(b)), a == b ? 1.0 : 0.0, 1e-12);
  }
}

TEST(Blobs, HierarchyGeometry) {
  const std::size_t branching[] = {4, 4};
  const auto h = make_balanced_hierarchy(branching);
  const BlobSpec spec{.num_classes = 16, .dim = 32, .samples_per_class = 4, .spread = 0.3, .seed = 7};
  const Tensor means = blob_means(spec, &h);
  const auto s = semantic_similarity(h);
  for (std::size_t a = 0; a < 16; ++a) {
    for (std::size_t b = 0; b < 16; ++b) {
      double d2 = 0;
      for (std::size_t j = 0; j < 32; ++j) d2 += (means.at(a, j) - means.at(b, j)) * (means.at(a, j) - means.at(b, j));
      EXPECT_NEAR(d2, 2.0 * (1.0 - s(a, b)), 1e-12);
    }
  }
  // Siblings (same parent) sit strictly closer than non-siblings.
  const double sib = 2.0 * (1.0 - s(0, 1));
  const double cousin = 2.0 * (1.0 - s(0, 4));
  EXPECT_LT(sib, cousin);
  const auto [train, test] = make_blobs(spec, &h);
  EXPECT_EQ(train.class_names, h.class_names());
}

TEST(Blobs, Errors) {
  const std::size_t branching[] = {4, 4};
  const auto h = make_balanced_hierarchy(branching);
  EXPECT_THROW(make_blobs({.num_classes = 16, .dim = 8}, &h), ValidationError);
  EXPECT_THROW(make_blobs({.num_classes = 4, .dim = 8}, &h), ValidationError);
  EXPECT_THROW(make_blobs({.num_classes = 4, .dim = 8, .samples_per_class = 1}), ValidationError);
  EXPECT_THROW(make_blobs({.num_classes = 4, .dim = 8, .spread = -1}), ValidationError);
  // More classes than dimensions without a hierarchy falls back to random unit means.
  const Tensor m = blob_means({.num_classes = 10, .dim = 3, .seed = 1});
  for (std::size_t c = 0; c < 10; ++c) EXPECT_NEAR(l2_norm(m.row(c)), 1.0, 1e-12);
}

TEST(Subsample, ExactAndDeterministic) {
  const auto [train, test] = make_blobs({.num_classes = 4, .dim = 3, .samples_per_class = 40, .spread = 1, .seed = 5});
  for (std::size_t k : {1u, 3u, 20u}) {
    const auto a = subsample(train, {.samples_per_class = k, .seed = 11});
    EXPECT_EQ(a.class_counts(), (std::vector<std::size_t>(4, k)));
    EXPECT_EQ(a.source_size, train.size());
    EXPECT_EQ(a, subsample(train, {.samples_per_class = k, .seed = 11}));
    // Every drawn row is a distinct row of the source with the same label.
    std::set<std::vector<double>> seen;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto r = a.features.row(i);
      bool found = false;
      for (std::size_t j = 0; j < train.size() && !found; ++j) {
        const auto t = train.features.row(j);
        found = std::equal(r.begin(), r.end(), t.begin()) && train.labels[j] == a.labels[i];
      }
      EXPECT_TRUE(found);
      EXPECT_TRUE(seen.emplace(r.begin(), r.end()).second);
    }
  }
  EXPECT_FALSE(subsample(train, {.samples_per_class = 3, .seed = 11}) ==
               subsample(train, {.samples_per_class = 3, .seed = 12}));
  const auto full = subsample(train, {.samples_per_class = 20, .seed = 1});
  EXPECT_EQ(full.features, train.features);
  EXPECT_THROW(subsample(train, {.samples_per_class = 21}), ValidationError);
  EXPECT_THROW(subsample(train, {.samples_per_class = 0}), ValidationError);
}

TEST(Batches, PartitionEachPass) {
  const auto [train, test] = make_blobs({.num_classes = 3, .dim = 2, .samples_per_class = 20, .spread = 1, .seed = 5});
  const auto idx = batch_indices(train, 7, 99);
  EXPECT_EQ(repeats_per_epoch(train), 1u);
  ASSERT_EQ(idx.size(), 5u);  // 30 samples: 7+7+7+7+2
  EXPECT_EQ(idx.back().size(), 2u);
  std::vector<std::size_t> all;
  for (const auto& b : idx) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(batch_indices(train, 7, 99), idx);
  EXPECT_NE(batch_indices(train, 7, 100), idx);

  const auto one = batches(train, 1000, 3);
  ASSERT_EQ(one.size(), 1u);
  auto labels = one[0].labels;
  auto expected = train.labels;
  std::sort(labels.begin(), labels.end());
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(labels, expected);
  EXPECT_THROW(batch_indices(train, 0, 1), ValidationError);
}

TEST(Batches, SubsampleRepeatsKeepIterationsConstant) {
  const auto [train, test] = make_blobs({.num_classes = 2, .dim = 2, .samples_per_class = 40, .spread = 1, .seed = 5});
  const auto half = subsample(train, {.samples_per_class = 10, .seed = 2});
  EXPECT_EQ(repeats_per_epoch(half), 2u);
  const auto third = subsample(train, {.samples_per_class = 7, .seed = 2});
  EXPECT_EQ(repeats_per_epoch(third), 3u);  // ceil(40 / 14)

  const auto idx = batch_indices(half, 5, 1);
  ASSERT_EQ(idx.size(), 8u);
  // Two passes of 4 batches each, every pass a permutation.
  for (std::size_t pass = 0; pass < 2; ++pass) {
    std::vector<std::size_t> seen;
    for (std::size_t b = 0; b < 4; ++b) seen.insert(seen.end(), idx[pass * 4 + b].begin(), idx[pass * 4 + b].end());
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(seen[i], i);
  }
}

TEST(Standardizer, FitsOnTrainOnly) {
  const auto train = parse_csv("label,x1,x2\na,1,5\nb,3,5\n");
  const auto test = parse_csv("label,x1,x2\na,5,7\n", std::vector<std::string>{"a", "b"}, Split::test);
  const auto st = Standardizer::fit(train);
  const auto z = st.apply(train);
  EXPECT_EQ(z.features, Tensor::matrix({{-1, 0}, {1, 0}}));
  EXPECT_EQ(st.apply(test).features, Tensor::matrix({{3, 2}}));
  EXPECT_THROW(st.apply(parse_csv("label,x1\na,1\n")), DimensionError);
}

TEST(Dataset, Validate) {
  auto d = parse_csv("label,x1\na,1\n", std::vector<std::string>{"a", "b"});
  EXPECT_THROW(d.validate(), ValidationError);
  d.split = Split::test;
  EXPECT_NO_THROW(d.validate());
  d.features[0] = NAN;
  EXPECT_THROW(d.validate(), ValidationError);
}

}  // namespace
}  // namespace coslearn
