// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "coslearn/embeddings.hpp"
#include "coslearn/error.hpp"
#include "coslearn/hierarchy.hpp"
#include "coslearn/io.hpp"
#include "random_tree.hpp"

namespace coslearn {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / "coslearn_tests" / info->name();
  fs::create_directories(dir);
  return dir / name;
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  }
  return m;
}

SimilarityMatrix sim2(double off) {
  return SimilarityMatrix(Tensor::matrix({{1, off}, {off, 1}}), {"x", "y"});
}

TEST(Onehot, Examples) {
  EXPECT_EQ(onehot_embeddings(2).matrix(), Tensor::matrix({{1, 0}, {0, 1}}));
  const auto e = onehot_embeddings(3);
  EXPECT_EQ(Tensor::vector(std::vector<double>(e.row(1).begin(), e.row(1).end())), Tensor::vector({0, 1, 0}));
  EXPECT_EQ(e.kind(), EmbeddingKind::onehot);
  EXPECT_THROW(onehot_embeddings(1), ValidationError);
}

TEST(Semantic, StarGivesIdentity) {
  std::string edges;
  for (int i = 0; i < 9; ++i) edges += "root\tc" + std::to_string(i) + "\n";
  const auto s = semantic_similarity(ClassHierarchy::parse(edges));
  const auto e = semantic_embeddings(s);
  EXPECT_EQ(e.matrix(), Tensor::identity(9));
  const auto dev = verify_embeddings(e, s);
  EXPECT_EQ(dev.max_gram_deviation, 0.0);
  EXPECT_EQ(dev.max_norm_deviation, 0.0);
}

TEST(Semantic, TwoByTwo) {
  const auto e = semantic_embeddings(sim2(0.5));
  EXPECT_EQ(e.row(0)[0], 1.0);
  EXPECT_EQ(e.row(0)[1], 0.0);
  EXPECT_EQ(e.row(1)[0], 0.5);
  EXPECT_NEAR(e.row(1)[1], std::sqrt(0.75), 1e-15);
}

TEST(Semantic, ThreeClassTree) {
  const auto s = semantic_similarity(ClassHierarchy::parse("r\tA\nr\tB\nA\ta1\nA\ta2\nB\tb1\n"));
  const auto dev = verify_embeddings(semantic_embeddings(s), s);
  EXPECT_LE(dev.max_gram_deviation, 1e-12);
  EXPECT_LE(dev.max_norm_deviation, 1e-12);
}

TEST(Semantic, NotPsdNamesClass) {
  // Three classes pairwise at -0.9 cannot be unit vectors.
  const SimilarityMatrix s(Tensor::matrix({{1, -0.9, -0.9}, {-0.9, 1, -0.9}, {-0.9, -0.9, 1}}),
                           {"p", "q", "zeta"});
  try {
    (void)semantic_embeddings(s);
    FAIL();
  } catch (const NotPsdError& e) {
    EXPECT_NE(std::string(e.what()).find("zeta"), std::string::npos);
  }
}

TEST(Semantic, RankDeficientButPsdIsAccepted) {
  const auto e = semantic_embeddings(sim2(1.0));
  EXPECT_EQ(e.row(1)[0], 1.0);
  EXPECT_EQ(e.row(1)[1], 0.0);
}

TEST(Semantic, RandomTreesAgainstEigen) {
  Rng rng(64);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t leaves = 2 + rng.index(63);
    const auto h = ClassHierarchy::parse(testing::random_tree_edges(rng, {.leaves = leaves}));
    const auto s = semantic_similarity(h);
    const Eigen::MatrixXd S = to_eigen(s.values());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9);

    const auto e = semantic_embeddings(s);
    const Eigen::MatrixXd E = to_eigen(e.matrix());
    EXPECT_LT((E * E.transpose() - S).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((E.rowwise().norm().array() - 1.0).abs().maxCoeff(), 1e-9);

    // Positive definite here, so the factor is the unique Cholesky factor.
    const Eigen::LLT<Eigen::MatrixXd> llt(S);
    ASSERT_EQ(llt.info(), Eigen::Success);
    const Eigen::MatrixXd L = llt.matrixL();
    EXPECT_LT((E - L).cwiseAbs().maxCoeff(), 1e-9);

    const auto dev = verify_embeddings(e, s);
    EXPECT_NEAR(dev.max_gram_deviation, (E * E.transpose() - S).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Semantic, DeterministicAndOrderConsistent) {
  Rng rng(5);
  const std::string edges = testing::random_tree_edges(rng, {.leaves = 20});
  const auto h = ClassHierarchy::parse(edges);
  const auto e1 = semantic_embeddings(semantic_similarity(h));
  const auto e2 = semantic_embeddings(semantic_similarity(ClassHierarchy::parse(edges)));
  EXPECT_EQ(e1, e2);

  // Relabel by reversing the class order: the Gram matrix permutes with it.
  std::vector<std::string> reversed(h.class_names().rbegin(), h.class_names().rend());
  const auto hr = ClassHierarchy::parse(edges, reversed);
  const auto er = semantic_embeddings(semantic_similarity(hr));
  const std::size_t n = h.num_classes();
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(er.class_names()[i], e1.class_names()[n - 1 - i]);
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_NEAR(dot(er.row(i), er.row(j)), dot(e1.row(n - 1 - i), e1.row(n - 1 - j)), 1e-12);
    }
  }
}

TEST(Verify, PerturbationShowsUp) {
  const auto s = sim2(0.5);
  const auto e = semantic_embeddings(s);
  Tensor m = e.matrix();
  const double delta = 1e-4;
  m.at(1, 1) += delta;
  const auto dev = verify_embeddings(EmbeddingMatrix(m, e.class_names(), EmbeddingKind::semantic), s);
  // |e1 + delta u|^2 - 1 ~ 2 delta e1[1] to first order.
  EXPECT_NEAR(dev.max_gram_deviation, 2 * delta * std::sqrt(0.75), 1e-7);
  EXPECT_NEAR(dev.max_norm_deviation, delta * std::sqrt(0.75), 1e-7);
  EXPECT_EQ(verify_embeddings(onehot_embeddings(4), SimilarityMatrix(Tensor::identity(4), {"a", "b", "c", "d"}))
                .max_gram_deviation,
            0.0);
}

TEST(EmbeddingCsv, RoundTrip) {
  Rng rng(11);
  const auto h = ClassHierarchy::parse(testing::random_tree_edges(rng, {.leaves = 12}));
  const auto e = semantic_embeddings(semantic_similarity(h));
  const auto path = scratch("emb.csv");
  save_embeddings_csv(path, e);
  EXPECT_EQ(load_embeddings_csv(path), e);

  const auto oh = onehot_embeddings(3, {"a", "b", "c"});
  save_embeddings_csv(path, oh);
  EXPECT_EQ(load_embeddings_csv(path), oh);
  EXPECT_EQ(read_text_file(path), "class,e1,e2,e3\na,1,0,0\nb,0,1,0\nc,0,0,1\n");
}

TEST(EmbeddingCsv, Errors) {
  const auto path = scratch("bad.csv");
  write_text_file(path, "class,e1,e2\na,1,0\nb,0.5,0.5\n");
  EXPECT_THROW(load_embeddings_csv(path), FormatError);
  write_text_file(path, "class,e1,e2\na,1\n");
  EXPECT_THROW(load_embeddings_csv(path), FormatError);
  EXPECT_THROW(load_embeddings_csv(scratch("missing.csv")), IoError);
}

TEST(EmbeddingMatrix, GatherChecksLabels) {
  const auto e = onehot_embeddings(3);
  const std::size_t ok[] = {2, 0};
  EXPECT_EQ(e.gather(ok), Tensor::matrix({{0, 0, 1}, {1, 0, 0}}));
  const std::size_t bad[] = {3};
  EXPECT_THROW((void)e.gather(bad), LabelError);
}

}  // namespace
}  // namespace coslearn
