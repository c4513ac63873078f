#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "common/util.hpp"
#include "depgraph/depgraph.hpp"
#include "oracles/oracles.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(B4G_FIXTURES) / name; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("b4g-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::MatrixXd random_matrix(b4g::Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                                     double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline oracle::Mat to_mat(const Eigen::MatrixXd& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

inline oracle::Bits to_bits(const b4g::depgraph::Adjacency& a) {
  oracle::Bits out(static_cast<std::size_t>(a.rows()), std::vector<int>(static_cast<std::size_t>(a.cols())));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = a(i, j);
  return out;
}

inline double max_abs_diff(const oracle::Mat& a, const Eigen::MatrixXd& b) {
  double worst = 0;
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      worst = std::max(worst, std::abs(a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - b(i, j)));
  return worst;
}

// Uniformly random tree: node t > 0 attaches to a random earlier node, then
// labels are shuffled so the root position varies.
inline b4g::depgraph::Heads random_tree(b4g::Rng& rng, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  b4g::depgraph::Heads heads(n, b4g::depgraph::kRoot);
  for (std::size_t t = 1; t < n; ++t) heads[perm[t]] = static_cast<int>(perm[rng.below(t)]);
  return heads;
}

inline b4g::depgraph::Heads chain_heads(std::size_t n) {
  b4g::depgraph::Heads heads(n);
  for (std::size_t t = 0; t < n; ++t) heads[t] = t + 1 < n ? static_cast<int>(t + 1) : b4g::depgraph::kRoot;
  return heads;
}

}  // namespace testing
