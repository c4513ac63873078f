#include <numeric>

#include "common/error.hpp"
#include "common/util.hpp"
#include "corpus/corpus.hpp"

namespace b4g::corpus {

FoldPlan make_folds(std::size_t count, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::config, "fold count k must be at least 2, got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > count)
    fail(ErrorKind::config, "fold count k=" + std::to_string(k) + " exceeds " +
                                std::to_string(count) + " instances");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(count, 0);
  for (std::size_t pos = 0; pos < count; ++pos)
    plan.assignments[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  return plan;
}

std::vector<std::size_t> FoldPlan::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(k), 0);
  for (int a : assignments) ++out[static_cast<std::size_t>(a)];
  return out;
}

}  // namespace b4g::corpus
