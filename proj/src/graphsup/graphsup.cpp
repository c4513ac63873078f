#include "graphsup/graphsup.hpp"

#include <sstream>

#include "common/error.hpp"

namespace b4g::graphsup {

void validate_thresholds(double alpha, double beta) {
  if (!(beta >= 0.0 && alpha <= 1.0 && beta < alpha))
    fail(ErrorKind::config, "thresholds need 0 <= beta < alpha <= 1, got alpha=" + std::to_string(alpha) +
                                " beta=" + std::to_string(beta));
}

Adjacency supplement(const Adjacency& original, const ag::Matrix& attention, double alpha, double beta) {
  validate_thresholds(alpha, beta);
  if (original.rows() != original.cols() || attention.rows() != original.rows() ||
      attention.cols() != original.cols())
    fail(ErrorKind::shape, "supplement: adjacency and attention must be the same square size");
  Adjacency out = original;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      if (i == j) {
        out(i, j) = 1;
      } else if (attention(i, j) >= alpha) {
        out(i, j) = 1;
      } else if (attention(i, j) <= beta) {
        out(i, j) = 0;
      }
    }
  }
  return out;
}

EditCounts count_edits(const Adjacency& before, const Adjacency& after) {
  EditCounts c;
  for (Eigen::Index i = 0; i < before.rows(); ++i) {
    for (Eigen::Index j = 0; j < before.cols(); ++j) {
      if (before(i, j) == 0 && after(i, j) != 0) ++c.added;
      if (before(i, j) != 0 && after(i, j) == 0) ++c.pruned;
    }
  }
  return c;
}

SupplementedGraph build(const depgraph::DepGraph& graph, std::span<const ag::Matrix> attention, double alpha,
                        double beta, bool use_attention_graph) {
  validate_thresholds(alpha, beta);
  SupplementedGraph out;
  out.alpha = alpha;
  out.beta = beta;
  for (const auto& att : attention) {
    if (use_attention_graph) {
      out.per_layer.push_back(supplement(graph.adjacency, att, alpha, beta));
    } else {
      out.per_layer.push_back(graph.adjacency);
    }
    out.edits.push_back(count_edits(graph.adjacency, out.per_layer.back()));
  }
  return out;
}

int position_index(int i, int j, int w) {
  if (w < 0) fail(ErrorKind::value, "position window must be non-negative");
  return clip(j - i, w) + w;
}

std::string graph_diff_tsv(const depgraph::DepGraph& graph, const SupplementedGraph& supplemented,
                           std::span<const ag::Matrix> attention, std::span<const int> encoder_layers,
                           const std::vector<std::string>& tokens) {
  std::ostringstream out;
  out << "layer\tencoder_layer\tedit\ti\tj\ttoken_i\ttoken_j\tattention\n";
  for (std::size_t l = 0; l < supplemented.per_layer.size(); ++l) {
    const auto& after = supplemented.per_layer[l];
    for (Eigen::Index i = 0; i < after.rows(); ++i) {
      for (Eigen::Index j = 0; j < after.cols(); ++j) {
        const bool before = graph.adjacency(i, j) != 0;
        const bool now = after(i, j) != 0;
        if (before == now) continue;
        out << (l + 1) << '\t' << (l < encoder_layers.size() ? encoder_layers[l] : 0) << '\t'
            << (now ? "added" : "pruned") << '\t' << i << '\t' << j << '\t'
            << tokens[static_cast<std::size_t>(i)] << '\t' << tokens[static_cast<std::size_t>(j)] << '\t'
            << (l < attention.size() ? attention[l](i, j) : 0.0) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace b4g::graphsup
