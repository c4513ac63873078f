#pragma once

#include <span>
#include <string>
#include <vector>

#include "autograd/tape.hpp"
#include "depgraph/depgraph.hpp"

namespace b4g::graphsup {

using depgraph::Adjacency;

// Requires 0 <= beta < alpha <= 1; configuration error otherwise.
void validate_thresholds(double alpha, double beta);

// Attention-threshold edge editing:
//   att >= alpha        -> 1
//   beta < att < alpha  -> A(i, j)
//   att <= beta         -> 0
// with the diagonal forced to 1. Row i lists the nodes that i aggregates
// from, so att(i, j) gates j's presence in i's neighbourhood; the result may
// be asymmetric.
Adjacency supplement(const Adjacency& original, const ag::Matrix& attention, double alpha, double beta);

struct EditCounts {
  std::size_t added = 0;
  std::size_t pruned = 0;
};
EditCounts count_edits(const Adjacency& before, const Adjacency& after);

struct SupplementedGraph {
  std::vector<Adjacency> per_layer;
  std::vector<EditCounts> edits;
  double alpha = 0.25;
  double beta = 0.01;
};

// One graph per attention matrix (attention layer l feeds GCN layer l). With
// use_attention_graph off, every layer gets the original adjacency unchanged.
SupplementedGraph build(const depgraph::DepGraph& graph, std::span<const ag::Matrix> attention, double alpha,
                        double beta, bool use_attention_graph);

// clip(x, w) = max(-w, min(w, x)).
inline int clip(int x, int w) { return x < -w ? -w : (x > w ? w : x); }

// Row of the relative position table for aggregating node i and neighbour j.
int position_index(int i, int j, int w);

// Shape contract of the relative position table: rows 0..2w map offsets -w..w.
struct PositionTable {
  int window = 0;
  int dim = 0;
  int rows() const { return 2 * window + 1; }
};

// TSV of added/pruned edges per layer: layer, encoder_layer, edit, i, j,
// token_i, token_j, attention.
std::string graph_diff_tsv(const depgraph::DepGraph& graph, const SupplementedGraph& supplemented,
                           std::span<const ag::Matrix> attention, std::span<const int> encoder_layers,
                           const std::vector<std::string>& tokens);

}  // namespace b4g::graphsup
