#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hanme/tensor.hpp"

namespace hanme {

using NodeId = std::int32_t;

// Directed relation key. Datasets store each relation in one canonical
// direction; the graph mirrors it so traversal works both ways.
struct Relation {
  std::string src;
  std::string rel;
  std::string dst;
  auto operator<=>(const Relation&) const = default;
};

// Sorted-unique neighbor lists in CSR form for one directed relation.
struct Adjacency {
  std::vector<std::int64_t> offsets;  // per-source, size = count(src)+1
  std::vector<NodeId> neighbors;

  std::size_t degree(NodeId v) const {
    return static_cast<std::size_t>(offsets[v + 1] - offsets[v]);
  }
  const NodeId* begin(NodeId v) const { return neighbors.data() + offsets[v]; }
  const NodeId* end(NodeId v) const { return neighbors.data() + offsets[v + 1]; }
};

// Heterogeneous graph: typed nodes with dense 0-based per-type IDs, typed
// bidirectional relations, per-type feature matrices, multi-hot labels over
// one labeled type, and disjoint train/val/test splits. Immutable once
// finalized (feature assignment is part of construction).
class HeteroGraph {
 public:
  std::vector<std::string> node_types;
  std::map<std::string, std::int64_t> node_counts;
  std::vector<Relation> relations;  // canonical direction, manifest order
  std::map<Relation, std::vector<std::pair<NodeId, NodeId>>> edges;  // file order
  std::map<std::string, Tensor> features;  // [count x dim], dim 0 = no features
  std::string labeled_type;
  std::int64_t num_classes = 0;
  Tensor labels;                // [count(labeled) x num_classes]
  std::vector<char> has_label;  // per labeled-type node
  std::vector<NodeId> train_ids, val_ids, test_ids;  // sorted ascending

  bool has_type(const std::string& t) const { return node_counts.count(t) != 0; }
  std::int64_t count(const std::string& t) const;
  std::size_t feature_dim(const std::string& t) const;

  // Validates invariants and builds bidirectional adjacency. Must be called
  // after edges/labels/splits are populated; load/generate do this.
  void finalize();

  // Adjacency for a directed relation; nullptr when absent.
  const Adjacency* adjacency(const std::string& src, const std::string& rel,
                             const std::string& dst) const;
  bool has_relation(const std::string& src, const std::string& rel,
                    const std::string& dst) const;

  // All directed relations incident to `src` (after mirroring).
  std::vector<Relation> relations_from(const std::string& src) const;

 private:
  std::map<Relation, Adjacency> adj_;
};

HeteroGraph load_graph(const std::string& dataset_dir);
void save_graph(const HeteroGraph& g, const std::string& dataset_dir);

// Gives every node of each target type the arithmetic mean of its 1-hop
// neighbors' feature rows, considering only neighbor types that had features
// before this call (no cascading). Nodes with no featured neighbor get the
// all-zeros row.
void assign_pooled_features(HeteroGraph& g, const std::vector<std::string>& target_types);

}  // namespace hanme
