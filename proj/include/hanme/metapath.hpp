#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hanme/graph.hpp"

namespace hanme {

// Typed walk pattern: ordered node types joined by named relations.
struct MetapathSchema {
  std::string name;                            // e.g. "movie-director-movie"
  std::vector<std::string> node_types;         // length k+1, k >= 1
  std::vector<std::string> relation_names;     // length k

  std::size_t length() const { return node_types.empty() ? 0 : node_types.size() - 1; }
  void validate(const HeteroGraph& g) const;
};

// Resolves a bare type list against the graph: each consecutive pair must be
// joined by exactly one relation.
MetapathSchema resolve_schema(const HeteroGraph& g, const std::vector<std::string>& type_list);

// All instances of one schema, grouped by source node and stored flat:
// instance i occupies nodes[i*(k+1) .. (i+1)*(k+1)). Instances under one
// source are in lexicographic node-ID order, so the global row order is the
// canonical order used everywhere downstream.
struct InstanceTable {
  MetapathSchema schema;
  std::int64_t num_sources = 0;
  std::vector<std::int64_t> offsets;  // per source, size num_sources+1
  std::vector<NodeId> nodes;

  std::size_t width() const { return schema.node_types.size(); }
  std::int64_t num_instances() const {
    return static_cast<std::int64_t>(nodes.size() / width());
  }
  std::int64_t count_for(NodeId v) const { return offsets[v + 1] - offsets[v]; }
  std::span<const NodeId> instance(std::int64_t row) const {
    return {nodes.data() + row * static_cast<std::int64_t>(width()), width()};
  }
};

// Enumerates every walk realizing the schema (revisits and returns to the
// source included), grouped by source. `max_per_source` of 0 means unlimited.
InstanceTable enumerate_instances(const HeteroGraph& g, const MetapathSchema& schema,
                                  std::size_t max_per_source = 0);

// Sorted unique terminal node IDs over all instances rooted at v.
std::vector<NodeId> metapath_neighbors(const InstanceTable& table, NodeId v);

}  // namespace hanme
