#include "hanme/metapath.hpp"

#include <algorithm>

#include "hanme/error.hpp"

namespace hanme {

void MetapathSchema::validate(const HeteroGraph& g) const {
  if (node_types.size() < 2) {
    throw ConfigError("metapath '" + name + "': needs at least two node types");
  }
  if (relation_names.size() + 1 != node_types.size()) {
    throw ConfigError("metapath '" + name + "': relation count must be type count - 1");
  }
  for (const auto& t : node_types) {
    if (!g.has_type(t)) throw ConfigError("metapath '" + name + "': unknown node type " + t);
  }
  for (std::size_t i = 0; i < relation_names.size(); ++i) {
    if (!g.has_relation(node_types[i], relation_names[i], node_types[i + 1])) {
      throw ConfigError("metapath '" + name + "': relation " + node_types[i] + "-" +
                        relation_names[i] + "-" + node_types[i + 1] + " not in graph");
    }
  }
}

MetapathSchema resolve_schema(const HeteroGraph& g, const std::vector<std::string>& type_list) {
  MetapathSchema schema;
  schema.node_types = type_list;
  for (std::size_t i = 0; i + 1 < type_list.size(); ++i) {
    std::vector<std::string> candidates;
    for (const auto& rel : g.relations_from(type_list[i])) {
      if (rel.dst == type_list[i + 1]) candidates.push_back(rel.rel);
    }
    if (candidates.empty()) {
      throw ConfigError("no relation joins " + type_list[i] + " and " + type_list[i + 1]);
    }
    if (candidates.size() > 1) {
      std::string msg = "ambiguous relation between " + type_list[i] + " and " +
                        type_list[i + 1] + ":";
      for (const auto& c : candidates) msg += " " + c;
      throw ConfigError(msg);
    }
    schema.relation_names.push_back(candidates[0]);
  }
  for (std::size_t i = 0; i < type_list.size(); ++i) {
    if (i) schema.name += "-";
    schema.name += type_list[i];
  }
  schema.validate(g);
  return schema;
}

InstanceTable enumerate_instances(const HeteroGraph& g, const MetapathSchema& schema,
                                  std::size_t max_per_source) {
  schema.validate(g);
  const std::size_t k = schema.length();

  std::vector<const Adjacency*> hop(k);
  for (std::size_t i = 0; i < k; ++i) {
    hop[i] = g.adjacency(schema.node_types[i], schema.relation_names[i],
                         schema.node_types[i + 1]);
  }

  InstanceTable table;
  table.schema = schema;
  table.num_sources = g.count(schema.node_types[0]);
  table.offsets.assign(table.num_sources + 1, 0);

  // DFS over per-relation CSR adjacency; neighbor lists are sorted, so the
  // emission order per source is lexicographic by node-ID sequence.
  std::vector<NodeId> walk(k + 1);
  std::size_t emitted_for_source = 0;
  bool capped = false;

  auto dfs = [&](auto&& self, std::size_t depth) -> void {
    if (capped) return;
    if (depth == k) {
      if (max_per_source && emitted_for_source >= max_per_source) {
        capped = true;
        return;
      }
      table.nodes.insert(table.nodes.end(), walk.begin(), walk.end());
      ++emitted_for_source;
      return;
    }
    const Adjacency* csr = hop[depth];
    const NodeId u = walk[depth];
    for (const NodeId* p = csr->begin(u); p != csr->end(u); ++p) {
      walk[depth + 1] = *p;
      self(self, depth + 1);
      if (capped) return;
    }
  };

  for (NodeId v = 0; v < table.num_sources; ++v) {
    emitted_for_source = 0;
    capped = false;
    walk[0] = v;
    dfs(dfs, 0);
    table.offsets[v + 1] =
        static_cast<std::int64_t>(table.nodes.size() / table.width());
  }
  return table;
}

std::vector<NodeId> metapath_neighbors(const InstanceTable& table, NodeId v) {
  if (v < 0 || v >= table.num_sources) {
    throw ConfigError("metapath_neighbors: source id " + std::to_string(v) + " out of range");
  }
  std::vector<NodeId> out;
  const std::size_t w = table.width();
  for (std::int64_t row = table.offsets[v]; row < table.offsets[v + 1]; ++row) {
    out.push_back(table.nodes[row * w + (w - 1)]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace hanme
