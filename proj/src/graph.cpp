#include "hanme/graph.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hanme/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hanme {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::int64_t parse_int(const std::string& s, const std::string& context) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(context + ": not an integer: '" + s + "'");
  }
  return v;
}

// Reads a CSV file into rows of fields, stripping a trailing '\r' if the
// file came from a CRLF writer. First row is the header.
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing file: " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.eof()) break;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw FormatError("empty file: " + path.string());
  return rows;
}

std::string edge_file_name(const Relation& r) {
  return "edges_" + r.src + "_" + r.rel + "_" + r.dst + ".csv";
}

}  // namespace

std::int64_t HeteroGraph::count(const std::string& t) const {
  auto it = node_counts.find(t);
  if (it == node_counts.end()) throw ConfigError("unknown node type: " + t);
  return it->second;
}

std::size_t HeteroGraph::feature_dim(const std::string& t) const {
  auto it = features.find(t);
  if (it == features.end() || it->second.ndim() < 2) return 0;
  return it->second.shape()[1];
}

const Adjacency* HeteroGraph::adjacency(const std::string& src, const std::string& rel,
                                        const std::string& dst) const {
  auto it = adj_.find(Relation{src, rel, dst});
  return it == adj_.end() ? nullptr : &it->second;
}

bool HeteroGraph::has_relation(const std::string& src, const std::string& rel,
                               const std::string& dst) const {
  return adj_.count(Relation{src, rel, dst}) != 0;
}

std::vector<Relation> HeteroGraph::relations_from(const std::string& src) const {
  std::vector<Relation> out;
  for (const auto& [key, csr] : adj_) {
    (void)csr;
    if (key.src == src) out.push_back(key);
  }
  return out;
}

void HeteroGraph::finalize() {
  for (const auto& t : node_types) {
    if (!node_counts.count(t)) throw IntegrityError("no count for type " + t);
  }
  // Collect directed pairs per relation direction, then sort and dedupe.
  // Relations with no edges still get (empty) adjacency.
  std::map<Relation, std::vector<std::pair<NodeId, NodeId>>> directed;
  for (const auto& [key, pairs] : edges) {
    if (!node_counts.count(key.src) || !node_counts.count(key.dst)) {
      throw IntegrityError("relation " + key.src + "-" + key.rel + "-" + key.dst +
                           " references unknown node type");
    }
    const std::int64_t nsrc = node_counts.at(key.src);
    const std::int64_t ndst = node_counts.at(key.dst);
    Relation rev{key.dst, key.rel, key.src};
    directed[key];
    directed[rev];
    for (auto [u, v] : pairs) {
      if (u < 0 || u >= nsrc || v < 0 || v >= ndst) {
        throw IntegrityError("edge (" + key.src + " " + std::to_string(u) + ", " + key.dst +
                             " " + std::to_string(v) + ") endpoint out of range under relation " +
                             key.rel);
      }
      directed[key].push_back({u, v});
      directed[rev].push_back({v, u});
    }
  }
  adj_.clear();
  for (auto& [key, pairs] : directed) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    Adjacency csr;
    const std::int64_t n = node_counts.at(key.src);
    csr.offsets.assign(n + 1, 0);
    for (auto [u, v] : pairs) {
      (void)v;
      csr.offsets[u + 1]++;
    }
    for (std::int64_t i = 0; i < n; ++i) csr.offsets[i + 1] += csr.offsets[i];
    csr.neighbors.resize(pairs.size());
    std::vector<std::int64_t> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
    for (auto [u, v] : pairs) csr.neighbors[cursor[u]++] = v;
    adj_[key] = std::move(csr);
  }

  if (!labeled_type.empty()) {
    const std::int64_t n = node_counts.at(labeled_type);
    if (static_cast<std::int64_t>(labels.rows()) != n ||
        static_cast<std::int64_t>(labels.cols()) != num_classes) {
      throw IntegrityError("label matrix shape does not match labeled type");
    }
    std::vector<char> seen(n, 0);
    auto check_split = [&](const std::vector<NodeId>& ids, const char* name) {
      for (NodeId v : ids) {
        if (v < 0 || v >= n) {
          throw IntegrityError(std::string("split ") + name + " references " + labeled_type +
                               " id " + std::to_string(v) + " out of range");
        }
        if (seen[v]) {
          throw IntegrityError("node " + std::to_string(v) + " appears in more than one split");
        }
        if (has_label.empty() || !has_label[v]) {
          throw IntegrityError("split member " + std::to_string(v) + " has no label row");
        }
        seen[v] = 1;
      }
    };
    check_split(train_ids, "train");
    check_split(val_ids, "val");
    check_split(test_ids, "test");
  }
}

// ---------------------------------------------------------------- loading --

HeteroGraph load_graph(const std::string& dataset_dir) {
  const fs::path dir(dataset_dir);
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw FormatError("missing file: " + manifest_path.string());

  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }

  HeteroGraph g;
  try {
    g.node_types = manifest.at("node_types").get<std::vector<std::string>>();
    g.labeled_type = manifest.at("labeled_type").get<std::string>();
    g.num_classes = manifest.at("num_classes").get<std::int64_t>();
    for (const auto& r : manifest.at("relations")) {
      g.relations.push_back(Relation{r.at("src").get<std::string>(),
                                     r.at("rel").get<std::string>(),
                                     r.at("dst").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  std::map<std::string, std::int64_t> dims;
  for (const auto& t : g.node_types) {
    dims[t] = manifest.at("feature_dims").value(t, std::int64_t{0});
  }

  // nodes_<type>.csv assigns dense IDs in row order and carries features.
  for (const auto& t : g.node_types) {
    const fs::path p = dir / ("nodes_" + t + ".csv");
    auto rows = read_csv(p);
    const std::int64_t dim = dims[t];
    const std::size_t want_cols = 1 + static_cast<std::size_t>(dim);
    if (rows[0].size() != want_cols || rows[0][0] != "id") {
      throw FormatError(p.string() + ": bad header (want id plus " + std::to_string(dim) +
                        " feature columns)");
    }
    const std::int64_t n = static_cast<std::int64_t>(rows.size()) - 1;
    g.node_counts[t] = n;
    Tensor feats({static_cast<std::size_t>(n), static_cast<std::size_t>(dim)});
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& row = rows[i + 1];
      if (row.size() != want_cols) {
        throw FormatError(p.string() + ": row " + std::to_string(i + 2) + " has " +
                          std::to_string(row.size()) + " columns, want " +
                          std::to_string(want_cols));
      }
      if (parse_int(row[0], p.string()) != i) {
        throw FormatError(p.string() + ": row " + std::to_string(i + 2) +
                          ": ids must be dense and in order (got " + row[0] + ", want " +
                          std::to_string(i) + ")");
      }
      for (std::int64_t c = 0; c < dim; ++c) {
        feats.at(i, c) = parse_double(row[1 + c]);
      }
    }
    g.features[t] = std::move(feats);
  }

  for (const auto& rel : g.relations) {
    const fs::path p = dir / edge_file_name(rel);
    auto rows = read_csv(p);
    if (rows[0].size() != 2 || rows[0][0] != "src" || rows[0][1] != "dst") {
      throw FormatError(p.string() + ": bad header (want src,dst)");
    }
    const std::int64_t nsrc = g.node_counts.at(rel.src);
    const std::int64_t ndst = g.node_counts.at(rel.dst);
    auto& pairs = g.edges[rel];
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 2) {
        throw FormatError(p.string() + ": row " + std::to_string(i + 1) + ": want 2 columns");
      }
      const std::int64_t u = parse_int(rows[i][0], p.string());
      const std::int64_t v = parse_int(rows[i][1], p.string());
      if (u < 0 || u >= nsrc || v < 0 || v >= ndst) {
        throw IntegrityError(p.string() + ": row " + std::to_string(i + 1) + ": edge (" +
                             rel.src + " " + std::to_string(u) + ", " + rel.dst + " " +
                             std::to_string(v) + ") has an endpoint out of range (" + rel.src +
                             " count " + std::to_string(nsrc) + ", " + rel.dst + " count " +
                             std::to_string(ndst) + ")");
      }
      pairs.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
    }
  }

  {
    const fs::path p = dir / "labels.csv";
    auto rows = read_csv(p);
    const std::size_t want_cols = 1 + static_cast<std::size_t>(g.num_classes);
    if (rows[0].size() != want_cols || rows[0][0] != "id") {
      throw FormatError(p.string() + ": bad header (want id plus " +
                        std::to_string(g.num_classes) + " label columns)");
    }
    const std::int64_t n = g.node_counts.at(g.labeled_type);
    g.labels = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(g.num_classes)});
    g.has_label.assign(n, 0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const std::int64_t id = parse_int(rows[i][0], p.string());
      if (id < 0 || id >= n) {
        throw IntegrityError(p.string() + ": row " + std::to_string(i + 1) + ": " +
                             g.labeled_type + " id " + std::to_string(id) + " out of range");
      }
      if (rows[i].size() != want_cols) {
        throw FormatError(p.string() + ": row " + std::to_string(i + 1) + ": want " +
                          std::to_string(want_cols) + " columns");
      }
      for (std::int64_t c = 0; c < g.num_classes; ++c) {
        const std::int64_t y = parse_int(rows[i][1 + c], p.string());
        if (y != 0 && y != 1) {
          throw FormatError(p.string() + ": row " + std::to_string(i + 1) +
                            ": labels must be 0 or 1");
        }
        g.labels.at(id, c) = static_cast<double>(y);
      }
      g.has_label[id] = 1;
    }
  }

  {
    const fs::path p = dir / "splits.csv";
    auto rows = read_csv(p);
    if (rows[0].size() != 2 || rows[0][0] != "id" || rows[0][1] != "split") {
      throw FormatError(p.string() + ": bad header (want id,split)");
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const std::int64_t id = parse_int(rows[i][0], p.string());
      const std::string& which = rows[i][1];
      if (which == "train") g.train_ids.push_back(static_cast<NodeId>(id));
      else if (which == "val") g.val_ids.push_back(static_cast<NodeId>(id));
      else if (which == "test") g.test_ids.push_back(static_cast<NodeId>(id));
      else throw FormatError(p.string() + ": row " + std::to_string(i + 1) +
                             ": unknown split '" + which + "'");
    }
    std::sort(g.train_ids.begin(), g.train_ids.end());
    std::sort(g.val_ids.begin(), g.val_ids.end());
    std::sort(g.test_ids.begin(), g.test_ids.end());
    auto dup = [](const std::vector<NodeId>& v) {
      return std::adjacent_find(v.begin(), v.end()) != v.end();
    };
    if (dup(g.train_ids) || dup(g.val_ids) || dup(g.test_ids)) {
      throw IntegrityError(p.string() + ": duplicate id within a split");
    }
  }

  g.finalize();
  return g;
}

// ----------------------------------------------------------------- saving --

void save_graph(const HeteroGraph& g, const std::string& dataset_dir) {
  const fs::path dir(dataset_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto open = [&](const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  };

  {
    json manifest;
    manifest["node_types"] = g.node_types;
    json dims = json::object();
    for (const auto& t : g.node_types) {
      auto it = g.features.find(t);
      dims[t] = it == g.features.end() ? 0 : static_cast<std::int64_t>(it->second.cols());
    }
    manifest["feature_dims"] = dims;
    json rels = json::array();
    for (const auto& r : g.relations) {
      rels.push_back({{"src", r.src}, {"rel", r.rel}, {"dst", r.dst}});
    }
    manifest["relations"] = rels;
    manifest["labeled_type"] = g.labeled_type;
    manifest["num_classes"] = g.num_classes;
    auto out = open(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
  }

  for (const auto& t : g.node_types) {
    auto out = open(dir / ("nodes_" + t + ".csv"));
    const Tensor& feats = g.features.at(t);
    const std::size_t dim = feats.ndim() >= 2 ? feats.shape()[1] : 0;
    out << "id";
    for (std::size_t c = 0; c < dim; ++c) out << ",f" << c;
    out << "\n";
    const std::int64_t n = g.node_counts.at(t);
    for (std::int64_t i = 0; i < n; ++i) {
      out << i;
      for (std::size_t c = 0; c < dim; ++c) out << "," << format_double(feats.at(i, c));
      out << "\n";
    }
  }

  for (const auto& r : g.relations) {
    auto out = open(dir / edge_file_name(r));
    out << "src,dst\n";
    auto it = g.edges.find(r);
    if (it != g.edges.end()) {
      for (auto [u, v] : it->second) out << u << "," << v << "\n";
    }
  }

  {
    auto out = open(dir / "labels.csv");
    out << "id";
    for (std::int64_t c = 0; c < g.num_classes; ++c) out << ",y" << c;
    out << "\n";
    const std::int64_t n = g.node_counts.at(g.labeled_type);
    for (std::int64_t i = 0; i < n; ++i) {
      if (!g.has_label[i]) continue;
      out << i;
      for (std::int64_t c = 0; c < g.num_classes; ++c) {
        out << "," << static_cast<int>(g.labels.at(i, c));
      }
      out << "\n";
    }
  }

  {
    auto out = open(dir / "splits.csv");
    out << "id,split\n";
    for (NodeId v : g.train_ids) out << v << ",train\n";
    for (NodeId v : g.val_ids) out << v << ",val\n";
    for (NodeId v : g.test_ids) out << v << ",test\n";
  }
}

// ---------------------------------------------------------------- pooling --

void assign_pooled_features(HeteroGraph& g, const std::vector<std::string>& target_types) {
  // Snapshot which types are featured now; targets pool only from these, so
  // one target never sees another target's freshly pooled rows.
  std::map<std::string, Tensor> snapshot;
  for (const auto& [t, feats] : g.features) {
    if (feats.ndim() >= 2 && feats.shape()[1] > 0) snapshot[t] = feats;
  }

  std::map<std::string, Tensor> pending;
  for (const auto& target : target_types) {
    if (!g.has_type(target)) throw ConfigError("pooling target: unknown node type " + target);

    std::size_t dim = 0;
    std::vector<Relation> featured_rels;
    for (const auto& rel : g.relations_from(target)) {
      auto it = snapshot.find(rel.dst);
      if (it == snapshot.end() || rel.dst == target) continue;
      const std::size_t d = it->second.cols();
      if (dim == 0) dim = d;
      if (d != dim) {
        throw DimensionError("pooling " + target + ": neighbor feature dims disagree (" +
                             std::to_string(dim) + " vs " + std::to_string(d) + ")");
      }
      featured_rels.push_back(rel);
    }
    if (featured_rels.empty()) {
      throw ConfigError("pooling " + target + ": no relation to a featured type");
    }

    const std::int64_t n = g.node_counts.at(target);
    Tensor out({static_cast<std::size_t>(n), dim});
    for (std::int64_t v = 0; v < n; ++v) {
      std::size_t total = 0;
      for (const auto& rel : featured_rels) {
        const Adjacency* csr = g.adjacency(rel.src, rel.rel, rel.dst);
        const Tensor& nf = snapshot.at(rel.dst);
        for (const NodeId* p = csr->begin(v); p != csr->end(v); ++p) {
          for (std::size_t c = 0; c < dim; ++c) out.at(v, c) += nf.at(*p, c);
          ++total;
        }
      }
      if (total > 0) {
        for (std::size_t c = 0; c < dim; ++c) out.at(v, c) /= static_cast<double>(total);
      }
      // zero featured neighbors: row stays all-zeros
    }
    pending[target] = std::move(out);
  }
  for (auto& [t, feats] : pending) g.features[t] = std::move(feats);
}

}  // namespace hanme
