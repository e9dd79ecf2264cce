#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "hanme/error.hpp"
#include "hanme/metapath.hpp"
#include "hanme/random.hpp"
#include "test_util.hpp"

using namespace hanme;

namespace {

HeteroGraph two_type_graph(std::int64_t movies, std::int64_t others,
                           const std::vector<std::pair<NodeId, NodeId>>& pairs,
                           const std::string& other = "director") {
  HeteroGraph g;
  g.node_types = {"movie", other};
  g.node_counts["movie"] = movies;
  g.node_counts[other] = others;
  g.relations.push_back({"movie", "r", other});
  g.edges[{"movie", "r", other}] = pairs;
  g.finalize();
  return g;
}

std::vector<std::vector<NodeId>> rows_of(const InstanceTable& t) {
  std::vector<std::vector<NodeId>> out;
  for (std::int64_t r = 0; r < t.num_instances(); ++r) {
    auto row = t.instance(r);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

}  // namespace

TEST_CASE("two movies sharing a director yield both walks from M0") {
  HeteroGraph g = two_type_graph(2, 1, {{0, 0}, {1, 0}});
  InstanceTable t = enumerate_instances(g, resolve_schema(g, {"movie", "director", "movie"}));

  CHECK(t.count_for(0) == 2);
  auto rows = rows_of(t);
  CHECK(rows[0] == std::vector<NodeId>{0, 0, 0});  // the self-return walk
  CHECK(rows[1] == std::vector<NodeId>{0, 0, 1});
}

TEST_CASE("star fixture produces four instances from the hub") {
  // M1 adjacent to A0 and A1; A0 also reaches M0, A1 also reaches M2.
  HeteroGraph g = two_type_graph(3, 2, {{1, 0}, {1, 1}, {0, 0}, {2, 1}}, "actor");
  InstanceTable t = enumerate_instances(g, resolve_schema(g, {"movie", "actor", "movie"}));

  CHECK(t.count_for(1) == 4);
  std::set<std::vector<NodeId>> from_m1;
  for (std::int64_t r = t.offsets[1]; r < t.offsets[2]; ++r) {
    auto row = t.instance(r);
    from_m1.insert({row.begin(), row.end()});
  }
  CHECK(from_m1 == std::set<std::vector<NodeId>>{
                       {1, 0, 0}, {1, 0, 1}, {1, 1, 1}, {1, 1, 2}});

  SUBCASE("terminal sets collapse duplicates") {
    CHECK(metapath_neighbors(t, 1) == std::vector<NodeId>{0, 1, 2});
  }
}

TEST_CASE("nodes without schema edges keep an empty entry") {
  HeteroGraph g = two_type_graph(3, 1, {{0, 0}, {1, 0}});
  InstanceTable t = enumerate_instances(g, resolve_schema(g, {"movie", "director", "movie"}));
  CHECK(t.num_sources == 3);
  CHECK(t.count_for(2) == 0);
  CHECK(metapath_neighbors(t, 2).empty());
}

TEST_CASE("a chain includes the self-return walk in the neighbor set") {
  HeteroGraph g = two_type_graph(2, 1, {{0, 0}, {1, 0}});
  InstanceTable t = enumerate_instances(g, resolve_schema(g, {"movie", "director", "movie"}));
  CHECK(metapath_neighbors(t, 0) == std::vector<NodeId>{0, 1});
}

TEST_CASE("instances are lexicographic and independent of edge file order") {
  std::vector<std::pair<NodeId, NodeId>> pairs = {{0, 2}, {3, 0}, {1, 1}, {0, 0},
                                                  {2, 1}, {3, 2}, {1, 0}};
  HeteroGraph g1 = two_type_graph(4, 3, pairs);
  std::reverse(pairs.begin(), pairs.end());
  HeteroGraph g2 = two_type_graph(4, 3, pairs);

  auto s = resolve_schema(g1, {"movie", "director", "movie"});
  InstanceTable t1 = enumerate_instances(g1, s);
  InstanceTable t2 = enumerate_instances(g2, s);
  CHECK(t1.nodes == t2.nodes);
  CHECK(t1.offsets == t2.offsets);

  auto rows = rows_of(t1);
  CHECK(std::is_sorted(rows.begin(), rows.end()));

  SUBCASE("two runs produce identical tables") {
    InstanceTable t3 = enumerate_instances(g1, s);
    CHECK(t1.nodes == t3.nodes);
    CHECK(t1.offsets == t3.offsets);
  }
}

TEST_CASE("unknown relation in the schema is a configuration error") {
  HeteroGraph g = two_type_graph(2, 1, {{0, 0}});
  MetapathSchema s;
  s.name = "bad";
  s.node_types = {"movie", "director", "movie"};
  s.relation_names = {"nope", "nope"};
  CHECK_THROWS_AS(enumerate_instances(g, s), ConfigError);
  CHECK_THROWS_AS(resolve_schema(g, {"movie", "movie"}), ConfigError);
}

TEST_CASE("per-source cap limits instance counts") {
  HeteroGraph g = two_type_graph(4, 2, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {0, 1}, {1, 1}});
  auto s = resolve_schema(g, {"movie", "director", "movie"});
  InstanceTable t = enumerate_instances(g, s, 3);
  for (NodeId v = 0; v < t.num_sources; ++v) CHECK(t.count_for(v) <= 3);
}

TEST_CASE("symmetric schemas give symmetric neighbor relations") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    RandomStream rng(100 + seed);
    const std::int64_t movies = 6 + static_cast<std::int64_t>(rng.index(10));
    const std::int64_t dirs = 3 + static_cast<std::int64_t>(rng.index(6));
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (NodeId u = 0; u < movies; ++u) {
      for (NodeId v = 0; v < dirs; ++v) {
        if (rng.bernoulli(0.25)) pairs.push_back({u, v});
      }
    }
    HeteroGraph g = two_type_graph(movies, dirs, pairs);
    InstanceTable t = enumerate_instances(g, resolve_schema(g, {"movie", "director", "movie"}));
    std::vector<std::set<NodeId>> nbr(movies);
    for (NodeId v = 0; v < movies; ++v) {
      auto n = metapath_neighbors(t, v);
      nbr[v] = {n.begin(), n.end()};
    }
    for (NodeId u = 0; u < movies; ++u) {
      for (NodeId v = 0; v < movies; ++v) {
        CHECK(nbr[u].count(v) == nbr[v].count(u));
      }
    }
  }
}

TEST_CASE("instance counts match the degree identity on random graphs") {
  // |instances rooted at v| = sum over middle nodes m adjacent to v of deg(m),
  // with degrees read straight off the raw edge list.
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    RandomStream rng(700 + seed);
    const std::int64_t movies = 5 + static_cast<std::int64_t>(rng.index(20));
    const std::int64_t dirs = 3 + static_cast<std::int64_t>(rng.index(12));
    std::set<std::pair<NodeId, NodeId>> pair_set;
    const std::size_t tries = static_cast<std::size_t>(movies * dirs) / 3;
    for (std::size_t i = 0; i < tries; ++i) {
      pair_set.insert({static_cast<NodeId>(rng.index(movies)), static_cast<NodeId>(rng.index(dirs))});
    }
    std::vector<std::pair<NodeId, NodeId>> pairs(pair_set.begin(), pair_set.end());
    HeteroGraph g = two_type_graph(movies, dirs, pairs);
    InstanceTable t = enumerate_instances(g, resolve_schema(g, {"movie", "director", "movie"}));

    std::map<NodeId, std::set<NodeId>> movie_to_dirs, dir_to_movies;
    for (auto [u, v] : pairs) {
      movie_to_dirs[u].insert(v);
      dir_to_movies[v].insert(u);
    }
    for (NodeId v = 0; v < movies; ++v) {
      std::int64_t expect = 0;
      for (NodeId m : movie_to_dirs[v]) {
        expect += static_cast<std::int64_t>(dir_to_movies[m].size());
      }
      CHECK(t.count_for(v) == expect);
    }
  }
}
