#include <doctest.h>

#include <set>

#include "htn/network.hpp"
#include "htn/rng.hpp"

using namespace htn;

namespace {

// Independent oracle: vertex inflation of {5,4} by substitution on boundary
// tile types. E-tiles expose 2 free edges, C-tiles 3; one inflation maps
// E -> ECE and C -> ECECE (one new tile per free edge, one per single-tile
// boundary vertex), so the counts follow
//   E' = 2E + 3C,  C' = E + 2C,
// seeded by the central tile (5 free edges, 5 single-tile vertices).
struct GrowthOracle {
  long long tiles = 1;
  long long legs = 5;
  long long e = 0, c = 0;
  int layer = 0;

  void step() {
    long long ne, nc;
    if (layer == 0) {
      ne = 5;
      nc = 5;
    } else {
      ne = 2 * e + 3 * c;
      nc = e + 2 * c;
    }
    e = ne;
    c = nc;
    tiles += e + c;
    legs = 2 * e + 3 * c;
    ++layer;
  }
};

TilingNetwork grown(int layers) {
  TilingNetwork net = TilingNetwork::central();
  for (int i = 0; i < layers; ++i) net = inflate(net);
  return net;
}

}  // namespace

TEST_SUITE_BEGIN("network");

TEST_CASE("growth matches the substitution oracle exactly") {
  TilingNetwork net = TilingNetwork::central();
  GrowthOracle oracle;
  CHECK(net.tile_count() == oracle.tiles);
  CHECK(net.boundary_leg_count() == oracle.legs);
  for (int layer = 1; layer <= 6; ++layer) {
    net = inflate(net);
    oracle.step();
    CHECK(net.layer_count() == layer);
    CHECK(net.tile_count() == oracle.tiles);
    CHECK(net.boundary_leg_count() == oracle.legs);
  }
}

TEST_CASE("boundary growth ratio approaches 2 + sqrt(3)") {
  TilingNetwork net = TilingNetwork::central();
  double ratio = 0;
  int prev = net.boundary_leg_count();
  for (int layer = 1; layer <= 6; ++layer) {
    net = inflate(net);
    ratio = static_cast<double>(net.boundary_leg_count()) / prev;
    prev = net.boundary_leg_count();
  }
  CHECK(std::abs(ratio - (2.0 + std::sqrt(3.0))) < 0.05);
}

TEST_CASE("closed vertices have exactly four tiles") {
  for (int layers : {1, 2, 3}) {
    TilingNetwork net = grown(layers);
    CHECK(net.interior_vertices_closed());
  }
}

TEST_CASE("adjacency is symmetric and slots are consistent") {
  TilingNetwork net = grown(2);
  for (int t = 0; t < net.tile_count(); ++t)
    for (int s = 0; s < 5; ++s) {
      int nt = net.tile(t).neighbor_tile[s];
      if (nt == -1) {
        CHECK(net.tile(t).boundary_leg[s] >= 0);
        continue;
      }
      int ns = net.tile(t).neighbor_slot[s];
      CHECK(net.tile(nt).neighbor_tile[ns] == t);
      CHECK(net.tile(nt).neighbor_slot[ns] == s);
    }
  // boundary legs map back to their locations
  for (int leg = 0; leg < net.boundary_leg_count(); ++leg) {
    auto [t, s] = net.leg_location(leg);
    CHECK(net.tile(t).boundary_leg[s] == leg);
  }
}

TEST_CASE("paths on the central tile") {
  TilingNetwork net = TilingNetwork::central();
  // legs are the five slots; non-adjacent pairs connect through the tile
  auto p = find_path(net, 0, 2);
  REQUIRE(p.has_value());
  CHECK(p->tiles.size() == 1);
  CHECK(p->geodesic);
  CHECK_FALSE(find_path(net, 0, 1).has_value());  // adjacent slots
  CHECK_THROWS_AS((void)find_path(net, 3, 3), Error);
}

TEST_CASE("path uniqueness holds exhaustively through 3 layers") {
  for (int layers : {1, 2, 3}) {
    TilingNetwork net = grown(layers);
    int n = net.boundary_leg_count();
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        auto all = find_all_paths(net, a, b);
        if (all.size() > 1) {
          CAPTURE(layers);
          CAPTURE(a);
          CAPTURE(b);
          REQUIRE(all.size() <= 1);
        }
      }
  }
}

TEST_CASE("path descriptors are structurally sound") {
  TilingNetwork net = grown(2);
  int n = net.boundary_leg_count();
  int found = 0, geodesics = 0;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      auto p = find_path(net, a, b);
      if (!p) continue;
      ++found;
      geodesics += p->geodesic;
      REQUIRE(p->tiles.size() == p->through_slots.size());
      std::set<int> seen;
      for (std::size_t i = 0; i < p->tiles.size(); ++i) {
        CHECK(seen.insert(p->tiles[i]).second);  // simple path
        auto [in, out] = p->through_slots[i];
        int diff = ((out - in) % 5 + 5) % 5;
        CHECK((diff == 2 || diff == 3));  // non-adjacent slots
        if (i + 1 < p->tiles.size()) {
          CHECK(net.tile(p->tiles[i]).neighbor_tile[out] == p->tiles[i + 1]);
          CHECK(net.tile(p->tiles[i]).neighbor_slot[out] == p->through_slots[i + 1].first);
        }
      }
      CHECK(p->boundary_arc == net.boundary_arc_distance(a, b));
    }
  CHECK(found > 0);
  CHECK(geodesics > 0);
}

TEST_CASE("no boundary-leg triple is pairwise connected") {
  for (int layers : {2, 3}) {
    TriangleCheck check = no_triangle_check(grown(layers));
    CHECK(check.pass);
    CHECK(check.triples_checked > 0);
  }
  // single tile: no triple of pairwise non-adjacent slots exists on a pentagon
  TriangleCheck central = no_triangle_check(TilingNetwork::central());
  CHECK(central.pass);
}

TEST_CASE("reduction schedule: two marks joined by a path") {
  TilingNetwork net = grown(2);
  int n = net.boundary_leg_count();
  int tested = 0;
  for (int a = 0; a < n && tested < 8; ++a)
    for (int b = a + 1; b < n && tested < 8; ++b) {
      auto p = find_path(net, a, b);
      if (!p) continue;
      ++tested;
      ReductionResult r = reduce_schedule(net, {a, b});
      CHECK(r.classification == ResidualClass::single_path);
      std::set<int> residual(r.core.begin(), r.core.end());
      std::set<int> path_tiles(p->tiles.begin(), p->tiles.end());
      CHECK(residual == path_tiles);
      // audit: every scheduled tile had a fully resolved 3-window recorded
      CHECK(r.schedule.size() + r.residual.size() == static_cast<std::size_t>(net.tile_count()));
      for (const auto& entry : r.schedule) CHECK(entry.window >= 0);
    }
  CHECK(tested == 8);
}

TEST_CASE("reduction schedule: two marks with no path reduce away") {
  TilingNetwork net = grown(2);
  int n = net.boundary_leg_count();
  int tested = 0;
  for (int a = 0; a < n && tested < 8; ++a)
    for (int b = a + 1; b < n && tested < 8; ++b) {
      if (find_path(net, a, b)) continue;
      ++tested;
      ReductionResult r = reduce_schedule(net, {a, b});
      CHECK(r.classification == ResidualClass::empty);
      CHECK(r.core.empty());
    }
  CHECK(tested == 8);
}

TEST_CASE("reduction schedule: three marks give a path plus branch") {
  TilingNetwork net = grown(3);
  int n = net.boundary_leg_count();
  // find a path pair, then a third leg connected to a tile on that path
  int found = 0;
  for (int a = 0; a < n && found < 3; a += 7) {
    for (int b = a + 5; b < n && found < 3; b += 7) {
      auto p = find_path(net, a, b);
      if (!p || p->tiles.size() < 3) continue;
      for (int c = 0; c < n && found < 3; ++c) {
        if (c == a || c == b) continue;
        auto q = find_path(net, a, c);
        auto q2 = find_path(net, b, c);
        if (q || q2) continue;  // theorem forbids using a triple with two paths
        ReductionResult r = reduce_schedule(net, {a, b, c});
        if (r.classification != ResidualClass::path_plus_branch) continue;
        ++found;
        CHECK(r.branch_tile >= 0);
        std::set<int> path_tiles(p->tiles.begin(), p->tiles.end());
        CHECK(path_tiles.count(r.branch_tile) == 1);
      }
    }
  }
  CHECK(found == 3);
}

TEST_CASE("schedule audit replay") {
  TilingNetwork net = grown(2);
  ReductionResult r = reduce_schedule(net, {0, net.boundary_leg_count() / 3});
  // replay: at removal time each scheduled tile's window must have been
  // resolved (boundary-free or a previously removed neighbor)
  std::set<int> removed;
  for (const auto& entry : r.schedule) {
    for (int k = 0; k < 3; ++k) {
      int slot = (entry.window + k) % 5;
      int nt = net.tile(entry.tile).neighbor_tile[slot];
      bool resolved = nt == -1 ? true : removed.count(nt) > 0;
      CHECK(resolved);
    }
    removed.insert(entry.tile);
  }
}

TEST_CASE("reduce_schedule validates marks") {
  TilingNetwork net = grown(1);
  CHECK_THROWS_AS((void)reduce_schedule(net, {}), Error);
  CHECK_THROWS_AS((void)reduce_schedule(net, {1, 1}), Error);
}

TEST_CASE("network serialization") {
  TilingNetwork net = grown(2);
  nlohmann::json j = net.to_json();
  CHECK(j["layers"] == 2);
  CHECK(j["tiles"].size() == static_cast<std::size_t>(net.tile_count()));
  CHECK(j["boundary_legs"].size() == static_cast<std::size_t>(net.boundary_leg_count()));
  std::string dot = net.to_graphviz();
  CHECK(dot.find("graph tiling") != std::string::npos);
  CHECK(dot.find("t0 -- ") != std::string::npos);
}

TEST_SUITE_END();
