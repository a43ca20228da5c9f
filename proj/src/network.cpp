#include "htn/network.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "htn/rng.hpp"

namespace htn {

namespace {
inline int mod5(int x) { return ((x % 5) + 5) % 5; }
}

// ------------------------------ construction --------------------------------

int TilingNetwork::new_vertex() {
  vertex_parent_.push_back(static_cast<int>(vertex_parent_.size()));
  vertex_tiles_.emplace_back();
  vertex_alive_.push_back(true);
  return static_cast<int>(vertex_parent_.size()) - 1;
}

int TilingNetwork::find_vertex(int v) {
  while (vertex_parent_[v] != v) {
    vertex_parent_[v] = vertex_parent_[vertex_parent_[v]];
    v = vertex_parent_[v];
  }
  return v;
}

void TilingNetwork::merge_vertices(int a, int b) {
  a = find_vertex(a);
  b = find_vertex(b);
  if (a == b) return;
  if (b < a) std::swap(a, b);
  vertex_parent_[b] = a;
  vertex_alive_[b] = false;
  for (int t : vertex_tiles_[b])
    if (std::find(vertex_tiles_[a].begin(), vertex_tiles_[a].end(), t) ==
        vertex_tiles_[a].end())
      vertex_tiles_[a].push_back(t);
  vertex_tiles_[b].clear();
}

void TilingNetwork::add_vertex_tile(int v, int t) {
  v = find_vertex(v);
  if (std::find(vertex_tiles_[v].begin(), vertex_tiles_[v].end(), t) == vertex_tiles_[v].end())
    vertex_tiles_[v].push_back(t);
}

int TilingNetwork::new_tile(int layer) {
  Tile t;
  t.layer = layer;
  tiles_.push_back(t);
  return static_cast<int>(tiles_.size()) - 1;
}

void TilingNetwork::glue(int ta, int sa, int tb, int sb) {
  Tile& a = tiles_[ta];
  Tile& b = tiles_[tb];
  if (a.neighbor_tile[sa] != -1 || b.neighbor_tile[sb] != -1)
    throw Error(ErrorKind::integrity, "edge already glued");
  a.neighbor_tile[sa] = tb;
  a.neighbor_slot[sa] = sb;
  b.neighbor_tile[sb] = ta;
  b.neighbor_slot[sb] = sa;
  a.boundary_leg[sa] = -1;
  b.boundary_leg[sb] = -1;
  // Shared edge is traversed in opposite directions: A's edge sa runs
  // corner[sa-1] -> corner[sa], B's edge sb runs corner[sb-1] -> corner[sb],
  // so corner[sa-1] == corner[sb] and corner[sa] == corner[sb-1].
  auto link = [&](int& ca, int& cb) {
    if (ca == -1 && cb == -1) {
      int v = new_vertex();
      ca = cb = v;
    } else if (ca == -1) {
      ca = cb;
    } else if (cb == -1) {
      cb = ca;
    } else {
      merge_vertices(ca, cb);
    }
  };
  link(a.corner[mod5(sa - 1)], b.corner[sb]);
  link(a.corner[sa], b.corner[mod5(sb - 1)]);
  // corner sets may have changed roots; re-register incident tiles
  for (int c : {mod5(sa - 1), sa}) add_vertex_tile(a.corner[c], ta);
  for (int c : {mod5(sb - 1), sb}) add_vertex_tile(b.corner[c], tb);
}

TilingNetwork TilingNetwork::central() {
  TilingNetwork net;
  int t = net.new_tile(0);
  for (int c = 0; c < 5; ++c) {
    net.tiles_[t].corner[c] = net.new_vertex();
    net.add_vertex_tile(net.tiles_[t].corner[c], t);
  }
  net.layers_ = 0;
  net.rebuild_boundary();
  return net;
}

void TilingNetwork::rebuild_boundary() {
  boundary_.clear();
  // canonicalize corner ids first
  for (auto& t : tiles_)
    for (int c = 0; c < 5; ++c)
      if (t.corner[c] != -1) t.corner[c] = find_vertex(t.corner[c]);

  int t0 = -1, s0 = -1;
  for (int t = 0; t < tile_count() && t0 == -1; ++t)
    for (int s = 0; s < 5; ++s)
      if (tiles_[t].neighbor_tile[s] == -1) {
        t0 = t;
        s0 = s;
        break;
      }
  if (t0 == -1) throw Error(ErrorKind::integrity, "network has no boundary");

  int t = t0, s = s0;
  do {
    tiles_[t].boundary_leg[s] = static_cast<int>(boundary_.size());
    boundary_.emplace_back(t, s);
    // rotate around the ccw-end vertex of edge s until the next free edge
    int ct = t, cs = mod5(s + 1);
    while (tiles_[ct].neighbor_tile[cs] != -1) {
      int nt = tiles_[ct].neighbor_tile[cs];
      int ns = tiles_[ct].neighbor_slot[cs];
      ct = nt;
      cs = mod5(ns + 1);
    }
    t = ct;
    s = cs;
  } while (!(t == t0 && s == s0));

  // every free edge must be on the single boundary cycle
  int free_edges = 0;
  for (const auto& tile : tiles_)
    for (int e = 0; e < 5; ++e)
      if (tile.neighbor_tile[e] == -1) ++free_edges;
  if (free_edges != static_cast<int>(boundary_.size()))
    throw Error(ErrorKind::integrity, "boundary walk missed free edges");
}

TilingNetwork inflate(const TilingNetwork& input) {
  TilingNetwork net = input;
  const int layer = net.layers_ + 1;
  const std::vector<std::pair<int, int>> old_boundary = net.boundary_;

  // pass 1: one tile per free boundary edge
  for (auto [t, s] : old_boundary) {
    int p = net.new_tile(layer);
    net.glue(t, s, p, 0);
  }

  // fixpoint: close 4-tile vertices by gluing their two exposed edges, then
  // close 3-tile vertices with a new tile; repeat until stable.
  auto corner_root = [&](int t, int c) {
    int v = net.tiles_[t].corner[c];
    return v == -1 ? -1 : net.find_vertex(v);
  };
  auto exposed_edges_at = [&](int v) {
    std::vector<std::pair<int, int>> out;
    v = net.find_vertex(v);
    for (int t : net.vertex_tiles_[v])
      for (int e = 0; e < 5; ++e) {
        if (net.tiles_[t].neighbor_tile[e] != -1) continue;
        if (corner_root(t, e) == v || corner_root(t, mod5(e - 1)) == v)
          out.emplace_back(t, e);
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    // rule A: a vertex with 4 tiles but two exposed edges gets them glued
    for (int v = 0; v < net.vertex_count(); ++v) {
      if (!net.vertex_alive_[v] || net.find_vertex(v) != v) continue;
      if (static_cast<int>(net.vertex_tiles_[v].size()) != 4) continue;
      auto edges = exposed_edges_at(v);
      if (edges.size() != 2) continue;
      auto [t1, e1] = edges[0];
      auto [t2, e2] = edges[1];
      // orientation: the first argument's edge must end at v
      if (corner_root(t1, e1) == v)
        net.glue(t1, e1, t2, e2);
      else
        net.glue(t2, e2, t1, e1);
      changed = true;
    }
    if (changed) continue;
    // rule B: close one 3-tile vertex with a new tile, then rescan
    for (int v = 0; v < net.vertex_count(); ++v) {
      if (!net.vertex_alive_[v] || net.find_vertex(v) != v) continue;
      if (static_cast<int>(net.vertex_tiles_[v].size()) != 3) continue;
      auto edges = exposed_edges_at(v);
      if (edges.size() != 2)
        throw Error(ErrorKind::integrity, "3-tile vertex without two exposed edges");
      int q = net.new_tile(layer);
      // Q.slot0 wants a host edge starting at v; Q.slot1 one ending at v.
      auto starts_at_v = [&](std::pair<int, int> e) {
        return corner_root(e.first, mod5(e.second - 1)) == v;
      };
      std::pair<int, int> e_start, e_end;
      if (starts_at_v(edges[0])) {
        e_start = edges[0];
        e_end = edges[1];
      } else {
        e_start = edges[1];
        e_end = edges[0];
      }
      net.glue(e_start.first, e_start.second, q, 0);
      net.glue(e_end.first, e_end.second, q, 1);
      // fill in the open corners of q
      for (int c = 0; c < 5; ++c)
        if (net.tiles_[q].corner[c] == -1) net.tiles_[q].corner[c] = net.new_vertex();
      for (int c = 0; c < 5; ++c) net.add_vertex_tile(net.tiles_[q].corner[c], q);
      changed = true;
      break;
    }
  }

  // pass-1 tiles may still have unassigned outer corners
  for (auto& tile : net.tiles_)
    for (int c = 0; c < 5; ++c)
      if (tile.corner[c] == -1) tile.corner[c] = net.new_vertex();
  for (int t = 0; t < net.tile_count(); ++t)
    for (int c = 0; c < 5; ++c) net.add_vertex_tile(net.tiles_[t].corner[c], t);

  net.layers_ = layer;
  net.rebuild_boundary();
  return net;
}

// ------------------------------- accessors ----------------------------------

std::pair<int, int> TilingNetwork::leg_location(int leg) const {
  if (leg < 0 || leg >= boundary_leg_count())
    throw Error(ErrorKind::argument, "boundary leg out of range");
  return boundary_[leg];
}

bool TilingNetwork::is_boundary_leg(int tile, int slot) const {
  return tiles_[tile].neighbor_tile[slot] == -1;
}

int TilingNetwork::vertex_tile_count(int vertex) const {
  int v = vertex;
  while (vertex_parent_[v] != v) v = vertex_parent_[v];
  return static_cast<int>(vertex_tiles_[v].size());
}

bool TilingNetwork::interior_vertices_closed() const {
  // boundary vertices: endpoints of free edges
  std::set<int> boundary_vertices;
  for (auto [t, s] : boundary_) {
    int v = tiles_[t].corner[s];
    int u = tiles_[t].corner[mod5(s - 1)];
    while (vertex_parent_[v] != v) v = vertex_parent_[v];
    while (vertex_parent_[u] != u) u = vertex_parent_[u];
    boundary_vertices.insert(v);
    boundary_vertices.insert(u);
  }
  for (int v = 0; v < vertex_count(); ++v) {
    if (!vertex_alive_[v] || vertex_parent_[v] != v) continue;
    if (boundary_vertices.count(v)) continue;
    if (vertex_tiles_[v].size() != 4) return false;
  }
  return true;
}

int TilingNetwork::boundary_arc_distance(int leg_a, int leg_b) const {
  int n = boundary_leg_count();
  int d = std::abs(leg_a - leg_b) % n;
  return std::min(d, n - d);
}

nlohmann::json TilingNetwork::to_json() const {
  nlohmann::json tiles = nlohmann::json::array();
  for (int t = 0; t < tile_count(); ++t) {
    const Tile& tile = tiles_[t];
    nlohmann::json slots = nlohmann::json::array();
    for (int s = 0; s < 5; ++s) {
      if (tile.neighbor_tile[s] == -1)
        slots.push_back({{"type", "leg"}, {"leg", tile.boundary_leg[s]}});
      else
        slots.push_back(
            {{"type", "tile"}, {"tile", tile.neighbor_tile[s]}, {"slot", tile.neighbor_slot[s]}});
    }
    tiles.push_back({{"id", t}, {"layer", tile.layer}, {"slots", slots}});
  }
  nlohmann::json legs = nlohmann::json::array();
  for (auto [t, s] : boundary_) legs.push_back({{"tile", t}, {"slot", s}});
  return {{"layers", layers_}, {"tiles", tiles}, {"boundary_legs", legs}};
}

std::string TilingNetwork::to_graphviz() const {
  std::ostringstream out;
  out << "graph tiling {\n";
  for (int t = 0; t < tile_count(); ++t)
    for (int s = 0; s < 5; ++s) {
      int n = tiles_[t].neighbor_tile[s];
      if (n > t) out << "  t" << t << " -- t" << n << ";\n";
    }
  out << "}\n";
  return out.str();
}

// --------------------------------- paths ------------------------------------

namespace {

void path_dfs(const TilingNetwork& net, int tile, int in_slot, int target_leg,
              std::vector<int>& tiles, std::vector<std::pair<int, int>>& slots,
              std::vector<bool>& visited, std::vector<PathDescriptor>& found, int leg_a,
              int leg_b) {
  visited[tile] = true;
  tiles.push_back(tile);
  for (int offset : {2, 3}) {
    int out_slot = mod5(in_slot + offset);
    slots.emplace_back(in_slot, out_slot);
    const auto& t = net.tile(tile);
    if (t.neighbor_tile[out_slot] == -1) {
      if (t.boundary_leg[out_slot] == target_leg) {
        PathDescriptor p;
        p.tiles = tiles;
        p.through_slots = slots;
        p.endpoints = {leg_a, leg_b};
        for (auto [i, o] : slots)
          p.turns.push_back(mod5(o - i) == 2 ? PathTurn::left : PathTurn::right);
        p.geodesic =
            std::all_of(p.turns.begin(), p.turns.end(), [&](PathTurn x) { return x == p.turns[0]; });
        p.boundary_arc = net.boundary_arc_distance(leg_a, leg_b);
        found.push_back(std::move(p));
      }
    } else {
      int nt = t.neighbor_tile[out_slot];
      int ns = t.neighbor_slot[out_slot];
      if (!visited[nt]) path_dfs(net, nt, ns, target_leg, tiles, slots, visited, found, leg_a, leg_b);
    }
    slots.pop_back();
  }
  tiles.pop_back();
  visited[tile] = false;
}

}  // namespace

std::vector<PathDescriptor> find_all_paths(const TilingNetwork& net, int leg_a, int leg_b) {
  if (leg_a == leg_b) throw Error(ErrorKind::argument, "path endpoints must differ");
  auto [tile, slot] = net.leg_location(leg_a);
  net.leg_location(leg_b);
  std::vector<int> tiles;
  std::vector<std::pair<int, int>> slots;
  std::vector<bool> visited(net.tile_count(), false);
  std::vector<PathDescriptor> found;
  path_dfs(net, tile, slot, leg_b, tiles, slots, visited, found, leg_a, leg_b);
  return found;
}

std::optional<PathDescriptor> find_path(const TilingNetwork& net, int leg_a, int leg_b) {
  auto all = find_all_paths(net, leg_a, leg_b);
  if (all.size() > 1)
    throw Error(ErrorKind::integrity, "path uniqueness violated: " +
                                          std::to_string(all.size()) + " paths found");
  if (all.empty()) return std::nullopt;
  return all.front();
}

// ------------------------------- reduction ----------------------------------

ReductionResult reduce_schedule(const TilingNetwork& net, const std::vector<int>& marked_legs) {
  if (marked_legs.empty())
    throw Error(ErrorKind::argument, "reduce_schedule needs at least one marked leg");
  {
    std::set<int> distinct(marked_legs.begin(), marked_legs.end());
    if (distinct.size() != marked_legs.size())
      throw Error(ErrorKind::argument, "marked legs must be distinct");
  }

  const int n = net.tile_count();
  std::vector<std::array<bool, 5>> resolved(n, {false, false, false, false, false});
  std::vector<std::array<bool, 5>> marked(n, {false, false, false, false, false});
  std::vector<bool> reduced(n, false);
  std::vector<bool> tile_marked(n, false);

  for (int leg : marked_legs) {
    auto [t, s] = net.leg_location(leg);
    marked[t][s] = true;
    tile_marked[t] = true;
  }
  for (int t = 0; t < n; ++t)
    for (int s = 0; s < 5; ++s)
      if (net.tile(t).neighbor_tile[s] == -1 && !marked[t][s]) resolved[t][s] = true;

  ReductionResult result;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int t = 0; t < n; ++t) {
      if (reduced[t] || tile_marked[t]) continue;
      int window = -1;
      for (int r = 0; r < 5 && window == -1; ++r)
        if (resolved[t][r] && resolved[t][mod5(r + 1)] && resolved[t][mod5(r + 2)]) window = r;
      if (window == -1) continue;
      reduced[t] = true;
      result.schedule.push_back({t, window});
      for (int s = 0; s < 5; ++s) {
        int nt = net.tile(t).neighbor_tile[s];
        if (nt != -1 && !reduced[nt]) resolved[nt][net.tile(t).neighbor_slot[s]] = true;
      }
      changed = true;
    }
  }

  for (int t = 0; t < n; ++t)
    if (!reduced[t]) result.residual.push_back(t);

  // active ports: marked legs + connections to other residual tiles
  std::vector<int> ports(n, 0);
  std::vector<int> residual_degree(n, 0);
  for (int t : result.residual) {
    for (int s = 0; s < 5; ++s) {
      if (marked[t][s]) ++ports[t];
      int nt = net.tile(t).neighbor_tile[s];
      if (nt != -1 && !reduced[nt]) {
        ++ports[t];
        ++residual_degree[t];
      }
    }
  }
  for (int t : result.residual)
    if (ports[t] >= 2) result.core.push_back(t);

  int edges = 0;
  for (int t : result.residual) edges += residual_degree[t];
  edges /= 2;

  if (result.core.empty()) {
    result.classification = ResidualClass::empty;
    return result;
  }
  int max_ports = 0, branch_count = 0;
  for (int t : result.core) {
    max_ports = std::max(max_ports, ports[t]);
    if (ports[t] == 3) {
      ++branch_count;
      result.branch_tile = t;
    }
  }
  // connectivity of the core via residual edges
  bool connected = true;
  {
    std::vector<int> stack{result.core.front()};
    std::set<int> seen{result.core.front()};
    std::set<int> core_set(result.core.begin(), result.core.end());
    while (!stack.empty()) {
      int t = stack.back();
      stack.pop_back();
      for (int s = 0; s < 5; ++s) {
        int nt = net.tile(t).neighbor_tile[s];
        if (nt != -1 && core_set.count(nt) && !seen.count(nt)) {
          seen.insert(nt);
          stack.push_back(nt);
        }
      }
    }
    connected = seen.size() == result.core.size();
  }
  bool acyclic = edges == static_cast<int>(result.core.size()) - 1;

  if (max_ports == 2 && branch_count == 0 && connected && acyclic)
    result.classification = ResidualClass::single_path;
  else if (max_ports == 3 && branch_count == 1 && connected && acyclic)
    result.classification = ResidualClass::path_plus_branch;
  else
    result.classification = ResidualClass::contains_clique;
  return result;
}

// ------------------------------ triangle check -------------------------------

TriangleCheck no_triangle_check(const TilingNetwork& net, std::uint64_t trials,
                                std::uint64_t seed) {
  const int legs = net.boundary_leg_count();
  TriangleCheck out;

  auto connected = [&](int a, int b) { return !find_all_paths(net, a, b).empty(); };

  if (net.layer_count() <= 3 && trials == 0) {
    // exhaustive via adjacency bitsets
    std::vector<std::vector<std::uint64_t>> adj(
        legs, std::vector<std::uint64_t>((legs + 63) / 64, 0));
    for (int a = 0; a < legs; ++a)
      for (int b = a + 1; b < legs; ++b)
        if (connected(a, b)) {
          adj[a][b / 64] |= 1ull << (b % 64);
          adj[b][a / 64] |= 1ull << (a % 64);
        }
    for (int a = 0; a < legs; ++a)
      for (int b = a + 1; b < legs; ++b) {
        if (!(adj[a][b / 64] >> (b % 64) & 1ull)) continue;
        for (std::size_t w = 0; w < adj[a].size(); ++w) {
          std::uint64_t common = adj[a][w] & adj[b][w];
          if (common) {
            int c = static_cast<int>(w * 64 + __builtin_ctzll(common));
            out.pass = false;
            out.counterexample = {a, b, c};
            return out;
          }
        }
        ++out.triples_checked;
      }
    // count logical triples for reporting
    out.triples_checked =
        static_cast<std::uint64_t>(legs) * (legs - 1) * (legs - 2) / 6;
    return out;
  }

  rng::Stream stream(seed);
  for (std::uint64_t i = 0; i < trials; ++i) {
    int a = static_cast<int>(stream.next_u64() % legs);
    int b = static_cast<int>(stream.next_u64() % legs);
    int c = static_cast<int>(stream.next_u64() % legs);
    if (a == b || b == c || a == c) continue;
    ++out.triples_checked;
    int pairs = (connected(a, b) ? 1 : 0) + (connected(b, c) ? 1 : 0) + (connected(a, c) ? 1 : 0);
    if (pairs == 3) {
      out.pass = false;
      out.counterexample = {a, b, c};
      return out;
    }
  }
  return out;
}

}  // namespace htn
