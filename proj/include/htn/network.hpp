#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htn/tensor.hpp"

namespace htn {

/// Combinatorial patch of the {5,4} pentagon tiling, grown by vertex
/// inflation. No coordinates are stored: tiles carry five cyclically ordered
/// edge slots (counterclockwise) and five corner vertices; corner i sits
/// between edges i and i+1, so edge i runs from corner i-1 to corner i.
class TilingNetwork {
 public:
  struct Tile {
    int layer = 0;
    std::array<int, 5> neighbor_tile{-1, -1, -1, -1, -1};
    std::array<int, 5> neighbor_slot{-1, -1, -1, -1, -1};
    std::array<int, 5> boundary_leg{-1, -1, -1, -1, -1};  // leg id when free
    std::array<int, 5> corner{-1, -1, -1, -1, -1};        // vertex ids
  };

  /// Layer-0 network: the single central tile.
  static TilingNetwork central();

  int tile_count() const { return static_cast<int>(tiles_.size()); }
  int layer_count() const { return layers_; }
  const Tile& tile(int id) const { return tiles_[id]; }

  /// Boundary legs in a single cyclic (counterclockwise) order.
  int boundary_leg_count() const { return static_cast<int>(boundary_.size()); }
  std::pair<int, int> leg_location(int leg) const;  // (tile, slot)
  bool is_boundary_leg(int tile, int slot) const;

  /// Number of tiles meeting at each vertex (1..4).
  int vertex_tile_count(int vertex) const;
  int vertex_count() const { return static_cast<int>(vertex_alive_.size()); }
  bool vertex_alive(int vertex) const { return vertex_alive_[vertex]; }

  /// Vertices not on the boundary all close with exactly 4 tiles.
  bool interior_vertices_closed() const;

  /// Cyclic distance between two boundary legs along the boundary registry.
  int boundary_arc_distance(int leg_a, int leg_b) const;

  nlohmann::json to_json() const;
  std::string to_graphviz() const;

 private:
  friend TilingNetwork inflate(const TilingNetwork&);

  int new_vertex();
  int find_vertex(int v);            // union-find with path compression
  void merge_vertices(int a, int b);
  void add_vertex_tile(int v, int t);
  void glue(int tile_a, int slot_a, int tile_b, int slot_b);
  int new_tile(int layer);
  void rebuild_boundary();

  std::vector<Tile> tiles_;
  std::vector<int> vertex_parent_;
  std::vector<std::vector<int>> vertex_tiles_;  // valid on roots
  std::vector<bool> vertex_alive_;
  std::vector<std::pair<int, int>> boundary_;   // cyclic (tile, slot)
  int layers_ = 0;
};

/// One vertex-inflation layer: a tile on every free boundary edge, then a
/// closing tile at every vertex that reached three tiles. Pure.
TilingNetwork inflate(const TilingNetwork& net);

enum class PathTurn : std::uint8_t { left = 0, right = 1 };  // out = in+2 / in+3 (mod 5)

struct PathDescriptor {
  std::vector<int> tiles;
  std::vector<std::pair<int, int>> through_slots;  // (in, out) per tile
  std::array<int, 2> endpoints{-1, -1};            // boundary leg ids
  std::vector<PathTurn> turns;
  bool geodesic = false;
  int boundary_arc = 0;  // cyclic leg distance between the endpoints
};

/// The unique path between two boundary legs, if one exists. Each path tile is
/// traversed through two non-adjacent slots. Search is exhaustive; finding two
/// paths raises an integrity error (it would falsify path uniqueness).
std::optional<PathDescriptor> find_path(const TilingNetwork& net, int leg_a, int leg_b);

/// All paths between the legs (for uniqueness sweeps).
std::vector<PathDescriptor> find_all_paths(const TilingNetwork& net, int leg_a, int leg_b);

enum class ResidualClass { empty, single_path, path_plus_branch, contains_clique };

struct ScheduleEntry {
  int tile = -1;
  int window = -1;  // first slot of the resolved 3-consecutive window
};

struct ReductionResult {
  std::vector<ScheduleEntry> schedule;  // removal order with audit window
  std::vector<int> residual;            // unscheduled tiles (includes marked)
  std::vector<int> core;                // residual tiles with >= 2 active ports
  ResidualClass classification = ResidualClass::empty;
  int branch_tile = -1;
};

/// Iteratively removes tiles with three cyclically-adjacent resolved slots
/// (boundary-free or facing already-reduced tiles); tiles holding a marked
/// leg are never scheduled. Classification of the remaining structure:
/// `empty` means only isolated marked tiles remain (the correlator
/// factorizes into one-point terms).
ReductionResult reduce_schedule(const TilingNetwork& net, const std::vector<int>& marked_legs);

struct TriangleCheck {
  bool pass = true;
  std::array<int, 3> counterexample{-1, -1, -1};
  std::uint64_t triples_checked = 0;
};

/// Verifies that no three boundary legs are pairwise path-connected.
/// Exhaustive for networks up to 3 layers, sampled (trials) beyond that.
TriangleCheck no_triangle_check(const TilingNetwork& net, std::uint64_t trials = 0,
                                std::uint64_t seed = 0);

}  // namespace htn
