#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htn/gates.hpp"
#include "htn/tensor.hpp"

namespace htn {

// ---------------------------------------------------------------------------
// Leg layout contract (used by every module that touches node legs).
//
// A node boundary direction carries one 16-dim leg holding four qubits in the
// order (frame1, perfect1, frame2, perfect2), most significant first. The
// perfect-tensor ququart is t = p1*2 + p2 and the frame qubit pair of the
// direction is v = f1*2 + f2, so the composite index is
//   alpha = f1*8 + p1*4 + f2*2 + p2.
// Entangler matrices (gates.hpp entangler_family, 16-dim Haar samples) act on
// this basis. The edge object between two glued nodes is U * U^T.
// ---------------------------------------------------------------------------

inline std::size_t leg_index_of(std::size_t t, std::size_t v) {
  std::size_t p1 = t >> 1, p2 = t & 1, f1 = v >> 1, f2 = v & 1;
  return f1 * 8 + p1 * 4 + f2 * 2 + p2;
}
inline std::size_t perfect_part_of(std::size_t alpha) {
  return ((alpha >> 2) & 1) * 2 + (alpha & 1);
}
inline std::size_t frame_part_of(std::size_t alpha) {
  return ((alpha >> 3) & 1) * 2 + ((alpha >> 1) & 1);
}

// --------------------------- Latin cubes over GF(4) ------------------------

/// Three order-4 cubes from linear forms over the 4-element field. cube[c] is
/// indexed (l*4 + m)*4 + n with values in 0..3; coeff is the 3x3 GF(4)
/// coefficient matrix, rows = cubes.
struct LatinCubeTriple {
  std::array<std::array<std::uint8_t, 64>, 3> cube{};
  std::array<std::uint8_t, 9> coeff{};
  int index = 0;  // position in the deterministic candidate enumeration

  nlohmann::json to_json() const;
  static LatinCubeTriple from_json(const nlohmann::json& j);
};

struct LatinCubeReport {
  bool latin = false;          // every hyper-row a permutation, all 3 axes
  bool layered_orthogonal = false;
  bool bijective = false;      // 64 distinct (L1,L2,L3) triples
  bool pass() const { return latin && layered_orthogonal && bijective; }
};

LatinCubeReport check_latin_cubes(const LatinCubeTriple& c);

/// The `skip`-th coefficient matrix (in a fixed enumeration) whose cubes pass
/// all LatinCubeTriple invariants. Throws ErrorKind::search if the bounded
/// enumeration is exhausted.
LatinCubeTriple generate_latin_cubes(int skip = 0);

// ------------------------------ Perfect tensor -----------------------------

struct PerfectTensor {
  Tensor t;  // legs: bulk(4), t0..t4(4); unit Frobenius norm
  LatinCubeTriple cubes;
  bool symmetrized = false;
  std::array<std::array<std::uint8_t, 4>, 4> value_perms{};  // pi, rho, sigma, tau
};

/// Minimal-support tensor from the cube triple, normalized to unit norm.
PerfectTensor build_perfect(const LatinCubeTriple& c);

/// Searches value permutations (pi, rho, sigma, tau) of the last four legs
/// until the cyclic symmetry T[i,jklmn] = T[i,njklm] holds exactly. Throws
/// ErrorKind::search when no quadruple works for these cubes.
PerfectTensor symmetrize_perfect(const PerfectTensor& t);

struct PerfectReport {
  bool pass = false;
  double worst_residual = 0;
  int subsets_checked = 0;
};

/// Isometry check of every <=3-leg bipartition (41 subsets).
PerfectReport is_perfect(const Tensor& t, double tol = 1e-10);

/// Exact cyclic-symmetry residual of the five boundary legs.
double cyclic_symmetry_residual(const Tensor& t);

/// The cached standard perfect tensor: first enumerated cube triple that is
/// both perfect and symmetrizable.
const PerfectTensor& standard_perfect_tensor();

// --------------------------------- Frame -----------------------------------

struct Frame {
  Tensor t;  // ten qubit legs f0..f9; direction d = (f_{2d}, f_{2d+1})
  Gate generator;
};

/// Pentagon of five copies of the dual-unitary gate. Rejects generators that
/// fail the dual-unitarity check unless force is set (used by negative
/// controls).
Frame build_frame(const Gate& dual_unitary, bool force = false);

struct PlanarReport {
  bool pass = false;
  std::array<double, 5> residual{};  // per cyclic choice of 3 adjacent dirs
  std::array<double, 5> scalar{};    // the identity prefactor per choice
  double scalar_spread = 0;          // max relative disagreement
};

PlanarReport check_planar_2uniform(const Frame& f, double tol = 1e-10);

// ---------------------------------- Node -----------------------------------

struct NodeRecipe {
  LatinCubeTriple cubes;
  std::array<std::array<std::uint8_t, 4>, 4> value_perms{};
  GateProvenance dual;
  GateProvenance entangler;

  nlohmann::json to_json() const;
  static NodeRecipe from_json(const nlohmann::json& j);
  std::string fingerprint() const { return to_json().dump(); }
};

struct Node {
  Tensor t;  // legs: bulk(4), b0..b4(16), pentagon cyclic order
  PerfectTensor perfect;
  Frame frame;
  Gate entangler;
  double normalization = 0;  // s with  N x conj(N) on 3 adjacent legs = s^2 Id
  std::string recipe_fingerprint;
};

/// Assembles the node and verifies one 3-adjacent-leg reduction window (the
/// other four follow from the verified cyclic symmetry; verify_node_reduction
/// runs all five explicitly).
Node build_node(const PerfectTensor& pt, const Frame& f, const Gate& entangler);

Node build_node_from_recipe(const NodeRecipe& r);
NodeRecipe recipe_of(const Gate& dual, const Gate& entangler);

struct NodeReductionReport {
  bool pass = false;
  std::array<double, 5> residual{};
  std::array<double, 5> scalar{};  // s^2 per window
};

/// Explicit check of all five reduction windows, relative tolerance.
NodeReductionReport verify_node_reduction(const Node& n, double tol = 1e-9);

/// Isometry check of the (bulk + 2 adjacent boundary; 3 boundary) regrouping.
double node_isometry_residual(const Node& n);

// ------------------------------ Reduced node --------------------------------

enum class Turn { left, right };  // out slot = in+2 (left) or in+3 (right)

inline int turn_out_slot(Turn t) { return t == Turn::left ? 2 : 3; }

struct ReducedNode {
  Eigen::MatrixXcd m;  // 256x256; row = a_out*16 + abar_out, col likewise in
  Turn turn = Turn::left;
  std::vector<cx> spectrum;    // moduli-sorted, ties by phase
  double lambda1_residual = 0; // | |λ1| - 32 | / 32
  double phi_residual = 0;     // ||M phi - 32 phi|| / ||phi||
  double spectral_radius = 0;
  int lambda2_multiplicity = 0;
  bool phi_left_eigen = false;  // measured: is phi also a left eigenvector
  double phi_left_residual = 0;
  std::string recipe_fingerprint;
};

/// Contracts the node with its conjugate over the three non-through legs and
/// the bulk pair. The matrix includes the structural factor 16 that fixes the
/// leading eigenvalue at d^5 = 32 for every valid recipe, so a deviation
/// signals a wiring bug (ErrorKind::integrity beyond 1e-6 relative).
ReducedNode reduced_path_node(const Node& n, Turn turn);

/// Sum_i |i,i> on (through ket, through bra), the leading eigenvector.
Eigen::VectorXcd leading_eigenvector_phi();

// Fast spectrum routes. Both reproduce the reduced-node spectrum without
// assembling the full node tensor; reduced_spectrum_fast additionally uses
// the rank-16 structure of the perfect-tensor transfer factor. Validated
// against reduced_path_node in the test suite.

/// 16x16 transfer factor of the frame across the through pair.
Eigen::MatrixXcd frame_transfer(const Frame& f, Turn turn);

/// 16x16 transfer factor of the perfect tensor (equals |phi4><phi4| / 16).
Eigen::MatrixXcd perfect_transfer(const PerfectTensor& pt, Turn turn);

/// 256x256 matrix similar to the true reduced matrix (same spectrum):
/// 16 * (M_T interleave M_F) * (B x conj(B)) with B = U U^T.
Eigen::MatrixXcd reduced_matrix_similar(const Eigen::MatrixXcd& m_t,
                                        const Eigen::MatrixXcd& m_f,
                                        const Eigen::MatrixXcd& entangler_u);

/// Nonzero reduced-node eigenvalues from a 16x16 problem (the perfect factor
/// is rank one). Returns 16 values; the remaining 240 vanish.
std::vector<cx> reduced_spectrum_fast(const Eigen::MatrixXcd& m_f,
                                      const Eigen::MatrixXcd& entangler_u);

/// Moduli-sorted spectrum (ties broken by phase), descending.
std::vector<cx> sort_spectrum(std::vector<cx> v);

// ------------------------------ Evenbly code --------------------------------

struct EvenblyReport {
  double cyclic_residual = 0;      // 1': cyclic symmetry of boundary legs
  double b_symmetry_residual = 0;  // 2': B = B^T
  double b_unitarity_residual = 0; // 2': B B+ = Id
  double v_residual = 0;           // 3': V' isometry
  double w_residual = 0;           // 3': W' isometry
  double a_residual = 0;           // 4': A isometry from the bulk leg
  bool pass(double tol = 1e-9) const {
    return cyclic_residual < tol && b_symmetry_residual < tol &&
           b_unitarity_residual < tol && v_residual < tol && w_residual < tol &&
           a_residual < tol;
  }
};

/// Checks the code conditions for a (p+1)-leg tile tensor `a` (bulk + five
/// 16-dim boundary legs) and an edge matrix `b`. The W' isometry is evaluated
/// through the collapsed form that uses b's unitarity (checked separately);
/// the full W' tensor would not fit in memory.
EvenblyReport check_evenbly_code(const Tensor& a, const Eigen::MatrixXcd& b);

/// The node/edge split of a recipe: bare tile tensor (no entanglers) and the
/// edge matrix U U^T.
std::pair<Tensor, Eigen::MatrixXcd> evenbly_split(const PerfectTensor& pt, const Frame& f,
                                                  const Gate& entangler);

}  // namespace htn
