#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htn/tensor.hpp"

namespace htn {

/// How a gate was produced; enough to reconstruct it exactly.
struct GateProvenance {
  enum class Kind { named, family, haar, sinkhorn };
  Kind kind = Kind::named;
  std::string name;             // named id or family name
  std::vector<double> params;   // family parameters
  std::uint64_t seed = 0;       // haar / sinkhorn
  int iterations = 0;           // sinkhorn sweep count

  nlohmann::json to_json() const;
  static GateProvenance from_json(const nlohmann::json& j);
};

/// A unitary with subsystem structure. Construction verifies unitarity to
/// 1e-10 in Frobenius norm.
class Gate {
 public:
  Gate(Matrix u, std::vector<std::size_t> local_dims, GateProvenance prov);

  const Matrix& matrix() const { return u_; }
  const std::vector<std::size_t>& local_dims() const { return local_dims_; }
  std::size_t dim() const { return static_cast<std::size_t>(u_.rows()); }
  const GateProvenance& provenance() const { return prov_; }

  /// Gate as a 2x2-subsystem 4-leg tensor (out1, out2, in1, in2); requires
  /// exactly two equal local dims.
  Tensor as_two_site_tensor(const std::array<std::string, 4>& labels) const;

 private:
  Matrix u_;
  std::vector<std::size_t> local_dims_;
  GateProvenance prov_;
};

enum class NamedGate { Id, CNOT, DCNOT, SWAP };

/// The 4x4 permutation gates at the Weyl chamber vertices. DCNOT is the
/// composition CNOT * SWAP, the endpoint of dual_family.
Gate named_gate(NamedGate id);

/// CNOT^b via spectral calculus on the involution, (-1)^b := exp(i pi b).
/// b outside [0, 1] is accepted (provenance records the value).
Gate cnot_power(double b);

/// One-parameter dual-unitary family CNOT^a * SWAP; a=0 gives SWAP, a=1 gives
/// DCNOT. Passes both orthogonality relations for every a.
Gate dual_family(double a);

enum class EntanglerFamily { f1, f2 };

/// 16-dimensional two-ququart entanglers built from two-qubit factors, one
/// factor per (frame qubit, perfect-tensor qubit) pair:
///   f1: (CNOT_{F->T}^b)^(x2)
///   f2: (CNOT_{F->T} * CNOT_{T->F}^b)^(x2)
/// Basis order within a 16-dim leg is (f1, p1, f2, p2), frame qubit most
/// significant within each pair; see blocks.hpp for the layout contract.
Gate entangler_family(EntanglerFamily family, double b);

struct CartanParams {
  double alpha1 = 0, alpha2 = 0, alpha3 = 0;
  Eigen::Matrix2cd pre_a = Eigen::Matrix2cd::Identity();
  Eigen::Matrix2cd pre_b = Eigen::Matrix2cd::Identity();
  Eigen::Matrix2cd post_a = Eigen::Matrix2cd::Identity();
  Eigen::Matrix2cd post_b = Eigen::Matrix2cd::Identity();

  /// True when pi/4 >= a1 >= a2 >= a3 >= 0.
  bool canonicalized() const;
  /// Angles folded into the half Weyl chamber (canonical up to local gates).
  CartanParams canonicalize() const;
};

/// (post_a x post_b) * exp(i sum_k alpha_k sigma_k x sigma_k) * (pre_a x pre_b).
Gate cartan_gate(const CartanParams& p);

struct DualUnitarityReport {
  double unitarity_residual = 0;  // ||U+ U - Id||_F
  double reshuffle_residual = 0;  // ||R+ R - Id||_F, R the reshuffled matrix
  bool pass = false;
};

/// Checks both orthogonality relations of a two-subsystem gate.
DualUnitarityReport is_dual_unitary(const Gate& g, double tol = 1e-10);
DualUnitarityReport is_dual_unitary(const Matrix& u, double tol = 1e-10);

/// R_{ik,jl} = U_{ij,kl} for a (d*d)x(d*d) matrix.
Matrix reshuffle_matrix(const Matrix& u);

/// Haar-distributed unitary, deterministic per seed (QR of a Gaussian matrix
/// with the R diagonal phase fixed).
Gate haar_unitary(std::size_t n, std::uint64_t seed);

struct SinkhornResult {
  Gate gate;
  int iterations = 0;
  double unitarity_residual = 0;
  double reshuffle_residual = 0;
};

/// Alternating polar projections between the unitary manifold and the
/// reshuffled-unitary manifold, starting from a Haar sample.
SinkhornResult sinkhorn_dual_unitary(std::uint64_t seed, double tol = 1e-10, int max_iter = 10000);

/// Same projection from an explicit 4x4 starting point.
SinkhornResult sinkhorn_project(const Matrix& start, double tol, int max_iter,
                                GateProvenance prov);

/// Frobenius distance minimized over a global phase.
double phase_distance(const Matrix& a, const Matrix& b);

/// Makhlin-style local invariants (g1, g2) of a two-qubit gate; equal pairs
/// mean equality up to single-qubit unitaries and global phase.
std::pair<cx, cx> local_invariants(const Matrix& u);

/// Same matrix viewed with a different subsystem split (dims must multiply to
/// the gate dimension); provenance is preserved.
Gate reinterpret_subsystems(const Gate& g, std::vector<std::size_t> local_dims);

/// Rebuild a gate from its provenance record.
Gate gate_from_provenance(const GateProvenance& prov);

/// Random real orthogonal matrix (QR of a real Gaussian), for gauge tests.
Matrix random_orthogonal(std::size_t n, std::uint64_t seed);

/// Nearest unitary in Frobenius norm (polar factor).
Matrix polar_unitary(const Matrix& a);

}  // namespace htn
