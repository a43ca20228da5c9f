#pragma once

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "htn/blocks.hpp"
#include "htn/network.hpp"

namespace htn {

/// Boundary scaling factor of the vertex-inflated {5,4} tiling.
inline double network_scaling_factor() { return 2.0 + std::sqrt(3.0); }

/// Upper bound on the central charge: 9 ln 16 / ln(2 + sqrt(3)).
double central_charge_bound();

// ------------------------------ observables ---------------------------------

/// 16x16 probe on one boundary leg.
struct BoundaryObservable {
  Matrix m;
  bool traceless = false;

  static BoundaryObservable identity();
  /// Random Hermitian traceless probe, unit Frobenius norm.
  static BoundaryObservable random_traceless(std::uint64_t seed);
  void validate() const;  // Hermitian; trace modulus < 1e-12 when traceless
};

/// 4x4 bulk-site operator.
struct BulkOperator {
  Matrix m;
  bool hermitian_psd_trace1 = false;

  static BulkOperator maximally_mixed();          // Id/4
  static BulkOperator random_wishart(std::uint64_t seed);  // Hermitian PSD trace 1
  static BulkOperator scaled_identity(double trace);
  void validate() const;
};

// ------------------------------ spectra -------------------------------------

struct SpectralReport {
  std::array<double, 5> lambda;  // |λ2..λ6| / 32
  double delta = 0;              // -log_mu(λ2/32); +inf sentinel when λ2 ~ 0
  int lambda2_multiplicity = 0;
  double deflation_residual = std::numeric_limits<double>::quiet_NaN();
  int jordan_block_hint = 0;  // 0 = not estimated
};

/// Report from a moduli-sorted spectrum whose leading value is 32.
/// Throws ErrorKind::integrity when |λ2|/32 is within 1e-10 of 1
/// (degenerate spectrum, no decay exponent).
SpectralReport scaling_dimension(const std::vector<cx>& sorted_spectrum);
SpectralReport scaling_dimension(const ReducedNode& r);

/// Delta = -log_mu(x) for the normalized subleading modulus x = |λ2|/32.
double delta_from_lambda2(double lambda2_normalized);

// ------------------------------ two-point -----------------------------------

/// End caps of a path: the end node keeps its probe leg open on ket and bra
/// side, the through leg feeds the transfer chain, and the three remaining
/// legs contract against the conjugate.
struct PathCaps {
  Matrix left;       // [(t,t~) x (p,p~)]: through pair rows, probe pair cols
  Matrix right;      // same encoding, through slot = turn out slot
  Matrix doublecap;  // [(a,a~) x (b,b~)]: probe at slot 0 and at the out slot
  Turn turn = Turn::left;
  std::string recipe_fingerprint;
};

PathCaps build_caps(const Node& node, Turn turn);

/// Tr[O] * Tr[W (v1 x v2)] for a geodesic path of n nodes, measured in the
/// convention where the all-identity sandwich equals Tr[O] (so the n = 1 case
/// coincides with brute_force_sandwich). Middle nodes use M/32.
cx two_point_transfer(const ReducedNode& r, int n, const PathCaps& caps,
                      const BoundaryObservable& v1, const BoundaryObservable& v2,
                      const BulkOperator& bulk);

/// Exact dense sandwich on a single-tile network: contracts the node with the
/// bulk operator and its conjugate, identities on unprobed legs and probes
/// elsewhere, normalized so (no probes, bulk = Id/4) gives exactly 1.
/// `probes` maps boundary slots (0..4) to observables. Networks larger than
/// one tile exceed the dense memory guard and raise ErrorKind::size.
cx brute_force_sandwich(const TilingNetwork& net, const Node& node, const BulkOperator& bulk,
                        const std::vector<std::pair<int, BoundaryObservable>>& probes);

// ------------------------------ decay fits ----------------------------------

struct DecayFit {
  double delta_hat = 0;
  double residual = 0;  // rms of the log-model fit
  int jordan_k = 1;     // block size chosen by the fit
};

/// Fits log|c(n)| = a + log binom(n-2, k-1) + (n-2) log q over n in
/// [n_first, n_last], choosing k in {1,2,3} by least residual; the dominant
/// Jordan-coefficient model. `lambda2_mod` guards against underflow.
DecayFit decay_fit(const std::function<cx(int)>& correlator, int n_first, int n_last,
                   double lambda2_mod);

/// Convenience overload evaluating two_point_transfer over the range.
DecayFit decay_fit(const ReducedNode& r, const PathCaps& caps, int n_first, int n_last,
                   const BoundaryObservable& v1, const BoundaryObservable& v2);

/// c(n+2)/c(n) with the binomial coefficient of a size-k Jordan block divided
/// out; converges to λ2² as n grows.
cx compensated_even_step_ratio(const std::function<cx(int)>& series, int n, int k);

// ------------------------------ three-point ---------------------------------

struct ThreePointOptions {
  int power = 20;               // matrix power of the deflated node
  double sv_ratio_threshold = 100.0;
  double realness_tol = 1e-8;   // relative imaginary-part budget
};

struct SubleadingExtract {
  Vector v_left;   // 256, phase-fixed (Hermitian as a 16x16 matrix), unit norm
  Vector v_right;
  Matrix deflated;  // M/32 with the leading pair projected out
  double sv_ratio = 0;
  bool dismissed = false;
  double deflation_residual = 0;  // | r(M_defl) - |λ2|/32 |, absolute in M/32 units
  cx lambda2 = 0;                 // λ2/32 including phase
  int multiplicity = 1;
  double hermiticity_defect = 0;  // diagnostic on the phase fix
};

/// Deflates the leading eigenvalue with measured left/right eigenvectors,
/// raises (M_defl / λ2)^power and reads the subleading pair off the dominant
/// singular triple. Degenerate |λ2| or a singular-value ratio below the
/// threshold dismisses the sample.
SubleadingExtract subleading_extract(const ReducedNode& r, const ThreePointOptions& opt = {});

struct ThreePointReport {
  double c_value = 0;  // real part of the projected intersection contraction
  double c_imag = 0;
  double sv_ratio = 0;
  bool dismissed = false;
  double deflation_residual = 0;
  int jordan_block_hint = 0;
  std::string bulk_provenance;
};

/// Appendix-style pipeline: subleading extraction, then the intersection node
/// (ports at slots 0, 2, 4; slots 1, 3 contracted against the conjugate)
/// projected on <v_L| at every port and closed with the bulk operator.
/// Non-real C beyond the tolerance raises ErrorKind::integrity.
ThreePointReport three_point_C(const Node& node, const ReducedNode& r, const BulkOperator& bulk,
                               const ThreePointOptions& opt = {});

/// Precomputed port-projected intersection contraction: C = sum_{b,b'}
/// O(b,b') * kernel(b,b'). Computed once per recipe, reused across bulk draws.
struct ThreePointKernel {
  Matrix kernel;  // 4x4 over (bulk ket, bulk bra)
  SubleadingExtract extract;
};

ThreePointKernel three_point_kernel(const Node& node, const ReducedNode& r,
                                    const ThreePointOptions& opt = {});

ThreePointReport three_point_from_kernel(const ThreePointKernel& k, const BulkOperator& bulk,
                                         const ThreePointOptions& opt = {});

/// Estimated size of the largest Jordan block at λ2 from the power growth of
/// the leading-deflated matrix. Diagnostic only.
int jordan_block_hint(const Matrix& deflated, cx lambda2);

}  // namespace htn
