#include "htn/correlations.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "htn/rng.hpp"

namespace htn {

namespace {

std::vector<cx> schur_eigenvalues(const Matrix& m) {
  Eigen::ComplexSchur<Matrix> schur(m, /*computeU=*/false);
  if (schur.info() != Eigen::Success)
    throw Error(ErrorKind::convergence, "Schur decomposition failed");
  std::vector<cx> v(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = schur.matrixT()(i, i);
  return v;
}

double log_binom(int n, int k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  return std::exp(log_binom(n, k));
}

}  // namespace

double central_charge_bound() {
  return 9.0 * std::log(16.0) / std::log(2.0 + std::sqrt(3.0));
}

// ------------------------------ observables ---------------------------------

BoundaryObservable BoundaryObservable::identity() {
  return {Matrix::Identity(16, 16), false};
}

BoundaryObservable BoundaryObservable::random_traceless(std::uint64_t seed) {
  rng::Stream stream(seed);
  Matrix g(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) g(r, c) = cx(stream.next_gaussian(), stream.next_gaussian());
  Matrix h = 0.5 * (g + g.adjoint());
  h -= (h.trace() / 16.0) * Matrix::Identity(16, 16);
  h /= h.norm();
  BoundaryObservable out{std::move(h), true};
  out.validate();
  return out;
}

void BoundaryObservable::validate() const {
  if (m.rows() != 16 || m.cols() != 16)
    throw Error(ErrorKind::argument, "boundary observable must be 16x16");
  if ((m - m.adjoint()).norm() > 1e-12 * std::max(1.0, m.norm()))
    throw Error(ErrorKind::argument, "boundary observable must be Hermitian");
  if (traceless && std::abs(m.trace()) >= 1e-12)
    throw Error(ErrorKind::argument, "probe flagged traceless has nonzero trace");
}

BulkOperator BulkOperator::maximally_mixed() {
  return {0.25 * Matrix::Identity(4, 4), true};
}

BulkOperator BulkOperator::scaled_identity(double trace) {
  return {(trace / 4.0) * Matrix::Identity(4, 4), false};
}

BulkOperator BulkOperator::random_wishart(std::uint64_t seed) {
  rng::Stream stream(seed);
  Matrix g(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) g(r, c) = cx(stream.next_gaussian(), stream.next_gaussian());
  Matrix w = g * g.adjoint();
  w /= w.trace().real();
  BulkOperator out{std::move(w), true};
  out.validate();
  return out;
}

void BulkOperator::validate() const {
  if (m.rows() != 4 || m.cols() != 4)
    throw Error(ErrorKind::argument, "bulk operator must be 4x4");
  if (!hermitian_psd_trace1) return;
  if ((m - m.adjoint()).norm() > 1e-12 * std::max(1.0, m.norm()))
    throw Error(ErrorKind::argument, "bulk operator must be Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.eigenvalues().minCoeff() < -1e-12)
    throw Error(ErrorKind::argument, "bulk operator must be positive semidefinite");
  if (std::abs(m.trace().real() - 1.0) > 1e-12)
    throw Error(ErrorKind::argument, "bulk operator must have unit trace");
}

// ------------------------------ spectra -------------------------------------

double delta_from_lambda2(double lambda2_normalized) {
  if (lambda2_normalized < 1e-8) return std::numeric_limits<double>::infinity();
  return -std::log(lambda2_normalized) / std::log(network_scaling_factor());
}

SpectralReport scaling_dimension(const std::vector<cx>& sorted_spectrum) {
  if (sorted_spectrum.empty() || std::abs(std::abs(sorted_spectrum[0]) - 32.0) > 1e-6 * 32.0)
    throw Error(ErrorKind::integrity, "spectrum leading value is not 32");
  SpectralReport rep;
  for (int i = 0; i < 5; ++i) {
    std::size_t idx = static_cast<std::size_t>(i) + 1;
    rep.lambda[i] = idx < sorted_spectrum.size() ? std::abs(sorted_spectrum[idx]) / 32.0 : 0.0;
  }
  if (std::abs(rep.lambda[0] - 1.0) < 1e-10)
    throw Error(ErrorKind::integrity, "degenerate spectrum: |lambda2| = lambda1");
  rep.delta = delta_from_lambda2(rep.lambda[0]);
  if (rep.lambda[0] > 0) {
    int count = 0;
    for (std::size_t i = 1; i < sorted_spectrum.size(); ++i)
      if (std::abs(std::abs(sorted_spectrum[i]) / 32.0 - rep.lambda[0]) <= 1e-8 * rep.lambda[0])
        ++count;
    rep.lambda2_multiplicity = count;
  }
  return rep;
}

SpectralReport scaling_dimension(const ReducedNode& r) { return scaling_dimension(r.spectrum); }

// ------------------------------ two-point -----------------------------------

namespace {

/// [(x,x~) rows, (y,y~) cols] pair matrix from a node contraction with the
/// legs (slot_x, slot_y) kept open on both copies; everything else closes.
Matrix pair_matrix(const Tensor& node, int slot_x, int slot_y) {
  std::vector<std::size_t> order{node.leg_position("b" + std::to_string(slot_x)),
                                 node.leg_position("b" + std::to_string(slot_y)),
                                 node.leg_position("bulk")};
  for (int d = 0; d < 5; ++d)
    if (d != slot_x && d != slot_y) order.push_back(node.leg_position("b" + std::to_string(d)));
  Tensor p = node.permuted(order);
  auto v = p.matrix_view(2);  // rows (x, y) = 256, cols 16384
  Matrix g = Matrix::Zero(256, 256);
  g.selfadjointView<Eigen::Lower>().rankUpdate(v);
  g = Matrix(g.selfadjointView<Eigen::Lower>());
  Matrix out(256, 256);
  for (int x = 0; x < 16; ++x)
    for (int y = 0; y < 16; ++y)
      for (int xb = 0; xb < 16; ++xb)
        for (int yb = 0; yb < 16; ++yb)
          out(x * 16 + xb, y * 16 + yb) = g(x * 16 + y, xb * 16 + yb);
  return out;
}

/// Pairs a 16x16 observable with the column pair index: w[t] = sum cap[t, (p,p~)] v(p~, p).
Vector pair_with_observable(const Matrix& cap, const Matrix& v) {
  Vector w = Vector::Zero(256);
  for (int p = 0; p < 16; ++p)
    for (int pb = 0; pb < 16; ++pb) w += cap.col(p * 16 + pb) * v(pb, p);
  return w;
}

cx chain_value(const ReducedNode& r, int n, const PathCaps& caps, const Matrix& v1,
               const Matrix& v2) {
  if (n == 1) {
    cx acc(0, 0);
    for (int a = 0; a < 16; ++a)
      for (int ab = 0; ab < 16; ++ab)
        for (int b = 0; b < 16; ++b)
          for (int bb = 0; bb < 16; ++bb)
            acc += caps.doublecap(a * 16 + ab, b * 16 + bb) * v1(ab, a) * v2(bb, b);
    return acc;
  }
  Vector right = pair_with_observable(caps.right, v2);
  Vector left = pair_with_observable(caps.left, v1);
  Matrix mhat = r.m / 32.0;
  Vector x = right;
  for (int k = 0; k < n - 2; ++k) x = mhat * x;
  return (left.transpose() * x)(0, 0);
}

}  // namespace

PathCaps build_caps(const Node& node, Turn turn) {
  PathCaps caps;
  caps.turn = turn;
  caps.recipe_fingerprint = node.recipe_fingerprint;
  int out = turn_out_slot(turn);
  // cap with through slot t and probe slot p: rows (t,t~), cols (p,p~)
  auto cap = [&](int through, int probe) {
    Matrix pm = pair_matrix(node.t, probe, through);  // rows (p,p~), cols (t,t~)
    return Matrix(pm.transpose());
  };
  caps.left = cap(/*through=*/0, /*probe=*/out);
  caps.right = cap(/*through=*/out, /*probe=*/0);
  caps.doublecap = pair_matrix(node.t, 0, out);
  return caps;
}

cx two_point_transfer(const ReducedNode& r, int n, const PathCaps& caps,
                      const BoundaryObservable& v1, const BoundaryObservable& v2,
                      const BulkOperator& bulk) {
  if (n < 1) throw Error(ErrorKind::argument, "path length must be >= 1");
  if (caps.recipe_fingerprint != r.recipe_fingerprint || caps.turn != r.turn)
    throw Error(ErrorKind::argument, "caps were built from a different recipe or turn");
  v1.validate();
  v2.validate();
  cx numerator = chain_value(r, n, caps, v1.m, v2.m);
  cx denominator = chain_value(r, n, caps, Matrix::Identity(16, 16), Matrix::Identity(16, 16));
  if (std::abs(denominator) < 1e-250)
    throw Error(ErrorKind::integrity, "identity-probe normalizer vanished");
  return bulk.m.trace() * numerator / denominator;
}

cx brute_force_sandwich(const TilingNetwork& net, const Node& node, const BulkOperator& bulk,
                        const std::vector<std::pair<int, BoundaryObservable>>& probes) {
  if (net.tile_count() != 1)
    throw Error(ErrorKind::size,
                "dense sandwich supports the single-tile network; " +
                    std::to_string(net.tile_count()) + " tiles exceed the memory guard");
  std::array<bool, 5> probed{};
  for (const auto& [slot, v] : probes) {
    if (slot < 0 || slot > 4) throw Error(ErrorKind::argument, "probe slot out of range");
    if (probed[slot]) throw Error(ErrorKind::argument, "duplicate probe slot");
    probed[slot] = true;
    v.validate();
  }

  // per-bulk slices of the node tensor
  std::array<Tensor, 4> slice;
  {
    std::span<const cx> data = node.t.data();
    const std::size_t block = 1u << 20;  // 16^5
    for (int b = 0; b < 4; ++b) {
      std::vector<cx> part(data.begin() + b * block, data.begin() + (b + 1) * block);
      slice[b] = Tensor({{"b0", 16}, {"b1", 16}, {"b2", 16}, {"b3", 16}, {"b4", 16}},
                        std::move(part));
    }
  }

  auto sandwich = [&](bool with_probes, const Matrix& o) {
    cx acc(0, 0);
    for (int b = 0; b < 4; ++b) {
      Tensor z = slice[b];
      if (with_probes)
        for (const auto& [slot, v] : probes)
          z = apply_matrix_to_leg(z, "b" + std::to_string(slot), v.m);
      for (int bp = 0; bp < 4; ++bp) {
        if (o(b, bp) == cx(0, 0)) continue;
        cx dot(0, 0);
        std::span<const cx> zs = z.data();
        std::span<const cx> ns = slice[bp].data();
        for (std::size_t i = 0; i < zs.size(); ++i) dot += std::conj(ns[i]) * zs[i];
        acc += o(b, bp) * dot;
      }
    }
    return acc;
  };

  cx raw = sandwich(true, bulk.m);
  cx norm = sandwich(false, 0.25 * Matrix::Identity(4, 4));
  return raw / norm;
}

// ------------------------------ decay fits ----------------------------------

DecayFit decay_fit(const std::function<cx(int)>& correlator, int n_first, int n_last,
                   double lambda2_mod) {
  if (n_last - n_first + 1 < 5)
    throw Error(ErrorKind::argument, "decay fit needs at least 5 path lengths");
  if (n_first < 2) throw Error(ErrorKind::argument, "decay fit starts at n >= 2");
  if (lambda2_mod > 0 && std::pow(lambda2_mod, n_last - 2) < 1e-13)
    throw Error(ErrorKind::argument, "decay fit range underflows lambda2^n");

  std::vector<std::pair<int, double>> logs;  // (power p = n-2, log |c|)
  for (int n = n_first; n <= n_last; ++n) {
    cx c = correlator(n);
    if (std::abs(c) > 1e-280) logs.emplace_back(n - 2, std::log(std::abs(c)));
  }
  if (logs.size() < 3) {
    // correlator vanishes identically (HaPPY-like limit)
    return {std::numeric_limits<double>::infinity(), 0.0, 1};
  }

  DecayFit best;
  best.residual = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 3; ++k) {
    std::vector<double> xs, ys;
    for (auto [p, lc] : logs) {
      if (p < k - 1) continue;
      double lb = log_binom(p, k - 1);
      xs.push_back(static_cast<double>(p));
      ys.push_back(lc - lb);
    }
    if (xs.size() < 3) continue;
    double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sx += xs[i];
      sy += ys[i];
      sxx += xs[i] * xs[i];
      sxy += xs[i] * ys[i];
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double intercept = (sy - slope * sx) / n;
    double rss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double e = ys[i] - intercept - slope * xs[i];
      rss += e * e;
    }
    double rms = std::sqrt(rss / n);
    if (rms < best.residual) {
      best.residual = rms;
      best.jordan_k = k;
      best.delta_hat = -slope / std::log(network_scaling_factor());
    }
  }
  if (!std::isfinite(best.residual))
    throw Error(ErrorKind::argument, "decay fit had too few usable points");
  return best;
}

DecayFit decay_fit(const ReducedNode& r, const PathCaps& caps, int n_first, int n_last,
                   const BoundaryObservable& v1, const BoundaryObservable& v2) {
  double lambda2 = r.spectrum.size() > 1 ? std::abs(r.spectrum[1]) / 32.0 : 0.0;
  BulkOperator bulk = BulkOperator::maximally_mixed();
  return decay_fit(
      [&](int n) { return two_point_transfer(r, n, caps, v1, v2, bulk); }, n_first, n_last,
      lambda2);
}

cx compensated_even_step_ratio(const std::function<cx(int)>& series, int n, int k) {
  cx c0 = series(n);
  cx c2 = series(n + 2);
  if (std::abs(c0) < 1e-280)
    throw Error(ErrorKind::argument, "series vanished at n = " + std::to_string(n));
  return (c2 / c0) * (binom(n, k - 1) / binom(n + 2, k - 1));
}

// ------------------------------ three-point ---------------------------------

namespace {

struct PhaseFix {
  Vector v;
  double defect;
};

/// Rotates a 256-vector (viewed as a 16x16 matrix) by a global phase so it is
/// Hermitian, symmetrizes, fixes the overall sign by making the dominant
/// eigenvalue positive, then normalizes.
PhaseFix hermitian_phase_fix(const Vector& in) {
  Matrix v(16, 16);
  for (int k = 0; k < 16; ++k)
    for (int kb = 0; kb < 16; ++kb) v(k, kb) = in(k * 16 + kb);
  cx z = (v * v).trace();
  double phi = std::abs(z) > 0 ? -0.5 * std::arg(z) : 0.0;
  Matrix w = std::exp(cx(0, phi)) * v;
  double defect = 0.5 * (w - w.adjoint()).norm() / std::max(w.norm(), 1e-300);
  Matrix h = 0.5 * (w + w.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  if (std::abs(lo) > std::abs(hi)) h = -h;
  h /= h.norm();
  Vector out(256);
  for (int k = 0; k < 16; ++k)
    for (int kb = 0; kb < 16; ++kb) out(k * 16 + kb) = h(k, kb);
  return {std::move(out), defect};
}

Vector power_iterate(const Matrix& m, Vector start, int iters) {
  Vector x = std::move(start);
  x /= x.norm();
  for (int i = 0; i < iters; ++i) {
    x = m * x;
    double n = x.norm();
    if (n < 1e-300) throw Error(ErrorKind::convergence, "power iteration collapsed");
    x /= n;
  }
  return x;
}

}  // namespace

SubleadingExtract subleading_extract(const ReducedNode& r, const ThreePointOptions& opt) {
  SubleadingExtract out;
  Matrix mhat = r.m / 32.0;

  Vector phi = leading_eigenvector_phi();
  Vector right = power_iterate(mhat, phi, 64);
  Vector left = power_iterate(mhat.adjoint(), phi, 64);
  cx overlap = (left.adjoint() * right)(0, 0);
  if (std::abs(overlap) < 1e-8)
    throw Error(ErrorKind::integrity, "leading left/right eigenvectors are orthogonal");
  out.deflated = mhat - (right * left.adjoint()) / overlap;

  out.lambda2 = r.spectrum.size() > 1 ? r.spectrum[1] / 32.0 : cx(0, 0);
  out.multiplicity = r.lambda2_multiplicity;

  {
    auto eigs = schur_eigenvalues(out.deflated);
    double rho = 0;
    for (const cx& e : eigs) rho = std::max(rho, std::abs(e));
    out.deflation_residual = std::abs(rho - std::abs(out.lambda2));
  }

  if (std::abs(out.lambda2) < 1e-12 || out.multiplicity > 1) {
    out.dismissed = true;
    return out;
  }

  Matrix n = Matrix::Identity(256, 256);
  Matrix step = out.deflated / out.lambda2;
  for (int i = 0; i < opt.power; ++i) n = step * n;

  Eigen::BDCSVD<Matrix> svd(n, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double s1 = svd.singularValues()(0);
  double s2 = svd.singularValues()(1);
  out.sv_ratio = s2 > 0 ? s1 / s2 : std::numeric_limits<double>::infinity();
  if (out.sv_ratio < opt.sv_ratio_threshold) {
    out.dismissed = true;
    return out;
  }

  PhaseFix fl = hermitian_phase_fix(svd.matrixV().col(0));
  PhaseFix fr = hermitian_phase_fix(svd.matrixU().col(0));
  out.v_left = fl.v;
  out.v_right = fr.v;
  out.hermiticity_defect = std::max(fl.defect, fr.defect);
  return out;
}

int jordan_block_hint(const Matrix& deflated, cx lambda2) {
  if (std::abs(lambda2) < 1e-12) return 1;
  std::vector<double> xs, ys;
  Matrix p = Matrix::Identity(256, 256);
  int n = 0;
  for (int target : {6, 10, 14, 18, 22}) {
    while (n < target) {
      p = deflated * p;
      ++n;
    }
    xs.push_back(std::log(static_cast<double>(n)));
    ys.push_back(std::log(p.norm()) - n * std::log(std::abs(lambda2)));
  }
  double m = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  int k = 1 + static_cast<int>(std::lround(std::max(0.0, slope)));
  return std::clamp(k, 1, 4);
}

ThreePointKernel three_point_kernel(const Node& node, const ReducedNode& r,
                                    const ThreePointOptions& opt) {
  ThreePointKernel out;
  out.extract = subleading_extract(r, opt);
  out.kernel = Matrix::Zero(4, 4);
  if (out.extract.dismissed) return out;

  // conj(vL) entries pair the (ket, bra) port indices
  Matrix lc(16, 16);
  for (int k = 0; k < 16; ++k)
    for (int kb = 0; kb < 16; ++kb) lc(k, kb) = std::conj(out.extract.v_left(k * 16 + kb));

  // node slices arranged [(b0, b2, b4), (b1, b3)] per bulk value
  std::vector<std::size_t> order{node.t.leg_position("bulk"), node.t.leg_position("b0"),
                                 node.t.leg_position("b2"),   node.t.leg_position("b4"),
                                 node.t.leg_position("b1"),   node.t.leg_position("b3")};
  Tensor p = node.t.permuted(order);
  std::span<const cx> data = p.data();
  const std::size_t block = 1u << 20;

  using CMap = Eigen::Map<const Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  auto port_block = [&](int bulk, int a0) {
    // rows (a2, a4) = 256, cols (a1, a3) = 256 for fixed leading index a0
    return CMap(data.data() + bulk * block + static_cast<std::size_t>(a0) * 65536, 256, 256);
  };

  for (int b = 0; b < 4; ++b)
    for (int bp = 0; bp < 4; ++bp) {
      Matrix k1 = Matrix::Zero(256, 256);  // [(a2,a4) x (a2~,a4~)]
      for (int a0 = 0; a0 < 16; ++a0)
        for (int a0b = 0; a0b < 16; ++a0b) {
          if (lc(a0, a0b) == cx(0, 0)) continue;
          k1.noalias() += lc(a0, a0b) * (Matrix(port_block(b, a0)) *
                                         Matrix(port_block(bp, a0b)).adjoint());
        }
      Matrix k2 = Matrix::Zero(16, 16);  // [(a4) x (a4~)]
      for (int a2 = 0; a2 < 16; ++a2)
        for (int a2b = 0; a2b < 16; ++a2b)
          k2.noalias() += lc(a2, a2b) * k1.block(a2 * 16, a2b * 16, 16, 16);
      cx c(0, 0);
      for (int a4 = 0; a4 < 16; ++a4)
        for (int a4b = 0; a4b < 16; ++a4b) c += lc(a4, a4b) * k2(a4, a4b);
      out.kernel(b, bp) = c / 32.0;
    }
  return out;
}

ThreePointReport three_point_from_kernel(const ThreePointKernel& k, const BulkOperator& bulk,
                                         const ThreePointOptions& opt) {
  bulk.validate();
  if (!bulk.hermitian_psd_trace1)
    throw Error(ErrorKind::argument, "three-point bulk operators must be Hermitian PSD trace 1");
  ThreePointReport rep;
  rep.sv_ratio = k.extract.sv_ratio;
  rep.deflation_residual = k.extract.deflation_residual;
  rep.dismissed = k.extract.dismissed;
  if (rep.dismissed) return rep;
  cx c(0, 0);
  for (int b = 0; b < 4; ++b)
    for (int bp = 0; bp < 4; ++bp) c += bulk.m(b, bp) * k.kernel(b, bp);
  rep.c_value = c.real();
  rep.c_imag = c.imag();
  if (std::abs(c.imag()) > opt.realness_tol * std::max(1.0, std::abs(c.real())))
    throw Error(ErrorKind::integrity,
                "three-point value is not real: " + std::to_string(c.real()) + " + " +
                    std::to_string(c.imag()) + "i");
  return rep;
}

ThreePointReport three_point_C(const Node& node, const ReducedNode& r, const BulkOperator& bulk,
                               const ThreePointOptions& opt) {
  ThreePointKernel k = three_point_kernel(node, r, opt);
  ThreePointReport rep = three_point_from_kernel(k, bulk, opt);
  if (!rep.dismissed)
    rep.jordan_block_hint = jordan_block_hint(k.extract.deflated, k.extract.lambda2);
  return rep;
}

}  // namespace htn
