#include "htn/blocks.hpp"

#include <algorithm>
#include <bitset>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "htn/rng.hpp"

namespace htn {

namespace {

// v * v^adjoint through a Hermitian rank update (half the flops of a gemm)
template <class X>
Matrix gram_aat(const X& v) {
  Matrix g = Matrix::Zero(v.rows(), v.rows());
  g.template selfadjointView<Eigen::Lower>().rankUpdate(v);
  return g.template selfadjointView<Eigen::Lower>();
}

// ------------------------------ GF(4) ---------------------------------------

// Elements 0..3 with 2 = w, 3 = w^2 = w + 1; addition is xor.
inline std::uint8_t gf4_add(std::uint8_t a, std::uint8_t b) { return a ^ b; }

inline std::uint8_t gf4_mul(std::uint8_t a, std::uint8_t b) {
  static constexpr std::uint8_t table[4][4] = {
      {0, 0, 0, 0},
      {0, 1, 2, 3},
      {0, 2, 3, 1},
      {0, 3, 1, 2},
  };
  return table[a][b];
}

std::uint8_t gf4_det3(const std::array<std::uint8_t, 9>& a) {
  // cofactor signs are irrelevant in characteristic 2
  std::uint8_t d = 0;
  d = gf4_add(d, gf4_mul(a[0], gf4_add(gf4_mul(a[4], a[8]), gf4_mul(a[5], a[7]))));
  d = gf4_add(d, gf4_mul(a[1], gf4_add(gf4_mul(a[3], a[8]), gf4_mul(a[5], a[6]))));
  d = gf4_add(d, gf4_mul(a[2], gf4_add(gf4_mul(a[3], a[7]), gf4_mul(a[4], a[6]))));
  return d;
}

bool all_minors_nonzero(const std::array<std::uint8_t, 9>& a) {
  for (std::uint8_t e : a)
    if (e == 0) return false;
  for (int r0 = 0; r0 < 3; ++r0)
    for (int r1 = r0 + 1; r1 < 3; ++r1)
      for (int c0 = 0; c0 < 3; ++c0)
        for (int c1 = c0 + 1; c1 < 3; ++c1) {
          std::uint8_t m = gf4_add(gf4_mul(a[3 * r0 + c0], a[3 * r1 + c1]),
                                   gf4_mul(a[3 * r0 + c1], a[3 * r1 + c0]));
          if (m == 0) return false;
        }
  return gf4_det3(a) != 0;
}

LatinCubeTriple cubes_from_coeff(const std::array<std::uint8_t, 9>& coeff, int index) {
  LatinCubeTriple t;
  t.coeff = coeff;
  t.index = index;
  for (int c = 0; c < 3; ++c)
    for (std::uint8_t l = 0; l < 4; ++l)
      for (std::uint8_t m = 0; m < 4; ++m)
        for (std::uint8_t n = 0; n < 4; ++n) {
          std::uint8_t v = gf4_add(gf4_add(gf4_mul(coeff[3 * c + 0], l),
                                           gf4_mul(coeff[3 * c + 1], m)),
                                   gf4_mul(coeff[3 * c + 2], n));
          t.cube[c][(l * 4 + m) * 4 + n] = v;
        }
  return t;
}

// -------------------------- permutations of S4 -------------------------------

std::array<std::array<std::uint8_t, 4>, 24> all_perms4() {
  std::array<std::array<std::uint8_t, 4>, 24> out{};
  std::array<std::uint8_t, 4> p{0, 1, 2, 3};
  int i = 0;
  do {
    out[i++] = p;
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

// 12-bit encoding of a support point (i, j, k, l, m, n), two bits each.
inline unsigned encode_point(unsigned i, unsigned j, unsigned k, unsigned l, unsigned m,
                             unsigned n) {
  return (((((i << 2 | j) << 2 | k) << 2 | l) << 2 | m) << 2) | n;
}

std::vector<unsigned> support_points(const LatinCubeTriple& c) {
  std::vector<unsigned> pts;
  pts.reserve(64);
  for (unsigned l = 0; l < 4; ++l)
    for (unsigned m = 0; m < 4; ++m)
      for (unsigned n = 0; n < 4; ++n) {
        unsigned idx = (l * 4 + m) * 4 + n;
        pts.push_back(encode_point(c.cube[0][idx], c.cube[1][idx], c.cube[2][idx], l, m, n));
      }
  return pts;
}

}  // namespace

// ------------------------------ Latin cubes ---------------------------------

nlohmann::json LatinCubeTriple::to_json() const {
  return {{"coeff", std::vector<int>(coeff.begin(), coeff.end())}, {"index", index}};
}

LatinCubeTriple LatinCubeTriple::from_json(const nlohmann::json& j) {
  std::array<std::uint8_t, 9> coeff{};
  auto v = j.at("coeff").get<std::vector<int>>();
  if (v.size() != 9) throw Error(ErrorKind::argument, "cube coeff must have 9 entries");
  for (int i = 0; i < 9; ++i) coeff[i] = static_cast<std::uint8_t>(v[i]);
  return cubes_from_coeff(coeff, j.value("index", 0));
}

LatinCubeReport check_latin_cubes(const LatinCubeTriple& c) {
  LatinCubeReport rep;
  rep.latin = true;
  for (int cube = 0; cube < 3 && rep.latin; ++cube) {
    auto value = [&](int l, int m, int n) { return c.cube[cube][(l * 4 + m) * 4 + n]; };
    for (int a = 0; a < 4 && rep.latin; ++a)
      for (int b = 0; b < 4 && rep.latin; ++b) {
        unsigned seen0 = 0, seen1 = 0, seen2 = 0;
        for (int x = 0; x < 4; ++x) {
          seen0 |= 1u << value(x, a, b);
          seen1 |= 1u << value(a, x, b);
          seen2 |= 1u << value(a, b, x);
        }
        if (seen0 != 0xF || seen1 != 0xF || seen2 != 0xF) rep.latin = false;
      }
  }
  // Layered orthogonality: along each axis, each pair of cubes gives
  // orthogonal Latin squares layer by layer.
  rep.layered_orthogonal = true;
  for (int axis = 0; axis < 3 && rep.layered_orthogonal; ++axis)
    for (int c0 = 0; c0 < 3 && rep.layered_orthogonal; ++c0)
      for (int c1 = c0 + 1; c1 < 3 && rep.layered_orthogonal; ++c1)
        for (int layer = 0; layer < 4 && rep.layered_orthogonal; ++layer) {
          unsigned seen = 0;
          int count = 0;
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
              int l = axis == 0 ? layer : a;
              int m = axis == 1 ? layer : (axis == 0 ? a : b);
              int n = axis == 2 ? layer : b;
              unsigned pair = c.cube[c0][(l * 4 + m) * 4 + n] * 4u +
                              c.cube[c1][(l * 4 + m) * 4 + n];
              if (!(seen >> pair & 1u)) ++count;
              seen |= 1u << pair;
            }
          if (count != 16) rep.layered_orthogonal = false;
        }
  // Bijectivity: 64 distinct (L1, L2, L3) triples.
  {
    std::bitset<64> seen;
    for (int idx = 0; idx < 64; ++idx)
      seen.set(c.cube[0][idx] * 16 + c.cube[1][idx] * 4 + c.cube[2][idx]);
    rep.bijective = seen.all();
  }
  return rep;
}

LatinCubeTriple generate_latin_cubes(int skip) {
  int found = 0;
  int index = 0;
  std::array<std::uint8_t, 9> a{};
  // Entries 1..3 (zero entries break the Latin property outright).
  for (unsigned code = 0; code < 19683; ++code, ++index) {
    unsigned x = code;
    for (int i = 0; i < 9; ++i) {
      a[i] = static_cast<std::uint8_t>(1 + x % 3);
      x /= 3;
    }
    if (!all_minors_nonzero(a)) continue;
    LatinCubeTriple t = cubes_from_coeff(a, index);
    if (!check_latin_cubes(t).pass()) continue;  // not expected to trigger
    if (found++ == skip) return t;
  }
  throw Error(ErrorKind::search, "latin cube enumeration exhausted");
}

// ----------------------------- Perfect tensor -------------------------------

PerfectTensor build_perfect(const LatinCubeTriple& c) {
  if (!check_latin_cubes(c).pass())
    throw Error(ErrorKind::argument, "cube triple fails its invariants");
  Tensor t({{"bulk", 4}, {"t0", 4}, {"t1", 4}, {"t2", 4}, {"t3", 4}, {"t4", 4}});
  const cx amp(0.125, 0.0);  // 64 support points, unit Frobenius norm
  for (unsigned p : support_points(c)) {
    t[p] = amp;  // the 12-bit encoding coincides with the row-major flat index
  }
  PerfectTensor out{std::move(t), c, false, {}};
  for (auto& perm : out.value_perms) perm = {0, 1, 2, 3};
  return out;
}

double cyclic_symmetry_residual(const Tensor& t) {
  // legs (bulk, t0..t4): compare against the boundary legs rotated one step.
  Tensor rotated = t.permuted({0, 5, 1, 2, 3, 4});
  double diff = 0;
  for (std::size_t i = 0; i < t.size(); ++i) diff += std::norm(t[i] - rotated[i]);
  return std::sqrt(diff) / std::max(t.norm(), 1e-300);
}

PerfectTensor symmetrize_perfect(const PerfectTensor& input) {
  const auto perms = all_perms4();

  // Work on the support of the input tensor itself (so an already symmetric
  // tensor resolves to the identity quadruple, which is enumerated first).
  std::vector<unsigned> base;
  base.reserve(64);
  for (unsigned p = 0; p < 4096; ++p)
    if (input.t[p] != cx(0, 0)) {
      if (input.t[p] != cx(0.125, 0.0))
        throw Error(ErrorKind::argument, "expected a uniform minimal-support tensor");
      base.push_back(p);
    }
  if (base.size() != 64)
    throw Error(ErrorKind::argument, "expected 64 support points");

  std::bitset<4096> member;
  std::array<unsigned, 64> transformed{};

  // The recorded quadruple maps support values of the base tensor; value
  // permutations are local unitaries, so perfectness is preserved.
  for (int pi = 0; pi < 24; ++pi)
    for (int rho = 0; rho < 24; ++rho)
      for (int sigma = 0; sigma < 24; ++sigma)
        for (int tau = 0; tau < 24; ++tau) {
          const auto& P = perms[pi];
          const auto& R = perms[rho];
          const auto& S = perms[sigma];
          const auto& T = perms[tau];
          for (int s = 0; s < 64; ++s) {
            unsigned p = base[s];
            unsigned n = p & 3, m = (p >> 2) & 3, l = (p >> 4) & 3, k = (p >> 6) & 3;
            unsigned jj = (p >> 8) & 3, ii = (p >> 10) & 3;
            transformed[s] = encode_point(ii, jj, P[k], R[l], S[m], T[n]);
            member.set(transformed[s]);
          }
          bool ok = true;
          for (int s = 0; s < 64 && ok; ++s) {
            unsigned p = transformed[s];
            unsigned n = p & 3, m = (p >> 2) & 3, l = (p >> 4) & 3, k = (p >> 6) & 3;
            unsigned jj = (p >> 8) & 3, ii = (p >> 10) & 3;
            // rotation: (j,k,l,m,n) -> (n,j,k,l,m)
            unsigned rot = encode_point(ii, n, jj, k, l, m);
            if (!member.test(rot)) ok = false;
          }
          for (int s = 0; s < 64; ++s) member.reset(transformed[s]);
          if (!ok) continue;

          Tensor t(
              {{"bulk", 4}, {"t0", 4}, {"t1", 4}, {"t2", 4}, {"t3", 4}, {"t4", 4}});
          for (int s = 0; s < 64; ++s) t[transformed[s]] = cx(0.125, 0.0);
          // compose with permutations already recorded on the input
          std::array<std::array<std::uint8_t, 4>, 4> combined{};
          const std::array<const std::array<std::uint8_t, 4>*, 4> found{&P, &R, &S, &T};
          for (int leg = 0; leg < 4; ++leg)
            for (int x = 0; x < 4; ++x)
              combined[leg][x] = (*found[leg])[input.value_perms[leg][x]];
          PerfectTensor out{std::move(t), input.cubes, true, combined};
          if (cyclic_symmetry_residual(out.t) != 0.0)
            throw Error(ErrorKind::integrity, "symmetrization is not exact");
          return out;
        }
  throw Error(ErrorKind::search, "cubes not symmetrizable");
}

PerfectReport is_perfect(const Tensor& t, double tol) {
  if (t.rank() != 6)
    throw Error(ErrorKind::argument, "is_perfect expects a 6-leg tensor");
  for (const auto& leg : t.legs())
    if (leg.dim != 4) throw Error(ErrorKind::argument, "is_perfect expects dim-4 legs");
  PerfectReport rep;
  rep.pass = true;
  for (unsigned mask = 1; mask < 64; ++mask) {
    int bits = __builtin_popcount(mask);
    if (bits > 3) continue;
    std::vector<std::size_t> small, rest;
    for (std::size_t i = 0; i < 6; ++i)
      (mask >> i & 1 ? small : rest).push_back(i);
    std::vector<std::size_t> order = rest;
    order.insert(order.end(), small.begin(), small.end());
    Tensor p = t.permuted(order);
    auto v = p.matrix_view(rest.size());  // rows: complement, cols: subset
    std::size_t ds = 1;
    for (std::size_t i : small) ds *= t.legs()[i].dim;
    Matrix gram = v.adjoint() * v;
    double c = gram.trace().real() / static_cast<double>(ds);
    double residual =
        (gram - c * Matrix::Identity(ds, ds)).norm() / (std::abs(c) * std::sqrt(double(ds)));
    rep.worst_residual = std::max(rep.worst_residual, residual);
    ++rep.subsets_checked;
    if (residual >= tol) rep.pass = false;
  }
  return rep;
}

const PerfectTensor& standard_perfect_tensor() {
  static const PerfectTensor cached = [] {
    std::array<std::uint8_t, 9> a{};
    for (unsigned code = 0; code < 19683; ++code) {
      unsigned x = code;
      for (int i = 0; i < 9; ++i) {
        a[i] = static_cast<std::uint8_t>(1 + x % 3);
        x /= 3;
      }
      if (!all_minors_nonzero(a)) continue;
      LatinCubeTriple cubes = cubes_from_coeff(a, static_cast<int>(code));
      if (!check_latin_cubes(cubes).pass()) continue;
      PerfectTensor raw = build_perfect(cubes);
      if (!is_perfect(raw.t).pass) continue;
      try {
        PerfectTensor sym = symmetrize_perfect(raw);
        if (is_perfect(sym.t).pass) return sym;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::search) throw;
      }
    }
    throw Error(ErrorKind::search, "no symmetrizable perfect tensor in search budget");
  }();
  return cached;
}

// --------------------------------- Frame ------------------------------------

Frame build_frame(const Gate& dual_unitary, bool force) {
  if (!force) {
    auto rep = is_dual_unitary(dual_unitary);
    if (!rep.pass)
      throw Error(ErrorKind::argument,
                  "frame generator fails dual unitarity: residuals " +
                      std::to_string(rep.unitarity_residual) + ", " +
                      std::to_string(rep.reshuffle_residual));
  }
  // F_{abcdefghij} = sum_{klmno} U_{ibnk} U_{adol} U_{cfkm} U_{ehln} U_{gjmo}
  Tensor g1 = dual_unitary.as_two_site_tensor({"i", "b", "n", "k"});
  Tensor g2 = dual_unitary.as_two_site_tensor({"a", "d", "o", "l"});
  Tensor g3 = dual_unitary.as_two_site_tensor({"c", "f", "k", "m"});
  Tensor g4 = dual_unitary.as_two_site_tensor({"e", "h", "l", "n"});
  Tensor g5 = dual_unitary.as_two_site_tensor({"g", "j", "m", "o"});

  Tensor acc = contract(g1, g3, {{"k", "k"}});          // i b n c f m
  acc = contract(acc, g5, {{"m", "m"}});                // i b n c f g j o
  acc = contract(acc, g2, {{"o", "o"}});                // i b n c f g j a d l
  acc = contract(acc, g4, {{"l", "l"}, {"n", "n"}});    // i b c f g j a d e h

  std::vector<std::size_t> order;
  for (const char* name : {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"})
    order.push_back(acc.leg_position(name));
  Tensor f = acc.permuted(order).relabeled({{"a", "f0"},
                                            {"b", "f1"},
                                            {"c", "f2"},
                                            {"d", "f3"},
                                            {"e", "f4"},
                                            {"f", "f5"},
                                            {"g", "f6"},
                                            {"h", "f7"},
                                            {"i", "f8"},
                                            {"j", "f9"}});
  return Frame{std::move(f), dual_unitary};
}

PlanarReport check_planar_2uniform(const Frame& f, double tol) {
  PlanarReport rep;
  rep.pass = true;
  for (int r = 0; r < 5; ++r) {
    // contract directions r, r+1, r+2 with the conjugate; free: r+3, r+4
    std::vector<std::size_t> order;
    for (int d : {(r + 3) % 5, (r + 4) % 5}) {
      order.push_back(f.t.leg_position("f" + std::to_string(2 * d)));
      order.push_back(f.t.leg_position("f" + std::to_string(2 * d + 1)));
    }
    for (int d : {r, (r + 1) % 5, (r + 2) % 5}) {
      order.push_back(f.t.leg_position("f" + std::to_string(2 * d)));
      order.push_back(f.t.leg_position("f" + std::to_string(2 * d + 1)));
    }
    Tensor p = f.t.permuted(order);
    auto v = p.matrix_view(4);  // 16 x 64
    Matrix g = v * v.adjoint();
    double s = g.trace().real() / 16.0;
    rep.scalar[r] = s;
    rep.residual[r] = (g - s * Matrix::Identity(16, 16)).norm() / (std::abs(s) * 4.0);
    if (rep.residual[r] >= tol) rep.pass = false;
  }
  double lo = *std::min_element(rep.scalar.begin(), rep.scalar.end());
  double hi = *std::max_element(rep.scalar.begin(), rep.scalar.end());
  rep.scalar_spread = (hi - lo) / std::max(std::abs(hi), 1e-300);
  return rep;
}

// ---------------------------------- Node ------------------------------------

nlohmann::json NodeRecipe::to_json() const {
  nlohmann::json perms = nlohmann::json::array();
  for (const auto& p : value_perms) perms.push_back(std::vector<int>(p.begin(), p.end()));
  return {{"cubes", cubes.to_json()},
          {"perms", perms},
          {"dual", dual.to_json()},
          {"entangler", entangler.to_json()}};
}

NodeRecipe NodeRecipe::from_json(const nlohmann::json& j) {
  NodeRecipe r;
  r.cubes = LatinCubeTriple::from_json(j.at("cubes"));
  auto perms = j.at("perms");
  for (int i = 0; i < 4; ++i) {
    auto v = perms.at(i).get<std::vector<int>>();
    for (int k = 0; k < 4; ++k) r.value_perms[i][k] = static_cast<std::uint8_t>(v[k]);
  }
  r.dual = GateProvenance::from_json(j.at("dual"));
  r.entangler = GateProvenance::from_json(j.at("entangler"));
  return r;
}

namespace {

Tensor bare_node_tensor(const PerfectTensor& pt, const Frame& f) {
  // bare[bulk, a0..a4] = T[bulk, t0..t4] * F[v0..v4], a_d = leg_index_of(t_d, v_d)
  Tensor out({{"bulk", 4}, {"b0", 16}, {"b1", 16}, {"b2", 16}, {"b3", 16}, {"b4", 16}});
  std::span<const cx> tv = pt.t.data();
  std::span<const cx> fv = f.t.data();
  std::span<cx> o = out.mutable_data();
  for (std::size_t ti = 0; ti < 4096; ++ti) {
    cx tval = tv[ti];
    if (tval == cx(0, 0)) continue;
    std::size_t bulk = ti >> 10;
    std::size_t t[5];
    for (int d = 0; d < 5; ++d) t[d] = (ti >> (2 * (4 - d))) & 3;
    for (std::size_t fi = 0; fi < 1024; ++fi) {
      cx fval = fv[fi];
      if (fval == cx(0, 0)) continue;
      std::size_t flat = bulk;
      for (int d = 0; d < 5; ++d) {
        std::size_t v = (fi >> (2 * (4 - d))) & 3;
        flat = flat * 16 + leg_index_of(t[d], v);
      }
      o[flat] = tval * fval;
    }
  }
  return out;
}

struct ReductionWindow {
  double scalar = 0;
  double residual = 0;
};

Tensor window_permuted(const Tensor& node, int r) {
  std::vector<std::size_t> order{node.leg_position("bulk")};
  for (int d : {(r + 3) % 5, (r + 4) % 5})
    order.push_back(node.leg_position("b" + std::to_string(d)));
  for (int d : {r, (r + 1) % 5, (r + 2) % 5})
    order.push_back(node.leg_position("b" + std::to_string(d)));
  return node.permuted(order);
}

ReductionWindow reduction_window(const Tensor& node, int r) {
  Tensor p = window_permuted(node, r);
  auto v = p.matrix_view(3);  // 1024 x 4096
  Matrix g = gram_aat(v);
  ReductionWindow w;
  w.scalar = g.trace().real() / 1024.0;
  w.residual =
      (g - w.scalar * Matrix::Identity(1024, 1024)).norm() / (std::abs(w.scalar) * 32.0);
  return w;
}

/// Randomized version of reduction_window: estimates ||G - s^2 Id|| through
/// Gaussian probes of G x = v (v^H x) without forming the 1024x1024 gram.
/// verify_node_reduction runs the dense form.
ReductionWindow reduction_window_sketch(const Tensor& node, int r, int probes = 8) {
  Tensor p = window_permuted(node, r);
  auto v = p.matrix_view(3);
  ReductionWindow w;
  w.scalar = std::pow(p.norm(), 2) / 1024.0;
  rng::Stream stream(0x9e1u + static_cast<unsigned>(r));
  double worst = 0;
  for (int k = 0; k < probes; ++k) {
    Vector x(1024);
    for (int i = 0; i < 1024; ++i) x(i) = cx(stream.next_gaussian(), stream.next_gaussian());
    Vector gx = v * (v.adjoint() * x);
    worst = std::max(worst, (gx - w.scalar * x).norm() / (w.scalar * x.norm()));
  }
  w.residual = worst;
  return w;
}

}  // namespace

Node build_node(const PerfectTensor& pt, const Frame& f, const Gate& entangler) {
  if (!pt.symmetrized)
    throw Error(ErrorKind::argument, "build_node expects a symmetrized perfect tensor");
  if (entangler.dim() != 16)
    throw Error(ErrorKind::argument, "entangler must act on two ququarts (dim 16)");

  Tensor t = bare_node_tensor(pt, f);
  // Boundary legs carry U^T so that the edge object between glued nodes is
  // U U^T (the gauge-invariant combination).
  Matrix xt = entangler.matrix().transpose();
  for (int d = 0; d < 5; ++d) t = apply_matrix_to_leg(t, "b" + std::to_string(d), xt);

  Node node{std::move(t), pt, f, entangler, 0.0, {}};
  NodeRecipe recipe;
  recipe.cubes = pt.cubes;
  recipe.value_perms = pt.value_perms;
  recipe.dual = f.generator.provenance();
  recipe.entangler = entangler.provenance();
  node.recipe_fingerprint = recipe.fingerprint();

  ReductionWindow w = reduction_window_sketch(node.t, 0);
  if (!(w.residual < 1e-9))
    throw Error(ErrorKind::integrity,
                "node reduction rule failed: residual " + std::to_string(w.residual));
  node.normalization = std::sqrt(w.scalar);
  return node;
}

NodeRecipe recipe_of(const Gate& dual, const Gate& entangler) {
  NodeRecipe r;
  const PerfectTensor& pt = standard_perfect_tensor();
  r.cubes = pt.cubes;
  r.value_perms = pt.value_perms;
  r.dual = dual.provenance();
  r.entangler = entangler.provenance();
  return r;
}

Node build_node_from_recipe(const NodeRecipe& r) {
  PerfectTensor raw = build_perfect(r.cubes);
  Tensor t({{"bulk", 4}, {"t0", 4}, {"t1", 4}, {"t2", 4}, {"t3", 4}, {"t4", 4}});
  // apply the recorded value permutations directly
  std::vector<unsigned> base = support_points(r.cubes);
  for (unsigned p : base) {
    unsigned n = p & 3, m = (p >> 2) & 3, l = (p >> 4) & 3, k = (p >> 6) & 3;
    unsigned jj = (p >> 8) & 3, ii = (p >> 10) & 3;
    unsigned q = encode_point(ii, jj, r.value_perms[0][k], r.value_perms[1][l],
                              r.value_perms[2][m], r.value_perms[3][n]);
    t[q] = cx(0.125, 0.0);
  }
  PerfectTensor pt{std::move(t), r.cubes, true, r.value_perms};
  if (cyclic_symmetry_residual(pt.t) != 0.0)
    throw Error(ErrorKind::integrity, "recipe permutations do not give cyclic symmetry");
  Gate dual = gate_from_provenance(r.dual);
  Gate ent = gate_from_provenance(r.entangler);
  return build_node(pt, build_frame(dual), ent);
}

NodeReductionReport verify_node_reduction(const Node& n, double tol) {
  NodeReductionReport rep;
  rep.pass = true;
  for (int r = 0; r < 5; ++r) {
    ReductionWindow w = reduction_window(n.t, r);
    rep.residual[r] = w.residual;
    rep.scalar[r] = w.scalar;
    if (!(w.residual < tol)) rep.pass = false;
  }
  return rep;
}

double node_isometry_residual(const Node& n) {
  // group (bulk, b0, b1) vs (b2, b3, b4)
  std::vector<std::size_t> order{n.t.leg_position("bulk"), n.t.leg_position("b0"),
                                 n.t.leg_position("b1"), n.t.leg_position("b2"),
                                 n.t.leg_position("b3"), n.t.leg_position("b4")};
  Tensor p = n.t.permuted(order);
  auto v = p.matrix_view(3);  // rows (bulk,b0,b1) = 1024, cols 4096
  Matrix gram = gram_aat(v);
  // v maps (b2,b3,b4) amplitudes; treat V as the (4096 x 1024) matrix v^T so
  // V^dag V = conj(v) v^T = conj(v * v^dag). Proportionality to the identity
  // is unaffected by conjugation.
  double c = gram.trace().real() / 1024.0;
  return (gram - c * Matrix::Identity(1024, 1024)).norm() / (std::abs(c) * 32.0);
}

// ------------------------------ Reduced node ---------------------------------

Eigen::VectorXcd leading_eigenvector_phi() {
  Eigen::VectorXcd phi = Eigen::VectorXcd::Zero(256);
  for (int i = 0; i < 16; ++i) phi(i * 16 + i) = cx(1, 0);
  return phi;
}

std::vector<cx> sort_spectrum(std::vector<cx> v) {
  std::sort(v.begin(), v.end(), [](const cx& a, const cx& b) {
    double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma > mb;
    return std::arg(a) < std::arg(b);
  });
  return v;
}

namespace {

Matrix reduced_matrix_from_node(const Tensor& node, Turn turn) {
  int out = turn_out_slot(turn);
  std::vector<std::size_t> order{node.leg_position("b0"),
                                 node.leg_position("b" + std::to_string(out)),
                                 node.leg_position("bulk")};
  for (int d = 1; d < 5; ++d)
    if (d != out) order.push_back(node.leg_position("b" + std::to_string(d)));
  Tensor p = node.permuted(order);
  auto v = p.matrix_view(2);  // rows (a_in, a_out) = 256, cols 16384
  Matrix g = gram_aat(v);
  Matrix m(256, 256);
  for (int ain = 0; ain < 16; ++ain)
    for (int aout = 0; aout < 16; ++aout)
      for (int bin = 0; bin < 16; ++bin)
        for (int bout = 0; bout < 16; ++bout)
          m(aout * 16 + bout, ain * 16 + bin) = 16.0 * g(ain * 16 + aout, bin * 16 + bout);
  return m;
}

std::vector<cx> schur_eigenvalues(const Matrix& m) {
  Eigen::ComplexSchur<Matrix> schur(m, /*computeU=*/false);
  if (schur.info() != Eigen::Success)
    throw Error(ErrorKind::convergence, "Schur decomposition failed");
  std::vector<cx> v(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = schur.matrixT()(i, i);
  return v;
}

int multiplicity_of_second(const std::vector<cx>& sorted, double rel_tol = 1e-8) {
  if (sorted.size() < 2) return 0;
  double m2 = std::abs(sorted[1]);
  if (m2 == 0) return 1;
  int count = 0;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (std::abs(std::abs(sorted[i]) - m2) <= rel_tol * m2) ++count;
  return count;
}

}  // namespace

ReducedNode reduced_path_node(const Node& n, Turn turn) {
  ReducedNode r;
  r.turn = turn;
  r.m = reduced_matrix_from_node(n.t, turn);
  r.recipe_fingerprint = n.recipe_fingerprint;

  Eigen::VectorXcd phi = leading_eigenvector_phi();
  double phin = phi.norm();
  r.phi_residual = (r.m * phi - 32.0 * phi).norm() / phin;
  r.phi_left_residual = (r.m.adjoint() * phi - 32.0 * phi).norm() / phin;
  r.phi_left_eigen = r.phi_left_residual < 1e-8;

  r.spectrum = sort_spectrum(schur_eigenvalues(r.m));
  r.spectral_radius = std::abs(r.spectrum.front());
  r.lambda1_residual = std::abs(r.spectral_radius - 32.0) / 32.0;
  r.lambda2_multiplicity = multiplicity_of_second(r.spectrum);

  if (r.lambda1_residual > 1e-6 || r.phi_residual > 1e-6)
    throw Error(ErrorKind::integrity,
                "reduced node leading eigenvalue deviates from 32 (wiring bug): lambda1 "
                "residual " +
                    std::to_string(r.lambda1_residual) + ", phi residual " +
                    std::to_string(r.phi_residual));
  return r;
}

Matrix frame_transfer(const Frame& f, Turn turn) {
  int out = turn_out_slot(turn);
  std::vector<std::size_t> order;
  for (int d : {0, out}) {
    order.push_back(f.t.leg_position("f" + std::to_string(2 * d)));
    order.push_back(f.t.leg_position("f" + std::to_string(2 * d + 1)));
  }
  for (int d = 1; d < 5; ++d) {
    if (d == out) continue;
    order.push_back(f.t.leg_position("f" + std::to_string(2 * d)));
    order.push_back(f.t.leg_position("f" + std::to_string(2 * d + 1)));
  }
  Tensor p = f.t.permuted(order);
  auto v = p.matrix_view(4);  // rows (v_in, v_out) = 16, cols 64
  Matrix g = v * v.adjoint();
  Matrix m(16, 16);
  for (int vi = 0; vi < 4; ++vi)
    for (int vo = 0; vo < 4; ++vo)
      for (int wi = 0; wi < 4; ++wi)
        for (int wo = 0; wo < 4; ++wo)
          m(vo * 4 + wo, vi * 4 + wi) = g(vi * 4 + vo, wi * 4 + wo);
  return m;
}

Matrix perfect_transfer(const PerfectTensor& pt, Turn turn) {
  int out = turn_out_slot(turn);
  std::vector<std::size_t> order{pt.t.leg_position("t0"),
                                 pt.t.leg_position("t" + std::to_string(out)),
                                 pt.t.leg_position("bulk")};
  for (int d = 1; d < 5; ++d)
    if (d != out) order.push_back(pt.t.leg_position("t" + std::to_string(d)));
  Tensor p = pt.t.permuted(order);
  auto v = p.matrix_view(2);  // rows (t_in, t_out) = 16, cols 256
  Matrix g = v * v.adjoint();
  Matrix m(16, 16);
  for (int ti = 0; ti < 4; ++ti)
    for (int to = 0; to < 4; ++to)
      for (int si = 0; si < 4; ++si)
        for (int so = 0; so < 4; ++so)
          m(to * 4 + so, ti * 4 + si) = g(ti * 4 + to, si * 4 + so);
  return m;
}

Matrix reduced_matrix_similar(const Matrix& m_t, const Matrix& m_f, const Matrix& u) {
  if (u.rows() != 16 || u.cols() != 16)
    throw Error(ErrorKind::argument, "entangler must be 16x16");
  Matrix b = u * u.transpose();
  Matrix k(256, 256);
  for (int ao = 0; ao < 16; ++ao)
    for (int bo = 0; bo < 16; ++bo)
      for (int ai = 0; ai < 16; ++ai)
        for (int bi = 0; bi < 16; ++bi) {
          std::size_t to = perfect_part_of(ao), tbo = perfect_part_of(bo);
          std::size_t ti = perfect_part_of(ai), tbi = perfect_part_of(bi);
          std::size_t vo = frame_part_of(ao), vbo = frame_part_of(bo);
          std::size_t vi = frame_part_of(ai), vbi = frame_part_of(bi);
          k(ao * 16 + bo, ai * 16 + bi) = 16.0 *
                                          m_t(to * 4 + tbo, ti * 4 + tbi) *
                                          m_f(vo * 4 + vbo, vi * 4 + vbi);
        }
  Matrix e(256, 256);
  for (int ao = 0; ao < 16; ++ao)
    for (int bo = 0; bo < 16; ++bo)
      for (int ai = 0; ai < 16; ++ai)
        for (int bi = 0; bi < 16; ++bi)
          e(ao * 16 + bo, ai * 16 + bi) = b(ao, ai) * std::conj(b(bo, bi));
  return k * e;
}

std::vector<cx> reduced_spectrum_fast(const Matrix& m_f, const Matrix& u) {
  Matrix b = u * u.transpose();
  Matrix g16 = Matrix::Zero(16, 16);
  for (int w = 0; w < 4; ++w)
    for (int wb = 0; wb < 4; ++wb)
      for (int uu = 0; uu < 4; ++uu)
        for (int ub = 0; ub < 4; ++ub) {
          cx acc(0, 0);
          for (int t = 0; t < 4; ++t)
            for (int s = 0; s < 4; ++s)
              acc += b(leg_index_of(t, w), leg_index_of(s, uu)) *
                     std::conj(b(leg_index_of(t, wb), leg_index_of(s, ub)));
          g16(w * 4 + wb, uu * 4 + ub) = acc;
        }
  Matrix small = m_f * g16;
  return schur_eigenvalues(small);
}

// ------------------------------ Evenbly code ---------------------------------

std::pair<Tensor, Matrix> evenbly_split(const PerfectTensor& pt, const Frame& f,
                                        const Gate& entangler) {
  if (entangler.dim() != 16)
    throw Error(ErrorKind::argument, "entangler must be 16-dimensional");
  Matrix b = entangler.matrix() * entangler.matrix().transpose();
  return {bare_node_tensor(pt, f), std::move(b)};
}

EvenblyReport check_evenbly_code(const Tensor& a, const Matrix& b) {
  if (a.rank() != 6 || a.legs()[0].dim != 4)
    throw Error(ErrorKind::argument, "tile tensor must have a dim-4 bulk leg + 5 boundary legs");
  for (int d = 0; d < 5; ++d)
    if (a.legs()[d + 1].dim != 16)
      throw Error(ErrorKind::argument, "boundary legs must be 16-dimensional");
  if (b.rows() != 16 || b.cols() != 16)
    throw Error(ErrorKind::argument, "edge matrix must be 16x16");

  EvenblyReport rep;

  // 1': cyclic symmetry of the boundary legs (bulk fixed).
  {
    Tensor rot = a.permuted({0, 5, 1, 2, 3, 4});
    double diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::norm(a[i] - rot[i]);
    rep.cyclic_residual = std::sqrt(diff) / std::max(a.norm(), 1e-300);
  }

  // 2': b symmetric and unitary.
  rep.b_symmetry_residual = (b - b.transpose()).norm() / std::max(b.norm(), 1e-300);
  rep.b_unitarity_residual = (b * b.adjoint() - Matrix::Identity(16, 16)).norm();

  // 3' first constraint: V' = A with one B per leg 2..5, isometry from
  // (bulk, leg1) into the rest.
  {
    Tensor v = a;
    for (int d = 1; d < 5; ++d)
      v = apply_matrix_to_leg(v, "b" + std::to_string(d), b.transpose());
    std::vector<std::size_t> order;
    for (int d = 1; d < 5; ++d) order.push_back(v.leg_position("b" + std::to_string(d)));
    order.push_back(v.leg_position("bulk"));
    order.push_back(v.leg_position("b0"));
    Tensor p = v.permuted(order);
    auto vm = p.matrix_view(4);  // rows: j2..j5 (65536), cols: (bulk, i1) = 64
    Matrix gram = vm.adjoint() * vm;
    double c = gram.trace().real() / 64.0;
    rep.v_residual = (gram - c * Matrix::Identity(64, 64)).norm() / (std::abs(c) * 8.0);
  }

  // 3' second constraint: W' isometry, evaluated in the collapsed form that
  // uses BB+ = Id (condition 2') so the j legs never materialize.
  {
    auto contract_block = [&](std::initializer_list<int> glue_dirs,
                              std::initializer_list<int> keep_dirs) {
      std::vector<std::size_t> order{a.leg_position("bulk")};
      for (int d : keep_dirs) order.push_back(a.leg_position("b" + std::to_string(d)));
      for (int d : glue_dirs) order.push_back(a.leg_position("b" + std::to_string(d)));
      Tensor p = a.permuted(order);
      auto v = p.matrix_view(3);  // rows (bulk, keep0, keep1) = 1024, cols 4096
      Matrix g = gram_aat(v);  // sum over glued legs of A x conj(A)
      return g;                // rows plain copy, cols conjugated copy
    };
    // top pair of A's glued over legs (1,2,3); free (bulk, b0, b4)
    Matrix x1 = contract_block({1, 2, 3}, {0, 4});
    // bottom pair glued over legs (2,3,4); free (bulk, b0, b1)
    Matrix x2 = contract_block({2, 3, 4}, {0, 1});

    // x1[(k0,k1,c5),(i0,i1,a5)] = sum A[k0,k1,glued,c5] conj(A[i0,i1,glued,a5]);
    // rows are the plain copy, columns the conjugated one. Row flattening of
    // contract_block results is ((bulk*16)+keep0)*16+keep1.
    auto idx3 = [](int bulk, int l1, int l2) { return (bulk * 16 + l1) * 16 + l2; };
    Matrix bconj = b.conjugate();
    // y1[(i0,i1,k0,k1), (a5,c5)] ; y2[(i0',i1',k0',k1'), (b2,d2)]
    Matrix y1(64 * 64, 256), y2(64 * 64, 256);
    for (int i0 = 0; i0 < 4; ++i0)
      for (int i1 = 0; i1 < 16; ++i1)
        for (int k0 = 0; k0 < 4; ++k0)
          for (int k1 = 0; k1 < 16; ++k1) {
            int row = ((i0 * 16 + i1) * 4 + k0) * 16 + k1;
            for (int a5 = 0; a5 < 16; ++a5)
              for (int c5 = 0; c5 < 16; ++c5)
                y1(row, a5 * 16 + c5) = x1(idx3(k0, k1, c5), idx3(i0, i1, a5));
            for (int b2 = 0; b2 < 16; ++b2)
              for (int d2 = 0; d2 < 16; ++d2)
                y2(row, b2 * 16 + d2) = x2(idx3(k0, k1, d2), idx3(i0, i1, b2));
          }
    // edge kernel K[(a5,c5),(b2,d2)] = conj(B)[a5,b2] B[c5,d2]
    Matrix kern(256, 256);
    for (int a5 = 0; a5 < 16; ++a5)
      for (int c5 = 0; c5 < 16; ++c5)
        for (int b2 = 0; b2 < 16; ++b2)
          for (int d2 = 0; d2 < 16; ++d2)
            kern(a5 * 16 + c5, b2 * 16 + d2) = bconj(a5, b2) * b(c5, d2);
    Matrix z = y1 * kern;               // [(i,k) x (b2,d2)]
    Matrix wmat = z * y2.transpose();   // [(i0,i1,k0,k1) x (i0',i1',k0',k1')]
    // Reindex into [(i0,i1,i0',i1') x (k0,k1,k0',k1')] and test proportionality
    // to the identity.
    Matrix wp(4096, 4096);
    for (int i = 0; i < 64; ++i)
      for (int k = 0; k < 64; ++k)
        for (int ip = 0; ip < 64; ++ip)
          for (int kp = 0; kp < 64; ++kp)
            wp(i * 64 + ip, k * 64 + kp) = wmat(i * 64 + k, ip * 64 + kp);
    double c = wp.trace().real() / 4096.0;
    rep.w_residual = (wp - c * Matrix::Identity(4096, 4096)).norm() / (std::abs(c) * 64.0);
  }

  // 4': A is an isometry from the bulk leg.
  {
    Tensor p = a;  // legs already (bulk, b0..b4)
    auto v = p.matrix_view(1);  // 4 x 16^5
    Matrix gram = v * v.adjoint();  // conj of A+A, proportionality unaffected
    double c = gram.trace().real() / 4.0;
    rep.a_residual = (gram - c * Matrix::Identity(4, 4)).norm() / (std::abs(c) * 2.0);
  }

  return rep;
}

}  // namespace htn
