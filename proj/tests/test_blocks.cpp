#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "htn/blocks.hpp"
#include "htn/rng.hpp"

using namespace htn;

namespace {

Gate identity_entangler() {
  return Gate(Matrix::Identity(16, 16), {4, 4},
              GateProvenance{GateProvenance::Kind::named, "Id16", {}, 0, 0});
}

Gate haar_two_qubit(std::uint64_t seed) {
  return reinterpret_subsystems(haar_unitary(4, seed), {2, 2});
}

double top_moduli_distance(const std::vector<cx>& a, const std::vector<cx>& b, int k) {
  double worst = 0;
  for (int i = 0; i < k; ++i) {
    double ma = i < static_cast<int>(a.size()) ? std::abs(a[i]) : 0.0;
    double mb = i < static_cast<int>(b.size()) ? std::abs(b[i]) : 0.0;
    worst = std::max(worst, std::abs(ma - mb));
  }
  return worst;
}

}  // namespace

TEST_SUITE_BEGIN("blocks");

TEST_CASE("latin cube triple invariants") {
  LatinCubeTriple c = generate_latin_cubes();
  auto rep = check_latin_cubes(c);
  CHECK(rep.latin);
  CHECK(rep.layered_orthogonal);
  CHECK(rep.bijective);

  // exactly 64 unit entries in the induced tensor
  PerfectTensor pt = build_perfect(c);
  int nonzero = 0;
  for (std::size_t i = 0; i < pt.t.size(); ++i)
    if (pt.t[i] != cx(0, 0)) ++nonzero;
  CHECK(nonzero == 64);
  CHECK(pt.t.norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(is_perfect(pt.t).pass);
}

TEST_CASE("single-leg marginals of the perfect state are maximally mixed") {
  PerfectTensor pt = build_perfect(generate_latin_cubes());
  Tensor bra = pt.t.conjugate().relabeled({{"t2", "t2b"}});
  Tensor rho = contract(pt.t, bra,
                        {{"bulk", "bulk"}, {"t0", "t0"}, {"t1", "t1"}, {"t3", "t3"}, {"t4", "t4"}});
  Tensor expected = identity_tensor("t2", "t2b", 4);
  for (std::size_t i = 0; i < expected.size(); ++i) expected[i] *= cx(0.25, 0);
  CHECK(relative_distance(rho, expected) < 1e-12);
}

TEST_CASE("symmetrization") {
  PerfectTensor raw = build_perfect(generate_latin_cubes());
  // the raw linear-form tensor is generally not cyclic yet
  PerfectTensor sym = symmetrize_perfect(raw);
  CHECK(sym.symmetrized);
  CHECK(cyclic_symmetry_residual(sym.t) == 0.0);
  CHECK(is_perfect(sym.t).pass);
  CHECK(is_perfect(sym.t).subsets_checked == 41);

  // fixed point: an already symmetric tensor resolves to identity permutations
  PerfectTensor again = symmetrize_perfect(sym);
  for (int leg = 0; leg < 4; ++leg)
    for (int x = 0; x < 4; ++x) CHECK(again.value_perms[leg][x] == sym.value_perms[leg][x]);
}

TEST_CASE("is_perfect rejects product and GHZ tensors") {
  Tensor product({{"bulk", 4}, {"t0", 4}, {"t1", 4}, {"t2", 4}, {"t3", 4}, {"t4", 4}});
  product[0] = 1.0;  // |000000>
  CHECK_FALSE(is_perfect(product).pass);

  Tensor ghz({{"bulk", 4}, {"t0", 4}, {"t1", 4}, {"t2", 4}, {"t3", 4}, {"t4", 4}});
  auto strides = ghz.strides();
  std::size_t diag = 0;
  for (auto s : strides) diag += s;
  for (int i = 0; i < 4; ++i) ghz[i * diag] = 0.5;
  CHECK_FALSE(is_perfect(ghz).pass);
}

TEST_CASE("frames from dual unitaries are planar 2-uniform") {
  for (double a : {0.0, 0.5, 1.0, 0.302}) {
    Frame f = build_frame(dual_family(a));
    auto rep = check_planar_2uniform(f);
    CHECK(rep.pass);
    CHECK(rep.scalar_spread < 1e-10);
    for (double s : rep.scalar) CHECK(s == doctest::Approx(2.0).epsilon(1e-12));
  }
  SinkhornResult s = sinkhorn_dual_unitary(5, 1e-10, 10000);
  CHECK(check_planar_2uniform(build_frame(s.gate)).pass);
}

TEST_CASE("frame negative controls") {
  // generic non-dual unitaries break the contraction identities
  for (std::uint64_t seed : {1, 2, 3}) {
    Frame f = build_frame(haar_two_qubit(seed), /*force=*/true);
    auto rep = check_planar_2uniform(f);
    CHECK_FALSE(rep.pass);
    CHECK(*std::max_element(rep.residual.begin(), rep.residual.end()) > 0.05);
  }
  // the builder rejects gates that fail the dual-unitarity check
  CHECK_THROWS_AS((void)build_frame(named_gate(NamedGate::CNOT)), Error);
  // CNOT itself is a Clifford exception: forced through, its frame happens to
  // satisfy the contraction identities even though both reshuffle relations
  // fail; the Haar gates above are the generic control.
  CHECK(check_planar_2uniform(build_frame(named_gate(NamedGate::CNOT), true)).pass);
}

TEST_CASE("identity entangler factorizes the node") {
  const PerfectTensor& pt = standard_perfect_tensor();
  Frame f = build_frame(dual_family(0.302));
  Node node = build_node(pt, f, identity_entangler());
  auto [bare, b] = evenbly_split(pt, f, identity_entangler());
  CHECK(relative_distance(node.t, bare) < 1e-14);
  CHECK((b - Matrix::Identity(16, 16)).norm() < 1e-14);
}

TEST_CASE("node reduction and isometry") {
  const PerfectTensor& pt = standard_perfect_tensor();
  Node node = build_node(pt, build_frame(dual_family(0.302)),
                         entangler_family(EntanglerFamily::f1, 0.817));
  CHECK(node.normalization == doctest::Approx(1.0 / std::sqrt(32.0)).epsilon(1e-12));
  auto rep = verify_node_reduction(node);
  CHECK(rep.pass);
  for (double s : rep.scalar)
    CHECK(s == doctest::Approx(1.0 / 32.0).epsilon(1e-10));
  CHECK(node_isometry_residual(node) < 1e-9);
}

TEST_CASE("nodes from random entanglers satisfy the reduction rule") {
  const PerfectTensor& pt = standard_perfect_tensor();
  Frame f = build_frame(dual_family(0.5));
  for (std::uint64_t seed : {10, 20, 30}) {
    Node node = build_node(pt, f, haar_unitary(16, seed));
    ReducedNode r = reduced_path_node(node, Turn::left);
    CHECK(r.lambda1_residual < 1e-8);
    CHECK(r.phi_residual < 1e-8);
  }
}

TEST_CASE("reduced path node invariants") {
  const PerfectTensor& pt = standard_perfect_tensor();
  Node node = build_node(pt, build_frame(dual_family(0.302)),
                         entangler_family(EntanglerFamily::f1, 0.817));
  for (Turn turn : {Turn::left, Turn::right}) {
    ReducedNode r = reduced_path_node(node, turn);
    CHECK(r.lambda1_residual < 1e-8);
    CHECK(r.phi_residual < 1e-8);
    CHECK(std::abs(r.spectral_radius - 32.0) < 1e-8 * 32.0);
    CHECK(r.phi_left_eigen);  // measured, surfaced as a diagnostic
  }

  // operator norm bound over random unit vectors
  ReducedNode r = reduced_path_node(node, Turn::left);
  rng::Stream stream(77);
  for (int k = 0; k < 1000; ++k) {
    Vector x(256);
    for (int i = 0; i < 256; ++i) x(i) = cx(stream.next_gaussian(), stream.next_gaussian());
    x /= x.norm();
    CHECK((r.m * x).norm() <= 32.0 + 1e-8);
  }
}

TEST_CASE("happy limit: swap frame with identity entangler") {
  const PerfectTensor& pt = standard_perfect_tensor();
  Node node = build_node(pt, build_frame(named_gate(NamedGate::SWAP)), identity_entangler());
  ReducedNode r = reduced_path_node(node, Turn::left);
  CHECK(std::abs(r.spectrum[1]) / 32.0 < 1e-8);
}

TEST_CASE("fast spectrum routes agree with the dense reduction") {
  const PerfectTensor& pt = standard_perfect_tensor();
  struct RecipeCase {
    Gate dual;
    Gate entangler;
  };
  std::vector<RecipeCase> cases;
  cases.push_back({dual_family(0.302), entangler_family(EntanglerFamily::f1, 0.817)});
  cases.push_back({sinkhorn_dual_unitary(8, 1e-11, 10000).gate, haar_unitary(16, 9)});
  cases.push_back({dual_family(0.65), entangler_family(EntanglerFamily::f2, 0.4)});
  for (const auto& rc : cases) {
    Frame f = build_frame(rc.dual);
    Node node = build_node(pt, f, rc.entangler);
    for (Turn turn : {Turn::left, Turn::right}) {
      ReducedNode r = reduced_path_node(node, turn);
      Matrix mf = frame_transfer(f, turn);
      auto fast = sort_spectrum(reduced_spectrum_fast(mf, rc.entangler.matrix()));
      CHECK(top_moduli_distance(fast, r.spectrum, 6) < 1e-6);

      Matrix mt = perfect_transfer(pt, turn);
      Eigen::VectorXcd phi16 = Eigen::VectorXcd::Zero(16);
      for (int i = 0; i < 4; ++i) phi16(i * 4 + i) = 1.0;
      CHECK((mt - (phi16 * phi16.adjoint()) / 16.0).norm() < 1e-12);

      Matrix msim = reduced_matrix_similar(mt, mf, rc.entangler.matrix());
      Eigen::ComplexSchur<Matrix> schur(msim, false);
      std::vector<cx> ssim(256);
      for (int i = 0; i < 256; ++i) ssim[i] = schur.matrixT()(i, i);
      CHECK(top_moduli_distance(sort_spectrum(ssim), r.spectrum, 6) < 1e-6);
    }
  }
}

TEST_CASE("gauge: right-multiplying the entangler by an orthogonal matrix") {
  const PerfectTensor& pt = standard_perfect_tensor();
  Frame f = build_frame(dual_family(0.41));
  Gate ent = haar_unitary(16, 3);
  Matrix mf = frame_transfer(f, Turn::left);
  auto base = sort_spectrum(reduced_spectrum_fast(mf, ent.matrix()));
  for (std::uint64_t seed : {51, 52, 53}) {
    Matrix q = random_orthogonal(16, seed);
    auto gauged = sort_spectrum(reduced_spectrum_fast(mf, Matrix(ent.matrix() * q)));
    CHECK(top_moduli_distance(base, gauged, 6) < 1e-8 * 32.0);
  }
  // dense confirmation for one orthogonal gauge
  Matrix q = random_orthogonal(16, 51);
  Gate gauged(Matrix(ent.matrix() * q), {4, 4}, ent.provenance());
  ReducedNode r1 = reduced_path_node(build_node(pt, f, ent), Turn::left);
  ReducedNode r2 = reduced_path_node(build_node(pt, f, gauged), Turn::left);
  CHECK(top_moduli_distance(r1.spectrum, r2.spectrum, 6) < 1e-8 * 32.0);
}

TEST_CASE("evenbly code conditions") {
  const PerfectTensor& pt = standard_perfect_tensor();
  Frame f = build_frame(dual_family(0.302));
  Gate ent = entangler_family(EntanglerFamily::f1, 0.817);

  // b = U U^T is symmetric and unitary for any unitary U
  for (std::uint64_t seed : {6, 7}) {
    Matrix u = haar_unitary(16, seed).matrix();
    Matrix b = u * u.transpose();
    CHECK((b - b.transpose()).norm() < 1e-13);
    CHECK((b * b.adjoint() - Matrix::Identity(16, 16)).norm() < 1e-13);
  }

  auto [a, b] = evenbly_split(pt, f, ent);
  EvenblyReport rep = check_evenbly_code(a, b);
  CHECK(rep.pass(1e-9));

  // a random tile tensor fails the isometry constraints
  rng::Stream stream(123);
  Tensor bad({{"bulk", 4}, {"b0", 16}, {"b1", 16}, {"b2", 16}, {"b3", 16}, {"b4", 16}});
  for (std::size_t i = 0; i < bad.size(); ++i)
    bad[i] = cx(stream.next_gaussian(), stream.next_gaussian());
  EvenblyReport bad_rep = check_evenbly_code(bad, b);
  CHECK(bad_rep.v_residual > 1e-3);
  CHECK(bad_rep.a_residual > 1e-3);
  CHECK(bad_rep.w_residual > 1e-3);
}

TEST_CASE("node recipe JSON reconstructs the node exactly") {
  const PerfectTensor& pt = standard_perfect_tensor();
  Gate dual = dual_family(0.25);
  Gate ent = entangler_family(EntanglerFamily::f1, 0.6);
  Node node = build_node(pt, build_frame(dual), ent);
  NodeRecipe recipe = recipe_of(dual, ent);
  NodeRecipe back = NodeRecipe::from_json(nlohmann::json::parse(recipe.to_json().dump()));
  Node rebuilt = build_node_from_recipe(back);
  CHECK(relative_distance(node.t, rebuilt.t) < 1e-14);
  CHECK(rebuilt.recipe_fingerprint == node.recipe_fingerprint);
}

TEST_CASE("build_node validates its ingredients") {
  PerfectTensor raw = build_perfect(generate_latin_cubes());
  Frame f = build_frame(dual_family(0.3));
  CHECK_THROWS_AS((void)build_node(raw, f, identity_entangler()), Error);  // not symmetrized
  CHECK_THROWS_AS((void)build_node(standard_perfect_tensor(), f, haar_unitary(4, 1)), Error);
}

TEST_SUITE_END();
