#include <doctest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "htn/gates.hpp"
#include "htn/rng.hpp"

using namespace htn;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_SUITE_BEGIN("gates");

TEST_CASE("named gates match their permutation matrices") {
  Matrix swap = named_gate(NamedGate::SWAP).matrix();
  // row 2 (1-based) of SWAP is (0,0,1,0)
  CHECK(swap(1, 0) == cx(0, 0));
  CHECK(swap(1, 1) == cx(0, 0));
  CHECK(swap(1, 2) == cx(1, 0));
  CHECK(swap(1, 3) == cx(0, 0));

  Matrix id = named_gate(NamedGate::Id).matrix();
  CHECK((id - Matrix::Identity(4, 4)).norm() == 0.0);

  Matrix cnot = named_gate(NamedGate::CNOT).matrix();
  Matrix expected_cnot(4, 4);
  expected_cnot << 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0;
  CHECK((cnot - expected_cnot).norm() == 0.0);

  Matrix dcnot = named_gate(NamedGate::DCNOT).matrix();
  CHECK((dcnot - cnot * swap).norm() == 0.0);
}

TEST_CASE("cnot_power endpoints and semigroup") {
  CHECK((cnot_power(0).matrix() - Matrix::Identity(4, 4)).norm() < 1e-15);
  CHECK((cnot_power(1).matrix() - named_gate(NamedGate::CNOT).matrix()).norm() < 1e-15);

  Matrix half = cnot_power(0.5).matrix();
  CHECK((half * half - named_gate(NamedGate::CNOT).matrix()).norm() < 1e-12);

  rng::Stream stream(4);
  for (int i = 0; i < 10; ++i) {
    double b1 = stream.next_uniform(), b2 = stream.next_uniform();
    Matrix lhs = cnot_power(b1).matrix() * cnot_power(b2).matrix();
    CHECK((lhs - cnot_power(b1 + b2).matrix()).norm() < 1e-10);
  }
}

TEST_CASE("dual family endpoints and explicit entries") {
  CHECK((dual_family(0).matrix() - named_gate(NamedGate::SWAP).matrix()).norm() < 1e-15);
  CHECK((dual_family(1).matrix() - named_gate(NamedGate::DCNOT).matrix()).norm() < 1e-12);

  Matrix u = dual_family(0.5).matrix();
  cx p(0.5, 0.5), m(0.5, -0.5);  // (1 +- i)/2
  CHECK(std::abs(u(2, 1) - p) < 1e-15);
  CHECK(std::abs(u(2, 3) - m) < 1e-15);
  CHECK(std::abs(u(3, 1) - m) < 1e-15);
  CHECK(std::abs(u(3, 3) - p) < 1e-15);

  // matches CNOT^a SWAP across the parameter range
  rng::Stream stream(12);
  for (int i = 0; i < 8; ++i) {
    double a = stream.next_uniform();
    Matrix prod = cnot_power(a).matrix() * named_gate(NamedGate::SWAP).matrix();
    CHECK((dual_family(a).matrix() - prod).norm() < 1e-13);
  }
}

TEST_CASE("dual family passes both orthogonality relations on the grid") {
  for (int i = 0; i <= 100; ++i) {
    auto rep = is_dual_unitary(dual_family(i / 100.0), 1e-10);
    CHECK(rep.pass);
  }
}

TEST_CASE("dual unitarity verdicts") {
  auto swap = is_dual_unitary(named_gate(NamedGate::SWAP));
  CHECK(swap.pass);
  CHECK(swap.unitarity_residual < 1e-12);
  CHECK(swap.reshuffle_residual < 1e-12);

  auto cnot = is_dual_unitary(named_gate(NamedGate::CNOT));
  CHECK_FALSE(cnot.pass);
  CHECK(cnot.reshuffle_residual > 1.0);

  auto id = is_dual_unitary(named_gate(NamedGate::Id));
  CHECK_FALSE(id.pass);
}

TEST_CASE("entangler families") {
  CHECK((entangler_family(EntanglerFamily::f1, 0).matrix() - Matrix::Identity(16, 16)).norm() <
        1e-15);

  Matrix cnot = named_gate(NamedGate::CNOT).matrix();
  Matrix f1_full = entangler_family(EntanglerFamily::f1, 1).matrix();
  CHECK((f1_full - Eigen::kroneckerProduct(cnot, cnot)).norm() < 1e-13);

  // f2 at b=1: per factor CNOT_{F->T} * CNOT_{T->F}, a DCNOT up to qubit roles
  Matrix rev(4, 4);
  rev << 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0;
  Matrix factor = cnot * rev;
  CHECK((entangler_family(EntanglerFamily::f2, 1).matrix() -
         Eigen::kroneckerProduct(factor, factor))
            .norm() < 1e-13);
  auto inv_factor = local_invariants(factor);
  auto inv_dcnot = local_invariants(named_gate(NamedGate::DCNOT).matrix());
  CHECK(std::abs(inv_factor.first - inv_dcnot.first) < 1e-12);
  CHECK(std::abs(inv_factor.second - inv_dcnot.second) < 1e-12);
}

TEST_CASE("local invariants are invariant under local unitaries") {
  rng::Stream stream(5);
  Matrix u = dual_family(0.37).matrix();
  auto base = local_invariants(u);
  for (int rep = 0; rep < 4; ++rep) {
    Matrix a = haar_unitary(2, stream.next_u64()).matrix();
    Matrix b = haar_unitary(2, stream.next_u64()).matrix();
    Matrix c = haar_unitary(2, stream.next_u64()).matrix();
    Matrix d = haar_unitary(2, stream.next_u64()).matrix();
    Matrix v = Eigen::kroneckerProduct(a, b) * u * Eigen::kroneckerProduct(c, d);
    auto inv = local_invariants(v);
    CHECK(std::abs(inv.first - base.first) < 1e-10);
    CHECK(std::abs(inv.second - base.second) < 1e-10);
  }
}

TEST_CASE("cartan gate vertices") {
  CartanParams p;
  CHECK((cartan_gate(p).matrix() - Matrix::Identity(4, 4)).norm() < 1e-15);

  p.alpha1 = p.alpha2 = p.alpha3 = kPi / 4;
  CHECK(phase_distance(cartan_gate(p).matrix(), named_gate(NamedGate::SWAP).matrix()) < 1e-12);

  CartanParams pc;
  pc.alpha1 = kPi / 4;
  auto inv = local_invariants(cartan_gate(pc).matrix());
  auto cn = local_invariants(named_gate(NamedGate::CNOT).matrix());
  CHECK(std::abs(inv.first - cn.first) < 1e-12);
  CHECK(std::abs(inv.second - cn.second) < 1e-12);

  CartanParams pd;
  pd.alpha1 = pd.alpha2 = kPi / 4;
  auto invd = local_invariants(cartan_gate(pd).matrix());
  auto dc = local_invariants(named_gate(NamedGate::DCNOT).matrix());
  CHECK(std::abs(invd.first - dc.first) < 1e-12);
  CHECK(std::abs(invd.second - dc.second) < 1e-12);
}

TEST_CASE("cartan dual-unitary edge") {
  for (double a3 : {0.0, 0.2, kPi / 4}) {
    CartanParams p;
    p.alpha1 = p.alpha2 = kPi / 4;
    p.alpha3 = a3;
    CHECK(is_dual_unitary(cartan_gate(p), 1e-10).pass);
  }
}

TEST_CASE("cartan canonicalization") {
  CartanParams p;
  p.alpha1 = 0.1;
  p.alpha2 = 2.3;
  p.alpha3 = -0.4;
  CHECK_FALSE(p.canonicalized());
  CartanParams c = p.canonicalize();
  CHECK(c.canonicalized());
}

TEST_CASE("haar sampling") {
  Gate a = haar_unitary(4, 123);
  Gate b = haar_unitary(4, 123);
  CHECK((a.matrix() - b.matrix()).norm() == 0.0);
  CHECK((a.matrix() - haar_unitary(4, 124).matrix()).norm() > 1e-3);

  Gate s = haar_unitary(1, 5);
  CHECK(std::abs(std::abs(s.matrix()(0, 0)) - 1.0) < 1e-12);

  // Haar moment: mean |U_11|^2 over 1e4 samples at n=4 is 1/4 +- 0.01
  double acc = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    acc += std::norm(haar_unitary(4, rng::derive_seed(777, i)).matrix()(0, 0));
  CHECK(std::abs(acc / n - 0.25) < 0.01);
}

TEST_CASE("sinkhorn projection") {
  // already dual unitary: unchanged after one sweep
  SinkhornResult fixed = sinkhorn_project(named_gate(NamedGate::SWAP).matrix(), 1e-10, 10,
                                          GateProvenance{});
  CHECK(fixed.iterations == 1);
  CHECK((fixed.gate.matrix() - named_gate(NamedGate::SWAP).matrix()).norm() < 1e-12);

  // generic Haar start converges within the budget
  SinkhornResult s = sinkhorn_dual_unitary(2024, 1e-10, 10000);
  auto rep = is_dual_unitary(s.gate, 1e-10);
  CHECK(rep.pass);
  CHECK(s.iterations >= 2);

  // output is invariant (to tol) under one more projection sweep
  SinkhornResult again = sinkhorn_project(s.gate.matrix(), 1e-9, 5, s.gate.provenance());
  CHECK((again.gate.matrix() - s.gate.matrix()).norm() < 1e-8);

  // one sweep from a generic start cannot reach 1e-10
  CHECK_THROWS_AS((void)sinkhorn_dual_unitary(2024, 1e-10, 1), Error);
}

TEST_CASE("gate provenance round trip") {
  for (const Gate& g : {dual_family(0.25), haar_unitary(16, 99),
                        entangler_family(EntanglerFamily::f2, 0.7)}) {
    auto j = g.provenance().to_json();
    Gate back = gate_from_provenance(GateProvenance::from_json(j));
    CHECK((back.matrix() - g.matrix()).norm() == 0.0);
  }
  SinkhornResult s = sinkhorn_dual_unitary(31, 1e-10, 10000);
  Gate back = gate_from_provenance(GateProvenance::from_json(s.gate.provenance().to_json()));
  CHECK((back.matrix() - s.gate.matrix()).norm() == 0.0);
}

TEST_CASE("gate constructor enforces unitarity") {
  Matrix bad = Matrix::Identity(4, 4);
  bad(0, 0) = 2.0;
  CHECK_THROWS_AS(Gate(bad, {2, 2}, GateProvenance{}), Error);
}

TEST_SUITE_END();
