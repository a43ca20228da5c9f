#include <doctest.h>

#include <cstdio>

#include <Eigen/Dense>

#include "htn/blocks.hpp"
#include "htn/gates.hpp"
#include "htn/rng.hpp"
#include "htn/tensor.hpp"

using namespace htn;

namespace {

Tensor random_tensor(std::vector<Leg> legs, std::uint64_t seed) {
  rng::Stream stream(seed);
  Tensor t(std::move(legs));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = cx(stream.next_gaussian(), stream.next_gaussian());
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("identity composition") {
  Tensor a = identity_tensor("i", "j", 2);
  Tensor b = identity_tensor("j", "k", 2);
  Tensor c = contract(a, b, {{"j", "j"}});
  REQUIRE(c.rank() == 2);
  CHECK(relative_distance(c, identity_tensor("i", "k", 2)) == 0.0);
}

TEST_CASE("bell pair self-overlap is d") {
  Tensor phi({{"x", 2}, {"y", 2}});
  phi[0] = 1;
  phi[3] = 1;  // |00> + |11>
  Tensor s = contract(phi, phi, {{"x", "x"}, {"y", "y"}});
  CHECK(s.rank() == 0);
  CHECK(std::abs(s.scalar_value() - cx(2, 0)) < 1e-15);
}

TEST_CASE("swap contracted with conjugate over outputs gives identity on inputs") {
  Tensor u = named_gate(NamedGate::SWAP).as_two_site_tensor({"o1", "o2", "i1", "i2"});
  Tensor ub = u.conjugate().relabeled({{"i1", "j1"}, {"i2", "j2"}});
  Tensor r = contract(u, ub, {{"o1", "o1"}, {"o2", "o2"}});
  // r_{i1 i2, j1 j2} should be the identity delta pair
  LegGrouping g{{{"row", {"i1", "i2"}}, {"col", {"j1", "j2"}}}};
  Tensor m = regroup(r, g);
  CHECK(relative_distance(m, identity_tensor("row", "col", 4)) < 1e-15);
}

TEST_CASE("contract rejects dimension mismatch and double pairing") {
  Tensor a({{"x", 2}, {"y", 3}});
  Tensor b({{"u", 3}, {"v", 2}});
  CHECK_THROWS_AS((void)contract(a, b, {{"x", "u"}}), Error);
  CHECK_THROWS_AS((void)contract(a, b, {{"y", "u"}, {"y", "v"}}), Error);
  CHECK_NOTHROW((void)contract(a, b, {{"y", "u"}}));
}

TEST_CASE("contract is bilinear") {
  rng::Stream stream(3);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor a = random_tensor({{"x", 3}, {"y", 4}}, 100 + rep);
    Tensor b = random_tensor({{"y", 4}, {"z", 2}}, 200 + rep);
    cx alpha(stream.next_gaussian(), stream.next_gaussian());
    Tensor a_scaled = a;
    for (std::size_t i = 0; i < a.size(); ++i) a_scaled[i] = alpha * a[i];
    Tensor lhs = contract(a_scaled, b, {{"y", "y"}});
    Tensor rhs = contract(a, b, {{"y", "y"}});
    double diff = 0, scale = 0;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      diff += std::norm(lhs[i] - alpha * rhs[i]);
      scale += std::norm(lhs[i]);
    }
    CHECK(std::sqrt(diff) <= 1e-12 * std::max(1.0, std::sqrt(scale)));
  }
}

TEST_CASE("regroup shapes and inverse") {
  Tensor t = random_tensor({{"a", 4}, {"b", 4}, {"c", 4}, {"d", 4}, {"e", 4}, {"f", 4}}, 7);
  LegGrouping g{{{"rows", {"a", "b"}}, {"cols", {"c", "d", "e", "f"}}}};
  Tensor m = regroup(t, g);
  REQUIRE(m.rank() == 2);
  CHECK(m.legs()[0].dim == 16);
  CHECK(m.legs()[1].dim == 256);
  CHECK(m.norm() == doctest::Approx(t.norm()).epsilon(1e-15));

  Tensor back = split_leg(split_leg(m, "rows", {{"a", 4}, {"b", 4}}), "cols",
                          {{"c", 4}, {"d", 4}, {"e", 4}, {"f", 4}});
  REQUIRE(back.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);  // bit-exact

  LegGrouping bad{{{"rows", {"a", "b"}}, {"cols", {"c", "d", "e"}}}};
  CHECK_THROWS_AS((void)regroup(t, bad), Error);
}

TEST_CASE("node-shaped regroup gives the documented shape") {
  // five (qubit-quadruple) boundary directions into five 16-dim legs
  std::vector<Leg> legs{{"bulk", 4}};
  for (int d = 0; d < 5; ++d)
    for (int q = 0; q < 4; ++q)
      legs.push_back({"q" + std::to_string(d) + "_" + std::to_string(q), 2});
  Tensor t(legs);
  LegGrouping g;
  g.groups.push_back({"bulk", {"bulk"}});
  for (int d = 0; d < 5; ++d) {
    LegGrouping::Group grp;
    grp.label = "b" + std::to_string(d);
    for (int q = 0; q < 4; ++q) grp.members.push_back("q" + std::to_string(d) + "_" + std::to_string(q));
    g.groups.push_back(grp);
  }
  Tensor m = regroup(t, g);
  REQUIRE(m.rank() == 6);
  CHECK(m.legs()[0].dim == 4);
  for (int d = 1; d < 6; ++d) CHECK(m.legs()[d].dim == 16);
  CHECK(m.size() == 4u * 16 * 16 * 16 * 16 * 16);
}

TEST_CASE("partial trace basics") {
  Tensor id4 = identity_tensor("r", "c", 4);
  Tensor tr = partial_trace(id4, {{"r", "c"}});
  CHECK(tr.rank() == 0);
  CHECK(std::abs(tr.scalar_value() - cx(4, 0)) < 1e-15);

  // maximally entangled marginal: |phi><phi| traced over the second site = Id2
  Tensor phi({{"a", 2}, {"b", 2}});
  phi[0] = 1;
  phi[3] = 1;
  Tensor rho = contract(phi, phi.conjugate().relabeled({{"a", "ab"}, {"b", "bb"}}), {});
  Tensor marginal = partial_trace(rho, {{"b", "bb"}});
  CHECK(relative_distance(marginal, identity_tensor("a", "ab", 2)) < 1e-15);
}

TEST_CASE("AME marginal: any 3 ququart pairs trace to maximally mixed") {
  const PerfectTensor& pt = standard_perfect_tensor();
  // density of the pure state over 6 ququarts, traced over 3 of them
  Tensor ket = pt.t;
  Tensor bra = pt.t.conjugate().relabeled({{"bulk", "bulkb"},
                                           {"t0", "t0b"},
                                           {"t1", "t1b"},
                                           {"t2", "t2b"},
                                           {"t3", "t3b"},
                                           {"t4", "t4b"}});
  Tensor rho = contract(ket, bra, {});
  Tensor red = partial_trace(rho, {{"bulk", "bulkb"}, {"t1", "t1b"}, {"t3", "t3b"}});
  // remaining legs: t0 t2 t4 (ket) then bra copies
  LegGrouping g{{{"row", {"t0", "t2", "t4"}}, {"col", {"t0b", "t2b", "t4b"}}}};
  Tensor m = regroup(red, g);
  Tensor expected = identity_tensor("row", "col", 64);
  for (std::size_t i = 0; i < expected.size(); ++i) expected[i] *= cx(1.0 / 64.0, 0);
  CHECK(relative_distance(m, expected) < 1e-12);
}

TEST_CASE("reshuffle") {
  Tensor swap = named_gate(NamedGate::SWAP).as_two_site_tensor({"i", "j", "k", "l"});
  Tensor r = reshuffle(swap);
  Matrix rm = regroup(r, {{{"row", {"i", "k"}}, {"col", {"j", "l"}}}}).to_matrix(1);
  CHECK((rm.adjoint() * rm - Matrix::Identity(4, 4)).norm() < 1e-14);

  Tensor id = named_gate(NamedGate::Id).as_two_site_tensor({"i", "j", "k", "l"});
  Matrix rid = regroup(reshuffle(id), {{{"row", {"i", "k"}}, {"col", {"j", "l"}}}}).to_matrix(1);
  CHECK((rid.adjoint() * rid - Matrix::Identity(4, 4)).norm() > 1.0);
  Eigen::JacobiSVD<Matrix> svd(rid);
  CHECK(svd.singularValues()(1) < 1e-14);  // rank deficient

  Tensor twice = reshuffle(reshuffle(swap));
  for (std::size_t i = 0; i < swap.size(); ++i) CHECK(twice[i] == swap[i]);

  Tensor bad({{"x", 2}, {"y", 2}});
  CHECK_THROWS_AS((void)reshuffle(bad), Error);
}

TEST_CASE("norm non-expansion through a verified isometry") {
  // bipartition isometry of the perfect tensor, normalized, applied to random
  // vectors: norms match
  const PerfectTensor& pt = standard_perfect_tensor();
  LegGrouping g{{{"col", {"bulk", "t0", "t2"}}, {"row", {"t1", "t3", "t4"}}}};
  Matrix v = regroup(pt.t, g).to_matrix(1).transpose();  // 64 x 64, cols -> rows
  Matrix gram = v.adjoint() * v;
  double c = gram.trace().real() / 64.0;
  v /= std::sqrt(c);
  REQUIRE((v.adjoint() * v - Matrix::Identity(64, 64)).norm() < 1e-10);
  rng::Stream stream(9);
  for (int rep = 0; rep < 10; ++rep) {
    Vector x(64);
    for (int i = 0; i < 64; ++i) x(i) = cx(stream.next_gaussian(), stream.next_gaussian());
    CHECK(std::abs((v * x).norm() - x.norm()) < 1e-10 * x.norm());
  }
}

TEST_CASE("serialization round trip") {
  Tensor t = random_tensor({{"a", 3}, {"b", 5}}, 21);
  std::string path = "tensor_roundtrip.htnt";
  write_tensor(path, t);
  Tensor back = read_tensor(path);
  REQUIRE(back.rank() == 2);
  CHECK(back.legs()[0].label == "a");
  CHECK(back.legs()[1].dim == 5);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
  std::remove(path.c_str());
}

TEST_CASE("non-finite amplitudes are rejected") {
  std::vector<cx> data{cx(1, 0), cx(std::numeric_limits<double>::infinity(), 0)};
  CHECK_THROWS_AS(Tensor({{"x", 2}}, data), Error);
}

TEST_SUITE_END();
