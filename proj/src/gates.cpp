#include "htn/gates.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "htn/rng.hpp"

namespace htn {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

Matrix perm4(std::array<int, 4> image_of_basis) {
  // Column j holds e_{image[j]}: the gate maps |j> to |image[j]>.
  Matrix m = Matrix::Zero(4, 4);
  for (int j = 0; j < 4; ++j) m(image_of_basis[j], j) = cx(1, 0);
  return m;
}

Matrix cnot_matrix() { return perm4({0, 1, 3, 2}); }
Matrix swap_matrix() { return perm4({0, 2, 1, 3}); }
Matrix cnot_reversed_matrix() { return perm4({0, 3, 2, 1}); }  // control on second qubit

/// P^b for an involution (P^2 = Id): (Id+P)/2 + exp(i pi b) (Id-P)/2.
Matrix involution_power(const Matrix& p, double b) {
  Matrix id = Matrix::Identity(p.rows(), p.cols());
  if ((p * p - id).norm() > 1e-12)
    throw Error(ErrorKind::argument, "involution_power expects an involutory matrix");
  cx phase = std::exp(cx(0, kPi * b));
  return 0.5 * (id + p) + 0.5 * phase * (id - p);
}

double unitarity_residual(const Matrix& u) {
  return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).norm();
}

}  // namespace

nlohmann::json GateProvenance::to_json() const {
  nlohmann::json j;
  switch (kind) {
    case Kind::named: j["kind"] = "named"; break;
    case Kind::family: j["kind"] = "family"; break;
    case Kind::haar: j["kind"] = "haar"; break;
    case Kind::sinkhorn: j["kind"] = "sinkhorn"; break;
  }
  j["name"] = name;
  j["params"] = params;
  j["seed"] = seed;
  j["iterations"] = iterations;
  return j;
}

GateProvenance GateProvenance::from_json(const nlohmann::json& j) {
  GateProvenance p;
  std::string k = j.at("kind").get<std::string>();
  if (k == "named")
    p.kind = Kind::named;
  else if (k == "family")
    p.kind = Kind::family;
  else if (k == "haar")
    p.kind = Kind::haar;
  else if (k == "sinkhorn")
    p.kind = Kind::sinkhorn;
  else
    throw Error(ErrorKind::argument, "unknown provenance kind '" + k + "'");
  p.name = j.value("name", std::string{});
  p.params = j.value("params", std::vector<double>{});
  p.seed = j.value("seed", std::uint64_t{0});
  p.iterations = j.value("iterations", 0);
  return p;
}

Gate::Gate(Matrix u, std::vector<std::size_t> local_dims, GateProvenance prov)
    : u_(std::move(u)), local_dims_(std::move(local_dims)), prov_(std::move(prov)) {
  std::size_t d = 1;
  for (std::size_t x : local_dims_) d *= x;
  if (static_cast<std::size_t>(u_.rows()) != d || static_cast<std::size_t>(u_.cols()) != d)
    throw Error(ErrorKind::argument, "gate matrix does not match local dims");
  double r = unitarity_residual(u_);
  if (r > 1e-10)
    throw Error(ErrorKind::integrity, "gate is not unitary, residual " + std::to_string(r));
}

Tensor Gate::as_two_site_tensor(const std::array<std::string, 4>& labels) const {
  if (local_dims_.size() != 2 || local_dims_[0] != local_dims_[1])
    throw Error(ErrorKind::argument, "as_two_site_tensor needs two equal subsystems");
  std::size_t d = local_dims_[0];
  std::vector<cx> data(d * d * d * d);
  for (std::size_t r = 0; r < d * d; ++r)
    for (std::size_t c = 0; c < d * d; ++c) data[r * d * d + c] = u_(r, c);
  return Tensor({{labels[0], d}, {labels[1], d}, {labels[2], d}, {labels[3], d}},
                std::move(data));
}

Gate named_gate(NamedGate id) {
  GateProvenance prov{GateProvenance::Kind::named, "", {}, 0, 0};
  Matrix m;
  switch (id) {
    case NamedGate::Id:
      prov.name = "Id";
      m = Matrix::Identity(4, 4);
      break;
    case NamedGate::CNOT:
      prov.name = "CNOT";
      m = cnot_matrix();
      break;
    case NamedGate::DCNOT:
      prov.name = "DCNOT";
      m = cnot_matrix() * swap_matrix();
      break;
    case NamedGate::SWAP:
      prov.name = "SWAP";
      m = swap_matrix();
      break;
    default:
      throw Error(ErrorKind::argument, "unknown named gate");
  }
  return Gate(std::move(m), {2, 2}, std::move(prov));
}

Gate cnot_power(double b) {
  GateProvenance prov{GateProvenance::Kind::family, "cnot_power", {b}, 0, 0};
  return Gate(involution_power(cnot_matrix(), b), {2, 2}, std::move(prov));
}

Gate dual_family(double a) {
  cx e = std::exp(cx(0, kPi * a));
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = 1;
  m(1, 2) = 1;
  m(2, 1) = 0.5 * (1.0 + e);
  m(2, 3) = 0.5 * (1.0 - e);
  m(3, 1) = 0.5 * (1.0 - e);
  m(3, 3) = 0.5 * (1.0 + e);
  GateProvenance prov{GateProvenance::Kind::family, "dual_family", {a}, 0, 0};
  return Gate(std::move(m), {2, 2}, std::move(prov));
}

Gate entangler_family(EntanglerFamily family, double b) {
  Matrix factor;
  GateProvenance prov{GateProvenance::Kind::family, "", {b}, 0, 0};
  switch (family) {
    case EntanglerFamily::f1:
      prov.name = "f1";
      factor = involution_power(cnot_matrix(), b);
      break;
    case EntanglerFamily::f2:
      prov.name = "f2";
      factor = cnot_matrix() * involution_power(cnot_reversed_matrix(), b);
      break;
    default:
      throw Error(ErrorKind::argument, "unknown entangler family");
  }
  Matrix u = Eigen::kroneckerProduct(factor, factor);
  return Gate(std::move(u), {4, 4}, std::move(prov));
}

bool CartanParams::canonicalized() const {
  return kPi / 4 + 1e-15 >= alpha1 && alpha1 >= alpha2 && alpha2 >= alpha3 && alpha3 >= -1e-15;
}

CartanParams CartanParams::canonicalize() const {
  auto fold = [](double a) {
    a = std::fmod(a, kPi / 2);
    if (a < 0) a += kPi / 2;
    return std::min(a, kPi / 2 - a);
  };
  std::array<double, 3> v{fold(alpha1), fold(alpha2), fold(alpha3)};
  std::sort(v.begin(), v.end(), std::greater<>());
  CartanParams out = *this;
  out.alpha1 = v[0];
  out.alpha2 = v[1];
  out.alpha3 = v[2];
  return out;
}

Gate cartan_gate(const CartanParams& p) {
  // The Bell basis diagonalizes every sigma_k x sigma_k; the (XX, YY, ZZ)
  // eigenvalue signatures per Bell vector are tabulated below.
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Vector4cd phi_p, phi_m, psi_p, psi_m;
  phi_p << s, 0, 0, s;
  phi_m << s, 0, 0, -s;
  psi_p << 0, s, s, 0;
  psi_m << 0, s, -s, 0;
  struct BellLine {
    Eigen::Vector4cd vec;
    double x, y, z;
  };
  const BellLine bell[4] = {
      {phi_p, +1, -1, +1},
      {phi_m, -1, +1, +1},
      {psi_p, +1, +1, -1},
      {psi_m, -1, -1, -1},
  };
  Matrix u_int = Matrix::Zero(4, 4);
  for (const auto& bl : bell) {
    cx phase = std::exp(cx(0, p.alpha1 * bl.x + p.alpha2 * bl.y + p.alpha3 * bl.z));
    u_int += phase * (bl.vec * bl.vec.adjoint());
  }
  Matrix pre = Eigen::kroneckerProduct(p.pre_a, p.pre_b);
  Matrix post = Eigen::kroneckerProduct(p.post_a, p.post_b);
  GateProvenance prov{GateProvenance::Kind::family, "cartan", {p.alpha1, p.alpha2, p.alpha3}, 0, 0};
  return Gate(post * u_int * pre, {2, 2}, std::move(prov));
}

Matrix reshuffle_matrix(const Matrix& u) {
  auto n = static_cast<std::size_t>(u.rows());
  auto d = static_cast<std::size_t>(std::llround(std::sqrt(double(n))));
  if (d * d != n || u.cols() != u.rows())
    throw Error(ErrorKind::argument, "reshuffle_matrix expects a (d*d)x(d*d) matrix");
  Matrix r(n, n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l)
          r(i * d + k, j * d + l) = u(i * d + j, k * d + l);
  return r;
}

DualUnitarityReport is_dual_unitary(const Matrix& u, double tol) {
  DualUnitarityReport rep;
  rep.unitarity_residual = unitarity_residual(u);
  rep.reshuffle_residual = unitarity_residual(reshuffle_matrix(u));
  rep.pass = rep.unitarity_residual < tol && rep.reshuffle_residual < tol;
  return rep;
}

DualUnitarityReport is_dual_unitary(const Gate& g, double tol) {
  if (g.local_dims().size() != 2 || g.local_dims()[0] != g.local_dims()[1])
    throw Error(ErrorKind::argument, "dual unitarity needs a two-subsystem gate");
  return is_dual_unitary(g.matrix(), tol);
}

Gate haar_unitary(std::size_t n, std::uint64_t seed) {
  rng::Stream stream(seed);
  Matrix g(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      g(r, c) = cx(stream.next_gaussian(), stream.next_gaussian()) / std::sqrt(2.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t i = 0; i < n; ++i) {
    cx d = r(i, i);
    cx ph = std::abs(d) > 0 ? d / std::abs(d) : cx(1, 0);
    q.col(i) *= ph;
  }
  GateProvenance prov{GateProvenance::Kind::haar, "haar", {static_cast<double>(n)}, seed, 0};
  return Gate(std::move(q), {n}, std::move(prov));
}

Matrix polar_unitary(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

SinkhornResult sinkhorn_project(const Matrix& start, double tol, int max_iter,
                                GateProvenance prov) {
  if (tol <= 0 || max_iter < 1)
    throw Error(ErrorKind::argument, "sinkhorn needs tol > 0 and max_iter >= 1");
  Matrix a = start;
  double r1 = 0, r2 = 0;
  for (int it = 1; it <= max_iter; ++it) {
    a = polar_unitary(a);
    Matrix r = polar_unitary(reshuffle_matrix(a));
    a = reshuffle_matrix(r);  // reshuffle is an involution
    Matrix candidate = polar_unitary(a);
    r1 = unitarity_residual(candidate);
    r2 = unitarity_residual(reshuffle_matrix(candidate));
    if (r1 < tol && r2 < tol) {
      prov.iterations = it;
      return SinkhornResult{Gate(std::move(candidate), {2, 2}, prov), it, r1, r2};
    }
  }
  throw Error(ErrorKind::convergence,
              "sinkhorn did not converge: residuals " + std::to_string(r1) + ", " +
                  std::to_string(r2) + " after " + std::to_string(max_iter) + " sweeps");
}

SinkhornResult sinkhorn_dual_unitary(std::uint64_t seed, double tol, int max_iter) {
  Gate start = haar_unitary(4, seed);
  GateProvenance prov{GateProvenance::Kind::sinkhorn, "sinkhorn", {}, seed, 0};
  return sinkhorn_project(start.matrix(), tol, max_iter, std::move(prov));
}

double phase_distance(const Matrix& a, const Matrix& b) {
  cx overlap = (a.adjoint() * b).trace();
  cx phase = std::abs(overlap) > 0 ? overlap / std::abs(overlap) : cx(1, 0);
  return (a * phase - b).norm();
}

std::pair<cx, cx> local_invariants(const Matrix& u) {
  if (u.rows() != 4 || u.cols() != 4)
    throw Error(ErrorKind::argument, "local_invariants expects a 4x4 matrix");
  const double s = 1.0 / std::sqrt(2.0);
  Matrix q(4, 4);  // magic basis
  q << cx(s, 0), cx(0, s), cx(0, 0), cx(0, 0),
       cx(0, 0), cx(0, 0), cx(0, s), cx(s, 0),
       cx(0, 0), cx(0, 0), cx(0, s), cx(-s, 0),
       cx(s, 0), cx(0, -s), cx(0, 0), cx(0, 0);
  Matrix up = q.adjoint() * u * q;
  Matrix m = up.transpose() * up;
  cx det = u.determinant();
  cx tr = m.trace();
  cx g1 = tr * tr / (16.0 * det);
  cx g2 = (tr * tr - (m * m).trace()) / (4.0 * det);
  return {g1, g2};
}

Gate reinterpret_subsystems(const Gate& g, std::vector<std::size_t> local_dims) {
  return Gate(g.matrix(), std::move(local_dims), g.provenance());
}

Gate gate_from_provenance(const GateProvenance& prov) {
  switch (prov.kind) {
    case GateProvenance::Kind::named: {
      if (prov.name == "Id") return named_gate(NamedGate::Id);
      if (prov.name == "CNOT") return named_gate(NamedGate::CNOT);
      if (prov.name == "DCNOT") return named_gate(NamedGate::DCNOT);
      if (prov.name == "SWAP") return named_gate(NamedGate::SWAP);
      throw Error(ErrorKind::argument, "unknown named gate '" + prov.name + "'");
    }
    case GateProvenance::Kind::family: {
      if (prov.name == "dual_family") return dual_family(prov.params.at(0));
      if (prov.name == "cnot_power") return cnot_power(prov.params.at(0));
      if (prov.name == "f1") return entangler_family(EntanglerFamily::f1, prov.params.at(0));
      if (prov.name == "f2") return entangler_family(EntanglerFamily::f2, prov.params.at(0));
      if (prov.name == "cartan") {
        CartanParams p;
        p.alpha1 = prov.params.at(0);
        p.alpha2 = prov.params.at(1);
        p.alpha3 = prov.params.at(2);
        return cartan_gate(p);
      }
      throw Error(ErrorKind::argument, "unknown gate family '" + prov.name + "'");
    }
    case GateProvenance::Kind::haar:
      return haar_unitary(static_cast<std::size_t>(prov.params.at(0)), prov.seed);
    case GateProvenance::Kind::sinkhorn:
      return sinkhorn_dual_unitary(prov.seed).gate;
  }
  throw Error(ErrorKind::argument, "bad provenance");
}

Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
  rng::Stream stream(seed);
  Eigen::MatrixXd g(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) g(r, c) = stream.next_gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q.cast<cx>();
}

}  // namespace htn
