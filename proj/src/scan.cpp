#include "htn/scan.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "htn/rng.hpp"

namespace htn {

void ScanConfig::validate() const {
  if (samples < 1) throw Error(ErrorKind::argument, "sample count must be >= 1");
  if (grid_a < 1 || grid_b < 1) throw Error(ErrorKind::argument, "grids must be non-empty");
  if (!(tol > 0)) throw Error(ErrorKind::argument, "tolerance must be positive");
  if (format != "csv" && format != "jsonl")
    throw Error(ErrorKind::argument, "format must be csv or jsonl");
  if (family != "f1" && family != "f2")
    throw Error(ErrorKind::argument, "family must be f1 or f2");
  if (layers < 0 || layers > 8) throw Error(ErrorKind::argument, "layers must be in 0..8");
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HTN_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  threads = std::min<std::size_t>(std::max(threads, 1), n == 0 ? 1 : n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= n) break;
          fn(i);
        }
      } catch (...) {
        errors[t] = std::current_exception();
        next.store(n);  // drain remaining work
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
  return rng::derive_seed(master, index * 4 + stream);
}

// -------------------------------- output -------------------------------------

namespace {

std::string fmt_double(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::string csv_header() {
  return "index,seed,family,a,b,lambda2,lambda3,lambda4,lambda5,lambda6,delta,delta_right,"
         "deflation_residual,sv_ratio,C_real,dismissed,degenerate,skipped";
}

std::string csv_line(const ScanRow& r) {
  std::string out;
  out += std::to_string(r.index);
  out += ',';
  out += std::to_string(r.seed);
  out += ',';
  out += r.family;
  out += ',';
  out += fmt_double(r.a);
  out += ',';
  out += fmt_double(r.b);
  for (double l : r.lambda) {
    out += ',';
    out += fmt_double(l);
  }
  out += ',';
  out += fmt_double(r.delta);
  out += ',';
  out += fmt_double(r.delta_right);
  out += ',';
  out += fmt_double(r.deflation_residual);
  out += ',';
  out += fmt_double(r.sv_ratio);
  out += ',';
  out += fmt_double(r.c_real);
  out += ',';
  out += r.dismissed < 0 ? "" : std::to_string(r.dismissed);
  out += ',';
  out += std::to_string(r.degenerate);
  out += ',';
  out += std::to_string(r.skipped);
  return out;
}

void write_rows(const ScanConfig& cfg, const std::vector<ScanRow>& rows) {
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!cfg.out_path.empty()) {
    file.open(cfg.out_path);
    if (!file) throw Error(ErrorKind::io, "cannot open '" + cfg.out_path + "'");
    os = &file;
  }
  if (cfg.format == "csv") {
    *os << csv_header() << '\n';
    for (const auto& r : rows) *os << csv_line(r) << '\n';
  } else {
    for (const auto& r : rows) {
      nlohmann::json j{{"index", r.index},
                       {"seed", r.seed},
                       {"family", r.family},
                       {"provenance", r.provenance},
                       {"csv", csv_line(r)}};
      *os << j.dump() << '\n';
    }
  }
  if (!cfg.provenance_path.empty() && cfg.format == "csv") {
    std::ofstream prov(cfg.provenance_path);
    if (!prov) throw Error(ErrorKind::io, "cannot open '" + cfg.provenance_path + "'");
    for (const auto& r : rows) {
      nlohmann::json j{{"index", r.index},
                       {"seed", r.seed},
                       {"provenance", r.provenance},
                       {"wall_ms", r.wall_ms}};
      prov << j.dump() << '\n';
    }
  }
}

// ------------------------------ spectral row ----------------------------------

ScanRow spectral_row(const Gate& dual, const Gate& entangler) {
  ScanRow row;
  Frame frame = build_frame(dual);
  const Matrix& u = entangler.matrix();

  auto spectrum_for = [&](Turn turn) {
    Matrix mf = frame_transfer(frame, turn);
    std::vector<cx> spec = sort_spectrum(reduced_spectrum_fast(mf, u));
    if (std::abs(std::abs(spec.front()) - 32.0) > 1e-6 * 32.0)
      throw Error(ErrorKind::integrity, "fast reduced spectrum lost the leading eigenvalue");
    return spec;
  };

  std::vector<cx> left = spectrum_for(Turn::left);
  try {
    SpectralReport rep = scaling_dimension(left);
    row.lambda = rep.lambda;
    row.delta = rep.delta;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::integrity) throw;
    row.degenerate = 1;
    for (int i = 0; i < 5; ++i)
      row.lambda[i] = (i + 1) < static_cast<int>(left.size())
                          ? std::abs(left[static_cast<std::size_t>(i) + 1]) / 32.0
                          : 0.0;
  }
  try {
    row.delta_right = scaling_dimension(spectrum_for(Turn::right)).delta;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::integrity) throw;
  }

  nlohmann::json prov;
  prov["dual"] = dual.provenance().to_json();
  prov["entangler"] = entangler.provenance().to_json();
  row.provenance = std::move(prov);
  return row;
}

// -------------------------------- sweep ---------------------------------------

SweepResult run_sweep(const ScanConfig& cfg) {
  cfg.validate();
  EntanglerFamily fam = cfg.family == "f1" ? EntanglerFamily::f1 : EntanglerFamily::f2;
  const std::size_t total = static_cast<std::size_t>(cfg.grid_a) * cfg.grid_b;
  SweepResult result;
  result.rows.resize(total);

  parallel_for(total, resolve_threads(cfg.threads), [&](std::size_t idx) {
    int ia = static_cast<int>(idx) / cfg.grid_b;
    int ib = static_cast<int>(idx) % cfg.grid_b;
    double a = cfg.grid_a == 1 ? 0.0 : static_cast<double>(ia) / (cfg.grid_a - 1);
    double b = cfg.grid_b == 1 ? 0.0 : static_cast<double>(ib) / (cfg.grid_b - 1);
    auto t0 = std::chrono::steady_clock::now();
    ScanRow row = spectral_row(dual_family(a), entangler_family(fam, b));
    row.index = idx;
    row.family = cfg.family;
    row.a = a;
    row.b = b;
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.rows[idx] = std::move(row);
  });

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < total; ++i) {
    double d = result.rows[i].delta;
    if (std::isfinite(d) && d < best) {
      best = d;
      result.argmin = i;
    }
  }
  return result;
}

// ------------------------------ random scan -----------------------------------

RandomScanResult run_random_scan(const ScanConfig& cfg) {
  cfg.validate();
  RandomScanResult result;
  result.rows.resize(cfg.samples);

  parallel_for(cfg.samples, resolve_threads(cfg.threads), [&](std::size_t i) {
    auto t0 = std::chrono::steady_clock::now();
    ScanRow row;
    row.index = i;
    row.seed = sample_seed(cfg.seed, i, 0);
    row.family = "sinkhorn+haar";
    std::uint64_t haar_seed = sample_seed(cfg.seed, i, 1);
    try {
      SinkhornResult dual = sinkhorn_dual_unitary(row.seed, cfg.tol, cfg.sinkhorn_max_iter);
      Gate entangler = haar_unitary(16, haar_seed);
      ScanRow spectral = spectral_row(dual.gate, entangler);
      spectral.index = i;
      spectral.seed = row.seed;
      spectral.family = row.family;
      row = std::move(spectral);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::convergence) throw;
      row.skipped = 1;
      row.provenance = {{"skipped", "sinkhorn did not converge"},
                        {"seed", row.seed},
                        {"haar_seed", haar_seed}};
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.rows[i] = std::move(row);
  });

  std::vector<double> deltas;
  for (const auto& r : result.rows) {
    if (r.skipped) {
      ++result.skipped;
      continue;
    }
    if (std::isfinite(r.delta)) deltas.push_back(r.delta);
  }
  if (!deltas.empty()) {
    std::sort(deltas.begin(), deltas.end());
    result.delta_min = deltas.front();
    result.delta_max = deltas.back();
    result.delta_median = deltas[deltas.size() / 2];
  }
  return result;
}

// ------------------------------ three-point -----------------------------------

ThreePointScanResult run_three_point(const ScanConfig& cfg) {
  cfg.validate();
  EntanglerFamily fam = cfg.family == "f1" ? EntanglerFamily::f1 : EntanglerFamily::f2;
  Gate dual = dual_family(cfg.a);
  Gate entangler = entangler_family(fam, cfg.b);
  Node node = build_node(standard_perfect_tensor(), build_frame(dual), entangler);
  ReducedNode reduced = reduced_path_node(node, Turn::left);
  ThreePointKernel kernel = three_point_kernel(node, reduced);
  ScanRow base = spectral_row(dual, entangler);

  ThreePointScanResult result;
  result.rows.resize(cfg.samples);
  parallel_for(cfg.samples, resolve_threads(cfg.threads), [&](std::size_t i) {
    ScanRow row = base;
    row.index = i;
    row.seed = sample_seed(cfg.seed, i, 2);
    BulkOperator bulk = BulkOperator::random_wishart(row.seed);
    ThreePointReport rep = three_point_from_kernel(kernel, bulk);
    row.sv_ratio = rep.sv_ratio;
    row.deflation_residual = rep.deflation_residual;
    row.dismissed = rep.dismissed ? 1 : 0;
    if (!rep.dismissed) row.c_real = rep.c_value;
    row.provenance["bulk_seed"] = row.seed;
    result.rows[i] = std::move(row);
  });
  for (const auto& r : result.rows)
    if (r.dismissed == 1) ++result.dismissed;
  return result;
}

// --------------------------------- verify -------------------------------------

namespace {

void add_check(std::vector<CheckResult>& out, const std::string& name, double residual,
               double default_tol, double cfg_tol) {
  double tol = std::max(default_tol, cfg_tol);
  out.push_back({name, residual, tol, residual < tol});
}

}  // namespace

std::vector<CheckResult> run_verify(const ScanConfig& cfg) {
  cfg.validate();
  std::vector<CheckResult> checks;
  const double ct = cfg.tol;

  // ---- gates ----
  {
    Matrix dcnot = named_gate(NamedGate::DCNOT).matrix();
    Matrix prod = named_gate(NamedGate::CNOT).matrix() * named_gate(NamedGate::SWAP).matrix();
    add_check(checks, "gates.dcnot_is_cnot_swap", (dcnot - prod).norm(), 1e-15, ct);
  }
  {
    double worst = 0;
    for (int i = 0; i <= 100; ++i) {
      auto rep = is_dual_unitary(dual_family(i / 100.0));
      worst = std::max({worst, rep.unitarity_residual, rep.reshuffle_residual});
    }
    add_check(checks, "gates.dual_family_grid", worst, 1e-10, ct);
  }
  {
    double worst = 0;
    rng::Stream stream(17);
    for (int i = 0; i < 8; ++i) {
      double b1 = stream.next_uniform(), b2 = stream.next_uniform();
      Matrix lhs = cnot_power(b1).matrix() * cnot_power(b2).matrix();
      worst = std::max(worst, (lhs - cnot_power(b1 + b2).matrix()).norm());
    }
    add_check(checks, "gates.cnot_power_semigroup", worst, 1e-10, ct);
  }
  {
    Matrix a = haar_unitary(4, 42).matrix();
    Matrix b = haar_unitary(4, 42).matrix();
    add_check(checks, "gates.haar_deterministic", (a - b).norm(), 1e-15, ct);
  }
  {
    SinkhornResult s = sinkhorn_dual_unitary(7, 1e-10, cfg.sinkhorn_max_iter);
    auto rep = is_dual_unitary(s.gate);
    add_check(checks, "gates.sinkhorn_converges",
              std::max(rep.unitarity_residual, rep.reshuffle_residual), 1e-10, ct);
    SinkhornResult again = sinkhorn_project(s.gate.matrix(), 1e-9, 4, s.gate.provenance());
    add_check(checks, "gates.sinkhorn_fixed_point",
              (again.gate.matrix() - s.gate.matrix()).norm(), 1e-8, ct);
  }

  // ---- blocks ----
  const PerfectTensor& pt = standard_perfect_tensor();
  {
    auto rep = check_latin_cubes(pt.cubes);
    add_check(checks, "blocks.latin_cubes", rep.pass() ? 0.0 : 1.0, 0.5, ct);
    add_check(checks, "blocks.perfect_bipartitions", is_perfect(pt.t).worst_residual, 1e-10, ct);
    add_check(checks, "blocks.cyclic_symmetry", cyclic_symmetry_residual(pt.t), 1e-15, ct);
  }
  {
    Gate gen = cfg.inject_fault == "cnot_frame" ? named_gate(NamedGate::CNOT)
                                                : dual_family(0.302);
    Frame frame = build_frame(gen, /*force=*/true);
    auto rep = check_planar_2uniform(frame);
    double worst = *std::max_element(rep.residual.begin(), rep.residual.end());
    add_check(checks, "blocks.frame_planar_2uniform", worst, 1e-10, ct);
    add_check(checks, "blocks.frame_scalar_agreement", rep.scalar_spread, 1e-10, ct);
  }
  {
    Gate dual = dual_family(0.302);
    Gate ent = entangler_family(EntanglerFamily::f1, 0.817);
    Node node = build_node(pt, build_frame(dual), ent);
    auto red = verify_node_reduction(node);
    add_check(checks, "blocks.node_reduction_windows",
              *std::max_element(red.residual.begin(), red.residual.end()), 1e-9, ct);
    add_check(checks, "blocks.node_isometry", node_isometry_residual(node), 1e-9, ct);
    ReducedNode r = reduced_path_node(node, Turn::left);
    add_check(checks, "blocks.lambda1_is_32", r.lambda1_residual, 1e-8, ct);
    add_check(checks, "blocks.phi_eigenvector", r.phi_residual, 1e-8, ct);

    auto [a, bmat] = evenbly_split(pt, node.frame, ent);
    auto ev = check_evenbly_code(a, bmat);
    double worst = std::max({ev.cyclic_residual, ev.b_symmetry_residual,
                             ev.b_unitarity_residual, ev.v_residual, ev.w_residual,
                             ev.a_residual});
    add_check(checks, "blocks.evenbly_conditions", worst, 1e-9, ct);

    // gauge invariance of the spectrum under U -> U Q
    Matrix q = random_orthogonal(16, 99);
    Frame frame = build_frame(dual);
    Matrix mf = frame_transfer(frame, Turn::left);
    auto s1 = sort_spectrum(reduced_spectrum_fast(mf, ent.matrix()));
    auto s2 = sort_spectrum(reduced_spectrum_fast(mf, Matrix(ent.matrix() * q)));
    double dist = 0;
    for (std::size_t i = 0; i < s1.size(); ++i)
      dist = std::max(dist, std::abs(std::abs(s1[i]) - std::abs(s2[i])));
    add_check(checks, "blocks.gauge_invariance", dist / 32.0, 1e-8, ct);

    // correlations on the same recipe
    PathCaps caps = build_caps(node, Turn::left);
    TilingNetwork net = TilingNetwork::central();
    rng::Stream stream(5);
    double worst_oracle = 0;
    for (int k = 0; k < 5; ++k) {
      BoundaryObservable v1 = BoundaryObservable::random_traceless(stream.next_u64());
      BoundaryObservable v2 = BoundaryObservable::random_traceless(stream.next_u64());
      BulkOperator bulk = BulkOperator::random_wishart(stream.next_u64());
      cx transfer = two_point_transfer(r, 1, caps, v1, v2, bulk);
      cx brute = brute_force_sandwich(net, node, bulk, {{0, v1}, {2, v2}});
      worst_oracle = std::max(worst_oracle,
                              std::abs(transfer - brute) / std::max(std::abs(brute), 1e-300));
    }
    add_check(checks, "correlations.oracle_equivalence", worst_oracle, 1e-8, ct);

    SubleadingExtract ex = subleading_extract(r);
    add_check(checks, "correlations.deflation_radius", ex.deflation_residual, 1e-7, ct);
    ThreePointKernel kern = three_point_kernel(node, r);
    ThreePointReport rep3 = three_point_from_kernel(kern, BulkOperator::maximally_mixed());
    add_check(checks, "correlations.three_point_real",
              rep3.dismissed ? 0.0
                             : std::abs(rep3.c_imag) / std::max(1.0, std::abs(rep3.c_value)),
              1e-8, ct);

    if (!cfg.dump_node_path.empty()) write_tensor(cfg.dump_node_path, node.t);
    if (!cfg.dump_frame_path.empty()) write_tensor(cfg.dump_frame_path, node.frame.t);
  }
  {
    // HaPPY-like limit: identity entangler, SWAP frame
    Gate dual = named_gate(NamedGate::SWAP);
    Gate ent(Matrix::Identity(16, 16), {4, 4},
             GateProvenance{GateProvenance::Kind::named, "Id16", {}, 0, 0});
    Node node = build_node(pt, build_frame(dual), ent);
    ReducedNode r = reduced_path_node(node, Turn::left);
    double lam2 = r.spectrum.size() > 1 ? std::abs(r.spectrum[1]) / 32.0 : 0.0;
    add_check(checks, "blocks.happy_lambda2_vanishes", lam2, 1e-8, ct);
    PathCaps caps = build_caps(node, Turn::left);
    rng::Stream stream(11);
    BoundaryObservable v1 = BoundaryObservable::random_traceless(stream.next_u64());
    BoundaryObservable v2 = BoundaryObservable::random_traceless(stream.next_u64());
    double worst = 0;
    for (int n = 1; n <= 6; ++n)
      worst = std::max(worst, std::abs(two_point_transfer(r, n, caps, v1, v2,
                                                          BulkOperator::maximally_mixed())));
    add_check(checks, "correlations.happy_two_point_zero", worst, 1e-9, ct);
  }

  // ---- network ----
  {
    TilingNetwork net = TilingNetwork::central();
    double ratio = 0;
    int prev = net.boundary_leg_count();
    for (int layer = 1; layer <= 6; ++layer) {
      net = inflate(net);
      ratio = static_cast<double>(net.boundary_leg_count()) / prev;
      prev = net.boundary_leg_count();
    }
    add_check(checks, "network.growth_ratio", std::abs(ratio - network_scaling_factor()), 0.05,
              ct);
    add_check(checks, "network.interior_vertices",
              net.interior_vertices_closed() ? 0.0 : 1.0, 0.5, ct);
  }
  {
    TilingNetwork net = inflate(inflate(TilingNetwork::central()));
    int worst = 0;
    for (int a = 0; a < net.boundary_leg_count(); ++a)
      for (int b = a + 1; b < net.boundary_leg_count(); ++b)
        worst = std::max(worst, static_cast<int>(find_all_paths(net, a, b).size()));
    add_check(checks, "network.path_uniqueness_2layers", worst > 1 ? 1.0 : 0.0, 0.5, ct);
    add_check(checks, "network.no_triangles_2layers",
              no_triangle_check(net).pass ? 0.0 : 1.0, 0.5, ct);
  }

  // ---- correlations (closed form) ----
  add_check(checks, "correlations.central_charge_bound",
            std::abs(central_charge_bound() - 18.948), 0.01, ct);

  return checks;
}

nlohmann::json verify_report_json(const std::vector<CheckResult>& checks) {
  nlohmann::json arr = nlohmann::json::array();
  bool all = true;
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name}, {"residual", c.residual}, {"tol", c.tol}, {"pass", c.pass}});
    all = all && c.pass;
  }
  return {{"pass", all}, {"checks", arr}};
}

}  // namespace htn
