#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htn/correlations.hpp"

namespace htn {

struct ScanConfig {
  enum class Mode { verify, sweep, random_scan, three_point, central_charge, net_dump };
  Mode mode = Mode::verify;

  // families and grids (sweep, three_point)
  std::string family = "f1";  // f1 | f2
  int grid_a = 101;
  int grid_b = 101;
  double a = 0.302;  // three_point recipe parameters
  double b = 0.817;

  std::uint64_t samples = 1000;
  std::uint64_t seed = 1;
  double tol = 1e-10;
  int threads = 0;  // 0: HTN_THREADS env or hardware concurrency
  int sinkhorn_max_iter = 10000;

  std::string out_path;         // CSV destination ("" = stdout)
  std::string provenance_path;  // JSON-lines sidecar ("" = none)
  std::string format = "csv";   // csv | jsonl

  int layers = 2;  // net_dump

  // verify-only hooks
  std::string inject_fault;  // "" | "cnot_frame"
  std::string dump_node_path;
  std::string dump_frame_path;

  void validate() const;
};

/// One output row; numeric columns are bit-reproducible for a fixed config.
struct ScanRow {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::string family;
  double a = std::numeric_limits<double>::quiet_NaN();
  double b = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 5> lambda{};  // |λ2..λ6| / 32
  double delta = std::numeric_limits<double>::quiet_NaN();
  double delta_right = std::numeric_limits<double>::quiet_NaN();
  double deflation_residual = std::numeric_limits<double>::quiet_NaN();
  double sv_ratio = std::numeric_limits<double>::quiet_NaN();
  double c_real = std::numeric_limits<double>::quiet_NaN();
  int dismissed = -1;   // -1 n/a
  int degenerate = 0;
  int skipped = 0;      // Sinkhorn non-convergence
  nlohmann::json provenance;
  double wall_ms = 0;   // JSONL only; never in the CSV
};

std::string csv_header();
std::string csv_line(const ScanRow& row);
void write_rows(const ScanConfig& cfg, const std::vector<ScanRow>& rows);

/// Deterministic parallel map; results are keyed by index so thread count
/// never changes the output.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);
int resolve_threads(int requested);

/// Per-sample seed, independent of the total sample count.
std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream);

// ------------------------------- verify --------------------------------------

struct CheckResult {
  std::string name;
  double residual = 0;
  double tol = 0;
  bool pass = false;
};

std::vector<CheckResult> run_verify(const ScanConfig& cfg);
nlohmann::json verify_report_json(const std::vector<CheckResult>& checks);

// ------------------------------- drivers -------------------------------------

/// Spectral row for an explicit recipe, computed through the factorized
/// reduced-node route (validated against the dense route in the tests).
ScanRow spectral_row(const Gate& dual, const Gate& entangler);

struct SweepResult {
  std::vector<ScanRow> rows;  // row index = ia * grid_b + ib, a = ia/(grid_a-1)
  std::size_t argmin = 0;     // index of the smallest finite delta
};
SweepResult run_sweep(const ScanConfig& cfg);

struct RandomScanResult {
  std::vector<ScanRow> rows;
  std::uint64_t skipped = 0;
  double delta_min = 0, delta_median = 0, delta_max = 0;
};
RandomScanResult run_random_scan(const ScanConfig& cfg);

struct ThreePointScanResult {
  std::vector<ScanRow> rows;
  std::uint64_t dismissed = 0;
};
ThreePointScanResult run_three_point(const ScanConfig& cfg);

}  // namespace htn
