#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "htn/scan.hpp"

using namespace htn;

namespace {

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::argument:
    case ErrorKind::io:
      return 2;
    default:
      return 3;  // numeric integrity / convergence / size / search
  }
}

void add_common(CLI::App* cmd, ScanConfig& cfg) {
  cmd->add_option("--seed", cfg.seed, "master seed");
  cmd->add_option("--samples", cfg.samples, "sample count");
  cmd->add_option("--tol", cfg.tol, "tolerance override");
  cmd->add_option("--out", cfg.out_path, "output path (default stdout)");
  cmd->add_option("--format", cfg.format, "csv | jsonl");
  cmd->add_option("--threads", cfg.threads, "worker threads (0 = auto / HTN_THREADS)");
  cmd->add_option("--provenance", cfg.provenance_path, "JSON-lines provenance sidecar");
}

}  // namespace

int main(int argc, char** argv) {
  setenv("OPENBLAS_NUM_THREADS", "1", 0);  // parallelism lives at the sample level
  CLI::App app{"hyperinvariant tensor networks on the {5,4} tiling"};
  app.require_subcommand(1);

  ScanConfig cfg;
  std::string grid = "101x101";
  std::string dot_path;

  CLI::App* verify = app.add_subcommand("verify", "run the construction verification suites");
  add_common(verify, cfg);
  verify->add_option("--inject-fault", cfg.inject_fault,
                     "negative-control hook (cnot_frame)");
  verify->add_option("--dump-node", cfg.dump_node_path, "dump the verified node tensor");
  verify->add_option("--dump-frame", cfg.dump_frame_path, "dump the verified frame tensor");

  CLI::App* sweep = app.add_subcommand("sweep", "family sweep over (a, b)");
  add_common(sweep, cfg);
  sweep->add_option("--family", cfg.family, "f1 | f2");
  sweep->add_option("--grid", grid, "grid sizes, e.g. 101x101");

  CLI::App* scan = app.add_subcommand("scan", "random scan: Sinkhorn dual + Haar entangler");
  add_common(scan, cfg);
  scan->add_option("--sinkhorn-max-iter", cfg.sinkhorn_max_iter, "projection sweep budget");

  CLI::App* three = app.add_subcommand("three-point", "three-point coefficient scan");
  add_common(three, cfg);
  three->add_option("--family", cfg.family, "f1 | f2");
  three->add_option("--a", cfg.a, "dual-unitary family parameter");
  three->add_option("--b", cfg.b, "entangler family parameter");

  CLI::App* charge = app.add_subcommand("central-charge", "print the central charge bound");

  CLI::App* dump = app.add_subcommand("net-dump", "emit the tiling network as JSON");
  dump->add_option("--layers", cfg.layers, "inflation layers");
  dump->add_option("--out", cfg.out_path, "output path (default stdout)");
  dump->add_option("--dot", dot_path, "also write a GraphViz edge list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(verify)) {
      cfg.mode = ScanConfig::Mode::verify;
      auto checks = run_verify(cfg);
      nlohmann::json report = verify_report_json(checks);
      if (cfg.out_path.empty()) {
        for (const auto& c : checks)
          std::printf("%-45s %-4s residual %.3e (tol %.1e)\n", c.name.c_str(),
                      c.pass ? "ok" : "FAIL", c.residual, c.tol);
      } else {
        std::ofstream out(cfg.out_path);
        out << report.dump(2) << '\n';
      }
      if (!report["pass"].get<bool>()) {
        for (const auto& c : checks)
          if (!c.pass) {
            std::fprintf(stderr, "verification failed: %s (residual %.3e)\n", c.name.c_str(),
                         c.residual);
            break;
          }
        return 1;
      }
      return 0;
    }
    if (app.got_subcommand(sweep)) {
      cfg.mode = ScanConfig::Mode::sweep;
      auto x = grid.find('x');
      if (x == std::string::npos) {
        cfg.grid_a = cfg.grid_b = std::stoi(grid);
      } else {
        cfg.grid_a = std::stoi(grid.substr(0, x));
        cfg.grid_b = std::stoi(grid.substr(x + 1));
      }
      SweepResult res = run_sweep(cfg);
      write_rows(cfg, res.rows);
      const ScanRow& best = res.rows[res.argmin];
      std::fprintf(stderr, "min delta %.6f at a=%.4f b=%.4f\n", best.delta, best.a, best.b);
      return 0;
    }
    if (app.got_subcommand(scan)) {
      cfg.mode = ScanConfig::Mode::random_scan;
      RandomScanResult res = run_random_scan(cfg);
      write_rows(cfg, res.rows);
      std::fprintf(stderr,
                   "samples %llu skipped %llu delta min/median/max %.6f / %.6f / %.6f\n",
                   static_cast<unsigned long long>(cfg.samples),
                   static_cast<unsigned long long>(res.skipped), res.delta_min,
                   res.delta_median, res.delta_max);
      return 0;
    }
    if (app.got_subcommand(three)) {
      cfg.mode = ScanConfig::Mode::three_point;
      ThreePointScanResult res = run_three_point(cfg);
      write_rows(cfg, res.rows);
      std::fprintf(stderr, "samples %llu dismissed %llu\n",
                   static_cast<unsigned long long>(cfg.samples),
                   static_cast<unsigned long long>(res.dismissed));
      return 0;
    }
    if (app.got_subcommand(charge)) {
      std::printf("%.6f\n", central_charge_bound());
      return 0;
    }
    if (app.got_subcommand(dump)) {
      cfg.mode = ScanConfig::Mode::net_dump;
      cfg.validate();
      TilingNetwork net = TilingNetwork::central();
      for (int i = 0; i < cfg.layers; ++i) net = inflate(net);
      std::string json = net.to_json().dump(2);
      if (cfg.out_path.empty()) {
        std::cout << json << '\n';
      } else {
        std::ofstream out(cfg.out_path);
        out << json << '\n';
      }
      if (!dot_path.empty()) {
        std::ofstream out(dot_path);
        out << net.to_graphviz();
      }
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
