#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "advoc/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"advoc: two-player adverse optimal control with relaxed controls"};
  app.require_subcommand(1);

  advoc::io::RunConfig rc;
  std::string mode_str = "hyperrelaxed";

  CLI::App* run = app.add_subcommand(
      "run", "solve a problem file and write certificate artifacts");
  run->add_option("problem", rc.problem_path, "problem description (JSON)")
      ->required();
  run->add_option("--out", rc.out_dir, "output directory (default: out)");
  run->add_option("--j", rc.j_seq,
                  "smoothing indices, strictly increasing (default 5 10 20 40 80)");
  run->add_option("--steps", rc.n_steps, "time grid steps (default 2000)");
  run->add_option("--mode", mode_str, "relaxed or hyperrelaxed (default)");
  run->add_option("--tol", rc.tol_exchange,
                  "constraint-exchange admission tolerance (default 1e-5)");
  run->add_option("--seed", rc.seed, "seed for randomized components");

  std::string cert_path;
  CLI::App* report =
      app.add_subcommand("report", "summarize a certificate.json");
  report->add_option("path", cert_path, "certificate.json or its directory")
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    if (mode_str == "hyperrelaxed") {
      rc.mode = advoc::adjoint::Mode::hyperrelaxed;
    } else if (mode_str == "relaxed") {
      rc.mode = advoc::adjoint::Mode::relaxed;
    } else {
      std::cerr << "parse error: unknown mode: " << mode_str << "\n";
      return 2;
    }
    return advoc::io::run_cli(rc);
  }
  return advoc::io::report_cli(cert_path);
}
