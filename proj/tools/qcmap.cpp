#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "qcmap/parallel.hpp"

using namespace qcmap::cli;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("qcmap");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("QCMAP_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Quasiconformal maps on planar triangle meshes"};
  app.require_subcommand(1);
  Options o;
  int jobs = 1;
  app.add_option("--jobs", jobs, "worker threads for per-face loops")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "check a mesh file against the mesh invariants");
  validate->add_option("--mesh", o.mesh)->required();

  auto* solve = app.add_subcommand("solve", "pinned least-squares quasiconformal solve");
  solve->add_option("--mesh", o.mesh)->required();
  solve->add_option("--mu", o.mu, "per-face or per-vertex coefficients (.json or re,im .csv)")->required();
  solve->add_option("--pins", o.pins, "'i,j' or 'auto'");
  solve->add_option("--out", o.out)->required();
  solve->add_flag("--debug-unscaled-rows", o.unscaled_rows);

  auto* recover = app.add_subcommand("recover-bc", "Beltrami coefficients of a mapped mesh");
  recover->add_option("--mesh", o.mesh)->required();
  recover->add_option("--mapped", o.mapped)->required();
  recover->add_option("--out", o.out)->required();

  auto* densmap = app.add_subcommand("densmap", "density-equalizing map from a job file");
  auto* reg = app.add_subcommand("register", "registration from a job file");
  for (auto* sub : {densmap, reg}) {
    sub->add_option("--job", o.job)->required();
    sub->add_option("--out", o.out)->required();
    sub->add_option("--config", o.config, "optimizer config JSON overriding the job");
    sub->add_option("--pins", o.pins, "'i,j' or 'auto' when the job does not set pins");
    sub->add_option("--seed", o.seed);
    sub->add_flag("--scale-r0", o.scale_r0, "divide problem positions by max |v| before locating them");
    sub->add_flag("--timing", o.timing, "fill the millis trace column");
    sub->add_flag("--dump-gradients", o.dump_gradients, "write the first gradient to gradients.json");
  }

  auto* prop = app.add_subcommand("proptest", "randomized property suites");
  prop->add_option("--suite", o.suite)
      ->check(CLI::IsMember({"all", "rank", "exact_bc", "reconstruct", "similarity", "resolution", "adjoint"}));
  prop->add_option("--seed", o.seed);
  prop->add_option("--trials", o.trials)->check(CLI::PositiveNumber);
  prop->add_option("--out", o.out, "also write proptest.json here");
  prop->add_flag("--debug-unscaled-rows", o.unscaled_rows);
  prop->add_flag("--timing", o.timing);

  auto* spectrum = app.add_subcommand("spectrum", "smallest cotangent Laplacian eigenpairs");
  spectrum->add_option("--mesh", o.mesh)->required();
  spectrum->add_option("--k", o.k)->check(CLI::PositiveNumber);
  spectrum->add_option("--out", o.out)->required();

  auto* example = app.add_subcommand("example", "write a synthetic job directory");
  example->add_option("--kind", o.kind)->check(CLI::IsMember({"peak", "uniform", "planted", "overlap"}));
  example->add_option("--seed", o.seed);
  example->add_option("--out", o.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }
  qcmap::set_num_threads(jobs);

  if (*validate) return guarded(cmd_validate, o);
  if (*solve) return guarded(cmd_solve, o);
  if (*recover) return guarded(cmd_recover_bc, o);
  if (*densmap) return guarded(cmd_densmap, o);
  if (*reg) return guarded(cmd_register, o);
  if (*prop) return guarded(cmd_proptest, o);
  if (*spectrum) return guarded(cmd_spectrum, o);
  return guarded(cmd_example, o);
}
