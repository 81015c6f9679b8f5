#pragma once

#include <cstdint>
#include <string>

namespace qcmap::cli {

enum ExitCode : int { kOk = 0, kPropertyFailure = 1, kInputError = 2, kValidation = 3, kMuRange = 4, kMismatch = 5 };

struct Options {
  std::string mesh, mu, pins = "auto", job, out = ".", config, mapped, suite = "all", kind = "peak";
  std::uint64_t seed = 0;
  int trials = 100;
  int k = 10;
  bool scale_r0 = false;
  bool timing = false;
  bool unscaled_rows = false;
  bool dump_gradients = false;
};

int cmd_validate(const Options& o);
int cmd_solve(const Options& o);
int cmd_recover_bc(const Options& o);
int cmd_densmap(const Options& o);
int cmd_register(const Options& o);
int cmd_proptest(const Options& o);
int cmd_spectrum(const Options& o);
int cmd_example(const Options& o);

/// Runs `fn`, mapping library exceptions onto the exit-code contract.
int guarded(int (*fn)(const Options&), const Options& o);

}  // namespace qcmap::cli
