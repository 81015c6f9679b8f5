#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qcmap/lsqc.hpp"

namespace qcmap::prop {

/// Randomized checks of the pinned solve: full rank, exact recovery on |F| = |V|-2 meshes,
/// homeomorphism reconstruction, similarity covariance, resolution independence and the
/// adjoint gradient.
struct SuiteOptions {
  std::uint64_t seed = 0;
  int trials = 100;
  bool unscaled_rows = false;  // debug negative control
  int max_rings = 25;          // largest disk mesh (1 + 3R(R+1) vertices)
};

struct SuiteResult {
  std::string name;
  int trials = 0;
  int failures = 0;
  double worst = 0.0;  // largest error seen, in the suite's own measure
  double tolerance = 0.0;
  std::vector<std::uint64_t> failing_seeds;
  double seconds = 0.0;

  bool passed() const { return failures == 0; }
};

const std::vector<std::string>& suite_names();

/// Per-trial seed; a failing trial can be rerun alone with trials = 1 and this seed.
std::uint64_t trial_seed(std::uint64_t seed, int trial);

/// Throws InputError for an unknown suite name.
SuiteResult run_suite(const std::string& name, const SuiteOptions& options);

nlohmann::json to_json(const SuiteResult& r, bool with_timing = false);

/// Independent dense solve of the pinned problem in long double, assembled directly from the
/// W formulas. Reference for finite-difference checks on small meshes.
std::vector<std::complex<long double>> reference_solve(const TriMesh& mesh, const VectorXc& mu, const PinPair& pins);

}  // namespace qcmap::prop
