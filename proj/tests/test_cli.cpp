#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include <nlohmann/json.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;
using qcmap::test::tmp_path;
using qcmap::test::write_file;

namespace {

// Exit status of the CLI, stdout and stderr discarded.
int qcmap_run(const std::string& args) {
  const int raw = std::system((std::string(QCMAP_BIN) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSquareOff = "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";

fs::path fresh_dir(const std::string& name) {
  const fs::path d = tmp_path(name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("cli: validate exit codes") {
  CHECK(qcmap_run("validate --mesh " + write_file("cli_square.off", kSquareOff)) == 0);
  // Vertex 4 is unreferenced.
  const auto dangling = write_file("cli_dangling.off", "OFF\n5 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n5 5 0\n3 0 1 2\n3 0 2 3\n");
  CHECK(qcmap_run("validate --mesh " + dangling) == 3);
  CHECK(qcmap_run("validate --mesh " + tmp_path("cli_missing.off")) == 2);
  CHECK(qcmap_run("validate --mesh " + write_file("cli_garbage.off", "OFF\n4 two 0\n")) == 2);
  CHECK(qcmap_run("no-such-command") == 2);
}

TEST_CASE("cli: solve reports mu out of range and shape errors") {
  const auto mesh = write_file("cli_square.off", kSquareOff);
  const auto out = fresh_dir("cli_solve");
  CHECK(qcmap_run("solve --mesh " + mesh + " --mu " + write_file("cli_mu_ok.csv", "re,im\n0.1,0\n0,0.2\n") +
                  " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "image.off"));
  CHECK(fs::exists(out / "report.json"));
  CHECK(qcmap_run("solve --mesh " + mesh + " --mu " + write_file("cli_mu_big.csv", "re,im\n1.5,0\n0,0\n") +
                  " --out " + out.string()) == 4);
  CHECK(qcmap_run("solve --mesh " + mesh + " --mu " + write_file("cli_mu_rows.csv", "re,im\n0,0\n0,0\n0,0\n") +
                  " --out " + out.string()) == 2);
  CHECK(qcmap_run("solve --mesh " + mesh + " --mu " + write_file("cli_mu_ok.csv", "re,im\n0.1,0\n0,0.2\n") +
                  " --pins 1,1 --out " + out.string()) == 2);
}

TEST_CASE("cli: recover-bc rejects a connectivity mismatch") {
  const auto mesh = write_file("cli_square.off", kSquareOff);
  const auto flipped = write_file("cli_square_diag.off", "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 3\n3 1 2 3\n");
  const auto out = fresh_dir("cli_recover");
  CHECK(qcmap_run("recover-bc --mesh " + mesh + " --mapped " + mesh + " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "mu.csv"));
  CHECK(qcmap_run("recover-bc --mesh " + mesh + " --mapped " + flipped + " --out " + out.string()) == 5);
}

TEST_CASE("cli: job errors map to input-error exit code") {
  const auto planted = fresh_dir("cli_planted");
  REQUIRE(qcmap_run("example --kind planted --out " + planted.string()) == 0);
  auto job = nlohmann::json::parse(slurp(planted / "job.json"));
  job["regions"][1]["moving"] = nlohmann::json::array();
  std::ofstream(planted / "empty_region.json") << job.dump();
  CHECK(qcmap_run("register --job " + (planted / "empty_region.json").string() + " --out " +
                  fresh_dir("cli_reg_out").string()) == 2);

  const auto peak = fresh_dir("cli_peak");
  REQUIRE(qcmap_run("example --kind peak --out " + peak.string()) == 0);
  fs::remove(peak / "population.csv");
  CHECK(qcmap_run("densmap --job " + (peak / "job.json").string() + " --out " + fresh_dir("cli_dm_out").string()) == 2);
}

TEST_CASE("cli: proptest negative control fails with exit code 1") {
  CHECK(qcmap_run("proptest --suite resolution --trials 5 --seed 1") == 0);
  CHECK(qcmap_run("proptest --suite resolution --trials 5 --seed 1 --debug-unscaled-rows") == 1);
}

TEST_CASE("cli: densmap output is deterministic") {
  const auto job = fresh_dir("cli_uniform");
  REQUIRE(qcmap_run("example --kind uniform --out " + job.string()) == 0);
  const auto a = fresh_dir("cli_det_a"), b = fresh_dir("cli_det_b");
  const std::string cmd = "densmap --job " + (job / "job.json").string() + " --out ";
  REQUIRE(qcmap_run(cmd + a.string()) == 0);
  REQUIRE(qcmap_run(cmd + b.string()) == 0);
  for (const char* f : {"mapped.off", "trace.csv", "summary.json", "density.csv"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
}
