// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <sys/wait.h>

#include <Eigen/Eigenvalues>
#include <fmt/core.h>

#include "qcmap/beltrami.hpp"
#include "qcmap/mesh_io.hpp"
#include "qcmap/optimize.hpp"
#include "qcmap/proptest.hpp"
#include "qcmap/scenarios.hpp"
#include "qcmap/spectral.hpp"
#include "reference_objective.hpp"

using namespace qcmap;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int g_failed = 0;

void report(const std::string& name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, fmt::format("threw: {}", e.what())};
  }
  std::cout << fmt::format("{} {}: {}\n", v.pass ? "PASS" : "FAIL", name, v.detail) << std::flush;
  if (!v.pass) ++g_failed;
}

// time_limit <= 0 means untimed.
Verdict suite(const std::string& name, int max_rings, double time_limit = 0.0) {
  prop::SuiteOptions o;
  o.trials = 100;
  o.max_rings = max_rings;
  const auto t0 = Clock::now();
  const auto r = prop::run_suite(name, o);
  const double t = seconds_since(t0);
  const std::string limit = time_limit > 0.0 ? fmt::format(" (limit {:g} s)", time_limit) : "";
  return {r.passed() && (time_limit <= 0.0 || t < time_limit),
          fmt::format("{}/{} trials within {:g}, worst {:.3g}, {:.1f} s{}", r.trials - r.failures, r.trials,
                      r.tolerance, r.worst, t, limit)};
}

// --- end-to-end gradients against quad-precision central differences --------

struct GradCheck {
  int checked = 0;
  int bad = 0;
  double worst = 0.0;
};

template <typename Loss>
void compare_components(const VectorXd& x, const VectorXd& grad, gen::Rng& rng, Loss&& loss, GradCheck& out) {
  const Eigen::Index n = x.size(), n_mu = n - 5;
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = n_mu; i < n; ++i) idx.push_back(i);
  std::uniform_int_distribution<Eigen::Index> pick(0, n_mu - 1);
  for (int k = 0; k < 20; ++k) idx.push_back(pick(rng));
  // The smallest components that still count probe the noise floor of the oracle.
  std::vector<Eigen::Index> order(n_mu);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(grad[a]) < std::abs(grad[b]); });
  int small = 0;
  for (auto i : order)
    if (std::abs(grad[i]) >= 1e-7 && small < 5) {
      idx.push_back(i);
      ++small;
    }

  const std::vector<test::quad> xq(x.data(), x.data() + n);
  const test::quad h = 1e-6;
  for (auto i : idx) {
    auto xp = xq, xm = xq;
    xp[i] += h;
    xm[i] -= h;
    const double fd = static_cast<double>((loss(xp) - loss(xm)) / (2 * h));
    const double m = std::max(std::abs(fd), std::abs(grad[i]));
    if (m < 1e-7) continue;
    const double rel = std::abs(fd - grad[i]) / m;
    ++out.checked;
    out.worst = std::max(out.worst, rel);
    if (rel > 1e-4) ++out.bad;
  }
}

OptimParams random_params(const TriMesh& mesh, gen::Rng& rng, double spread) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  OptimParams p = OptimParams::identity(mesh.n_vertices(), pick_pins(mesh));
  p.mu_tilde = gen::smooth_field(mesh, 0.7 + 0.5 * u(rng), rng);
  p.log_temp = 0.5 * u(rng);
  p.phi = spread * u(rng);
  p.s_tilde = 0.1 * u(rng);
  p.r = Complex(0.1 * u(rng), 0.1 * u(rng));
  return p;
}

Verdict adjoint_fd(int instances_per_loss) {
  const auto t0 = Clock::now();
  GradCheck dens, reg;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  OptimConfig c;
  c.log_every = 0;
  int smallest_mesh = 1 << 30, largest_mesh = 0;
  for (int i = 0; i < instances_per_loss; ++i) {
    gen::Rng rng(1000 + i);
    const int rings = 8 + i % 5;
    const auto mesh = gen::disk_mesh(rings, 0.3, rng);
    smallest_mesh = std::min<int>(smallest_mesh, mesh.n_vertices());
    largest_mesh = std::max<int>(largest_mesh, mesh.n_vertices());
    VectorXd pop = gen::population_from_density(
        mesh, gen::gaussian_peak(1.0 + 4.0 * u(rng), {0.4 * u(rng), -0.4 * u(rng)}, 0.2 + 0.3 * u(rng)));
    for (auto& p : pop) p *= 0.8 + 0.4 * u(rng);
    const DensityProblem dp{&mesh, pop, 0.9 + 0.4 * u(rng), 3.0 * u(rng)};
    DensityObjective obj(dp);
    const auto model = make_forward_model(mesh, mesh.vertices(), false);
    const auto p = random_params(mesh, rng, std::numbers::pi);
    LsqcSolver solver;
    const auto ev = evaluate_prepared(p, model, obj, c, solver);
    compare_components(p.flatten(), ev.gradient, rng, [&](const std::vector<test::quad>& xs) {
      const auto fw = test::reference_forward<test::quad>(model, p.pins, xs);
      return test::reference_density(dp, fw.fine, fw.s_tilde) +
             test::reference_regularizers(mesh, fw.mu_vertex, c.weight("bc"), c.weight("smooth"));
    }, dens);
  }
  for (int i = 0; i < instances_per_loss; ++i) {
    gen::Rng rng(5000 + i);
    const auto inst = gen::partial_overlap_registration(8 + i % 5, 12, rng);
    const auto solver_mesh = gen::disk_mesh(8 + (i + 2) % 5, 0.3, rng);
    auto prob = inst.problem();
    prob.chamfer_weight = 0.1 + u(rng);
    RegistrationObjective obj(prob);
    const auto model = make_forward_model(solver_mesh, inst.moving.vertices() * 0.97, false);
    const auto p = random_params(solver_mesh, rng, 0.3);
    OptimConfig rc = c;
    rc.weights = {{"e1", 1.0}, {"bc", 2.0}, {"smooth", 0.1}};
    LsqcSolver solver;
    const auto ev = evaluate_prepared(p, model, obj, rc, solver);
    compare_components(p.flatten(), ev.gradient, rng, [&](const std::vector<test::quad>& xs) {
      const auto fw = test::reference_forward<test::quad>(model, p.pins, xs);
      return test::reference_registration(prob, obj.assignment(), fw.fine) +
             test::reference_regularizers(solver_mesh, fw.mu_vertex, rc.weight("bc"), rc.weight("smooth"));
    }, reg);
  }
  const bool pass = dens.bad == 0 && reg.bad == 0 && dens.checked > 0 && reg.checked > 0;
  return {pass, fmt::format("{} density + {} registration instances ({}-{} vertices); density {}/{} components "
                            "within 1e-4 (worst {:.2g}), registration {}/{} (worst {:.2g}); {:.0f} s",
                            instances_per_loss, instances_per_loss, smallest_mesh, largest_mesh,
                            dens.checked - dens.bad, dens.checked, dens.worst, reg.checked - reg.bad, reg.checked,
                            reg.worst, seconds_since(t0))};
}

// --- fold-overs ---------------------------------------------------------------

Verdict foldovers(int fields) {
  const auto t0 = Clock::now();
  gen::Rng rng(77);
  const auto mesh = gen::disk_mesh(25, 0.3, rng);
  const auto pins = identity_pins(mesh, pick_pins(mesh));
  LsqcSolver solver;
  long flips = 0;
  double mu_max = 0.0;
  for (int i = 0; i < fields; ++i) {
    const VectorXc mu = vertex_to_face(mesh, gen::smooth_field(mesh, 0.399, rng));
    mu_max = std::max(mu_max, mu.cwiseAbs().maxCoeff());
    flips += static_cast<long>(solver.solve(assemble(mesh, mu, pins)).flipped_faces.size());
  }
  const double mean = static_cast<double>(flips) / fields;
  const double t = seconds_since(t0);
  return {mean <= 0.01 && t < 300 && mu_max < 0.4,
          fmt::format("{} fields on a {}-vertex disk, max |mu| {:.3f}, mean flipped faces {:.4f} (total {}), {:.0f} s",
                      fields, mesh.n_vertices(), mu_max, mean, flips, t)};
}

// --- CLI-driven checks ----------------------------------------------------------

std::string g_bin;
fs::path g_work;

int run_cli(const std::string& args) {
  const std::string cmd = g_bin + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

Verdict density_map() {
  const auto dir = g_work / "peak";
  const auto t0 = Clock::now();
  if (run_cli("example --kind peak --out " + dir.string()) != 0) return {false, "example job could not be written"};
  const int rc = run_cli("densmap --job " + (dir / "job.json").string() + " --out " + (dir / "out").string());
  const double t = seconds_since(t0);
  if (rc != 0) return {false, fmt::format("densmap exited with {}", rc)};
  const auto s = read_json(dir / "out" / "summary.json");
  const auto mesh = load_mesh((dir / "disk.off").string());
  const double v0 = s["initial_variance"], v1 = s["final_variance"], red = s["variance_reduction"];
  const double mu = s["max_mu_over_run"];
  return {red >= 0.99 && v1 <= 0.01 && mu < 1.0 && t < 300,
          fmt::format("{} faces, normalized density variance {:.4g} -> {:.3g} ({:.2f}% reduction), max |mu| over run "
                      "{:.3f}, {} iterations, {:.0f} s",
                      mesh.n_faces(), v0, v1, 100 * red, mu, s["iterations"].get<int>(), t)};
}

Verdict registration() {
  const auto t0 = Clock::now();
  const auto planted = g_work / "planted";
  const auto overlap = g_work / "overlap";
  if (run_cli("example --kind planted --out " + planted.string()) != 0 ||
      run_cli("example --kind overlap --seed 3 --out " + overlap.string()) != 0)
    return {false, "example jobs could not be written"};
  const int rc1 = run_cli("register --job " + (planted / "job.json").string() + " --out " + (planted / "out").string());
  const int rc2 = run_cli("register --job " + (overlap / "job.json").string() + " --out " + (overlap / "out").string());
  const double t = seconds_since(t0);
  if (rc1 != 0 || rc2 != 0) return {false, fmt::format("register exited with {} / {}", rc1, rc2)};
  const auto truth = read_json(planted / "job.json")["truth"];
  const auto a = read_json(planted / "out" / "summary.json");
  const auto b = read_json(overlap / "out" / "summary.json");
  const auto& p = a["params"];
  const double dphi = std::abs(p["phi"].get<double>() - truth["phi"].get<double>());
  const double ds = std::abs(p["scale"].get<double>() - truth["scale"].get<double>());
  const double dr = std::hypot(p["r"][0].get<double>() - truth["r"][0].get<double>(),
                               p["r"][1].get<double>() - truth["r"][1].get<double>());
  const double red_a = a["mismatch_reduction"], red_b = b["mismatch_reduction"];
  const int faces = b["overlap_faces"], comps = b["overlap_components"];
  const bool pass = dphi <= 1e-2 && ds <= 1e-2 && dr <= 1e-2 && red_a >= 0.9 && red_b >= 0.5 && faces > 0 &&
                    comps == 1 && t < 600;
  return {pass, fmt::format("planted: |dphi| {:.2g}, |ds| {:.2g}, |dr| {:.2g}, mismatch -{:.1f}%; partial overlap: "
                            "mismatch -{:.1f}%, overlap {} faces in {} component(s); {:.0f} s",
                            dphi, ds, dr, 100 * red_a, 100 * red_b, faces, comps, t)};
}

// --- spectral ------------------------------------------------------------------

Verdict spectral() {
  gen::Rng rng(9);
  std::vector<std::pair<std::string, TriMesh>> meshes;
  meshes.emplace_back("disk", gen::disk_mesh(9, 0.3, rng));
  meshes.emplace_back("grid", gen::grid_mesh(14, 12, 0.0, 0.0, 1.4, 1.0));
  meshes.emplace_back("annulus", gen::annulus_mesh(6, 40, 0.4, 1.0));
  meshes.emplace_back("fan", gen::fan_polygon(60, rng));
  double sym = 0.0, rows = 0.0, lambda1 = 0.0, constant = 0.0, agree = 0.0;
  int max_v = 0;
  for (const auto& [name, mesh] : meshes) {
    max_v = std::max<int>(max_v, mesh.n_vertices());
    const auto pair = cotan_laplacian(mesh);
    const Eigen::MatrixXd L(pair.L);
    sym = std::max(sym, (L - L.transpose()).cwiseAbs().maxCoeff());
    rows = std::max(rows, L.rowwise().sum().cwiseAbs().maxCoeff());
    EigenOptions o;
    o.dense_below = 0;  // sparse shift-invert path against the dense oracle below
    const int k = 8;
    const auto eig = smallest_eigenpairs(pair, k, o);
    lambda1 = std::max(lambda1, std::abs(eig.values[0]));
    const Eigen::VectorXd v0 = eig.vectors.col(0);
    constant = std::max(constant, (v0.array() - v0.mean()).abs().maxCoeff() / v0.cwiseAbs().maxCoeff());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> dense(L, Eigen::MatrixXd(pair.mass.asDiagonal()));
    for (int i = 0; i < k; ++i) agree = std::max(agree, std::abs(eig.values[i] - dense.eigenvalues()[i]));
  }
  return {sym <= 1e-12 && rows <= 1e-12 && lambda1 < 1e-10 && constant < 1e-8 && agree <= 1e-8,
          fmt::format("{} meshes up to {} vertices: asymmetry {:.2g}, row sums {:.2g}, |lambda_1| {:.2g}, "
                      "constant-vector deviation {:.2g}, dense-oracle agreement {:.2g}",
                      meshes.size(), max_v, sym, rows, lambda1, constant, agree)};
}

// --- determinism ---------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Byte comparison of every regular file under a and b.
bool same_tree(const fs::path& a, const fs::path& b, int& files) {
  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
  int count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  if (static_cast<int>(rel.size()) != count_b) return false;
  for (const auto& r : rel) {
    if (!fs::exists(b / r) || slurp(a / r) != slurp(b / r)) return false;
    ++files;
  }
  return true;
}

Verdict determinism() {
  const auto base = g_work / "determinism";
  fs::create_directories(base);
  // Inputs shared by both repetitions.
  const auto in = base / "inputs";
  fs::create_directories(in);
  gen::Rng rng(4);
  const auto mesh = gen::disk_mesh(10, 0.3, rng);
  write_mesh((in / "disk.off").string(), mesh.vertices(), mesh.faces());
  {
    std::ofstream mu(in / "mu.csv");
    const VectorXc f = vertex_to_face(mesh, gen::smooth_field(mesh, 0.6, rng));
    mu.precision(17);
    for (const auto& z : f) mu << z.real() << ',' << z.imag() << '\n';
  }
  std::ofstream(in / "short.json") << R"({"max_iters": 150, "log_every": 0})";

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"solve", "solve --mesh {in}/disk.off --mu {in}/mu.csv --pins auto --out {out}"},
      {"recover", "recover-bc --mesh {in}/disk.off --mapped {run}/solve/image.off --out {out}"},
      {"example", "example --kind overlap --seed 5 --out {out}"},
      {"densmap", "densmap --job {root}/peak/job.json --config {in}/short.json --out {out}"},
      {"register", "register --job {run}/example/job.json --config {in}/short.json --out {out}"},
      {"proptest", "proptest --suite all --trials 3 --seed 11 --out {out}"},
      {"spectrum", "spectrum --mesh {in}/disk.off --k 6 --out {out}"},
  };
  int files = 0;
  std::vector<std::string> differing;
  for (const std::string run : {"a", "b"}) {
    for (const auto& [name, tmpl] : commands) {
      std::string args = tmpl;
      auto sub = [&](const std::string& key, const std::string& val) {
        for (auto pos = args.find(key); pos != std::string::npos; pos = args.find(key)) args.replace(pos, key.size(), val);
      };
      sub("{in}", in.string());
      sub("{out}", (base / run / name).string());
      sub("{run}", (base / run).string());
      sub("{root}", g_work.string());
      if (const int rc = run_cli(args); rc != 0) return {false, fmt::format("{} exited with {}", name, rc)};
    }
  }
  // --jobs changes the worker count only; outputs must not move.
  if (run_cli(fmt::format("--jobs 3 solve --mesh {0}/disk.off --mu {0}/mu.csv --pins auto --out {1}", in.string(),
                          (base / "threads").string())) != 0)
    return {false, "threaded solve failed"};
  for (const auto& [name, tmpl] : commands)
    if (!same_tree(base / "a" / name, base / "b" / name, files)) differing.push_back(name);
  int extra = 0;
  if (!same_tree(base / "a" / "solve", base / "threads", extra)) differing.push_back("solve --jobs 3");
  std::string diff;
  for (const auto& d : differing) diff += " " + d;
  return {differing.empty(), differing.empty()
                                 ? fmt::format("{} commands run twice, {} output files byte-identical; --jobs 3 solve "
                                               "identical to --jobs 1",
                                               commands.size(), files)
                                 : "outputs differ:" + diff};
}

}  // namespace

int main(int argc, char** argv) {
  g_bin = argc > 1 ? argv[1] : QCMAP_BIN;
  g_work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "qcmap_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  report("exact-BC reproduction", [] { return suite("exact_bc", 25, 10.0); });
  report("homeomorphism reconstruction", [] { return suite("reconstruct", 25, 60.0); });
  report("similarity invariance", [] { return suite("similarity", 25); });
  report("resolution independence", [] { return suite("resolution", 25); });
  report("adjoint vs finite differences", [] { return adjoint_fd(30); });
  report("fold-over baseline", [] { return foldovers(1000); });
  report("density equalization", [] { return density_map(); });
  report("registration", [] { return registration(); });
  report("spectral", [] { return spectral(); });
  report("determinism", [] { return determinism(); });
  std::cout << fmt::format("{} of 10 criteria passed\n", 10 - g_failed);
  return g_failed == 0 ? 0 : 1;
}
