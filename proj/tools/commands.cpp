#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include "qcmap/beltrami.hpp"
#include "qcmap/mesh_io.hpp"
#include "qcmap/optimize.hpp"
#include "qcmap/proptest.hpp"
#include "qcmap/scenarios.hpp"
#include "qcmap/spectral.hpp"

namespace qcmap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path out_dir(const Options& o) {
  if (o.out.empty()) throw InputError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2) << '\n'; }

VectorXd read_values(const std::string& path) { return read_complex_csv(path).real(); }

std::array<int, 2> parse_pins(const std::string& s, const TriMesh& mesh) {
  if (s == "auto") return pick_pins(mesh);
  const auto comma = s.find(',');
  std::array<int, 2> p{};
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    p[0] = std::stoi(s.substr(0, comma), &used);
    p[1] = std::stoi(s.substr(comma + 1), &used);
  } catch (const std::logic_error&) {
    throw InputError("--pins expects 'i,j' or 'auto', got '" + s + "'");
  }
  for (int v : p)
    if (v < 0 || v >= mesh.n_vertices()) throw InputError("pin index " + std::to_string(v) + " out of range");
  if (p[0] == p[1]) throw DuplicatePins("pins must be distinct vertices");
  return p;
}

std::string pins_from_job(const json& job, const Options& o) {
  if (!job.contains("pins")) return o.pins;
  const auto& p = job.at("pins");
  if (p.is_string()) return p.get<std::string>();
  if (p.is_array() && p.size() == 2) return std::to_string(p[0].get<int>()) + "," + std::to_string(p[1].get<int>());
  throw ParseError("job: 'pins' must be \"auto\" or [i, j]");
}

void write_histogram(const fs::path& path, const VectorXd& values, double lo, double hi, int bins) {
  std::vector<int> count(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    const int b = std::clamp(static_cast<int>(std::floor((v - lo) / (hi - lo) * bins)), 0, bins - 1);
    ++count[b];
  }
  auto out = fmt::output_file(path.string());
  out.print("bin_lo,bin_hi,count\n");
  for (int b = 0; b < bins; ++b)
    out.print("{},{},{}\n", lo + (hi - lo) * b / bins, lo + (hi - lo) * (b + 1) / bins, count[b]);
}

json params_json(const OptimParams& p) {
  return {{"phi", p.phi},         {"scale", std::exp(p.s_tilde)}, {"r", {p.r.real(), p.r.imag()}},
          {"temp_bc", p.temp()},  {"pins", p.pins}};
}

// Job-level settings shared by densmap and register.
struct JobContext {
  fs::path base;
  json job;
  OptimConfig config;

  std::string path(const std::string& key) const {
    const fs::path p = job.at(key).get<std::string>();
    return (p.is_absolute() ? p : base / p).string();
  }
};

JobContext load_job(const Options& o, OptimConfig defaults) {
  if (o.job.empty()) throw InputError("--job is required");
  JobContext ctx;
  ctx.base = fs::path(o.job).parent_path();
  ctx.job = read_json(o.job);
  ctx.config = defaults;
  if (ctx.job.contains("config")) ctx.config = config_from_json(ctx.job.at("config"), ctx.config);
  if (!o.config.empty()) ctx.config = config_from_json(read_json(o.config), ctx.config);
  ctx.config.timing = o.timing;
  return ctx;
}

double trace_mu_max(const OptimTrace& t) {
  double m = 0.0;
  for (const auto& r : t.rows) m = std::max(m, r.mu_max);
  return m;
}

json run_json(const RunResult& res) {
  return {{"iterations", res.trace.rows.size()},
          {"best_iteration", res.best_iteration},
          {"stop_reason", res.stop_reason},
          {"initial_loss", res.initial_loss},
          {"best_loss", res.best_loss},
          {"max_mu_over_run", trace_mu_max(res.trace)},
          {"final_max_mu", res.best.mu_vertex.size() ? res.best.mu_vertex.cwiseAbs().maxCoeff() : 0.0},
          {"flipped_faces", res.best.map.flipped_faces.size()},
          {"params", params_json(res.params)}};
}

}  // namespace

int cmd_validate(const Options& o) {
  const RawMesh raw = read_mesh_raw(o.mesh);
  const auto report = TriMesh::validate(raw.vertices, raw.faces);
  if (!report.ok()) {
    for (const auto& issue : report.issues) std::cout << "invalid: " << issue << '\n';
    return kValidation;
  }
  const TriMesh mesh(raw.vertices, raw.faces);
  if (mesh.reoriented()) std::cout << "warning: faces were clockwise and have been reoriented\n";
  std::size_t boundary_edges = 0;
  for (const auto& loop : mesh.boundary_loops()) boundary_edges += loop.size();
  const auto edges = (3 * mesh.n_faces() + static_cast<Eigen::Index>(boundary_edges)) / 2;
  std::cout << fmt::format("ok: {} vertices, {} faces, {} boundary loop(s), euler characteristic {}\n", mesh.n_vertices(),
                           mesh.n_faces(), mesh.boundary_loops().size(), mesh.n_vertices() - edges + mesh.n_faces());
  return kOk;
}

int cmd_solve(const Options& o) {
  const TriMesh mesh = load_mesh(o.mesh);
  if (o.mu.empty()) throw InputError("--mu is required");
  VectorXc mu;
  if (fs::path(o.mu).extension() == ".json") {
    mu = face_values(mesh, read_beltrami_json(o.mu));
  } else {
    const VectorXc values = read_complex_csv(o.mu);
    if (values.size() == mesh.n_faces())
      mu = values;
    else if (values.size() == mesh.n_vertices())
      mu = vertex_to_face(mesh, values);
    else
      throw ShapeMismatch(fmt::format("{}: {} rows, expected one per face ({}) or per vertex ({})", o.mu,
                                      values.size(), mesh.n_faces(), mesh.n_vertices()));
  }
  const auto pins = identity_pins(mesh, parse_pins(o.pins, mesh));
  AssembleOptions ao;
  ao.unscaled_rows = o.unscaled_rows;
  const auto sys = assemble(mesh, mu, pins, ao);
  const auto res = solve(sys);

  const auto dir = out_dir(o);
  write_mesh((dir / "image.off").string(), to_points(res.U), mesh.faces());
  const json report = report_json(sys, res);
  write_json(dir / "report.json", report);
  std::cout << fmt::format("energy {:.3e}  residual {:.3e}  flipped {}\n", res.energy, res.residual_norm,
                           res.flipped_faces.size());
  return kOk;
}

int cmd_recover_bc(const Options& o) {
  if (o.mapped.empty()) throw InputError("--mapped is required");
  const RawMesh src = read_mesh_raw(o.mesh);
  const RawMesh img = read_mesh_raw(o.mapped);
  if (src.vertices.rows() != img.vertices.rows() || src.faces.rows() != img.faces.rows() || src.faces != img.faces)
    throw ConnectivityMismatch(fmt::format("{} and {} do not share connectivity", o.mesh, o.mapped));
  const TriMesh mesh(src.vertices, src.faces);
  const auto bc = bc_from_map(mesh, to_complex(img.vertices));

  const auto dir = out_dir(o);
  VectorXd mag(bc.mu.size());
  {
    auto out = fmt::output_file((dir / "mu.csv").string());
    out.print("face,re,im,abs\n");
    for (Eigen::Index f = 0; f < bc.mu.size(); ++f) {
      mag[f] = std::abs(bc.mu[f]);
      out.print("{},{},{},{}\n", f, bc.mu[f].real(), bc.mu[f].imag(), mag[f]);
    }
  }
  write_histogram(dir / "bc_histogram.csv", mag, 0.0, 1.0, 20);
  double sum = 0.0, mx = 0.0;
  int finite = 0;
  for (double m : mag)
    if (std::isfinite(m)) {
      sum += m;
      mx = std::max(mx, m);
      ++finite;
    }
  const json summary{{"faces", mesh.n_faces()},
                     {"mean_abs", finite ? sum / finite : 0.0},
                     {"max_abs", mx},
                     {"degenerate_faces", bc.degenerate}};
  write_json(dir / "summary.json", summary);
  std::cout << fmt::format("mean |mu| {:.6f}  max |mu| {:.6f}  degenerate {}\n", finite ? sum / finite : 0.0, mx,
                           bc.degenerate.size());
  return kOk;
}

int cmd_densmap(const Options& o) {
  auto ctx = load_job(o, OptimConfig{});
  const TriMesh mesh = load_mesh(ctx.path("mesh"));
  const TriMesh solver_mesh = ctx.job.contains("solver_mesh") ? load_mesh(ctx.path("solver_mesh")) : mesh;
  DensityProblem problem{&mesh, read_values(ctx.path("population")), 1.0, 0.0};
  if (ctx.job.contains("barrier")) {
    problem.barrier_omega = ctx.job["barrier"].value("omega", problem.barrier_omega);
    problem.barrier_weight = ctx.job["barrier"].value("weight", problem.barrier_weight);
  }
  DensityObjective objective(problem);
  const auto dir = out_dir(o);
  if (o.dump_gradients) ctx.config.dump_gradients = (dir / "gradients.json").string();

  const auto model = make_forward_model(solver_mesh, mesh.vertices(), o.scale_r0 || ctx.job.value("scale_r0", false));
  const auto init = OptimParams::identity(solver_mesh.n_vertices(), parse_pins(pins_from_job(ctx.job, o), solver_mesh));
  LsqcSolver solver;
  const VectorXc start = forward(init, model, solver).fine;
  const auto res = run(objective, model, ctx.config, init);

  const auto s0 = density_statistics(mesh, problem.population, start);
  const auto s1 = density_statistics(mesh, problem.population, res.best.fine);
  write_mesh((dir / "mapped.off").string(), to_points(res.best.fine), mesh.faces());
  write_trace_csv((dir / "trace.csv").string(), res.trace, o.timing);
  {
    auto out = fmt::output_file((dir / "density.csv").string());
    out.print("face,population,density,normalized\n");
    for (Eigen::Index f = 0; f < mesh.n_faces(); ++f)
      out.print("{},{},{},{}\n", f, problem.population[f], s1.density[f], s1.density[f] / s1.mean_density);
  }
  const VectorXd normalized = s1.density / s1.mean_density;
  write_histogram(dir / "density_histogram.csv", normalized, 0.0, std::max(2.0, normalized.maxCoeff()), 40);
  BeltramiField field;
  field.per_vertex = res.best.mu_vertex;
  write_beltrami_json((dir / "beltrami.json").string(), field);

  json summary = run_json(res);
  summary["initial_variance"] = s0.normalized_variance;
  summary["final_variance"] = s1.normalized_variance;
  summary["variance_reduction"] = s0.normalized_variance > 0 ? 1.0 - s1.normalized_variance / s0.normalized_variance : 0.0;
  write_json(dir / "summary.json", summary);
  std::cout << fmt::format("density variance {:.6g} -> {:.6g} in {} iterations ({})\n", s0.normalized_variance,
                           s1.normalized_variance, res.trace.rows.size(), res.stop_reason);
  return kOk;
}

namespace {

RegionPair region_from_json(const JobContext& ctx, const json& r, std::size_t index) {
  RegionPair out;
  if (r.contains("moving")) {
    out.moving = r.at("moving").get<std::vector<int>>();
  } else if (r.contains("moving_csv")) {
    const fs::path p = r.at("moving_csv").get<std::string>();
    for (double v : read_values((p.is_absolute() ? p : ctx.base / p).string())) out.moving.push_back(static_cast<int>(v));
  }
  if (r.contains("target")) {
    const auto pts = r.at("target").get<std::vector<std::array<double, 2>>>();
    out.target.resize(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) out.target[i] = Complex(pts[i][0], pts[i][1]);
  } else if (r.contains("target_csv")) {
    const fs::path p = r.at("target_csv").get<std::string>();
    out.target = read_complex_csv((p.is_absolute() ? p : ctx.base / p).string());
  }
  if (out.moving.empty() || out.target.size() == 0)
    throw EmptyRegion("region pair " + std::to_string(index) + " is empty");
  return out;
}

OptimConfig registration_defaults() {
  OptimConfig c;
  c.weights = {{"e1", 1.0}, {"bc", 2.0}, {"smooth", 0.1}};
  return c;
}

}  // namespace

int cmd_register(const Options& o) {
  auto ctx = load_job(o, registration_defaults());
  const TriMesh moving = load_mesh(ctx.path("moving_mesh"));
  const TriMesh fixed = load_mesh(ctx.path("static_mesh"));
  const TriMesh solver_mesh = ctx.job.contains("solver_mesh") ? load_mesh(ctx.path("solver_mesh")) : moving;
  RegistrationProblem problem;
  problem.moving = &moving;
  problem.fixed = &fixed;
  problem.moving_intensity = read_values(ctx.path("moving_intensity"));
  problem.fixed_intensity = read_values(ctx.path("static_intensity"));
  problem.intensity_weight = ctx.job.value("intensity_weight", 1.0);
  problem.chamfer_weight = ctx.job.value("chamfer_weight", 0.1);
  try {
    const auto& regions = ctx.job.at("regions");
    for (std::size_t i = 0; i < regions.size(); ++i) problem.regions.push_back(region_from_json(ctx, regions[i], i));
  } catch (const json::exception& e) {
    throw ParseError(std::string("job regions: ") + e.what());
  }
  RegistrationObjective objective(problem);
  const auto dir = out_dir(o);
  if (o.dump_gradients) ctx.config.dump_gradients = (dir / "gradients.json").string();

  const auto model = make_forward_model(solver_mesh, moving.vertices(), o.scale_r0 || ctx.job.value("scale_r0", false));
  const auto init = OptimParams::identity(solver_mesh.n_vertices(), parse_pins(pins_from_job(ctx.job, o), solver_mesh));
  LsqcSolver solver;
  const VectorXc start = forward(init, model, solver).fine;
  const auto m0 = intensity_mismatch(problem, start, assign_registration(problem, start));
  const auto res = run(objective, model, ctx.config, init);
  const auto final_assignment = assign_registration(problem, res.best.fine);
  const auto m1 = intensity_mismatch(problem, res.best.fine, final_assignment);

  write_mesh((dir / "deformed.off").string(), to_points(res.best.fine), moving.faces());
  write_trace_csv((dir / "trace.csv").string(), res.trace, o.timing);
  {
    auto out = fmt::output_file((dir / "overlap.csv").string());
    out.print("face\n");
    for (int f : final_assignment.overlap) out.print("{}\n", f);
  }
  {
    auto out = fmt::output_file((dir / "mismatch.csv").string());
    out.print("face,mismatch\n");
    for (std::size_t k = 0; k < final_assignment.overlap.size(); ++k)
      out.print("{},{}\n", final_assignment.overlap[k], m1.per_face[static_cast<Eigen::Index>(k)]);
  }
  write_histogram(dir / "mismatch_histogram.csv", m1.per_face, 0.0,
                  m1.per_face.size() ? std::max(1e-12, m1.per_face.maxCoeff()) : 1.0, 20);

  json summary = run_json(res);
  summary["initial_mismatch"] = m0.energy.value;
  summary["final_mismatch"] = m1.energy.value;
  summary["mismatch_reduction"] = m0.energy.value > 0 ? 1.0 - m1.energy.value / m0.energy.value : 0.0;
  summary["overlap_faces"] = final_assignment.overlap.size();
  summary["overlap_components"] = face_components(moving, final_assignment.overlap);
  summary["overlap_area"] = m1.overlap_area;
  write_json(dir / "summary.json", summary);
  std::cout << fmt::format("intensity mismatch {:.6g} -> {:.6g}, overlap {} faces in {} component(s)\n",
                           m0.energy.value, m1.energy.value, final_assignment.overlap.size(),
                           summary["overlap_components"].get<int>());
  return kOk;
}

int cmd_proptest(const Options& o) {
  std::vector<std::string> names;
  if (o.suite == "all")
    names = prop::suite_names();
  else
    names.push_back(o.suite);
  prop::SuiteOptions so;
  so.seed = o.seed;
  so.trials = o.trials;
  so.unscaled_rows = o.unscaled_rows;
  json report{{"seed", o.seed}, {"trials", o.trials}, {"suites", json::array()}};
  bool ok = true;
  for (const auto& n : names) {
    const auto r = prop::run_suite(n, so);
    report["suites"].push_back(prop::to_json(r, o.timing));
    if (!r.passed()) {
      ok = false;
      for (auto s : r.failing_seeds) std::cerr << fmt::format("FAIL {} seed {}\n", n, s);
    }
  }
  report["passed"] = ok;
  std::cout << report.dump(2) << '\n';
  if (!o.out.empty()) write_json(out_dir(o) / "proptest.json", report);
  return ok ? kOk : kPropertyFailure;
}

int cmd_spectrum(const Options& o) {
  const TriMesh mesh = load_mesh(o.mesh);
  const auto pair = cotan_laplacian(mesh);
  const auto eig = smallest_eigenpairs(pair, o.k);
  write_eigenpairs_csv(out_dir(o).string(), eig);
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) std::cout << fmt::format("{} {:.12g}\n", i, eig.values[i]);
  return kOk;
}

namespace {

void write_values(const fs::path& path, const std::string& header, const VectorXd& v) {
  auto out = fmt::output_file(path.string());
  out.print("{}\n", header);
  for (double x : v) out.print("{}\n", x);
}

json regions_json(const std::vector<RegionPair>& regions) {
  json arr = json::array();
  for (const auto& r : regions) {
    json t = json::array();
    for (const auto& z : r.target) t.push_back({z.real(), z.imag()});
    arr.push_back({{"moving", r.moving}, {"target", t}});
  }
  return arr;
}

void write_registration_job(const fs::path& dir, const gen::RegistrationInstance& inst, json extra) {
  write_mesh((dir / "moving.off").string(), inst.moving.vertices(), inst.moving.faces());
  write_mesh((dir / "static.off").string(), inst.fixed.vertices(), inst.fixed.faces());
  write_values(dir / "moving_intensity.csv", "intensity", inst.moving_intensity);
  write_values(dir / "static_intensity.csv", "intensity", inst.fixed_intensity);
  json job{{"moving_mesh", "moving.off"},
           {"static_mesh", "static.off"},
           {"moving_intensity", "moving_intensity.csv"},
           {"static_intensity", "static_intensity.csv"},
           {"intensity_weight", 1.0},
           {"chamfer_weight", 0.1},
           {"regions", regions_json(inst.regions)},
           {"config", {{"max_iters", 3000}, {"log_every", 500}}}};
  job.update(extra);
  write_json(dir / "job.json", job);
}

}  // namespace

int cmd_example(const Options& o) {
  const auto dir = out_dir(o);
  if (o.kind == "peak" || o.kind == "uniform") {
    const TriMesh mesh = gen::disk_mesh(18);
    const std::function<double(Complex)> rho =
        o.kind == "peak" ? gen::gaussian_peak(4.0, {0.2, 0.1}, 0.3) : [](Complex) { return 1.0; };
    write_mesh((dir / "disk.off").string(), mesh.vertices(), mesh.faces());
    write_values(dir / "population.csv", "population", gen::population_from_density(mesh, rho));
    write_json(dir / "job.json", {{"mesh", "disk.off"},
                                  {"population", "population.csv"},
                                  {"barrier", {{"omega", 2.0}, {"weight", 1.0}}},
                                  {"pins", "auto"},
                                  {"config", {{"max_iters", 2000}, {"log_every", 200}}}});
  } else if (o.kind == "planted") {
    const gen::Similarity S{0.2, 1.1, Complex(0.05, -0.03)};
    write_registration_job(dir, gen::planted_registration(12, S),
                           {{"truth", {{"phi", S.phi}, {"scale", S.scale}, {"r", {S.t.real(), S.t.imag()}}}}});
  } else if (o.kind == "overlap") {
    gen::Rng rng(o.seed);
    write_registration_job(dir, gen::partial_overlap_registration(12, 20, rng), json::object());
  } else {
    throw InputError("unknown example kind '" + o.kind + "' (peak, uniform, planted, overlap)");
  }
  std::cout << (dir / "job.json").string() << '\n';
  return kOk;
}

int guarded(int (*fn)(const Options&), const Options& o) {
  try {
    return fn(o);
  } catch (const MuOutOfRange& e) {
    spdlog::error("{} (face {})", e.what(), e.face);
    return kMuRange;
  } catch (const ConnectivityMismatch& e) {
    spdlog::error("{}", e.what());
    return kMismatch;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  } catch (const InputError& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  } catch (const ShapeMismatch& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  } catch (const EmptyRegion& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  } catch (const DuplicatePins& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("malformed job: {}", e.what());
    return kInputError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kPropertyFailure;
  }
}

}  // namespace qcmap::cli
