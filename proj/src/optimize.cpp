#include "qcmap/optimize.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include "qcmap/beltrami.hpp"

namespace qcmap {

OptimParams OptimParams::identity(Eigen::Index n, const std::array<int, 2>& pins) {
  OptimParams p;
  p.mu_tilde = VectorXc::Zero(n);
  p.pins = pins;
  return p;
}

VectorXd OptimParams::flatten() const {
  const Eigen::Index n = mu_tilde.size();
  VectorXd x(2 * n + 5);
  x.head(n) = mu_tilde.real();
  x.segment(n, n) = mu_tilde.imag();
  x.tail(5) << log_temp, phi, s_tilde, r.real(), r.imag();
  return x;
}

void OptimParams::unflatten(const VectorXd& x) {
  const Eigen::Index n = (x.size() - 5) / 2;
  mu_tilde.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) mu_tilde[i] = Complex(x[i], x[n + i]);
  log_temp = x[2 * n];
  phi = x[2 * n + 1];
  s_tilde = x[2 * n + 2];
  r = Complex(x[2 * n + 3], x[2 * n + 4]);
}

double OptimConfig::weight(const std::string& key) const {
  const auto it = weights.find(key);
  return it == weights.end() ? 0.0 : it->second;
}

void OptimConfig::check() const {
  if (!(step > 0.0)) throw InputError("config: step must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) throw InputError("config: decays must lie in (0, 1)");
  if (max_iters < 1) throw InputError("config: max_iters must be at least 1");
  if (patience < 1) throw InputError("config: patience must be at least 1");
  for (const auto& [k, w] : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("config: weight '" + k + "' must be non-negative");
}

OptimConfig config_from_json(const nlohmann::json& j, OptimConfig c) {
  try {
    if (j.contains("weights"))
      for (const auto& [k, v] : j.at("weights").items()) c.weights[k] = v.get<double>();
    if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
    if (j.contains("step")) c.step = j.at("step").get<double>();
    if (j.contains("decays")) {
      const auto& d = j.at("decays");
      if (!d.is_array() || d.size() != 2) throw InputError("config: decays must be [b1, b2]");
      c.beta1 = d[0].get<double>();
      c.beta2 = d[1].get<double>();
    }
    if (j.contains("tol")) c.tol = j.at("tol").get<double>();
    if (j.contains("patience")) c.patience = j.at("patience").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("log_every")) c.log_every = j.at("log_every").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  c.check();
  return c;
}

void write_trace_csv(const std::string& path, const OptimTrace& trace, bool with_timing) {
  std::set<std::string> keys;
  for (const auto& row : trace.rows)
    for (const auto& [k, v] : row.components) keys.insert(k);
  auto out = fmt::output_file(path);
  out.print("iteration,total");
  for (const auto& k : keys) out.print(",{}", k);
  out.print(",grad_norm,flips,mu_max,millis\n");
  for (const auto& row : trace.rows) {
    out.print("{},{}", row.iteration, row.total);
    for (const auto& k : keys) {
      const auto it = row.components.find(k);
      if (it == row.components.end())
        out.print(",");
      else
        out.print(",{}", it->second);
    }
    out.print(",{},{},{},", row.grad_norm, row.flips, row.mu_max);
    if (with_timing) out.print("{:.3f}", row.millis);
    out.print("\n");
  }
}

void adam_step(VectorXd& x, const VectorXd& g, AdamState& s, const OptimConfig& c) {
  if (g.size() != x.size()) throw ShapeMismatch("adam_step: gradient size mismatch");
  if (!g.allFinite()) throw NonFiniteGradient("non-finite gradient encountered");
  if (s.m.size() != x.size()) {
    s.m = VectorXd::Zero(x.size());
    s.v = VectorXd::Zero(x.size());
    s.t = 0;
  }
  ++s.t;
  s.m = c.beta1 * s.m + (1.0 - c.beta1) * g;
  s.v = c.beta2 * s.v + (1.0 - c.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, s.t);
  const double bc2 = 1.0 - std::pow(c.beta2, s.t);
  x.array() -= c.step * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + c.epsilon);
}

void step(OptimParams& params, const VectorXd& grad, AdamState& state, const OptimConfig& config) {
  VectorXd x = params.flatten();
  adam_step(x, grad, state, config);
  params.unflatten(x);
}

ForwardModel make_forward_model(const TriMesh& solver_mesh, const Points2d& problem_vertices, bool scale_r0) {
  ForwardModel m;
  m.solver_mesh = &solver_mesh;
  if (scale_r0) {
    m.r0 = problem_vertices.rowwise().norm().maxCoeff();
    if (!(m.r0 > 0.0)) throw InputError("scale_r0: problem vertices are all at the origin");
  }
  m.R = build_interp(solver_mesh, problem_vertices / m.r0);
  return m;
}

ForwardResult forward(const OptimParams& params, const ForwardModel& model, LsqcSolver& solver) {
  const TriMesh& mesh = *model.solver_mesh;
  ForwardResult out;
  out.mu_vertex = activation(params.mu_tilde, params.temp());
  const VectorXc mu_faces = vertex_to_face(mesh, out.mu_vertex);
  out.system = assemble(mesh, mu_faces, identity_pins(mesh, params.pins));
  out.map = solver.solve(out.system);
  out.mapped = apply_similarity(out.map.U, params.phi, std::exp(params.s_tilde), params.r);
  out.fine = model.r0 * (model.R.cast<Complex>() * out.mapped);
  return out;
}

DensityObjective::DensityObjective(DensityProblem problem) : problem_(std::move(problem)) {
  check_density_problem(problem_);
}

EnergyReport DensityObjective::evaluate(const VectorXc& fine, double s_tilde) const {
  return density_energy(problem_, fine, s_tilde);
}

RegistrationObjective::RegistrationObjective(RegistrationProblem problem) : problem_(std::move(problem)) {
  check_registration_problem(problem_);
}

void RegistrationObjective::prepare(const VectorXc& fine) { assignment_ = assign_registration(problem_, fine); }

EnergyReport RegistrationObjective::evaluate(const VectorXc& fine, double) const {
  return registration_energy(problem_, fine, assignment_);
}

namespace {

Evaluation evaluate_forward(ForwardResult fwd, const OptimParams& params, const ForwardModel& model,
                            const Objective& objective, const OptimConfig& config) {
  const TriMesh& mesh = *model.solver_mesh;
  const double w1 = config.weight("e1"), wbc = config.weight("bc"), wsm = config.weight("smooth");

  Evaluation ev;
  const auto e1 = objective.evaluate(fwd.fine, params.s_tilde);
  const auto bc = e_bc(fwd.mu_vertex);
  const auto sm = e_smooth(mesh, fwd.mu_vertex);
  ev.degenerate_image = !e1.degenerate_faces.empty();
  for (const auto& [k, v] : e1.components) ev.components[k] = v;
  ev.components["e1"] = w1 * e1.total;
  ev.components["bc"] = wbc * bc.value;
  ev.components["smooth"] = wsm * sm.value;
  ev.total = w1 * e1.total + wbc * bc.value + wsm * sm.value;

  // Problem mesh -> solver mesh -> similarity -> solve -> activation.
  const VectorXc d_mapped = model.r0 * backprop_interp(model.R, w1 * e1.gradient);
  const auto sim = backprop_similarity(fwd.map.U, params.phi, params.s_tilde, params.r, d_mapped);
  ev.bundle = backprop_solve(fwd.system, fwd.map, sim.dL_dU);
  ev.bundle.d_phi = sim.d_phi;
  ev.bundle.d_s_tilde = sim.d_s_tilde + w1 * e1.d_s_tilde;
  ev.bundle.d_r = sim.d_r;

  const VectorXc d_mu_vertex = vertex_to_face_adjoint(mesh, ev.bundle.d_mu_faces) + wbc * bc.gradient + wsm * sm.gradient;
  const auto act = backprop_activation(params.mu_tilde, params.temp(), d_mu_vertex);
  ev.bundle.d_temp = act.dL_dtemp;

  const Eigen::Index n = params.mu_tilde.size();
  ev.gradient.resize(2 * n + 5);
  ev.gradient.head(n) = act.dL_dx.real();
  ev.gradient.segment(n, n) = act.dL_dx.imag();
  ev.gradient.tail(5) << params.temp() * act.dL_dtemp, ev.bundle.d_phi, ev.bundle.d_s_tilde, ev.bundle.d_r.real(),
      ev.bundle.d_r.imag();
  ev.forward = std::move(fwd);
  return ev;
}

}  // namespace

Evaluation evaluate(const OptimParams& params, const ForwardModel& model, const Objective& objective,
                    const OptimConfig& config, LsqcSolver& solver) {
  return evaluate_forward(forward(params, model, solver), params, model, objective, config);
}

Evaluation evaluate_prepared(const OptimParams& params, const ForwardModel& model, Objective& objective,
                             const OptimConfig& config, LsqcSolver& solver) {
  auto fwd = forward(params, model, solver);
  objective.prepare(fwd.fine);
  return evaluate_forward(std::move(fwd), params, model, objective, config);
}

namespace {

// Gradient norms below this are treated as already optimal, whatever the initial norm was.
constexpr double kGradFloor = 1e-10;

}  // namespace

RunResult run(Objective& objective, const ForwardModel& model, const OptimConfig& config,
              std::optional<OptimParams> init) {
  config.check();
  const TriMesh& mesh = *model.solver_mesh;
  OptimParams params = init ? *init : OptimParams::identity(mesh.n_vertices(), pick_pins(mesh));
  if (params.mu_tilde.size() != mesh.n_vertices()) throw ShapeMismatch("run: mu_tilde size does not match the solver mesh");

  LsqcSolver solver;
  AdamState state;
  RunResult out;
  OptimParams best = params;
  double best_loss = std::numeric_limits<double>::infinity();
  double g0 = 0.0;
  int since_best = 0;
  const auto t0 = std::chrono::steady_clock::now();

  for (int it = 0;; ++it) {
    Evaluation ev = evaluate_prepared(params, model, objective, config, solver);
    const double mu_max = ev.forward.mu_vertex.size() ? ev.forward.mu_vertex.cwiseAbs().maxCoeff() : 0.0;
    if (!(mu_max < 1.0)) throw Error("Beltrami sup-norm reached 1 during optimization");

    TraceRow row;
    row.iteration = it;
    row.total = ev.total;
    row.components = ev.components;
    row.grad_norm = ev.gradient.norm();
    row.flips = static_cast<int>(ev.forward.map.flipped_faces.size());
    row.mu_max = mu_max;
    row.degenerate_image = ev.degenerate_image;
    if (config.timing)
      row.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (ev.degenerate_image) spdlog::debug("iteration {}: degenerate image faces", it);
    out.trace.rows.push_back(row);

    if (it == 0) {
      out.initial_loss = ev.total;
      g0 = row.grad_norm;
      if (!config.dump_gradients.empty()) {
        nlohmann::json j = to_json(ev.bundle);
        j["flat"] = std::vector<double>(ev.gradient.data(), ev.gradient.data() + ev.gradient.size());
        std::ofstream(config.dump_gradients) << j.dump() << '\n';
      }
    }
    if (config.log_every > 0 && it % config.log_every == 0)
      spdlog::info("iter {:5d}  loss {:.6e}  |g| {:.3e}  flips {}", it, ev.total, row.grad_norm, row.flips);

    if (ev.total < best_loss) {
      best_loss = ev.total;
      best = params;
      out.best_iteration = it;
      since_best = 0;
    } else {
      ++since_best;
    }

    if (row.grad_norm <= config.tol * g0 || row.grad_norm <= kGradFloor) {
      out.stop_reason = "gradient";
      break;
    }
    if (since_best >= config.patience) {
      out.stop_reason = "patience";
      break;
    }
    if (it >= config.max_iters) {
      out.stop_reason = "max_iters";
      break;
    }
    step(params, ev.gradient, state, config);
  }

  out.params = best;
  out.best_loss = best_loss;
  out.best = forward(best, model, solver);
  return out;
}

}  // namespace qcmap
