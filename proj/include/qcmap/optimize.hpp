#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qcmap/adjoint.hpp"
#include "qcmap/energies.hpp"
#include "qcmap/lsqc.hpp"

namespace qcmap {

/// Unconstrained optimization variables. The Beltrami field is mu = activation(mu_tilde, T_BC)
/// so |mu| < 1 holds by construction; T_BC is stored through its logarithm.
struct OptimParams {
  VectorXc mu_tilde;
  double log_temp = 0.0;
  double phi = 0.0;
  double s_tilde = 0.0;
  Complex r;
  std::array<int, 2> pins{-1, -1};

  double temp() const { return std::exp(log_temp); }

  /// Identity map: mu_tilde = 0, T_BC = 1, phi = 0, s = 1, r = 0.
  static OptimParams identity(Eigen::Index n_vertices, const std::array<int, 2>& pins);

  /// Real layout (Re mu_tilde, Im mu_tilde, log T_BC, phi, s_tilde, Re r, Im r).
  VectorXd flatten() const;
  void unflatten(const VectorXd& x);
};

struct OptimConfig {
  std::map<std::string, double> weights{{"e1", 1.0}, {"bc", 5e-2}, {"smooth", 1e-3}};
  int max_iters = 5000;
  double step = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double tol = 1e-6;  // relative to the initial gradient norm (norms below 1e-10 also stop)
  int patience = 200;
  int log_every = 100;
  std::uint64_t seed = 0;
  bool timing = false;  // fill the millis trace column
  std::string dump_gradients;  // write the first gradient as JSON when non-empty

  double weight(const std::string& key) const;
  void check() const;
};

/// {"weights": {...}, "max_iters", "step", "decays": [b1, b2], "tol", "patience", "seed", "log_every"}
/// Missing keys keep their defaults.
OptimConfig config_from_json(const nlohmann::json& j, OptimConfig base = {});

struct TraceRow {
  int iteration = 0;
  double total = 0.0;
  std::map<std::string, double> components;
  double grad_norm = 0.0;
  int flips = 0;
  double mu_max = 0.0;
  double millis = 0.0;
  bool degenerate_image = false;
};

struct OptimTrace {
  std::vector<TraceRow> rows;
};

/// iteration,total,<components>,grad_norm,flips,mu_max,millis
void write_trace_csv(const std::string& path, const OptimTrace& trace, bool with_timing);

/// Exponentially decayed first/second moments with bias correction.
struct AdamState {
  VectorXd m, v;
  int t = 0;
};

/// One adaptive first-order update of x. Throws NonFiniteGradient on NaN/Inf entries.
void adam_step(VectorXd& x, const VectorXd& grad, AdamState& state, const OptimConfig& config);

/// adam_step on the flattened parameters.
void step(OptimParams& params, const VectorXd& grad, AdamState& state, const OptimConfig& config);

/// Solver-side geometry: the mesh on which the Beltrami field lives, and the interpolation of
/// its map onto the problem mesh, fine = r0 * R * f(solver vertices).
struct ForwardModel {
  const TriMesh* solver_mesh = nullptr;
  RowSparseMatrixd R;
  double r0 = 1.0;
};

/// Problem vertices located in the solver mesh. With scale_r0, positions are first divided by
/// r0 = max |position| and the returned model multiplies back.
ForwardModel make_forward_model(const TriMesh& solver_mesh, const Points2d& problem_vertices, bool scale_r0);

struct ForwardResult {
  VectorXc mu_vertex;
  LsqcSystem system;
  MapResult map;
  VectorXc mapped;  // similarity applied, on the solver mesh
  VectorXc fine;    // interpolated onto the problem mesh
};

/// activation -> vertex_to_face -> assemble (pins at their own positions) -> solve ->
/// similarity -> interpolation.
ForwardResult forward(const OptimParams& params, const ForwardModel& model, LsqcSolver& solver);

/// Task energy E1 over problem-mesh positions. prepare() re-derives any discrete assignment
/// and is called once per iteration before evaluate().
class Objective {
 public:
  virtual ~Objective() = default;
  virtual void prepare(const VectorXc& fine) { (void)fine; }
  virtual EnergyReport evaluate(const VectorXc& fine, double s_tilde) const = 0;
};

class DensityObjective : public Objective {
 public:
  explicit DensityObjective(DensityProblem problem);
  EnergyReport evaluate(const VectorXc& fine, double s_tilde) const override;
  const DensityProblem& problem() const { return problem_; }

 private:
  DensityProblem problem_;
};

class RegistrationObjective : public Objective {
 public:
  explicit RegistrationObjective(RegistrationProblem problem);
  void prepare(const VectorXc& fine) override;
  EnergyReport evaluate(const VectorXc& fine, double s_tilde) const override;
  const RegistrationProblem& problem() const { return problem_; }
  const RegistrationAssignment& assignment() const { return assignment_; }

 private:
  RegistrationProblem problem_;
  RegistrationAssignment assignment_;
};

struct Evaluation {
  double total = 0.0;
  std::map<std::string, double> components;  // weighted contributions
  VectorXd gradient;                          // flattened like OptimParams
  GradBundle bundle;
  ForwardResult forward;
  bool degenerate_image = false;
};

/// Loss and exact gradient of E = w_e1 * E1(fine) + w_bc * E_BC(mu) + w_smooth * E_smooth(mu).
/// The objective must already be prepared for this iterate.
Evaluation evaluate(const OptimParams& params, const ForwardModel& model, const Objective& objective,
                    const OptimConfig& config, LsqcSolver& solver);

/// forward() followed by prepare() and evaluate(); the usual single-call entry point.
Evaluation evaluate_prepared(const OptimParams& params, const ForwardModel& model, Objective& objective,
                             const OptimConfig& config, LsqcSolver& solver);

struct RunResult {
  OptimParams params;   // best iterate
  ForwardResult best;   // forward pass of the best iterate
  OptimTrace trace;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int best_iteration = 0;
  std::string stop_reason;
};

/// Gradient loop until the relative gradient-norm tolerance, the plateau patience or
/// max_iters is hit. Returns the best iterate, not the last one.
RunResult run(Objective& objective, const ForwardModel& model, const OptimConfig& config,
              std::optional<OptimParams> init = std::nullopt);

}  // namespace qcmap
