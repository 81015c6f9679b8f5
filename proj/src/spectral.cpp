#include "qcmap/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <Eigen/SparseCholesky>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

namespace qcmap {

namespace {

constexpr double kCotClamp = 1e8;

// Flip each column so that its largest-magnitude entry is positive.
void fix_signs(Eigen::MatrixXd& X) {
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    Eigen::Index i;
    X.col(c).cwiseAbs().maxCoeff(&i);
    if (X(i, c) < 0) X.col(c) *= -1.0;
  }
}

}  // namespace

SparseMatrixd LaplacePair::mass_matrix() const {
  SparseMatrixd M(mass.size(), mass.size());
  M.reserve(Eigen::VectorXi::Ones(mass.size()));
  for (Eigen::Index i = 0; i < mass.size(); ++i) M.insert(i, i) = mass[i];
  M.makeCompressed();
  return M;
}

LaplacePair cotan_laplacian(const TriMesh& mesh) {
  const auto& V = mesh.vertices();
  const auto& F = mesh.faces();
  const auto& d = mesh.double_areas();
  LaplacePair out;
  out.mass = VectorXd::Zero(mesh.n_vertices());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(12 * F.rows());
  for (Eigen::Index f = 0; f < F.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int o = F(f, k), i = F(f, (k + 1) % 3), j = F(f, (k + 2) % 3);
      const double ax = V(i, 0) - V(o, 0), ay = V(i, 1) - V(o, 1);
      const double bx = V(j, 0) - V(o, 0), by = V(j, 1) - V(o, 1);
      double cot = (ax * bx + ay * by) / d[f];
      if (std::abs(cot) > kCotClamp) {
        cot = std::copysign(kCotClamp, cot);
        ++out.clamped_cotangents;
      }
      const double w = 0.5 * cot;
      trip.emplace_back(i, j, -w);
      trip.emplace_back(j, i, -w);
      trip.emplace_back(i, i, w);
      trip.emplace_back(j, j, w);
      out.mass[o] += d[f] / 6.0;
    }
  }
  if (out.clamped_cotangents > 0)
    spdlog::warn("cotan_laplacian: clamped {} near-degenerate cotangent(s) to +/-{:g}", out.clamped_cotangents, kCotClamp);
  out.L.resize(mesh.n_vertices(), mesh.n_vertices());
  out.L.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Eigenpairs dense_eigenpairs(const LaplacePair& pair) {
  const VectorXd inv_sqrt = pair.mass.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd K = inv_sqrt.asDiagonal() * Eigen::MatrixXd(pair.L) * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (K + K.transpose()));
  if (es.info() != Eigen::Success) throw ConvergenceFailure("dense eigensolve failed");
  Eigenpairs out;
  out.values = es.eigenvalues();
  out.vectors = inv_sqrt.asDiagonal() * es.eigenvectors();
  fix_signs(out.vectors);
  return out;
}

Eigenpairs smallest_eigenpairs(const LaplacePair& pair, int k, const EigenOptions& opt) {
  const Eigen::Index n = pair.mass.size();
  if (k < 1 || k > n) throw InputError("smallest_eigenpairs: k must lie in [1, |V|]");

  if (n < opt.dense_below) {
    auto all = dense_eigenpairs(pair);
    all.values = all.values.head(k).eval();
    all.vectors = all.vectors.leftCols(k).eval();
    return all;
  }

  const SparseMatrixd M = pair.mass_matrix();
  // L is singular (constants), so shift it definite. Low eigenvalues scale like 1/area; a shift
  // well below them keeps convergence fast without letting the kernel swamp the basis each solve.
  const double shift = 1e-2 / pair.mass.sum();
  const SparseMatrixd S = pair.L + shift * M;
  Eigen::SimplicialLDLT<SparseMatrixd> solver(S);
  if (solver.info() != Eigen::Success) throw ConvergenceFailure("smallest_eigenpairs: factorization failed");

  const Eigen::Index p = std::min<Eigen::Index>(n, std::max(2 * k, k + 10));
  std::mt19937 rng(opt.seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index c = 0; c < p; ++c)
    for (Eigen::Index r = 0; r < n; ++r) X(r, c) = normal(rng);

  const double L_scale = pair.L.diagonal().cwiseAbs().maxCoeff();
  Eigenpairs out;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    X = solver.solve(M * X);
    // Equilibrate column norms before the Cholesky QR; the second pass restores orthogonality
    // lost to the first one's conditioning.
    for (Eigen::Index c = 0; c < p; ++c) X.col(c) /= std::sqrt(X.col(c).dot(M * X.col(c)));
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::MatrixXd G = X.transpose() * M * X;
      Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (G + G.transpose()));
      if (llt.info() != Eigen::Success) throw ConvergenceFailure("smallest_eigenpairs: basis collapsed");
      X = llt.matrixU().solve<Eigen::OnTheRight>(X);
    }
    const Eigen::MatrixXd Kr = X.transpose() * pair.L * X;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Kr + Kr.transpose()));
    X = X * es.eigenvectors();

    bool converged = true;
    for (int c = 0; c < k && converged; ++c) {
      const VectorXd Lx = pair.L * X.col(c);
      const VectorXd r = Lx - es.eigenvalues()[c] * (M * X.col(c));
      const double scale = Lx.norm() + std::abs(es.eigenvalues()[c]) * (M * X.col(c)).norm();
      // The second bound is the rounding floor, reached by the kernel vector.
      converged = r.norm() <= opt.tolerance * scale || r.norm() <= 1e-13 * L_scale * X.col(c).norm();
    }
    if (converged) {
      out.values = es.eigenvalues().head(k);
      out.vectors = X.leftCols(k);
      out.iterations = it;
      fix_signs(out.vectors);
      return out;
    }
  }
  throw ConvergenceFailure("smallest_eigenpairs: iteration cap exceeded");
}

void write_eigenpairs_csv(const std::string& directory, const Eigenpairs& pairs) {
  const std::filesystem::path dir(directory);
  {
    auto out = fmt::output_file((dir / "eigenvalues.csv").string());
    out.print("index,lambda\n");
    for (Eigen::Index i = 0; i < pairs.values.size(); ++i) out.print("{},{}\n", i, pairs.values[i]);
  }
  auto out = fmt::output_file((dir / "eigenvectors.csv").string());
  for (Eigen::Index c = 0; c < pairs.vectors.cols(); ++c) out.print("{}v{}", c ? "," : "", c);
  out.print("\n");
  for (Eigen::Index r = 0; r < pairs.vectors.rows(); ++r) {
    for (Eigen::Index c = 0; c < pairs.vectors.cols(); ++c) out.print("{}{}", c ? "," : "", pairs.vectors(r, c));
    out.print("\n");
  }
}

}  // namespace qcmap
