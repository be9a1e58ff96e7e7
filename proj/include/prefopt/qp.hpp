#pragma once

#include <string>
#include <vector>

#include "prefopt/core.hpp"

namespace prefopt {

/// min 1/2 v'Pv + q'v  s.t.  Gv <= h
struct QuadraticProgram {
  Mat P;
  Vec q;
  Mat G;
  Vec h;

  Index num_vars() const { return q.size(); }
  Index num_constraints() const { return h.size(); }
};

enum class QpStatus { optimal, infeasible, max_iter };

std::string to_string(QpStatus s);

struct QpSolution {
  Vec v;
  Vec duals;
  QpStatus status = QpStatus::max_iter;
  double kkt_residual = 0.0;
  int iterations = 0;
};

inline constexpr double kDefaultKktTolerance = 1e-7;

/// Primal-dual interior point (Mehrotra predictor-corrector) followed by an
/// active-set polish. status == optimal guarantees kkt_residual <= tol.
/// Throws InvalidModel if P is not symmetric PSD or dimensions disagree.
QpSolution solve_qp(const QuadraticProgram& qp, double tol = kDefaultKktTolerance);

/// Largest of: stationarity (inf-norm), primal infeasibility, dual
/// negativity, and max |dual_i * (h - Gv)_i|.
double kkt_residual(const QuadraticProgram& qp, const Vec& v, const Vec& duals);

/// Thrown by the fitting routines when the QP does not reach optimality.
struct QpFailure : Error {
  QpFailure(const std::string& what, std::vector<std::size_t> prefs)
      : Error(what), preference_indices(std::move(prefs)) {}
  std::vector<std::size_t> preference_indices;
};

/// Column placement of the surrogate coefficients and the slack block inside
/// a larger decision vector.
struct VariableLayout {
  Index beta_offset = 0;
  Index slack_offset = 0;
  Index total = 0;
};

struct ConstraintRows {
  Mat G;
  Vec h;
  /// Preference position that produced each row (slack rows included).
  std::vector<std::size_t> source;
};

/// Preference constraints as linear rows over (beta, xi):
///   label -1:  (K_i - K_j) beta - xi_h <= -sigma
///   label +1:  (K_j - K_i) beta - xi_h <= -sigma
///   label  0:  +/-(K_i - K_j) beta - xi_h <= sigma   (two rows, one slack)
/// followed by -xi_h <= 0 for every h.
ConstraintRows build_preference_rows(const PreferenceSet& prefs, const Mat& kernel_matrix, double sigma,
                                     const VariableLayout& layout);

inline ConstraintRows build_preference_rows(const PreferenceSet& prefs, const Mat& kernel_matrix,
                                            double sigma) {
  const Index n = kernel_matrix.rows();
  const Index m = static_cast<Index>(prefs.size());
  return build_preference_rows(prefs, kernel_matrix, sigma, {0, n, n + m});
}

}  // namespace prefopt
