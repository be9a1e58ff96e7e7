#include "prefopt/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace prefopt {

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max-iter";
  }
  return "unknown";
}

namespace {

constexpr int kMaxIterations = 100;

void validate(const QuadraticProgram& qp, Index d, Index m) {
  if (qp.P.rows() != d || qp.P.cols() != d) throw InvalidModel("qp: P must be d x d");
  if (m > 0 && (qp.G.rows() != m || qp.G.cols() != d)) throw InvalidModel("qp: G must be m x d");
  if (!qp.P.allFinite() || !qp.q.allFinite() || !qp.G.allFinite() || !qp.h.allFinite())
    throw InvalidModel("qp: non-finite data");
  const double scale = std::max(1.0, qp.P.cwiseAbs().maxCoeff());
  if (d > 0 && (qp.P - qp.P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidModel("qp: P is not symmetric");
  if (d > 0) {
    Eigen::LDLT<Mat> ldlt(qp.P);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < -1e-9 * scale)
      throw InvalidModel("qp: P is not positive semidefinite");
  }
}

double max_step(const Vec& x, const Vec& dx) {
  double a = 1.0;
  for (Index i = 0; i < x.size(); ++i)
    if (dx[i] < 0) a = std::min(a, -x[i] / dx[i]);
  return a;
}

// Solves (P + G' D G) dv = rhs; LLT first, LDLT if the Cholesky breaks down.
class NewtonSystem {
 public:
  void factor(const Mat& H) {
    llt_.compute(H);
    use_ldlt_ = llt_.info() != Eigen::Success;
    if (use_ldlt_) ldlt_.compute(H);
  }
  Vec solve(const Vec& rhs) const { return use_ldlt_ ? Vec(ldlt_.solve(rhs)) : Vec(llt_.solve(rhs)); }

 private:
  Eigen::LLT<Mat> llt_;
  Eigen::LDLT<Mat> ldlt_;
  bool use_ldlt_ = false;
};

// Re-solves the equality-constrained problem on the detected active set.
bool polish(const QuadraticProgram& qp, const Vec& s, const Vec& lambda, double tol, Vec& v, Vec& duals,
            double& residual) {
  const Index d = qp.num_vars();
  const Index m = qp.num_constraints();
  std::vector<Index> active;
  for (Index i = 0; i < m; ++i)
    if (lambda[i] > s[i]) active.push_back(i);
  const Index a = static_cast<Index>(active.size());
  if (a > d) return false;

  Mat kkt = Mat::Zero(d + a, d + a);
  Vec rhs(d + a);
  kkt.topLeftCorner(d, d) = qp.P;
  rhs.head(d) = -qp.q;
  for (Index k = 0; k < a; ++k) {
    kkt.block(d + k, 0, 1, d) = qp.G.row(active[k]);
    kkt.block(0, d + k, d, 1) = qp.G.row(active[k]).transpose();
    rhs[d + k] = qp.h[active[k]];
  }
  Eigen::PartialPivLU<Mat> lu(kkt);
  Vec sol = lu.solve(rhs);
  if (!sol.allFinite()) return false;

  Vec cand_duals = Vec::Zero(m);
  for (Index k = 0; k < a; ++k) {
    if (sol[d + k] < -0.1 * tol) return false;
    cand_duals[active[k]] = std::max(0.0, sol[d + k]);
  }
  Vec cand_v = sol.head(d);
  const double r = kkt_residual(qp, cand_v, cand_duals);
  if (!(r < residual)) return false;
  v = std::move(cand_v);
  duals = std::move(cand_duals);
  residual = r;
  return true;
}

}  // namespace

double kkt_residual(const QuadraticProgram& qp, const Vec& v, const Vec& duals) {
  const Index m = qp.num_constraints();
  Vec grad = qp.P * v + qp.q;
  if (m > 0) grad += qp.G.transpose() * duals;
  double r = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (m > 0) {
    const Vec slack = qp.h - qp.G * v;
    for (Index i = 0; i < m; ++i) {
      r = std::max(r, -slack[i]);
      r = std::max(r, -duals[i]);
      r = std::max(r, std::abs(duals[i] * slack[i]));
    }
  }
  return r;
}

QpSolution solve_qp(const QuadraticProgram& qp, double tol) {
  const Index d = qp.q.size();
  const Index m = qp.h.size();
  validate(qp, d, m);

  QpSolution out;
  if (m == 0) {
    Eigen::LDLT<Mat> ldlt(qp.P);
    out.v = ldlt.solve(-qp.q);
    out.duals = Vec::Zero(0);
    out.iterations = 1;
    if (!out.v.allFinite()) {
      out.v = Vec::Zero(d);
      out.kkt_residual = std::numeric_limits<double>::infinity();
      out.status = QpStatus::max_iter;
      return out;
    }
    out.kkt_residual = kkt_residual(qp, out.v, out.duals);
    out.status = out.kkt_residual <= tol ? QpStatus::optimal : QpStatus::max_iter;
    return out;
  }

  const Mat& G = qp.G;
  const Mat Gt = G.transpose();
  // Residuals are driven well below tol: duals of preference fits can be
  // ~1e-5, and a loose complementarity target hides the active set.
  const double inner_tol = 1e-2 * tol;
  const double comp_tol = 1e-5 * tol;

  // Starting point: least-squares compromise between objective and h - Gv = 1.
  Vec v;
  {
    Mat H0 = qp.P + Gt * G;
    H0.diagonal().array() += 1e-12;
    Eigen::LDLT<Mat> ldlt(H0);
    v = ldlt.solve(-qp.q + Gt * (qp.h - Vec::Ones(m)));
    if (!v.allFinite()) v = Vec::Zero(d);
  }
  Vec s = (qp.h - G * v).cwiseAbs().cwiseMax(1.0);
  Vec lambda = Vec::Ones(m);

  NewtonSystem newton;
  int iter = 0;
  for (; iter < kMaxIterations; ++iter) {
    const Vec r_d = qp.P * v + qp.q + Gt * lambda;
    const Vec r_p = G * v + s - qp.h;
    const double mu = s.dot(lambda) / static_cast<double>(m);
    const double comp = (s.array() * lambda.array()).maxCoeff();
    if (r_d.cwiseAbs().maxCoeff() <= inner_tol && r_p.cwiseAbs().maxCoeff() <= inner_tol && comp <= comp_tol)
      break;
    if (!std::isfinite(mu) || lambda.maxCoeff() > 1e14) break;

    const Vec dvec = lambda.cwiseQuotient(s);
    Mat H = qp.P;
    H.noalias() += Gt * dvec.asDiagonal() * G;
    newton.factor(H);

    auto direction = [&](const Vec& r_c, Vec& dv, Vec& ds, Vec& dl) {
      const Vec t = (lambda.cwiseProduct(r_p) - r_c).cwiseQuotient(s);
      dv = newton.solve(-r_d - Gt * t);
      ds = -r_p - G * dv;
      dl = (-r_c - lambda.cwiseProduct(ds)).cwiseQuotient(s);
    };

    Vec dv, ds, dl;
    const Vec sl = s.cwiseProduct(lambda);
    direction(sl, dv, ds, dl);
    const double a_aff = std::min(max_step(s, ds), max_step(lambda, dl));
    const double mu_aff = (s + a_aff * ds).dot(lambda + a_aff * dl) / static_cast<double>(m);
    const double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3);

    const Vec r_c = ((sl + ds.cwiseProduct(dl)).array() - sigma * mu).matrix();
    direction(r_c, dv, ds, dl);
    const double a = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(lambda, dl)));

    v += a * dv;
    s += a * ds;
    lambda += a * dl;
    s = s.cwiseMax(1e-300);
    lambda = lambda.cwiseMax(1e-300);
  }

  out.iterations = iter;
  out.v = v;
  out.duals = lambda;
  out.kkt_residual = kkt_residual(qp, v, lambda);
  if (v.allFinite() && lambda.allFinite()) {
    Vec pv = out.v, pd = out.duals;
    double r = out.kkt_residual;
    if (polish(qp, s, lambda, tol, pv, pd, r)) {
      out.v = std::move(pv);
      out.duals = std::move(pd);
      out.kkt_residual = r;
    }
  }

  if (out.kkt_residual <= tol) {
    out.status = QpStatus::optimal;
  } else {
    const double infeas = out.v.allFinite() ? (G * out.v - qp.h).maxCoeff() : std::numeric_limits<double>::infinity();
    out.status = infeas > tol ? QpStatus::infeasible : QpStatus::max_iter;
  }
  return out;
}

ConstraintRows build_preference_rows(const PreferenceSet& prefs, const Mat& kernel_matrix, double sigma,
                                     const VariableLayout& layout) {
  if (!(sigma > 0)) throw InvalidValue("build_preference_rows: sigma must be positive");
  const Index n = kernel_matrix.rows();
  if (kernel_matrix.cols() != n) throw DomainError("build_preference_rows: kernel matrix must be square");
  const Index m = static_cast<Index>(prefs.size());
  if (layout.beta_offset + n > layout.total || layout.slack_offset + m > layout.total)
    throw DomainError("build_preference_rows: layout does not fit");

  Index rows = 2 * m;
  for (const auto& p : prefs) {
    if (p.i >= static_cast<std::size_t>(n) || p.j >= static_cast<std::size_t>(n))
      throw DomainError("build_preference_rows: preference index out of range");
    if (p.label == 0) ++rows;
  }

  ConstraintRows out;
  out.G = Mat::Zero(rows, layout.total);
  out.h = Vec::Zero(rows);
  out.source.reserve(static_cast<std::size_t>(rows));
  Index r = 0;
  for (Index h = 0; h < m; ++h) {
    const auto& p = prefs[static_cast<std::size_t>(h)];
    const auto diff = kernel_matrix.row(static_cast<Index>(p.i)) - kernel_matrix.row(static_cast<Index>(p.j));
    const Index xi = layout.slack_offset + h;
    auto emit = [&](double sign, double rhs) {
      out.G.block(r, layout.beta_offset, 1, n) = sign * diff;
      out.G(r, xi) = -1.0;
      out.h[r] = rhs;
      out.source.push_back(static_cast<std::size_t>(h));
      ++r;
    };
    if (p.label == -1) {
      emit(1.0, -sigma);
    } else if (p.label == 1) {
      emit(-1.0, -sigma);
    } else {
      emit(1.0, sigma);
      emit(-1.0, sigma);
    }
  }
  for (Index h = 0; h < m; ++h) {
    out.G(r, layout.slack_offset + h) = -1.0;
    out.source.push_back(static_cast<std::size_t>(h));
    ++r;
  }
  return out;
}

}  // namespace prefopt
