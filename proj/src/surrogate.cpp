#include "prefopt/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace prefopt {

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::inverse_quadratic: return "inverse-quadratic";
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::multiquadric: return "multiquadric";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "inverse-quadratic") return KernelKind::inverse_quadratic;
  if (s == "gaussian") return KernelKind::gaussian;
  if (s == "multiquadric") return KernelKind::multiquadric;
  throw ConfigError("unknown kernel kind: " + s);
}

double kernel_eval(const KernelSpec& spec, double r2) {
  if (!(r2 >= 0)) throw DomainError("kernel_eval: squared distance must be nonnegative");
  if (!(spec.epsilon > 0)) throw ConfigError("kernel_eval: epsilon must be positive");
  const double t = spec.epsilon * r2;
  switch (spec.kind) {
    case KernelKind::inverse_quadratic: return 1.0 / (1.0 + t);
    case KernelKind::gaussian: return std::exp(-t);
    case KernelKind::multiquadric: return std::sqrt(1.0 + t);
  }
  return 0.0;
}

Mat kernel_matrix(const KernelSpec& spec, const Mat& scaled) {
  const Index n = scaled.rows();
  Mat k(n, n);
  for (Index i = 0; i < n; ++i) {
    k(i, i) = kernel_eval(spec, 0.0);
    for (Index j = i + 1; j < n; ++j) {
      const double v = kernel_eval(spec, (scaled.row(i) - scaled.row(j)).squaredNorm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

double Surrogate::operator()(const Vec& u) const {
  if (u.size() != centers.cols()) throw DomainError("surrogate: dimension mismatch");
  double f = 0.0;
  for (Index i = 0; i < centers.rows(); ++i) {
    if (beta[i] == 0.0) continue;
    f += beta[i] * kernel_eval(kernel, (centers.row(i).transpose() - u).squaredNorm());
  }
  return f;
}

Vec Surrogate::at_centers() const { return kernel_matrix(kernel, centers) * beta; }

Surrogate flat_surrogate(const Dataset& dataset, const KernelSpec& kernel) {
  return {kernel, dataset.scaled_matrix(), Vec::Zero(static_cast<Index>(dataset.size()))};
}

std::vector<std::string> DescriptorBank::names() const {
  std::vector<std::string> out;
  for (const auto& d : descriptors) out.push_back(d.name);
  return out;
}

Vec DescriptorBank::evaluate(const Vec& x) const {
  Vec out(static_cast<Index>(descriptors.size()));
  for (std::size_t r = 0; r < descriptors.size(); ++r) {
    double v;
    try {
      v = descriptors[r].eval(x);
    } catch (const std::exception& e) {
      throw InvalidValue("descriptor '" + descriptors[r].name + "': " + e.what());
    }
    if (!std::isfinite(v)) throw InvalidValue("descriptor '" + descriptors[r].name + "': non-finite value");
    out[static_cast<Index>(r)] = v;
  }
  return out;
}

DescriptorBank refresh_descriptor_cache(const DescriptorBank& bank, const Dataset& dataset, bool from_scratch) {
  if (bank.descriptors.empty()) throw ConfigError("descriptor bank is empty");
  const Index p = static_cast<Index>(bank.size());
  const Index n = static_cast<Index>(dataset.size());
  DescriptorBank out{bank.descriptors, Mat(n, p)};
  Index keep = 0;
  if (!from_scratch && bank.cache.cols() == p) {
    keep = std::min(bank.cache.rows(), n);
    out.cache.topRows(keep) = bank.cache.topRows(keep);
  }
  for (Index i = keep; i < n; ++i) {
    try {
      out.cache.row(i) = bank.evaluate(dataset.point(static_cast<std::size_t>(i))).transpose();
    } catch (const std::exception& e) {
      throw InvalidValue("descriptor cache, point " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

double Hypothesis::operator()(const Vec& x) const {
  if (weights.size() != static_cast<Index>(bank.size())) throw DomainError("hypothesis: weight count mismatch");
  return weights.dot(bank.evaluate(x));
}

namespace {

void check_fit_inputs(const Dataset& dataset, const PreferenceSet& prefs, const FitConfig& cfg) {
  if (dataset.size() < 2 || prefs.empty()) throw InsufficientPreferences("fit: need N >= 2 points and M >= 1 preferences");
  if (!(cfg.sigma > 0)) throw ConfigError("fit: sigma must be positive");
  if (!(cfg.lambda_beta > 0)) throw ConfigError("fit: lambda_beta must be positive");
  if (!(cfg.lambda_ls >= 0)) throw ConfigError("fit: lambda_ls must be nonnegative");
}

// Solves with the objective normalized to unit scale; the minimizer is
// unchanged.
QpSolution solve_normalized(QuadraticProgram qp, const ConstraintRows& rows) {
  const double scale = std::max(1.0, qp.P.cwiseAbs().maxCoeff());
  qp.P /= scale;
  qp.q /= scale;
  QpSolution sol = solve_qp(qp);
  if (sol.status != QpStatus::optimal) {
    std::vector<std::size_t> offending;
    if (sol.v.allFinite()) {
      const Vec viol = qp.G * sol.v - qp.h;
      for (Index r = 0; r < viol.size(); ++r)
        if (viol[r] > kDefaultKktTolerance) offending.push_back(rows.source[static_cast<std::size_t>(r)]);
      std::sort(offending.begin(), offending.end());
      offending.erase(std::unique(offending.begin(), offending.end()), offending.end());
    }
    if (offending.empty())
      for (std::size_t h = 0; h < rows.source.size(); ++h) offending.push_back(rows.source[h]);
    std::sort(offending.begin(), offending.end());
    offending.erase(std::unique(offending.begin(), offending.end()), offending.end());
    throw QpFailure("fit: QP " + to_string(sol.status) + " (kkt residual " + std::to_string(sol.kkt_residual) + ")",
                    std::move(offending));
  }
  sol.duals *= scale;
  return sol;
}

}  // namespace

BaselineFit fit_baseline(const Dataset& dataset, const PreferenceSet& prefs, const KernelSpec& kernel,
                         const FitConfig& cfg) {
  check_fit_inputs(dataset, prefs, cfg);
  const Index n = static_cast<Index>(dataset.size());
  const Index m = static_cast<Index>(prefs.size());
  const Mat k = kernel_matrix(kernel, dataset.scaled_matrix());
  const ConstraintRows rows = build_preference_rows(prefs, k, cfg.sigma, {0, n, n + m});

  QuadraticProgram qp;
  qp.P = Mat::Zero(n + m, n + m);
  qp.P.diagonal().head(n).setConstant(2.0 * cfg.lambda_beta);
  qp.P.diagonal().tail(m).setConstant(2.0);
  qp.q = Vec::Zero(n + m);
  qp.G = rows.G;
  qp.h = rows.h;

  BaselineFit fit;
  fit.qp = solve_normalized(qp, rows);
  fit.surrogate = {kernel, dataset.scaled_matrix(), fit.qp.v.head(n)};
  fit.slacks = fit.qp.v.tail(m);
  return fit;
}

QuadraticProgram regularized_program(const Dataset& dataset, const PreferenceSet& prefs, const DescriptorBank& bank,
                                     const KernelSpec& kernel, const FitConfig& cfg, bool* ridge_applied) {
  const Index n = static_cast<Index>(dataset.size());
  const Index m = static_cast<Index>(prefs.size());
  const Index p = static_cast<Index>(bank.size());
  if (p < 1) throw ConfigError("fit_regularized: descriptor bank is empty");
  if (bank.cache.rows() != n || bank.cache.cols() != p)
    throw ConfigError("fit_regularized: descriptor cache does not cover the dataset");
  if (!bank.cache.allFinite()) throw InvalidValue("fit_regularized: non-finite descriptor cache");

  const Mat k = kernel_matrix(kernel, dataset.scaled_matrix());
  const Mat& j = bank.cache;
  // Variables v = (beta, w, xi).
  const Index d = n + p + m;
  const ConstraintRows rows = build_preference_rows(prefs, k, cfg.sigma, {0, n + p, d});

  QuadraticProgram qp;
  qp.P = Mat::Zero(d, d);
  const double two_ls = 2.0 * cfg.lambda_ls;
  qp.P.topLeftCorner(n, n) = two_ls * (k.transpose() * k);
  qp.P.topLeftCorner(n, n).diagonal().array() += 2.0 * cfg.lambda_beta;
  qp.P.block(0, n, n, p) = -two_ls * (k.transpose() * j);
  qp.P.block(n, 0, p, n) = qp.P.block(0, n, n, p).transpose();
  Mat ww = two_ls * (j.transpose() * j);
  Eigen::SelfAdjointEigenSolver<Mat> eig(ww, Eigen::EigenvaluesOnly);
  const double top = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  const bool ridge = eig.eigenvalues().minCoeff() <= 1e-12 * top;
  if (ridge) ww.diagonal().array() += kWeightRidge;
  if (ridge_applied) *ridge_applied = ridge;
  qp.P.block(n, n, p, p) = ww;
  qp.P.bottomRightCorner(m, m).diagonal().setConstant(2.0);
  // Exact symmetry for the solver's check.
  qp.P = 0.5 * (qp.P + qp.P.transpose()).eval();
  qp.q = Vec::Zero(d);
  qp.G = rows.G;
  qp.h = rows.h;
  return qp;
}

RegularizedFit fit_regularized(const Dataset& dataset, const PreferenceSet& prefs, const DescriptorBank& bank,
                               const KernelSpec& kernel, const FitConfig& cfg) {
  check_fit_inputs(dataset, prefs, cfg);
  const Index n = static_cast<Index>(dataset.size());
  const Index m = static_cast<Index>(prefs.size());
  const Index p = static_cast<Index>(bank.size());

  RegularizedFit fit;
  const QuadraticProgram qp = regularized_program(dataset, prefs, bank, kernel, cfg, &fit.w_ridge_applied);
  const Mat k = kernel_matrix(kernel, dataset.scaled_matrix());
  const ConstraintRows rows = build_preference_rows(prefs, k, cfg.sigma, {0, n + p, n + p + m});
  fit.qp = solve_normalized(qp, rows);
  fit.surrogate = {kernel, dataset.scaled_matrix(), fit.qp.v.head(n)};
  fit.hypothesis = {bank, fit.qp.v.segment(n, p)};
  fit.slacks = fit.qp.v.tail(m);
  return fit;
}

double alignment_residual(const Surrogate& s, const Hypothesis& h) {
  return (s.at_centers() - h.at_cache()).squaredNorm();
}

ConstraintCheck check_preference_rows(const Surrogate& s, const PreferenceSet& prefs, const Vec& slacks,
                                      double sigma) {
  if (slacks.size() != static_cast<Index>(prefs.size())) throw DomainError("check_preference_rows: slack count mismatch");
  const Vec f = s.at_centers();
  ConstraintCheck c;
  c.max_violation = -std::numeric_limits<double>::infinity();
  c.min_slack = slacks.size() ? slacks.minCoeff() : 0.0;
  for (std::size_t h = 0; h < prefs.size(); ++h) {
    const auto& p = prefs[h];
    const double fi = f[static_cast<Index>(p.i)];
    const double fj = f[static_cast<Index>(p.j)];
    const double xi = slacks[static_cast<Index>(h)];
    double v;
    if (p.label == -1)
      v = fi - (fj - sigma + xi);
    else if (p.label == 1)
      v = fj - (fi - sigma + xi);
    else
      v = std::abs(fi - fj) - (sigma + xi);
    c.max_violation = std::max(c.max_violation, v);
  }
  if (prefs.empty()) c.max_violation = 0.0;
  return c;
}

nlohmann::json to_json(const Surrogate& s) {
  nlohmann::json centers = nlohmann::json::array();
  for (Index i = 0; i < s.centers.rows(); ++i) {
    std::vector<double> row;
    for (Index c = 0; c < s.centers.cols(); ++c) row.push_back(s.centers(i, c));
    centers.push_back(row);
  }
  return {{"kernel", to_string(s.kernel.kind)},
          {"epsilon", s.kernel.epsilon},
          {"centers", centers},
          {"beta", std::vector<double>(s.beta.data(), s.beta.data() + s.beta.size())}};
}

Surrogate surrogate_from_json(const nlohmann::json& j) {
  Surrogate s;
  s.kernel.kind = kernel_kind_from_string(j.at("kernel").get<std::string>());
  s.kernel.epsilon = j.at("epsilon").get<double>();
  const auto beta = j.at("beta").get<std::vector<double>>();
  const auto centers = j.at("centers").get<std::vector<std::vector<double>>>();
  if (beta.size() != centers.size()) throw ConfigError("surrogate json: beta/centers size mismatch");
  const Index n = static_cast<Index>(centers.size());
  const Index dim = n ? static_cast<Index>(centers[0].size()) : 0;
  s.centers.resize(n, dim);
  s.beta.resize(n);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(centers[static_cast<std::size_t>(i)].size()) != dim)
      throw ConfigError("surrogate json: ragged centers");
    for (Index c = 0; c < dim; ++c) s.centers(i, c) = centers[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    s.beta[i] = beta[static_cast<std::size_t>(i)];
  }
  return s;
}

nlohmann::json to_json(const Hypothesis& h) {
  return {{"descriptors", h.bank.names()},
          {"weights", std::vector<double>(h.weights.data(), h.weights.data() + h.weights.size())}};
}

}  // namespace prefopt
