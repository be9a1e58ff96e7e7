#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefopt/core.hpp"
#include "prefopt/qp.hpp"

namespace prefopt {

enum class KernelKind { inverse_quadratic, gaussian, multiquadric };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);

/// RBF phi(epsilon * r^2). Width is in unit-cube coordinates.
struct KernelSpec {
  KernelKind kind = KernelKind::inverse_quadratic;
  double epsilon = 1.0;
};

double kernel_eval(const KernelSpec& spec, double r2);

/// K[i][k] = phi(eps * |u_i - u_k|^2) over the rows of `scaled`.
Mat kernel_matrix(const KernelSpec& spec, const Mat& scaled);

/// f(u) = sum_i beta_i phi(eps |u - c_i|^2), with centers in the unit cube.
struct Surrogate {
  KernelSpec kernel;
  Mat centers;  // N x n, scaled
  Vec beta;

  double operator()(const Vec& u) const;
  /// Values at every center (K * beta).
  Vec at_centers() const;
};

Surrogate flat_surrogate(const Dataset& dataset, const KernelSpec& kernel);

/// A named scalar feature J_r(x) of a natural-unit decision vector.
struct Descriptor {
  std::string name;
  std::function<double(const Vec&)> eval;
};

/// Descriptor evaluators plus the cached matrix J (rows = dataset points).
struct DescriptorBank {
  std::vector<Descriptor> descriptors;
  Mat cache;  // N x p

  std::size_t size() const { return descriptors.size(); }
  std::vector<std::string> names() const;
  /// Evaluates every descriptor at x; failures are rethrown with the
  /// descriptor name attached.
  Vec evaluate(const Vec& x) const;
};

/// Returns a bank whose cache covers every dataset point. Existing rows are
/// kept unless from_scratch is set.
DescriptorBank refresh_descriptor_cache(const DescriptorBank& bank, const Dataset& dataset,
                                        bool from_scratch = false);

/// f_hp(x) = sum_r w_r J_r(x)
struct Hypothesis {
  DescriptorBank bank;
  Vec weights;

  double operator()(const Vec& x) const;
  /// Hypothesis values at the cached rows.
  Vec at_cache() const { return bank.cache * weights; }
};

struct FitConfig {
  double sigma = 1e-2;
  double lambda_beta = 1e-2;
  double lambda_ls = 0.0;
};

struct BaselineFit {
  Surrogate surrogate;
  Vec slacks;
  QpSolution qp;
};

struct RegularizedFit {
  Surrogate surrogate;
  Hypothesis hypothesis;
  Vec slacks;
  QpSolution qp;
  /// True when the w block was singular and a 1e-8 ridge was added.
  bool w_ridge_applied = false;
};

inline constexpr double kWeightRidge = 1e-8;

/// min sum xi^2 + lambda_beta |beta|^2 subject to the preference rows.
BaselineFit fit_baseline(const Dataset& dataset, const PreferenceSet& prefs, const KernelSpec& kernel,
                         const FitConfig& cfg);

/// Joint fit over (beta, w, xi): adds lambda_ls |K beta - J w|^2 to the
/// baseline objective. bank.cache must cover the dataset.
RegularizedFit fit_regularized(const Dataset& dataset, const PreferenceSet& prefs, const DescriptorBank& bank,
                               const KernelSpec& kernel, const FitConfig& cfg);

/// The assembled joint QP, exposed for convexity and structure checks.
QuadraticProgram regularized_program(const Dataset& dataset, const PreferenceSet& prefs, const DescriptorBank& bank,
                                     const KernelSpec& kernel, const FitConfig& cfg, bool* ridge_applied = nullptr);

/// Sum over points of (f(x_i) - f_hp(x_i))^2.
double alignment_residual(const Surrogate& s, const Hypothesis& h);

/// Largest violation of any preference row given the returned slacks
/// (<= 0 means every row holds), and the smallest slack.
struct ConstraintCheck {
  double max_violation = 0.0;
  double min_slack = 0.0;
};
ConstraintCheck check_preference_rows(const Surrogate& s, const PreferenceSet& prefs, const Vec& slacks,
                                      double sigma);

nlohmann::json to_json(const Surrogate& s);
Surrogate surrogate_from_json(const nlohmann::json& j);
/// Descriptor names and weights; evaluators are not serializable.
nlohmann::json to_json(const Hypothesis& h);

}  // namespace prefopt
