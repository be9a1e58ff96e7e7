#include "prefopt/hypercv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace prefopt {

bool hyper_less(const Hyper& a, const Hyper& b) {
  if (a.lambda_ls != b.lambda_ls) return a.lambda_ls < b.lambda_ls;
  if (a.lambda_beta != b.lambda_beta) return a.lambda_beta < b.lambda_beta;
  return a.epsilon < b.epsilon;
}

void CvGrid::validate() const {
  if (lambda_ls_values.empty() || lambda_beta_values.empty() || epsilon_values.empty())
    throw ConfigError("cv grid: every list must be nonempty");
  for (double v : lambda_ls_values)
    if (!(v >= 0)) throw ConfigError("cv grid: lambda_ls must be >= 0");
  for (double v : lambda_beta_values)
    if (!(v > 0)) throw ConfigError("cv grid: lambda_beta must be > 0");
  for (double v : epsilon_values)
    if (!(v > 0)) throw ConfigError("cv grid: epsilon must be > 0");
}

std::vector<Hyper> CvGrid::triplets() const {
  std::vector<Hyper> out;
  for (double ls : lambda_ls_values)
    for (double lb : lambda_beta_values)
      for (double eps : epsilon_values) out.push_back({ls, lb, eps});
  std::stable_sort(out.begin(), out.end(), hyper_less);
  return out;
}

CvGrid CvGrid::baseline() const {
  CvGrid g = *this;
  g.lambda_ls_values = {0.0};
  return g;
}

nlohmann::json to_json(const Hyper& h) {
  return {{"lambda_ls", h.lambda_ls}, {"lambda_beta", h.lambda_beta}, {"epsilon", h.epsilon}};
}

nlohmann::json to_json(const CvResult& r) {
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& [h, v] : r.mean_violations) {
    auto j = to_json(h);
    j["mean_violations"] = v;
    scores.push_back(j);
  }
  return {{"best", to_json(r.best)}, {"folds_used", r.folds_used}, {"scores", scores}};
}

int count_violations(const Surrogate& s, const PreferenceSet& heldout, const Dataset& dataset, double sigma) {
  int count = 0;
  for (const auto& p : heldout) {
    const double fi = s(dataset.scaled(p.i));
    const double fj = s(dataset.scaled(p.j));
    bool violated;
    if (p.label == -1)
      violated = fi > fj - sigma;
    else if (p.label == 1)
      violated = fj > fi - sigma;
    else
      violated = std::abs(fi - fj) > sigma;
    if (violated) ++count;
  }
  return count;
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t m, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("make_folds: k must be positive");
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (std::size_t pos = 0; pos < m; ++pos) folds[pos % static_cast<std::size_t>(k)].push_back(perm[pos]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

CvResult cross_validate(const CvInputs& in) {
  in.grid.validate();
  const std::size_t m = in.prefs.size();
  if (m < 2) throw InsufficientPreferences("cross_validate: need at least 2 preferences");
  if (in.k < 2) throw ConfigError("cross_validate: k must be at least 2");
  if (!in.bank)
    for (double v : in.grid.lambda_ls_values)
      if (v != 0.0) throw ConfigError("cross_validate: lambda_ls > 0 requires a descriptor bank");

  const int k = m < static_cast<std::size_t>(in.k) ? static_cast<int>(m) : in.k;
  const auto folds = make_folds(m, k, in.seed);

  std::vector<PreferenceSet> train(folds.size());
  std::vector<PreferenceSet> held(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> rest;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
    std::sort(rest.begin(), rest.end());
    train[f] = in.prefs.subset(rest);
    held[f] = in.prefs.subset(folds[f]);
  }

  CvResult result;
  result.folds_used = k;
  double best_score = std::numeric_limits<double>::infinity();
  for (const Hyper& h : in.grid.triplets()) {
    const KernelSpec kernel{in.kernel, h.epsilon};
    const FitConfig cfg{in.sigma, h.lambda_beta, h.lambda_ls};
    double total = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      int v;
      try {
        const Surrogate s = in.bank && h.lambda_ls > 0.0 ? fit_regularized(in.dataset, train[f], *in.bank, kernel, cfg).surrogate
                                    : fit_baseline(in.dataset, train[f], kernel, cfg).surrogate;
        v = count_violations(s, held[f], in.dataset, in.sigma);
      } catch (const QpFailure&) {
        v = static_cast<int>(held[f].size());
      }
      total += v;
    }
    const double mean = total / static_cast<double>(folds.size());
    result.mean_violations.emplace_back(h, mean);
    // Triplets arrive in tie-break order, so strict improvement keeps the
    // preferred one on ties.
    if (mean < best_score) {
      best_score = mean;
      result.best = h;
    }
  }
  return result;
}

std::optional<CvResult> maybe_recalibrate(int iteration, int t_cv, const CvInputs& in) {
  if (t_cv < 1) throw ConfigError("maybe_recalibrate: t_cv must be at least 1");
  if (!recalibration_due(iteration, t_cv)) return std::nullopt;
  return cross_validate(in);
}

}  // namespace prefopt
