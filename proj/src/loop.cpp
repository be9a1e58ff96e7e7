#include "prefopt/loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace prefopt {

std::string to_string(LoopMode m) { return m == LoopMode::baseline ? "baseline" : "regularized"; }

LoopMode loop_mode_from_string(const std::string& s) {
  if (s == "baseline") return LoopMode::baseline;
  if (s == "regularized") return LoopMode::regularized;
  throw ConfigError("unknown loop mode: " + s);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void LoopConfig::validate(Index dim) const {
  const int ni = resolved_n_init(dim);
  if (ni < 2) throw ConfigError("loop: n_init must be at least 2");
  if (budget < ni) throw ConfigError("loop: budget must be at least n_init");
  if (!(fit.sigma > 0)) throw ConfigError("loop: sigma must be positive");
  if (!(fit.lambda_beta > 0)) throw ConfigError("loop: lambda_beta must be positive");
  if (!(initial_epsilon > 0)) throw ConfigError("loop: epsilon must be positive");
  if (cv.k < 2) throw ConfigError("loop: cv k must be at least 2");
  if (cv.t_cv < 1) throw ConfigError("loop: t_cv must be at least 1");
  if (lhs_shuffles < 1) throw ConfigError("loop: lhs_shuffles must be positive");
  cv.grid.validate();
  prefopt::validate(acquisition);
}

Mat latin_hypercube(int count, Index dim, int shuffles, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat best;
  double best_score = -1.0;
  std::vector<int> perm(static_cast<std::size_t>(count));
  for (int s = 0; s < shuffles; ++s) {
    Mat d(count, dim);
    for (Index c = 0; c < dim; ++c) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (int i = 0; i < count; ++i) d(i, c) = (perm[static_cast<std::size_t>(i)] + unif(rng)) / count;
    }
    double score = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < count; ++i)
      for (Index j = i + 1; j < count; ++j) score = std::min(score, (d.row(i) - d.row(j)).squaredNorm());
    if (score > best_score) {
      best_score = score;
      best = std::move(d);
    }
  }
  return best;
}

namespace {

PendingQuery make_query(const LoopState& s, std::size_t candidate) {
  return {candidate, s.best_index, s.dataset.point(candidate), s.dataset.point(s.best_index)};
}

void record(LoopState& s, std::size_t candidate, int label, bool acquired, const Hyper& hyper) {
  TraceEntry e;
  e.iteration = static_cast<int>(s.trace.size()) + 1;
  e.candidate_index = candidate;
  e.label = label;
  e.best_index = s.best_index;
  e.hyper = hyper;
  e.acquired = acquired;
  e.candidate = s.dataset.point(candidate);
  s.trace.push_back(std::move(e));
}

}  // namespace

LoopState initialize(const Bounds& bounds, const LoopConfig& cfg, std::optional<DescriptorBank> bank) {
  cfg.validate(bounds.dim());
  if (cfg.mode == LoopMode::regularized && (!bank || bank->descriptors.empty()))
    throw ConfigError("loop: regularized mode needs a descriptor bank");
  const int n_init = cfg.resolved_n_init(bounds.dim());

  LoopState s(Dataset{bounds});
  s.mode = cfg.mode;
  if (cfg.mode == LoopMode::regularized) s.bank = std::move(bank);
  s.hyper = {cfg.mode == LoopMode::regularized ? cfg.fit.lambda_ls : 0.0, cfg.fit.lambda_beta, cfg.initial_epsilon};
  s.pending_hyper = s.hyper;

  const Mat design = latin_hypercube(n_init, bounds.dim(), cfg.lhs_shuffles, cfg.seed);
  for (Index i = 0; i < design.rows(); ++i) s.dataset.append_scaled(design.row(i).transpose());
  s.n_init = static_cast<std::size_t>(n_init);
  s.best_index = 0;
  record(s, 0, 0, false, s.hyper);
  s.next_initial = 1;
  s.pending = make_query(s, 1);
  return s;
}

void submit_preference(LoopState& state, const PendingQuery& query, int label) {
  if (!state.pending) throw ProtocolError("submit_preference: no pending query");
  const auto& p = *state.pending;
  if (query.candidate_index != p.candidate_index || query.incumbent_index != p.incumbent_index)
    throw ProtocolError("submit_preference: stale query");
  if (label < -1 || label > 1) throw InvalidValue("submit_preference: label must be -1, 0 or +1");

  state.prefs.add({p.candidate_index, p.incumbent_index, label}, state.dataset.size());
  if (label == -1) state.best_index = p.candidate_index;
  const bool acquired = !state.initial_phase();
  record(state, p.candidate_index, label, acquired, acquired ? state.pending_hyper : state.hyper);
  state.pending.reset();

  if (state.initial_phase()) {
    ++state.next_initial;
    if (state.initial_phase()) state.pending = make_query(state, state.next_initial);
  }
}

bool finished(const LoopState& state, const LoopConfig& cfg) {
  return !state.pending && !state.initial_phase() && state.dataset.size() >= static_cast<std::size_t>(cfg.budget);
}

namespace {

struct FitOutcome {
  Surrogate surrogate;
  std::optional<Hypothesis> hypothesis;
};

FitOutcome fit_current(LoopState& state, const LoopConfig& cfg) {
  const KernelSpec kernel{cfg.kernel, state.hyper.epsilon};
  FitConfig fc{cfg.fit.sigma, state.hyper.lambda_beta, state.hyper.lambda_ls};
  if (state.mode == LoopMode::regularized) {
    state.bank = refresh_descriptor_cache(*state.bank, state.dataset);
    if (fc.lambda_ls == 0.0) {
      // no alignment term: the weights are free and the fit is the baseline one
      auto fit = fit_baseline(state.dataset, state.prefs, kernel, fc);
      return {std::move(fit.surrogate), Hypothesis{*state.bank, Vec::Zero(static_cast<Index>(state.bank->size()))}};
    }
    auto fit = fit_regularized(state.dataset, state.prefs, *state.bank, kernel, fc);
    return {std::move(fit.surrogate), std::move(fit.hypothesis)};
  }
  fc.lambda_ls = 0.0;
  auto fit = fit_baseline(state.dataset, state.prefs, kernel, fc);
  return {std::move(fit.surrogate), std::nullopt};
}

}  // namespace

Surrogate refit(LoopState& state, const LoopConfig& cfg) {
  if (state.prefs.empty()) return flat_surrogate(state.dataset, {cfg.kernel, state.hyper.epsilon});
  auto out = fit_current(state, cfg);
  state.surrogate = out.surrogate;
  state.hypothesis = std::move(out.hypothesis);
  return out.surrogate;
}

const PendingQuery& advance(LoopState& state, const LoopConfig& cfg) {
  if (state.pending) throw ProtocolError("advance: a query is still pending");
  if (state.initial_phase()) throw ProtocolError("advance: initial design not yet compared");
  if (state.dataset.size() >= static_cast<std::size_t>(cfg.budget)) throw ProtocolError("advance: budget exhausted");

  const int it = state.iteration;
  try {
    if (recalibration_due(it, cfg.cv.t_cv) && state.prefs.size() >= 2) {
      if (state.mode == LoopMode::regularized) state.bank = refresh_descriptor_cache(*state.bank, state.dataset);
      const CvInputs in{state.dataset,
                        state.prefs,
                        state.mode == LoopMode::regularized ? &*state.bank : nullptr,
                        state.mode == LoopMode::regularized ? cfg.cv.grid : cfg.cv.grid.baseline(),
                        cfg.cv.k,
                        mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(it) + 1),
                        cfg.fit.sigma,
                        cfg.kernel};
      state.last_cv = cross_validate(in);
      state.hyper = state.last_cv->best;
    }
    refit(state, cfg);
  } catch (const QpFailure& e) {
    throw QpFailure("iteration " + std::to_string(it) + ": " + e.what(), e.preference_indices);
  }

  const auto acq =
      minimize_acquisition(*state.surrogate, state.dataset.scaled_matrix(), cfg.acquisition,
                           mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(it) + 2));
  const std::size_t idx = state.dataset.append_scaled(acq.point);
  state.pending_hyper = state.hyper;
  state.pending = make_query(state, idx);
  ++state.iteration;
  return *state.pending;
}

Vec final_answer(LoopState& state, const LoopConfig& cfg) {
  if (cfg.final_answer == FinalAnswerMode::best_sample) return state.dataset.point(state.best_index);
  const Surrogate s = refit(state, cfg);
  AcquisitionConfig ac = cfg.acquisition;
  ac.delta = 0.0;
  // the answer may sit next to a sample; it is not a query
  ac.min_separation = kDuplicateTolerance;
  const auto acq = minimize_acquisition(s, state.dataset.scaled_matrix(), ac, mix_seed(cfg.seed, 0xf1a1ULL));
  return scale_from_unit(acq.point, state.dataset.bounds());
}

AutonomousResult run_autonomous(const Bounds& bounds, const LoopConfig& cfg, const Objective& oracle,
                                std::optional<DescriptorBank> bank, double tol) {
  AutonomousResult r{initialize(bounds, cfg, std::move(bank)), {}, {}, std::nullopt};
  auto value = [&](std::size_t i) {
    while (r.values.size() <= i) r.values.push_back(oracle(r.state.dataset.point(r.values.size())));
    return r.values[i];
  };
  try {
    r.best_values.push_back(value(0));
    while (true) {
      if (r.state.pending) {
        const PendingQuery q = *r.state.pending;
        const int label = encode_preference(value(q.candidate_index), value(q.incumbent_index), tol);
        submit_preference(r.state, q, label);
        r.best_values.push_back(value(r.state.best_index));
      } else if (!finished(r.state, cfg)) {
        advance(r.state, cfg);
      } else {
        break;
      }
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string trace_csv(const IterationTrace& trace, const std::vector<double>* best_values,
                      std::optional<double> y_star) {
  std::ostringstream os;
  const Index n = trace.empty() ? 0 : trace.front().candidate.size();
  os << "iteration,y_best,y_star,lambda_ls,lambda_beta,epsilon";
  for (Index c = 0; c < n; ++c) os << ",x" << c;
  os << '\n';
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& e = trace[k];
    os << e.iteration << ',';
    if (best_values && k < best_values->size()) os << fmt((*best_values)[k]);
    os << ',';
    if (y_star) os << fmt(*y_star);
    os << ',' << fmt(e.hyper.lambda_ls) << ',' << fmt(e.hyper.lambda_beta) << ',' << fmt(e.hyper.epsilon);
    for (Index c = 0; c < n; ++c) os << ',' << fmt(e.candidate[c]);
    os << '\n';
  }
  return os.str();
}

namespace {

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_vector(m.row(i).transpose()));
  return rows;
}

}  // namespace

nlohmann::json to_json(const TraceEntry& e) {
  return {{"iteration", e.iteration},
          {"candidate_index", e.candidate_index},
          {"label", e.label},
          {"best_index", e.best_index},
          {"hyper", to_json(e.hyper)},
          {"acquired", e.acquired},
          {"candidate", to_vector(e.candidate)}};
}

nlohmann::json to_json(const IterationTrace& t) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : t) out.push_back(to_json(e));
  return out;
}

nlohmann::json to_json(const LoopState& s) {
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < s.dataset.size(); ++i) points.push_back(to_vector(s.dataset.point(i)));
  nlohmann::json prefs = nlohmann::json::array();
  for (const auto& p : s.prefs) prefs.push_back({p.i, p.j, p.label});
  nlohmann::json j{{"mode", to_string(s.mode)},
                   {"points", points},
                   {"preferences", prefs},
                   {"best_index", s.best_index},
                   {"iteration", s.iteration},
                   {"hyper", to_json(s.hyper)},
                   {"pending_hyper", to_json(s.pending_hyper)},
                   {"trace", to_json(s.trace)},
                   {"next_initial", s.next_initial},
                   {"n_init", s.n_init}};
  if (s.pending) j["pending"] = {{"candidate_index", s.pending->candidate_index}, {"incumbent_index", s.pending->incumbent_index}};
  if (s.surrogate) j["surrogate"] = to_json(*s.surrogate);
  if (s.hypothesis) j["hypothesis"] = to_json(*s.hypothesis);
  if (s.bank) j["descriptor_cache"] = to_json(s.bank->cache);
  if (s.last_cv) j["last_cv"] = to_json(*s.last_cv);
  return j;
}

}  // namespace prefopt
