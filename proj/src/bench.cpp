#include "prefopt/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace prefopt {

namespace fs = std::filesystem;

std::string to_string(ReferenceMethod m) { return m == ReferenceMethod::grid ? "grid" : "swarm"; }

ReferenceMethod reference_method_from_string(const std::string& s) {
  if (s == "grid") return ReferenceMethod::grid;
  if (s == "swarm") return ReferenceMethod::swarm;
  throw ConfigError("unknown reference method: " + s);
}

int default_budget(ProblemKind k) {
  switch (k) {
    case ProblemKind::analytical: return 60;
    case ProblemKind::susp2d: return 30;
    case ProblemKind::susp4d: return 50;
  }
  return 30;
}

int BenchConfig::resolved_budget() const { return budget > 0 ? budget : default_budget(problem); }

ReferenceMethod BenchConfig::resolved_reference() const {
  if (reference) return *reference;
  return problem == ProblemKind::analytical ? ReferenceMethod::swarm : ReferenceMethod::grid;
}

std::vector<std::uint64_t> BenchConfig::resolved_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (int i = 0; i < runs; ++i) out.push_back(seed_base + static_cast<std::uint64_t>(i));
  return out;
}

namespace {

Index problem_dim(ProblemKind k) {
  switch (k) {
    case ProblemKind::analytical: return 7;
    case ProblemKind::susp2d: return 2;
    case ProblemKind::susp4d: return 4;
  }
  return 0;
}

}  // namespace

void BenchConfig::validate() const {
  if (runs < 1) throw ConfigError("bench: runs must be positive");
  if (!seeds.empty() && static_cast<int>(seeds.size()) != runs)
    throw ConfigError("bench: runs must equal the number of seeds");
  const auto ids = resolved_seeds();
  if (std::set<std::uint64_t>(ids.begin(), ids.end()).size() != ids.size())
    throw ConfigError("bench: seeds must be distinct");
  if (arms.empty()) throw ConfigError("bench: at least one arm is required");
  if (std::set<LoopMode>(arms.begin(), arms.end()).size() != arms.size())
    throw ConfigError("bench: arms must be distinct");
  if (grid_2d < 2 || grid_4d < 2) throw ConfigError("bench: grid sizes must be at least 2");
  if (threads < 0) throw ConfigError("bench: threads must be nonnegative");
  if (problem == ProblemKind::analytical && resolved_reference() == ReferenceMethod::grid)
    throw ConfigError("bench: grid reference is only available for suspension problems");
  LoopConfig probe = loop;
  probe.budget = resolved_budget();
  probe.validate(problem_dim(problem));
  if (problem != ProblemKind::analytical) {
    plant.validate();
    scenario.validate(plant);
  }
}

BenchConfig bench_config_from_json(const nlohmann::json& j, BenchConfig c) {
  if (!j.is_object()) throw ConfigError("bench config: expected a JSON object");
  try {
    if (j.contains("problem")) c.problem = problem_kind_from_string(j.at("problem").get<std::string>());
    if (j.contains("runs")) c.runs = j.at("runs").get<int>();
    if (j.contains("budget")) c.budget = j.at("budget").get<int>();
    if (j.contains("seed_base")) c.seed_base = j.at("seed_base").get<std::uint64_t>();
    if (j.contains("seeds")) {
      c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
      if (!c.seeds.empty() && !j.contains("runs")) c.runs = static_cast<int>(c.seeds.size());
    }
    if (j.contains("arms")) {
      c.arms.clear();
      for (const auto& a : j.at("arms")) c.arms.push_back(loop_mode_from_string(a.get<std::string>()));
    }
    if (j.contains("ref")) c.reference = reference_method_from_string(j.at("ref").get<std::string>());
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    if (j.contains("cache")) c.cache_dir = j.at("cache").get<std::string>();
    if (j.contains("grid_2d")) c.grid_2d = j.at("grid_2d").get<int>();
    if (j.contains("grid_4d")) c.grid_4d = j.at("grid_4d").get<int>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("n_init")) c.loop.n_init = j.at("n_init").get<int>();
    if (j.contains("delta")) c.loop.acquisition.delta = j.at("delta").get<double>();
    if (j.contains("min_separation")) c.loop.acquisition.min_separation = j.at("min_separation").get<double>();
    if (j.contains("t_cv")) c.loop.cv.t_cv = j.at("t_cv").get<int>();
    if (j.contains("cv_folds")) c.loop.cv.k = j.at("cv_folds").get<int>();
    if (j.contains("kernel")) c.loop.kernel = kernel_kind_from_string(j.at("kernel").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bench config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const BenchConfig& c) {
  nlohmann::json arms = nlohmann::json::array();
  for (auto a : c.arms) arms.push_back(to_string(a));
  return {{"problem", to_string(c.problem)},
          {"runs", c.runs},
          {"budget", c.resolved_budget()},
          {"seeds", c.resolved_seeds()},
          {"arms", arms},
          {"ref", to_string(c.resolved_reference())},
          {"grid_2d", c.grid_2d},
          {"grid_4d", c.grid_4d},
          {"n_init", c.loop.resolved_n_init(problem_dim(c.problem))},
          {"delta", c.loop.acquisition.delta},
          {"min_separation", c.loop.acquisition.min_separation},
          {"t_cv", c.loop.cv.t_cv},
          {"cv_folds", c.loop.cv.k},
          {"kernel", to_string(c.loop.kernel)}};
}

// ---- particle swarm ----

SwarmResult particle_swarm(const std::function<double(const Vec&)>& f, const Bounds& bounds, std::uint64_t seed,
                           const SwarmSettings& st) {
  if (st.particles < 1 || st.iterations < 1 || st.restarts < 1) throw ConfigError("swarm: settings must be positive");
  const Index n = bounds.dim();
  const Vec lo = bounds.lower(), hi = bounds.upper(), width = bounds.width();
  SwarmResult out;
  out.value = std::numeric_limits<double>::infinity();
  for (int r = 0; r < st.restarts; ++r) {
    std::mt19937_64 rng(mix_seed(seed, 0x5157ULL + static_cast<std::uint64_t>(r)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vec> x(st.particles), v(st.particles), pbest(st.particles);
    std::vector<double> pval(st.particles);
    Vec gbest;
    double gval = std::numeric_limits<double>::infinity();
    for (int p = 0; p < st.particles; ++p) {
      x[p].resize(n);
      v[p].resize(n);
      for (Index d = 0; d < n; ++d) {
        x[p][d] = lo[d] + unit(rng) * width[d];
        v[p][d] = (2.0 * unit(rng) - 1.0) * width[d];
      }
      pbest[p] = x[p];
      pval[p] = f(x[p]);
      if (pval[p] < gval) {
        gval = pval[p];
        gbest = x[p];
      }
    }
    for (int it = 0; it < st.iterations; ++it) {
      for (int p = 0; p < st.particles; ++p) {
        for (Index d = 0; d < n; ++d) {
          v[p][d] = st.inertia * v[p][d] + st.cognitive * unit(rng) * (pbest[p][d] - x[p][d]) +
                    st.social * unit(rng) * (gbest[d] - x[p][d]);
          v[p][d] = std::clamp(v[p][d], -width[d], width[d]);
          x[p][d] += v[p][d];
          if (x[p][d] < lo[d] || x[p][d] > hi[d]) {
            x[p][d] = std::clamp(x[p][d], lo[d], hi[d]);
            v[p][d] = 0.0;
          }
        }
        const double val = f(x[p]);
        if (val < pval[p]) {
          pval[p] = val;
          pbest[p] = x[p];
          if (val < gval) {
            gval = val;
            gbest = x[p];
          }
        }
      }
    }
    out.restart_values.push_back(gval);
    if (gval < out.value) {
      out.value = gval;
      out.point = gbest;
    }
  }
  const auto [mn, mx] = std::minmax_element(out.restart_values.begin(), out.restart_values.end());
  out.disagreement = (*mx - *mn) > 0.01 * std::max(std::abs(*mn), 1e-12);
  return out;
}

// ---- descriptor grid ----

Vec grid_node(const Bounds& bounds, int per_axis, std::size_t flat) {
  const Index n = bounds.dim();
  Vec x(n);
  for (Index d = 0; d < n; ++d) {
    const std::size_t k = flat % static_cast<std::size_t>(per_axis);
    flat /= static_cast<std::size_t>(per_axis);
    x[d] = bounds.lower()[d] + bounds.width()[d] * static_cast<double>(k) / static_cast<double>(per_axis - 1);
  }
  return x;
}

namespace {

std::string fingerprint(const SuspensionModel& model, int per_axis) {
  const auto& p = model.plant();
  const auto& s = model.scenario();
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s n=%d ms=%.17g iy=%.17g muf=%.17g mur=%.17g kf=%.17g kr=%.17g ktf=%.17g ktr=%.17g a=%.17g "
                "b=%.17g g=%.17g v=%.17g h=%.17g L=%.17g T=%.17g dt=%.17g t0=%.17g sim=%d",
                to_string(model.kind()).c_str(), per_axis, p.sprung_mass, p.pitch_inertia, p.unsprung_front,
                p.unsprung_rear, p.k_front, p.k_rear, p.tire_front, p.tire_rear, p.a, p.b, p.gravity, s.speed,
                s.height, s.length, s.duration, s.dt, s.onset, s.simultaneous ? 1 : 0);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::size_t node_count(int per_axis, Index dim) {
  std::size_t total = 1;
  for (Index d = 0; d < dim; ++d) total *= static_cast<std::size_t>(per_axis);
  return total;
}

unsigned worker_count(int requested, std::size_t jobs) {
  unsigned w = requested > 0 ? static_cast<unsigned>(requested) : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(w, std::max<std::size_t>(jobs, 1)));
}

// Runs job(i) for i in [0, count) on `workers` threads.
template <typename Job>
void parallel_for(std::size_t count, unsigned workers, Job&& job) {
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) job(i);
  };
  if (workers <= 1) {
    body();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
}

bool load_grid(const fs::path& file, const std::string& header, std::size_t count,
               std::vector<SuspensionDescriptors>& values) {
  std::ifstream in(file);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line) || line != header) return false;
  values.clear();
  values.reserve(count);
  SuspensionDescriptors d;
  while (in >> d.rms_accel >> d.rms_pitch_rate >> d.grip_loss) values.push_back(d);
  return values.size() == count;
}

void write_text(const fs::path& file, const std::string& text) {
  if (!file.parent_path().empty()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + file.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  out << text;
  out.close();
  if (!out) throw Error("write failed: " + file.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

DescriptorGrid descriptor_grid(const SuspensionModel& model, int per_axis, const fs::path& cache_dir, int threads,
                               std::ostream* log) {
  if (per_axis < 2) throw ConfigError("descriptor grid: need at least 2 nodes per axis");
  const Bounds bounds = model.bounds();
  DescriptorGrid g;
  g.kind = model.kind();
  g.per_axis = per_axis;
  const std::size_t count = node_count(per_axis, bounds.dim());
  g.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) g.points.push_back(grid_node(bounds, per_axis, i));

  const std::string fp = fingerprint(model, per_axis);
  const std::string header = "# prefopt descriptor grid v1 " + fp;
  fs::path file;
  if (!cache_dir.empty()) {
    char name[96];
    std::snprintf(name, sizeof name, "%s_%d_%016llx.txt", to_string(model.kind()).c_str(), per_axis,
                  static_cast<unsigned long long>(fnv1a(fp)));
    file = cache_dir / name;
    if (load_grid(file, header, count, g.values)) {
      if (log) *log << "descriptor grid: loaded " << count << " nodes from " << file.string() << "\n";
      return g;
    }
  }

  if (log) *log << "descriptor grid: simulating " << count << " nodes\n";
  g.values.assign(count, {});
  const unsigned workers = worker_count(threads, count);
  std::atomic<std::size_t> done{0};
  parallel_for(count, workers, [&](std::size_t i) {
    g.values[i] = simulate_descriptors(model.params_for(g.points[i]), model.scenario());
    const std::size_t d = ++done;
    if (log && workers == 1 && d % 20000 == 0) *log << "  " << d << " / " << count << "\n";
  });

  if (!file.empty()) {
    std::ostringstream os;
    os << header << "\n";
    for (const auto& d : g.values) os << fmt(d.rms_accel) << ' ' << fmt(d.rms_pitch_rate) << ' ' << fmt(d.grip_loss) << '\n';
    const fs::path tmp = file.string() + ".tmp";
    write_text(tmp, os.str());
    fs::rename(tmp, file);
  }
  return g;
}

GridOptimum grid_minimum(const DescriptorGrid& grid, const EtaSuspension& eta) {
  if (grid.values.empty()) throw ConfigError("grid minimum: empty grid");
  const bool grip = grid.kind == ProblemKind::susp4d;
  GridOptimum best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    const double v = suspension_objective(grid.values[i], eta, grip);
    if (v < best.value) best = {v, i};
  }
  return best;
}

double reference_optimum(const Problem& problem, ReferenceMethod method, std::uint64_t seed,
                         const DescriptorGrid* grid, std::ostream* log) {
  if (method == ReferenceMethod::grid) {
    if (problem.kind == ProblemKind::analytical)
      throw ConfigError("reference optimum: grid search is only available for suspension problems");
    if (!grid || grid->kind != problem.kind) throw ConfigError("reference optimum: missing descriptor grid");
    return grid_minimum(*grid, problem.eta_suspension).value;
  }
  const SwarmResult r = particle_swarm(problem.objective, problem.bounds, seed);
  if (r.disagreement && log) {
    *log << "warning: swarm restarts disagree by more than 1% (";
    for (std::size_t i = 0; i < r.restart_values.size(); ++i) *log << (i ? ", " : "") << fmt(r.restart_values[i]);
    *log << "); using the best\n";
  }
  return r.value;
}

// ---- Monte Carlo ----

const ArmTable* ConvergenceTable::arm(LoopMode m) const {
  for (const auto& a : arms)
    if (a.mode == m) return &a;
  return nullptr;
}

bool ConvergenceTable::failed() const {
  return attempted > 0 && static_cast<double>(failures.size()) > 0.2 * static_cast<double>(attempted);
}

void aggregate(ArmTable& arm) {
  arm.mean.clear();
  arm.std.clear();
  if (arm.errors.empty()) return;
  const std::size_t cols = arm.errors.front().size();
  const double n = static_cast<double>(arm.errors.size());
  for (std::size_t k = 0; k < cols; ++k) {
    double sum = 0.0;
    for (const auto& row : arm.errors) sum += row[k];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& row : arm.errors) ss += (row[k] - mean) * (row[k] - mean);
    arm.mean.push_back(mean);
    arm.std.push_back(arm.errors.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
  }
}

namespace {

struct RunOutcome {
  bool ok = false;
  std::string message;
  double y_star = 0.0;
  std::vector<std::vector<double>> errors;  // per arm
  std::vector<Vec> finals;
  std::vector<double> grip;
  std::vector<IterationTrace> traces;
};

constexpr std::uint64_t kEtaSalt = 0xe7a5eedULL;
constexpr std::uint64_t kSwarmSalt = 0x5a4a11ULL;

}  // namespace

ConvergenceTable run_montecarlo(const BenchConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto seeds = cfg.resolved_seeds();
  const int budget = cfg.resolved_budget();
  const ReferenceMethod ref = cfg.resolved_reference();

  std::shared_ptr<const SuspensionModel> model;
  std::optional<DescriptorGrid> grid;
  if (cfg.problem != ProblemKind::analytical) {
    model = std::make_shared<SuspensionModel>(cfg.problem, cfg.plant, cfg.scenario);
    if (ref == ReferenceMethod::grid)
      grid = descriptor_grid(*model, cfg.problem == ProblemKind::susp2d ? cfg.grid_2d : cfg.grid_4d, cfg.cache_dir,
                             cfg.threads, log);
  }

  std::vector<RunOutcome> outcomes(seeds.size());
  std::mutex log_mutex;
  auto run_one = [&](std::size_t r) {
    RunOutcome& out = outcomes[r];
    const std::uint64_t seed = seeds[r];
    try {
      std::mt19937_64 rng(mix_seed(seed, kEtaSalt));
      Problem problem = cfg.problem == ProblemKind::analytical
                            ? make_analytical_problem(sample_eta_analytical(rng))
                            : make_suspension_problem(model, sample_eta_suspension(rng));
      std::ostringstream warn;
      out.y_star = reference_optimum(problem, ref, mix_seed(seed, kSwarmSalt), grid ? &*grid : nullptr, &warn);
      for (LoopMode mode : cfg.arms) {
        LoopConfig lc = cfg.loop;
        lc.mode = mode;
        lc.budget = budget;
        lc.seed = seed;
        AutonomousResult res = run_autonomous(problem.bounds, lc, problem.objective, problem.bank);
        if (res.error) throw Error(to_string(mode) + ": " + *res.error);
        if (static_cast<int>(res.best_values.size()) != budget)
          throw Error(to_string(mode) + ": trace length " + std::to_string(res.best_values.size()));
        std::vector<double> row;
        for (double b : res.best_values) row.push_back(b - out.y_star);
        out.errors.push_back(std::move(row));
        const Vec fin = final_answer(res.state, lc);
        out.grip.push_back(model ? model->descriptors(fin).grip_loss : 0.0);
        out.finals.push_back(fin);
        out.traces.push_back(std::move(res.state.trace));
      }
      out.ok = true;
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << warn.str() << "seed " << seed << ": y*=" << fmt(out.y_star);
        for (std::size_t a = 0; a < cfg.arms.size(); ++a)
          *log << " " << to_string(cfg.arms[a]) << "=" << fmt(out.errors[a].back());
        *log << "\n";
      }
    } catch (const std::exception& e) {
      out.ok = false;
      out.message = e.what();
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << "seed " << seed << ": failed: " << e.what() << "\n";
      }
    }
  };
  parallel_for(seeds.size(), worker_count(cfg.threads, seeds.size()), run_one);

  ConvergenceTable t;
  t.problem = cfg.problem;
  t.budget = budget;
  t.n_init = cfg.loop.resolved_n_init(problem_dim(cfg.problem));
  t.attempted = static_cast<int>(seeds.size());
  for (LoopMode m : cfg.arms) t.arms.push_back(ArmTable{m, {}, {}, {}, {}, {}, {}});
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    auto& o = outcomes[r];
    if (!o.ok) {
      t.failures.push_back({seeds[r], o.message});
      continue;
    }
    t.seeds.push_back(seeds[r]);
    t.y_star.push_back(o.y_star);
    for (std::size_t a = 0; a < t.arms.size(); ++a) {
      t.arms[a].errors.push_back(std::move(o.errors[a]));
      t.arms[a].final_points.push_back(o.finals[a]);
      t.arms[a].final_grip_loss.push_back(o.grip[a]);
      t.arms[a].traces.push_back(std::move(o.traces[a]));
    }
  }
  for (auto& a : t.arms) aggregate(a);
  return t;
}

// ---- exports ----

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string color_for(LoopMode m) { return m == LoopMode::baseline ? "#d62728" : "#1f77b4"; }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string svg_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                      const std::string& y_label, int width, int height) {
  const double ml = 70, mr = 20, mt = 40, mb = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double sd = s.std.empty() ? 0.0 : s.std[k];
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.mean[k] - sd);
      y1 = std::max(y1, s.mean[k] + sd);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return mt + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  char buf[128];
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
     << "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n",
                ml, mt, pw, ph);
  os << buf;
  for (int t = 0; t <= 5; ++t) {
    const double xv = x0 + (x1 - x0) * t / 5.0, yv = y0 + (y1 - y0) * t / 5.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.3g</text>\n", px(xv),
                  mt + ph + 16, xv);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3g</text>\n", ml - 6, py(yv) + 4,
                  yv);
    os << buf;
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << mt + ph / 2
     << ")\">" << xml_escape(y_label) << "</text>\n";

  int legend = 0;
  for (const auto& s : series) {
    if (s.x.empty()) continue;
    if (!s.std.empty()) {
      os << "<path fill=\"" << s.color << "\" fill-opacity=\"0.2\" stroke=\"none\" d=\"";
      for (std::size_t k = 0; k < s.x.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%c%.2f %.2f ", k ? 'L' : 'M', px(s.x[k]), py(s.mean[k] + s.std[k]));
        os << buf;
      }
      for (std::size_t k = s.x.size(); k-- > 0;) {
        std::snprintf(buf, sizeof buf, "L%.2f %.2f ", px(s.x[k]), py(s.mean[k] - s.std[k]));
        os << buf;
      }
      os << "Z\"/>\n";
    }
    os << "<path fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" d=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%c%.2f %.2f ", k ? 'L' : 'M', px(s.x[k]), py(s.mean[k]));
      os << buf;
    }
    os << "\"/>\n";
    const double ly = mt + 14 + 16 * legend++;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"", ml + pw - 150, ly,
                  ml + pw - 125, ly);
    os << buf << s.color << "\" stroke-width=\"2\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\">", ml + pw - 120, ly + 4);
    os << buf << xml_escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<fs::path> export_results(const ConvergenceTable& table, const BenchConfig& cfg) {
  if (table.arms.empty() || table.seeds.empty()) throw Error("export: empty convergence table");
  const std::string stem = to_string(table.problem);
  std::vector<fs::path> written;
  std::vector<Series> series;
  nlohmann::json arms = nlohmann::json::object();

  for (const auto& arm : table.arms) {
    std::ostringstream os;
    os << "iteration,mean,std";
    for (auto s : table.seeds) os << ",run_" << s;
    os << "\n";
    for (std::size_t k = 0; k < arm.mean.size(); ++k) {
      os << k + 1 << ',' << fmt(arm.mean[k]) << ',' << fmt(arm.std[k]);
      for (const auto& row : arm.errors) os << ',' << fmt(row[k]);
      os << "\n";
    }
    const fs::path file = cfg.out_dir / (stem + "_" + to_string(arm.mode) + ".csv");
    write_text(file, os.str());
    written.push_back(file);

    Series s{to_string(arm.mode), color_for(arm.mode), {}, arm.mean, arm.std};
    for (std::size_t k = 0; k < arm.mean.size(); ++k) s.x.push_back(static_cast<double>(k + 1));
    series.push_back(std::move(s));

    nlohmann::json a = {{"final_mean", arm.mean.back()}, {"final_std", arm.std.back()}, {"mean", arm.mean},
                        {"std", arm.std}};
    if (table.problem != ProblemKind::analytical) a["final_grip_loss_mean"] = mean_of(arm.final_grip_loss);
    nlohmann::json finals = nlohmann::json::array();
    for (const auto& x : arm.final_points) finals.push_back(std::vector<double>(x.data(), x.data() + x.size()));
    a["final_points"] = finals;
    arms[to_string(arm.mode)] = a;
  }

  const fs::path svg = cfg.out_dir / (stem + "_convergence.svg");
  write_text(svg, svg_chart(series, stem + ": y_best - y* (mean +- std)", "resolved points", "error"));
  written.push_back(svg);

  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : table.failures) failures.push_back({{"seed", f.seed}, {"error", f.message}});
  nlohmann::json summary = {{"v", 1},
                            {"config", to_json(cfg)},
                            {"budget", table.budget},
                            {"n_init", table.n_init},
                            {"seeds", table.seeds},
                            {"y_star", table.y_star},
                            {"attempted", table.attempted},
                            {"failures", failures},
                            {"arms", arms}};
  const fs::path js = cfg.out_dir / (stem + "_summary.json");
  write_text(js, summary.dump(2) + "\n");
  written.push_back(js);
  return written;
}

SignalBand signal_band(const std::vector<std::vector<double>>& rows) {
  SignalBand b;
  if (rows.empty()) return b;
  const std::size_t len = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != len) throw DomainError("signal band: rows differ in length");
  const double n = static_cast<double>(rows.size());
  b.mean.assign(len, 0.0);
  b.std.assign(len, 0.0);
  for (std::size_t k = 0; k < len; ++k) {
    double s = 0.0;
    for (const auto& r : rows) s += r[k];
    const double m = s / n;
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[k] - m) * (r[k] - m);
    b.mean[k] = m;
    b.std[k] = rows.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  return b;
}

std::vector<fs::path> export_response_comparison(const SuspensionModel& model, const std::vector<Vec>& best_baseline,
                                                 const std::vector<Vec>& best_regularized, const fs::path& out_dir,
                                                 const std::string& stem) {
  if (best_baseline.empty() || best_regularized.empty())
    throw ConfigError("response comparison: both arms need at least one configuration");
  std::vector<double> time;
  auto bands = [&](const std::vector<Vec>& configs) {
    std::vector<std::vector<double>> az, pr;
    for (const auto& x : configs) {
      SignalTrace tr = model.trace(x);
      if (time.empty()) time = tr.time;
      az.push_back(std::move(tr.accel));
      pr.push_back(std::move(tr.pitch_rate));
    }
    return std::pair{signal_band(az), signal_band(pr)};
  };
  const auto [az_b, pr_b] = bands(best_baseline);
  const auto [az_r, pr_r] = bands(best_regularized);

  std::ostringstream os;
  os << "time,A_z_mean_baseline,A_z_std_baseline,A_z_mean_regularized,A_z_std_regularized,"
        "pitch_rate_mean_baseline,pitch_rate_std_baseline,pitch_rate_mean_regularized,pitch_rate_std_regularized\n";
  for (std::size_t k = 0; k < time.size(); ++k) {
    os << fmt(time[k]) << ',' << fmt(az_b.mean[k]) << ',' << fmt(az_b.std[k]) << ',' << fmt(az_r.mean[k]) << ','
       << fmt(az_r.std[k]) << ',' << fmt(pr_b.mean[k]) << ',' << fmt(pr_b.std[k]) << ',' << fmt(pr_r.mean[k]) << ','
       << fmt(pr_r.std[k]) << '\n';
  }
  std::vector<fs::path> written;
  const fs::path csv = out_dir / (stem + "_response.csv");
  write_text(csv, os.str());
  written.push_back(csv);

  const auto idx = downsample_indices(time.size(), 1000);
  auto pick = [&](const std::vector<double>& v) {
    std::vector<double> out;
    for (auto i : idx) out.push_back(v[i]);
    return out;
  };
  const auto tx = pick(time);
  const std::pair<const char*, std::pair<const SignalBand*, const SignalBand*>> panels[] = {
      {"A_z", {&az_b, &az_r}}, {"pitch_rate", {&pr_b, &pr_r}}};
  for (const auto& [name, band] : panels) {
    std::vector<Series> s{
        {"baseline", color_for(LoopMode::baseline), tx, pick(band.first->mean), pick(band.first->std)},
        {"regularized", color_for(LoopMode::regularized), tx, pick(band.second->mean), pick(band.second->std)}};
    const std::string unit = std::string(name) == "A_z" ? "A_z (m/s^2)" : "pitch rate (rad/s)";
    const fs::path svg = out_dir / (stem + "_response_" + name + ".svg");
    write_text(svg, svg_chart(s, stem + ": final configurations, " + name, "time (s)", unit));
    written.push_back(svg);
  }
  return written;
}

}  // namespace prefopt
