#include "stlsgd/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include "stlsgd/dataset.hpp"
#include "stlsgd/errors.hpp"

namespace stlsgd {

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::stl_sc: return "stl-sc";
    case Algorithm::stl_nc_1: return "stl-nc-1";
    case Algorithm::stl_nc_2: return "stl-nc-2";
    case Algorithm::local: return "local";
    case Algorithm::sync: return "sync";
    case Algorithm::lb_sgd: return "lb-sgd";
    case Algorithm::cr_psgd: return "cr-psgd";
  }
  return "unknown";
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

namespace {

constexpr std::uint64_t kSyntheticDataSeed = 9002;    // bundled fallback set, fixed
constexpr std::uint64_t kSigmaEstimateSeed = 42424;   // sigma2 estimation, config-independent

constexpr std::size_t kSyntheticExamples = 4096;
constexpr std::size_t kSyntheticFeatures = 40;

std::optional<Algorithm> algorithm_from(std::string_view s) {
  if (s == "stl-sc") return Algorithm::stl_sc;
  if (s == "stl-nc-1") return Algorithm::stl_nc_1;
  if (s == "stl-nc-2") return Algorithm::stl_nc_2;
  if (s == "local") return Algorithm::local;
  if (s == "sync") return Algorithm::sync;
  if (s == "lb-sgd") return Algorithm::lb_sgd;
  if (s == "cr-psgd") return Algorithm::cr_psgd;
  return {};
}

bool is_stagewise(Algorithm a) {
  return a == Algorithm::stl_sc || a == Algorithm::stl_nc_1 || a == Algorithm::stl_nc_2;
}

bool is_prox(Algorithm a) { return a == Algorithm::stl_nc_1 || a == Algorithm::stl_nc_2; }

bool has_decaying_lr(Algorithm a) {
  return a == Algorithm::sync || a == Algorithm::local || a == Algorithm::lb_sgd;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

// Every key the format knows, for distinguishing typos from keys that exist
// but do not apply to the configured algorithm/objective.
const std::map<std::string_view, std::string_view> kAllKeys = {
    {"algorithm", "always"},
    {"objective", "always"},
    {"name", "always"},
    {"seed", "always"},
    {"clients", "always"},
    {"iid_fraction", "always"},
    {"threads", "always"},
    {"init.x0", "always"},
    {"run.eta1", "always"},
    {"run.batch_size", "always"},
    {"run.eval_every", "always"},
    {"run.target_gap", "always"},
    {"run.return_mode", "always"},
    {"data.path", "objective logistic"},
    {"data.positive_class", "objective logistic"},
    {"data.negative_class", "objective logistic"},
    {"data.num_features", "objective logistic"},
    {"logistic.lambda", "objective logistic"},
    {"quad.dim", "objective quadratic"},
    {"quad.spread", "objective quadratic"},
    {"quad.sigma2", "objective quadratic"},
    {"pl.sigma2", "objective pl"},
    {"run.T1", "stagewise algorithms"},
    {"run.S", "stagewise algorithms"},
    {"run.k1", "stagewise algorithms"},
    {"plan.sigma2", "stagewise algorithms"},
    {"plan.zeta_star", "stagewise algorithms"},
    {"run.gamma", "algorithms stl-nc-1 and stl-nc-2"},
    {"run.T", "baseline algorithms"},
    {"run.k", "algorithm local"},
    {"run.alpha", "algorithms sync, local, lb-sgd"},
    {"run.batch_growth", "algorithm cr-psgd"},
    {"run.batch_cap", "algorithm cr-psgd"},
};

struct Entry {
  std::string value;
  std::size_t line = 0;
  bool used = false;
};

class ConfigReader {
 public:
  ConfigReader(std::string_view text, std::string name) : name_(std::move(name)) {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      std::string_view line =
          (eol == std::string_view::npos) ? text.substr(pos) : text.substr(pos, eol - pos);
      pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
      ++line_no;
      std::size_t hash = line.find('#');
      if (hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        fail_line(line_no, "expected key = value, got '" + std::string(line) + "'");
      }
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) fail_line(line_no, "empty key");
      if (value.empty()) fail_line(line_no, "empty value for key '" + key + "'");
      if (entries_.count(key)) fail_line(line_no, "duplicate key '" + key + "'");
      entries_.emplace(std::move(key), Entry{std::move(value), line_no, false});
    }
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return {};
    it->second.used = true;
    return it->second.value;
  }

  std::string require(const std::string& key, const char* why) {
    auto v = take(key);
    if (!v) fail(std::string("missing key '") + key + "' (" + why + ")");
    return *v;
  }

  std::optional<double> take_double(const std::string& key) {
    auto v = take(key);
    if (!v) return {};
    return parse_double(key, *v);
  }

  // "auto" means: leave unset, derive at run time.
  std::optional<double> take_double_or_auto(const std::string& key) {
    auto v = take(key);
    if (!v || *v == "auto") return {};
    return parse_double(key, *v);
  }

  std::optional<std::int64_t> take_int(const std::string& key) {
    auto v = take(key);
    if (!v) return {};
    return parse_int(key, *v);
  }

  std::optional<std::uint64_t> take_uint(const std::string& key) {
    auto v = take(key);
    if (!v) return {};
    std::uint64_t out = 0;
    parse_with(key, *v, out);
    return out;
  }

  double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    parse_with(key, v, out);
    return out;
  }

  std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    parse_with(key, v, out);
    return out;
  }

  // Leftover keys are hard errors: known-but-inapplicable ones name the
  // context they belong to, everything else is reported as unknown.
  void finish(Algorithm algo, const std::string& objective) {
    std::vector<std::string> problems;
    for (const auto& [key, entry] : entries_) {
      if (entry.used) continue;
      auto it = kAllKeys.find(key);
      if (it == kAllKeys.end()) {
        problems.push_back("unknown key '" + key + "' (line " + std::to_string(entry.line) +
                           ")");
      } else {
        problems.push_back("key '" + key + "' (line " + std::to_string(entry.line) +
                           ") applies to " + std::string(it->second) + ", not to algorithm '" +
                           algorithm_name(algo) + "' with objective '" + objective + "'");
      }
    }
    if (!problems.empty()) {
      std::string msg = problems[0];
      for (std::size_t i = 1; i < problems.size(); ++i) msg += "; " + problems[i];
      fail(msg);
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(name_ + ": " + msg); }

  [[noreturn]] void fail_line(std::size_t line, const std::string& msg) const {
    throw ConfigError(name_ + " line " + std::to_string(line) + ": " + msg);
  }

 private:
  template <typename T>
  void parse_with(const std::string& key, const std::string& v, T& out) {
    const char* b = v.data();
    const char* e = b + v.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) {
      const std::string msg = "key '" + key + "' has malformed value '" + v + "'";
      auto it = entries_.find(key);
      if (it != entries_.end()) fail_line(it->second.line, msg);
      fail(msg);
    }
  }

  std::string name_;
  std::map<std::string, Entry> entries_;
};

int env_thread_cap() {
  const char* e = std::getenv("STLSGD_THREADS");
  if (!e || !*e) return 0;
  int v = 0;
  auto [p, ec] = std::from_chars(e, e + std::string_view(e).size(), v);
  if (ec != std::errc() || *p != '\0' || v < 1) return 0;
  return v;
}

int effective_threads(int requested) {
  int t = std::max(1, requested);
  int cap = env_thread_cap();
  if (cap > 0) t = std::min(t, cap);
  return t;
}

std::uint64_t mix_key(std::uint64_t h, std::uint64_t v) {
  return detail::avalanche(h ^ (v + 0x9e3779b97f4a7c15ULL));
}

std::uint64_t double_bits(double v) {
  std::uint64_t out;
  static_assert(sizeof out == sizeof v);
  std::memcpy(&out, &v, sizeof out);
  return out;
}

// f* for objectives without a closed form, memoized per (data, lambda, shards)
// so sweeps sharing a partition solve once.
void ensure_optimum(const ObjectivePtr& obj, std::uint64_t cache_key) {
  if (obj->optimum()) return;
  static std::mutex mu;
  static std::unordered_map<std::uint64_t, Optimum> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(cache_key);
    if (it != cache.end()) {
      obj->set_optimum(it->second);
      return;
    }
  }
  Optimum opt = solve_optimum(*obj, Vec(obj->dim(), 0.0));
  obj->set_optimum(opt);
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(cache_key, std::move(opt));
}

std::string render_trace_csv(const StagePlan& plan, const RunTrace& trace) {
  std::string out;
  out += "# plan: ";
  out += plan.provenance;
  out += '\n';
  for (const auto& w : plan.warnings) {
    out += "# warning: ";
    out += w;
    out += '\n';
  }
  out += "t,comm_rounds,gap,grad_norm_sq,divergence,eta,k,stage\n";
  for (const auto& r : trace.rows) {
    out += std::to_string(r.t);
    out += ',';
    out += std::to_string(r.comm_rounds);
    out += ',';
    if (r.gap) out += format_double(*r.gap);
    out += ',';
    if (r.grad_norm_sq) out += format_double(*r.grad_norm_sq);
    out += ',';
    if (r.divergence) out += format_double(*r.divergence);
    out += ',';
    out += format_double(r.eta);
    out += ',';
    out += std::to_string(r.k);
    out += ',';
    out += std::to_string(r.stage);
    out += '\n';
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& name) {
  ConfigReader r(text, name);
  ExperimentConfig cfg;
  cfg.name = name;

  std::string algo_str = r.require("algorithm", "which method to run");
  auto algo = algorithm_from(algo_str);
  if (!algo) r.fail("unknown algorithm '" + algo_str + "'");
  cfg.algorithm = *algo;

  cfg.objective = r.require("objective", "logistic, quadratic, or pl");
  if (cfg.objective != "logistic" && cfg.objective != "quadratic" && cfg.objective != "pl") {
    r.fail("unknown objective '" + cfg.objective + "'");
  }

  if (auto v = r.take("name")) cfg.name = *v;
  if (auto v = r.take_uint("seed")) cfg.seed = *v;
  if (auto v = r.take_int("clients")) {
    if (*v < 1) r.fail("clients must be at least 1");
    cfg.clients = static_cast<std::size_t>(*v);
  }
  if (auto v = r.take_double("iid_fraction")) {
    if (*v < 0.0 || *v > 100.0) r.fail("iid_fraction must lie in [0, 100]");
    cfg.iid_fraction = *v;
  }
  if (auto v = r.take_int("threads")) {
    if (*v < 1) r.fail("threads must be at least 1");
    cfg.threads = static_cast<int>(*v);
  }
  if (auto v = r.take_double("init.x0")) cfg.x0 = *v;

  cfg.eta1 = r.parse_double("run.eta1", r.require("run.eta1", "initial learning rate"));
  if (cfg.eta1 <= 0.0) r.fail("run.eta1 must be positive");

  if (auto v = r.take_int("run.batch_size")) {
    if (*v < 1) r.fail("run.batch_size must be at least 1");
    cfg.batch_size = static_cast<std::size_t>(*v);
  }
  if (auto v = r.take_int("run.eval_every")) {
    if (*v < 1) r.fail("run.eval_every must be at least 1");
    cfg.eval_every = *v;
  }
  if (auto v = r.take_double("run.target_gap")) {
    if (*v <= 0.0) r.fail("run.target_gap must be positive");
    cfg.target_gap = *v;
  }
  if (auto v = r.take("run.return_mode")) {
    if (*v == "last") {
      cfg.return_mode = ReturnMode::last_iterate;
    } else if (*v == "random") {
      cfg.return_mode = ReturnMode::random_iterate;
    } else {
      r.fail("run.return_mode must be 'last' or 'random'");
    }
  }

  if (cfg.objective == "logistic") {
    cfg.data_path = r.require("data.path", "libsvm file, or 'synthetic'");
    cfg.positive_class = r.take_double("data.positive_class");
    cfg.negative_class = r.take_double("data.negative_class");
    if (auto v = r.take_int("data.num_features")) {
      if (*v < 1) r.fail("data.num_features must be positive");
      cfg.num_features = static_cast<std::size_t>(*v);
    }
    cfg.lambda = r.take_double_or_auto("logistic.lambda");
    if (cfg.lambda && *cfg.lambda < 0.0) r.fail("logistic.lambda must be nonnegative");
  } else if (cfg.objective == "quadratic") {
    if (auto v = r.take_int("quad.dim")) {
      if (*v < 1) r.fail("quad.dim must be positive");
      cfg.quad_dim = static_cast<std::size_t>(*v);
    }
    if (auto v = r.take_double("quad.spread")) {
      if (*v < 0.0) r.fail("quad.spread must be nonnegative");
      cfg.quad_spread = *v;
    }
    if (auto v = r.take_double("quad.sigma2")) {
      if (*v < 0.0) r.fail("quad.sigma2 must be nonnegative");
      cfg.quad_sigma2 = *v;
    }
  } else {
    if (auto v = r.take_double("pl.sigma2")) {
      if (*v < 0.0) r.fail("pl.sigma2 must be nonnegative");
      cfg.pl_sigma2 = *v;
    }
  }

  if (is_stagewise(cfg.algorithm)) {
    cfg.T1 = r.parse_int("run.T1", r.require("run.T1", "first-stage iteration count"));
    if (cfg.T1 < 1) r.fail("run.T1 must be positive");
    auto S = r.parse_int("run.S", r.require("run.S", "stage count"));
    if (S < 1) r.fail("run.S must be at least 1");
    cfg.S = static_cast<std::size_t>(S);
    cfg.k1 = r.take_double_or_auto("run.k1");
    if (cfg.k1 && *cfg.k1 <= 0.0) r.fail("run.k1 must be positive");
    cfg.sigma2 = r.take_double("plan.sigma2");
    if (cfg.sigma2 && *cfg.sigma2 < 0.0) r.fail("plan.sigma2 must be nonnegative");
    cfg.zeta_star = r.take_double("plan.zeta_star");
    if (cfg.zeta_star && *cfg.zeta_star < 0.0) r.fail("plan.zeta_star must be nonnegative");
    if (is_prox(cfg.algorithm)) {
      cfg.gamma = r.take_double_or_auto("run.gamma");
      if (cfg.gamma && *cfg.gamma <= 0.0) r.fail("run.gamma must be positive");
    }
  } else {
    cfg.T = r.parse_int("run.T", r.require("run.T", "total iteration count"));
    if (cfg.T < 1) r.fail("run.T must be positive");
    if (cfg.algorithm == Algorithm::local) {
      cfg.k = r.parse_int("run.k", r.require("run.k", "communication period"));
      if (cfg.k < 1) r.fail("run.k must be at least 1");
    }
    if (has_decaying_lr(cfg.algorithm)) {
      if (auto v = r.take_double("run.alpha")) {
        if (*v < 0.0) r.fail("run.alpha must be nonnegative");
        cfg.alpha = *v;
      }
    }
    if (cfg.algorithm == Algorithm::cr_psgd) {
      cfg.batch_growth = r.parse_double(
          "run.batch_growth", r.require("run.batch_growth", "per-epoch batch factor"));
      if (cfg.batch_growth <= 1.0) r.fail("run.batch_growth must exceed 1");
      if (auto v = r.take_int("run.batch_cap")) {
        if (*v < 1) r.fail("run.batch_cap must be at least 1");
        cfg.batch_cap = *v;
      }
    }
  }

  r.finish(cfg.algorithm, cfg.objective);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, std::filesystem::path(path).stem().string());
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const int threads = effective_threads(cfg.threads);
  if (cfg.clients == 0) throw ConfigError(cfg.name + ": clients must be at least 1");
  if (cfg.eta1 <= 0.0) throw ConfigError(cfg.name + ": eta1 must be positive");

  // Objective construction.
  ObjectivePtr obj;
  Shards shards;
  bool iid = true;
  std::int64_t epoch_examples = 1;
  std::uint64_t optimum_key = 0;

  if (cfg.objective == "logistic") {
    auto data = std::make_shared<Dataset>();
    if (cfg.data_path == "synthetic") {
      *data = synthetic_two_class(kSyntheticExamples, kSyntheticFeatures, kSyntheticDataSeed);
    } else {
      ParseOptions popts;
      popts.positive_class = cfg.positive_class;
      popts.negative_class = cfg.negative_class;
      popts.num_features = cfg.num_features;
      *data = load_libsvm_file(cfg.data_path, popts);
    }
    const double lambda = cfg.lambda.value_or(1.0 / static_cast<double>(data->size()));
    if (cfg.clients > 1) {
      shards = partition(*data, {cfg.clients, cfg.iid_fraction, cfg.seed});
    }
    iid = cfg.iid_fraction == 100.0;
    epoch_examples = static_cast<std::int64_t>(
        (data->size() + cfg.clients - 1) / cfg.clients);
    optimum_key = mix_key(mix_key(mix_key(mix_key(data->content_hash(), double_bits(lambda)),
                                          cfg.clients),
                                  double_bits(cfg.iid_fraction)),
                          cfg.seed);
    obj = logistic_objective(std::move(data), lambda, shards);
  } else if (cfg.objective == "quadratic") {
    // One shared center in the IID limit; otherwise spread clients around it.
    Vec base(cfg.quad_dim);
    RngStream base_rng(cfg.seed, kMetaStream + 4, 0);
    for (auto& v : base) v = base_rng.next_gaussian();
    std::vector<Vec> centers(cfg.clients, base);
    if (cfg.iid_fraction < 100.0) {
      for (std::size_t c = 0; c < cfg.clients; ++c) {
        RngStream rng(cfg.seed, kMetaStream + 4, c + 1);
        for (auto& v : centers[c]) v += cfg.quad_spread * rng.next_gaussian();
      }
    }
    obj = quadratic_objective(std::move(centers), cfg.quad_sigma2);
    iid = *obj->constants().zeta_star == 0.0;
  } else if (cfg.objective == "pl") {
    obj = pl_objective(cfg.pl_sigma2, cfg.clients);
    iid = true;
  } else {
    throw ConfigError(cfg.name + ": unknown objective '" + cfg.objective + "'");
  }

  Vec x0(obj->dim(), cfg.x0);
  ensure_optimum(obj, optimum_key);
  const auto& con = obj->constants();

  auto planning_sigma2 = [&]() -> double {
    if (cfg.sigma2) return *cfg.sigma2;
    if (con.sigma2 > 0.0) return con.sigma2;
    return estimate_sigma2(*obj, x0, kSigmaEstimateSeed);
  };
  auto planning_zeta = [&]() -> double {
    if (cfg.zeta_star) return *cfg.zeta_star;
    if (iid) return 0.0;
    if (con.zeta_star) return *con.zeta_star;
    return zeta_at(*obj, obj->optimum()->x);
  };

  StagePlan plan;
  std::optional<double> prox_gamma;
  LocalSgdConfig baseline_cfg;
  bool stagewise = is_stagewise(cfg.algorithm);

  if (stagewise) {
    if (cfg.T1 < 1 || cfg.S < 1) {
      throw ConfigError(cfg.name + ": stagewise runs need T1 >= 1 and S >= 1");
    }
    double plan_L = con.L;
    if (is_prox(cfg.algorithm)) {
      if (!con.rho) {
        throw ConfigError(cfg.name +
                          ": stl-nc algorithms need a weakly convex objective (pl)");
      }
      prox_gamma = cfg.gamma.value_or(1.0 / (2.0 * *con.rho));
      if (1.0 / *prox_gamma <= *con.rho) {
        throw ConfigError(cfg.name + ": run.gamma too large, 1/gamma must exceed rho");
      }
      plan_L = con.L + 1.0 / *prox_gamma;
    }
    double k1 = cfg.k1 ? *cfg.k1
                       : initial_k(iid, cfg.eta1, plan_L, cfg.clients, planning_sigma2(),
                                   planning_zeta());
    if (cfg.algorithm == Algorithm::stl_sc) {
      plan = plan_stl_sc(cfg.eta1, cfg.T1, k1, cfg.S, iid, con.mu);
    } else {
      int option = cfg.algorithm == Algorithm::stl_nc_1 ? 1 : 2;
      plan = plan_stl_nc(cfg.eta1, cfg.T1, k1, cfg.S, iid, option, con.rho);
    }
  } else {
    BaselineParams bp;
    bp.eta1 = cfg.eta1;
    bp.T = cfg.T;
    bp.k = cfg.k;
    bp.alpha = cfg.alpha;
    bp.batch = cfg.batch_size;
    bp.batch_growth = cfg.batch_growth;
    bp.batch_cap = cfg.batch_cap;
    BaselineKind kind;
    switch (cfg.algorithm) {
      case Algorithm::local: kind = BaselineKind::local_fixed_k; break;
      case Algorithm::sync: kind = BaselineKind::sync; break;
      case Algorithm::lb_sgd: kind = BaselineKind::lb_sgd; break;
      case Algorithm::cr_psgd: kind = BaselineKind::cr_psgd; break;
      default: throw ConfigError(cfg.name + ": unsupported baseline");
    }
    BaselinePlan bplan = plan_baseline(kind, bp);
    plan = bplan.plan;
    baseline_cfg.eta = cfg.eta1;
    baseline_cfg.T = cfg.T;
    baseline_cfg.k = plan.stages[0].k;
    baseline_cfg.batch_size = bplan.batch;
    baseline_cfg.return_mode = cfg.return_mode;
    baseline_cfg.eval_every = cfg.eval_every;
    baseline_cfg.lr_alpha = bplan.lr_alpha;
    baseline_cfg.batch_growth = bplan.batch_growth;
    baseline_cfg.batch_cap = bplan.batch_cap;
    baseline_cfg.epoch_examples = epoch_examples;
    baseline_cfg.threads = threads;
  }

  ClientFleet fleet = make_fleet(cfg.clients, cfg.seed, shards);

  ExperimentResult out;
  if (stagewise) {
    StagewiseOptions opts;
    opts.batch_size = cfg.batch_size;
    opts.return_mode = cfg.return_mode;
    opts.eval_every = cfg.eval_every;
    opts.threads = threads;
    StagewiseResult res = run_stagewise(obj, x0, plan, fleet, prox_gamma, opts);
    out.trace = std::move(res.trace);
    out.x_final = std::move(res.x_final);
    out.summary.comm_rounds_total = res.comm_rounds;
    out.summary.iterations_total = res.iterations;
    if (cfg.algorithm == Algorithm::stl_nc_2) {
      RngStream rng(cfg.seed, kMetaStream + 3, 0);
      out.sampled_stage = sample_stage_index(cfg.S, rng);
      out.x_report = res.stage_iterates[out.sampled_stage - 1];
    } else {
      out.x_report = out.x_final;
    }
  } else {
    LocalSgdResult res = local_sgd(*obj, x0, baseline_cfg, fleet);
    out.trace = std::move(res.trace);
    out.x_final = std::move(res.x);
    out.x_report = out.x_final;
    out.summary.comm_rounds_total = res.comm_rounds;
    out.summary.iterations_total = cfg.T;
  }
  out.plan = std::move(plan);

  out.summary.algorithm = algorithm_name(cfg.algorithm);
  out.summary.final_gap = objective_gap(*obj, out.x_final);
  out.summary.final_grad_norm_sq = norm_sq(obj->full_gradient(out.x_final));
  for (const auto& row : out.trace.rows) {
    if (row.gap && *row.gap <= cfg.target_gap) {
      out.summary.comm_rounds_to_target = row.comm_rounds;
      break;
    }
  }
  out.trace_csv = render_trace_csv(out.plan, out.trace);
  out.summary.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

std::string summary_header_csv() {
  return "algorithm,comm_rounds_total,comm_rounds_to_target,iterations_total,final_gap,"
         "final_grad_norm_sq,wall_time_s";
}

std::string summary_row_csv(const SummaryRecord& r) {
  std::string out = r.algorithm;
  out += ',';
  out += std::to_string(r.comm_rounds_total);
  out += ',';
  if (r.comm_rounds_to_target) out += std::to_string(*r.comm_rounds_to_target);
  out += ',';
  out += std::to_string(r.iterations_total);
  out += ',';
  if (r.final_gap) out += format_double(*r.final_gap);
  out += ',';
  out += format_double(r.final_grad_norm_sq);
  out += ',';
  out += format_double(r.wall_time_s);
  return out;
}

std::vector<SweepItem> sweep(const std::vector<ExperimentConfig>& configs) {
  if (configs.empty()) throw ConfigError("sweep needs at least one config");
  std::vector<SweepItem> items;
  items.reserve(configs.size());
  for (const auto& cfg : configs) {
    SweepItem item;
    item.config = cfg;
    try {
      item.result = run_experiment(cfg);
    } catch (const DivergenceError& e) {
      item.error = e.what();
      item.error_code = 3;
    } catch (const std::exception& e) {
      item.error = e.what();
      item.error_code = 2;
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::string sweep_summary_csv(const std::vector<SweepItem>& items) {
  std::string out = "name," + summary_header_csv() + "\n";
  for (const auto& item : items) {
    if (item.result) {
      out += item.config.name;
      out += ',';
      out += summary_row_csv(item.result->summary);
      out += '\n';
    }
  }
  for (const auto& item : items) {
    if (!item.result) {
      out += "# failed: ";
      out += item.config.name;
      out += " exit=";
      out += std::to_string(item.error_code);
      out += ' ';
      out += item.error;
      out += '\n';
    }
  }
  return out;
}

}  // namespace stlsgd
