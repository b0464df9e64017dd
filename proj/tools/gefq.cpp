// gefq: command-line front end for the gef library.
//
// Exit codes: 0 success/solved, 1 usage or protocol error, 2 no solution.

#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gef/backtrack.hpp"
#include "gef/bench.hpp"
#include "gef/cost_model.hpp"
#include "gef/dist.hpp"
#include "gef/portfolio.hpp"
#include "gef/search.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNoResult = 2;

struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

Range parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("expected A:B, got '" + text + "'");
  Range r{std::stoul(text.substr(0, colon)), std::stoul(text.substr(colon + 1))};
  if (r.lo < 1 || r.hi < r.lo) throw std::invalid_argument("range must satisfy 1 <= A <= B");
  return r;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoul(item));
  if (out.empty()) throw std::invalid_argument("empty size list");
  return out;
}

std::string fmt_ms(double ms) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f", ms);
  return buf;
}

// Search knobs shared by solve, bench and coordinate. Zero means "scale with n".
struct SearchFlags {
  double walk_prob = 0.02;
  std::size_t max_tries = 0;
  std::size_t max_restarts = 100;
  std::size_t stagnation = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--walk-prob", walk_prob, "random-walk probability per step")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--max-tries", max_tries, "steps per try before restart (default 100*n)");
    cmd->add_option("--max-restarts", max_restarts, "restart budget, 0 = unbounded");
    cmd->add_option("--stagnation", stagnation, "non-improving steps before escalation (default 2*n)");
  }

  gef::SearchConfig config(std::size_t n, std::uint64_t seed) const {
    auto cfg = gef::SearchConfig::defaults_for(n, seed);
    cfg.random_walk_prob = walk_prob;
    if (max_tries) cfg.max_tries = max_tries;
    if (stagnation) cfg.stagnation_limit = stagnation;
    cfg.max_restarts = max_restarts;
    return cfg;
  }
};

int cmd_solve(std::size_t n, const std::string& method, std::uint64_t seed, const SearchFlags& flags) {
  const auto inst = gef::make_nqueens(n);
  if (method == "backtrack") {
    const auto start = std::chrono::steady_clock::now();
    const auto r = gef::backtrack_solve(inst);
    const std::chrono::duration<double, std::milli> took = std::chrono::steady_clock::now() - start;
    if (!r.solution) {
      std::cerr << "no solution exists for n=" << n << " (nodes=" << r.nodes << ")\n";
      return kNoResult;
    }
    std::cout << gef::format_assignment(*r.solution) << '\n'
              << "eval=0 millis=" << fmt_ms(took.count()) << " steps=" << r.nodes << '\n';
    return kOk;
  }
  if (method != "gef") {
    std::cerr << "unknown method '" << method << "'\n";
    return kUsage;
  }
  const auto out = gef::gef_solve(inst, flags.config(n, seed));
  if (out.status != gef::SearchStatus::Solved) {
    std::cerr << "seed=" << seed << " status=" << gef::to_string(out.status)
              << " eval=" << out.stats.final_eval.conflicts << " steps=" << out.stats.steps
              << " restarts=" << out.stats.restarts << '\n';
    return kNoResult;
  }
  std::cout << "# seed=" << seed << '\n'
            << gef::format_assignment(out.assignment) << '\n'
            << "eval=0 millis=" << fmt_ms(out.stats.wall_time.count()) << " steps=" << out.stats.steps << '\n';
  return kOk;
}

int cmd_bench(std::size_t n, std::size_t trials, const std::string& methods, std::size_t agents, std::uint64_t seed,
              const std::string& out_path, const SearchFlags& flags) {
  gef::BenchOptions opts;
  opts.n = n;
  opts.trials = trials;
  opts.agents = agents;
  opts.seed = seed;
  opts.config = flags.config(n, seed);
  opts.methods.clear();
  std::stringstream in(methods);
  std::string m;
  while (std::getline(in, m, ',')) opts.methods.push_back(gef::parse_method(m));

  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) {
      std::cerr << "cannot write " << out_path << '\n';
      return kUsage;
    }
  }
  const auto sum = gef::run_bench(opts);
  if (file.is_open()) {
    gef::write_run_records(file, sum.records);
    file.close();
    if (!file) {
      std::cerr << "failed writing " << out_path << '\n';
      return kUsage;
    }
  } else {
    gef::write_run_records(std::cout, sum.records);
  }
  std::cout << "# seed=" << seed << " n=" << n << " trials=" << trials << '\n'
            << "backtrack_median_ms=" << fmt_ms(sum.backtrack_median_millis)
            << " gef_faster_fraction=" << sum.gef_faster_fraction
            << " gef_distinct_millis=" << sum.gef_distinct_millis
            << " backtrack_distinct_steps=" << sum.backtrack_distinct_steps << '\n';
  return kOk;
}

int cmd_calibrate(const std::string& sizes, const std::string& agents, std::size_t trials, std::uint64_t seed,
                  const std::string& out_path) {
  const auto range = parse_range(agents);
  const auto report = gef::calibrate_max_agents(parse_sizes(sizes), {range.lo, range.hi}, trials, std::nullopt, seed);
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) {
      std::cerr << "cannot write " << out_path << '\n';
      return kUsage;
    }
    os = &file;
  }
  gef::write_calibration_csv(*os, report);
  std::cout << "# seed=" << seed << '\n'
            << "max_agent=" << report.max_agent << " empirical_best_agents=" << report.empirical_best_agents
            << (report.flagged ? " flagged=non-negative-slope" : "") << '\n';
  return kOk;
}

int cmd_probe(long ms) {
  if (ms <= 0) {
    std::cerr << "--ms must be positive\n";
    return kUsage;
  }
  const auto probe = gef::performance_probe(std::chrono::milliseconds(ms));
  std::cout << "p=" << probe.p << " homogenized_agents=" << gef::homogenized_agent_count(probe.p) << '\n';
  return kOk;
}

int cmd_agent(const std::string& bind, std::size_t agents, long probe_ms) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  gef::dist::AgentOptions opts;
  opts.bind = gef::net::parse_endpoint(bind);
  opts.agents = agents;
  opts.probe = std::chrono::milliseconds(probe_ms);
  gef::dist::AgentServer server(opts);
  std::cout << "listening " << server.local().str() << " agents=" << server.default_agents();
  if (server.startup_probe()) std::cout << " p=" << server.startup_probe()->p;
  std::cout << std::endl;

  std::jthread waiter([&server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    server.shutdown();
  });
  server.serve();
  // serve() also returns if the listener fails; release the signal waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  return kOk;
}

int cmd_coordinate(const std::string& workers, std::size_t n, std::uint64_t seed, std::size_t agents, long timeout_ms,
                   const SearchFlags& flags) {
  std::vector<gef::net::Endpoint> endpoints;
  std::stringstream in(workers);
  std::string item;
  while (std::getline(in, item, ',')) endpoints.push_back(gef::net::parse_endpoint(item));

  gef::dist::InitiatorOptions opts;
  opts.agents_per_worker = agents;
  opts.result_timeout = std::chrono::milliseconds(timeout_ms);
  const auto r = gef::dist::initiator_run(endpoints, n, flags.config(n, seed), seed, opts);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  if (!r.solution) {
    std::cerr << "no worker produced a solution\n";
    return kNoResult;
  }
  std::cout << gef::format_assignment(*r.solution) << '\n'
            << "t_o_ms=" << fmt_ms(gef::dist::millis(r.timing.t_o))
            << " t_ove_ms=" << fmt_ms(gef::dist::millis(r.timing.t_ove))
            << " t_tat_ms=" << fmt_ms(gef::dist::millis(r.timing.t_tat)) << '\n';
  std::cerr << "winner=" << r.workers[*r.winner].endpoint.str() << '\n';
  return kOk;
}

int cmd_model(double ko, double kove, const std::string& sizes, const std::string& na_range, const std::string& fit,
              const std::string& out_path) {
  gef::OverheadModel model{ko, kove};
  if (!fit.empty()) {
    std::ifstream in(fit);
    if (!in) {
      std::cerr << "cannot read " << fit << '\n';
      return kUsage;
    }
    model = gef::fit_constants(gef::read_observations(in));
    std::cout << "fitted k_o=" << model.k_o << " k_ove=" << model.k_ove << '\n';
  }
  model.validate();
  const auto ns = parse_sizes(sizes);
  const auto range = parse_range(na_range);
  std::vector<std::size_t> nas;
  for (auto a = range.lo; a <= range.hi; ++a) nas.push_back(a);

  for (const auto n : ns) {
    const double ua = gef::ultimate_agents(model, n);
    std::cout << "n=" << n << " ultimate_agents=" << ua << " floor=" << static_cast<std::uint64_t>(ua) << '\n';
  }
  if (out_path.empty()) {
    gef::emit_curves(model, ns, nas, std::cout);
    return kOk;
  }
  std::ofstream file(out_path);
  if (!file) {
    std::cerr << "cannot write " << out_path << '\n';
    return kUsage;
  }
  gef::emit_curves(model, ns, nas, file);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global-evaluation search for N-queens: solving, racing agents, distribution and cost model"};
  app.require_subcommand(1);

  std::size_t n = 8;
  std::uint64_t seed = 0;
  SearchFlags flags;

  std::string method = "gef";
  auto* solve = app.add_subcommand("solve", "solve one N-queens instance");
  solve->add_option("--n", n, "board size")->required();
  solve->add_option("--method", method, "gef | backtrack");
  solve->add_option("--seed", seed, "random seed");
  flags.attach(solve);

  std::size_t trials = 100, agents = 3;
  std::string methods = "gef,backtrack", out_path;
  auto* bench = app.add_subcommand("bench", "time GEF against backtracking over many trials");
  bench->add_option("--n", n, "board size")->required();
  bench->add_option("--trials", trials, "trials per method")->check(CLI::PositiveNumber);
  bench->add_option("--methods", methods, "comma list of gef, backtrack, portfolio");
  bench->add_option("--agents", agents, "agents for the portfolio method");
  bench->add_option("--seed", seed, "random seed");
  bench->add_option("--out", out_path, "CSV output (default stdout)");
  flags.attach(bench);

  std::string sizes = "16", agent_range = "1:8";
  std::size_t cal_trials = 5;
  auto* calibrate = app.add_subcommand("calibrate", "fit the time-vs-agents regression to find maxAgent");
  calibrate->add_option("--n", sizes, "board size or comma list");
  calibrate->add_option("--agents", agent_range, "agent range A:B");
  calibrate->add_option("--trials", cal_trials, "trials per cell")->check(CLI::PositiveNumber);
  calibrate->add_option("--seed", seed, "random seed");
  calibrate->add_option("--out", out_path, "CSV output (default stdout)");

  long probe_ms = 200;
  auto* probe = app.add_subcommand("probe", "measure machine performance p");
  probe->add_option("--ms", probe_ms, "probe duration in milliseconds");

  std::string bind;
  std::size_t worker_agents = 0;
  auto* agent = app.add_subcommand("agent", "run a worker");
  agent->add_option("--bind", bind, "HOST:PORT to listen on (port 0 picks a free port)")->required();
  agent->add_option("--agents", worker_agents, "agents per job (default from a startup probe)");
  agent->add_option("--probe-ms", probe_ms, "startup probe duration in milliseconds");

  std::string workers;
  std::size_t job_agents = 0;
  long timeout_ms = 0;
  auto* coordinate = app.add_subcommand("coordinate", "distribute one job to workers and take the first result");
  coordinate->add_option("--workers", workers, "HOST:PORT[,HOST:PORT...]")->required();
  coordinate->add_option("--n", n, "board size")->required();
  coordinate->add_option("--seed", seed, "random seed");
  coordinate->add_option("--agents", job_agents, "agents per worker (default: worker's own)");
  coordinate->add_option("--timeout-ms", timeout_ms, "give up waiting for a result after this long (0 = never)");
  flags.attach(coordinate);

  double ko = 250.0, kove = 1.0;
  std::string model_n = "40", na_range = "1:200", fit;
  auto* model = app.add_subcommand("model", "evaluate the turnaround cost model");
  model->add_option("--ko", ko, "search-time constant");
  model->add_option("--kove", kove, "overhead constant");
  model->add_option("--n", model_n, "board size or comma list");
  model->add_option("--na-range", na_range, "agent range A:B");
  model->add_option("--fit", fit, "CSV of n,n_a,t_o,t_ove observations to fit constants from");
  model->add_option("--out", out_path, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) return cmd_solve(n, method, seed, flags);
    if (*bench) return cmd_bench(n, trials, methods, agents, seed, out_path, flags);
    if (*calibrate) return cmd_calibrate(sizes, agent_range, cal_trials, seed, out_path);
    if (*probe) return cmd_probe(probe_ms);
    if (*agent) return cmd_agent(bind, worker_agents, probe_ms);
    if (*coordinate) return cmd_coordinate(workers, n, seed, job_agents, timeout_ms, flags);
    if (*model) return cmd_model(ko, kove, model_n, na_range, fit, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
