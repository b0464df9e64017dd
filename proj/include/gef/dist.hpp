#pragma once

// Distributed racing: workers run a local portfolio per JOB; the initiator
// sends the job to every worker, accepts the first valid RESULT, and stops
// the rest. Turnaround splits into the winner's own search time and the
// remaining overhead (job distribution, result redirection, stopping).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <mutex>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "gef/csp.hpp"
#include "gef/net.hpp"
#include "gef/portfolio.hpp"
#include "gef/protocol.hpp"

namespace gef::dist {

using Clock = std::chrono::steady_clock;
using Micros = std::chrono::microseconds;

// ---------------------------------------------------------------------------
// Worker

struct AgentOptions {
  net::Endpoint bind{"127.0.0.1", 0};
  std::size_t agents = 0;  ///< 0: derive from a startup performance probe
  std::chrono::milliseconds probe{200};
  HomogenizationParams homogenization{};
};

class AgentServer {
 public:
  explicit AgentServer(AgentOptions opts) : opts_(std::move(opts)), listener_(opts_.bind) {
    if (opts_.agents == 0) {
      startup_probe_ = performance_probe(opts_.probe);
      default_agents_ = homogenized_agent_count(startup_probe_->p, opts_.homogenization);
    } else {
      default_agents_ = opts_.agents;
    }
  }

  ~AgentServer() { shutdown(); }

  AgentServer(const AgentServer&) = delete;
  AgentServer& operator=(const AgentServer&) = delete;

  const net::Endpoint& local() const { return listener_.local(); }
  std::size_t default_agents() const { return default_agents_; }
  const std::optional<PerfProbe>& startup_probe() const { return startup_probe_; }

  /// Accepts connections until shutdown(); joins every session before returning.
  void serve() {
    while (auto sock = listener_.accept()) {
      std::lock_guard lock(mu_);
      if (stopping_) break;
      sessions_.remove_if([](const Session& s) { return s.done.load(); });
      sessions_.emplace_back();
      auto& session = sessions_.back();
      session.sock = std::move(*sock);
      session.thread = std::jthread([this, &session] { run_session(session); });
    }
    std::list<Session> done;
    {
      std::lock_guard lock(mu_);
      done.splice(done.end(), sessions_);
    }
    for (auto& s : done) s.sock.shutdown();
    done.clear();
  }

  void shutdown() {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    stopping_ = true;
    listener_.shutdown();
    for (auto& s : sessions_) s.sock.shutdown();
  }

 private:
  struct Session {
    net::Socket sock;
    std::atomic<bool> done{false};
    std::jthread thread;
  };

  struct Running {
    std::uint64_t job_id = 0;
    std::stop_source stop;
    std::jthread thread;
  };

  bool claim_job(std::uint64_t job_id, wire::Error& why) {
    std::lock_guard lock(mu_);
    if (active_jobs_.contains(job_id)) {
      why = {wire::kDuplicateJob, "job " + std::to_string(job_id) + " is already running"};
      return false;
    }
    if (!active_jobs_.empty()) {
      why = {wire::kBusy, "worker is busy with another job"};
      return false;
    }
    active_jobs_.insert(job_id);
    return true;
  }

  void release_job(std::uint64_t job_id) {
    std::lock_guard lock(mu_);
    active_jobs_.erase(job_id);
  }

  static void halt(std::optional<Running>& running) {
    if (!running) return;
    running->stop.request_stop();
    if (running->thread.joinable()) running->thread.join();
    running.reset();
  }

  void start_job(const net::Socket& sock, std::mutex& send_mu, std::optional<Running>& running,
                 std::uint64_t job_id, const wire::Job& job) {
    auto cfg = job.config();
    const std::size_t k = job.agents != 0 ? job.agents : default_agents_;
    cfg.validate();
    if (job.n == 0) throw InvalidInstance("n must be at least 1");

    running.emplace();
    running->job_id = job_id;
    running->thread = std::jthread([this, &sock, &send_mu, job_id, job, cfg, k, token = running->stop.get_token()] {
      try {
        const auto inst = make_nqueens(job.n);
        const auto r = run_portfolio(inst, k, cfg, job.seed, token);
        std::lock_guard lock(send_mu);
        if (r.outcome.status == SearchStatus::Solved) {
          sock.send({job_id, wire::Result{r.outcome.assignment, r.outcome.stats.steps, r.wall_time.count()}});
        } else if (r.outcome.status == SearchStatus::Unsolved) {
          sock.send({job_id, wire::Error{wire::kUnsolved, "search budget exhausted"}});
        }
      } catch (const std::exception&) {
        // Peer gone; the session loop notices on its next read.
      }
      release_job(job_id);
    });
  }

  void run_session(Session& session) {
    const auto& sock = session.sock;
    wire::FrameReader reader;
    std::mutex send_mu;
    std::optional<Running> running;

    auto reply = [&](const wire::Message& m) {
      std::lock_guard lock(send_mu);
      sock.send(m);
    };

    try {
      while (true) {
        std::optional<wire::Message> msg;
        try {
          msg = sock.receive(reader);
        } catch (const wire::ProtocolError& e) {
          reply({0, wire::Error{wire::kMalformed, e.what()}});
          break;
        }
        if (!msg) break;

        switch (msg->kind()) {
          case wire::Kind::Job: {
            wire::Error why;
            if (!claim_job(msg->job_id, why)) {
              reply({msg->job_id, why});
              break;
            }
            halt(running);
            try {
              start_job(sock, send_mu, running, msg->job_id, *msg->as<wire::Job>());
            } catch (const std::exception& e) {
              release_job(msg->job_id);
              running.reset();
              reply({msg->job_id, wire::Error{wire::kMalformed, e.what()}});
            }
            break;
          }
          case wire::Kind::Stop:
            // Acknowledged only after the search has halted, so no RESULT can
            // follow the acknowledgement. A second STOP is a no-op.
            halt(running);
            reply({msg->job_id, wire::Stop{}});
            break;
          case wire::Kind::ProbeReq: {
            const auto ms = std::clamp<std::uint64_t>(msg->as<wire::ProbeReq>()->duration_ms, 1, 10'000);
            const auto probe = performance_probe(std::chrono::milliseconds(ms));
            reply({msg->job_id, wire::ProbeResp{probe.p}});
            break;
          }
          default:
            reply({msg->job_id, wire::Error{wire::kUnexpected,
                                            std::string("unexpected ") + wire::kind_name(msg->kind())}});
            break;
        }
      }
    } catch (const std::exception&) {
      // Connection failure ends the session.
    }
    halt(running);
    sock.shutdown();
    session.done = true;
  }

  AgentOptions opts_;
  net::Listener listener_;
  std::optional<PerfProbe> startup_probe_;
  std::size_t default_agents_ = 1;

  std::mutex mu_;
  bool stopping_ = false;
  std::set<std::uint64_t> active_jobs_;
  std::list<Session> sessions_;
};

// ---------------------------------------------------------------------------
// Initiator

/// t_tat = t_o + t_ove holds exactly: t_ove is derived in integer microseconds.
struct TimingBreakdown {
  Micros t_tat{0};
  Micros t_o{0};
  Micros t_ove{0};

  static TimingBreakdown from(Micros tat, Micros search) { return {tat, search, tat - search}; }
};

inline double millis(Micros us) { return static_cast<double>(us.count()) / 1000.0; }

struct WorkerReport {
  net::Endpoint endpoint;
  bool reachable = false;
  bool result_received = false;
  bool accepted = false;
  bool rejected = false;  ///< sent a RESULT that failed validation
  bool finished = false;  ///< reported unsolved, errored, or closed
  bool stop_sent = false;
  bool stop_acked = false;
  double ack_latency_ms = 0;  ///< from result acceptance to STOP acknowledgement
  std::string error;
};

struct InitiatorOptions {
  std::size_t agents_per_worker = 0;  ///< 0: each worker's own default
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds result_timeout{0};  ///< 0: wait until every worker finishes
  std::chrono::milliseconds stop_ack_timeout{2000};
  std::optional<std::uint64_t> job_id;  ///< default derived from the seed
};

struct InitiatorResult {
  std::optional<Assignment> solution;
  std::optional<std::size_t> winner;
  TimingBreakdown timing;
  std::vector<WorkerReport> workers;
  std::vector<std::string> warnings;
  std::size_t results_accepted = 0;
};

class NoWorkers : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline InitiatorResult initiator_run(const std::vector<net::Endpoint>& endpoints, std::size_t n,
                                     const SearchConfig& cfg, std::uint64_t seed, const InitiatorOptions& opts = {}) {
  if (endpoints.empty()) throw std::invalid_argument("initiator needs at least one worker endpoint");
  cfg.validate();
  const auto inst = make_nqueens(n);
  const auto job_id = opts.job_id.value_or(mix64(seed));

  InitiatorResult out;
  out.workers.resize(endpoints.size());
  std::vector<net::Socket> socks(endpoints.size());
  std::vector<wire::FrameReader> readers(endpoints.size());

  const auto launched = Clock::now();
  for (std::size_t w = 0; w < endpoints.size(); ++w) {
    auto& rep = out.workers[w];
    rep.endpoint = endpoints[w];
    try {
      socks[w] = net::connect_to(endpoints[w], opts.connect_timeout);
      auto job = wire::Job::from(n, cfg, opts.agents_per_worker);
      job.seed = derive_seed(seed, w);
      socks[w].send({job_id, job});
      rep.reachable = true;
    } catch (const std::exception& e) {
      rep.error = e.what();
      socks[w].close();
      out.warnings.push_back("worker " + endpoints[w].str() + " unreachable: " + e.what());
    }
  }
  if (std::none_of(out.workers.begin(), out.workers.end(), [](const auto& r) { return r.reachable; }))
    throw NoWorkers("no worker endpoint is reachable");

  std::optional<Clock::time_point> accepted_at;
  Micros winner_search{0};
  auto drop = [&](std::size_t w, std::string why) {
    auto& rep = out.workers[w];
    rep.finished = true;
    if (!why.empty() && rep.error.empty()) rep.error = std::move(why);
    socks[w].close();
  };

  auto awaiting = [&](std::size_t w) {
    const auto& rep = out.workers[w];
    if (!socks[w].valid()) return false;
    if (accepted_at) return rep.stop_sent && !rep.stop_acked;
    return !rep.finished;
  };

  while (true) {
    std::vector<pollfd> pfds;
    std::vector<std::size_t> owners;
    for (std::size_t w = 0; w < socks.size(); ++w) {
      if (!awaiting(w)) continue;
      pfds.push_back({socks[w].fd(), POLLIN, 0});
      owners.push_back(w);
    }
    if (pfds.empty()) break;

    const auto now = Clock::now();
    std::optional<Clock::time_point> deadline;
    if (accepted_at)
      deadline = *accepted_at + opts.stop_ack_timeout;
    else if (opts.result_timeout.count() > 0)
      deadline = launched + opts.result_timeout;
    if (deadline && now >= *deadline) {
      out.warnings.push_back(accepted_at ? "timed out waiting for STOP acknowledgements" : "timed out waiting for a result");
      break;
    }
    int wait_ms = -1;
    if (deadline)
      wait_ms = static_cast<int>(
          std::chrono::ceil<std::chrono::milliseconds>(*deadline - now).count());
    const int rc = ::poll(pfds.data(), pfds.size(), wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw net::NetError(net::errno_text("poll"));
    }

    for (std::size_t idx = 0; idx < pfds.size(); ++idx) {
      if (pfds[idx].revents == 0) continue;
      const auto w = owners[idx];
      auto& rep = out.workers[w];
      try {
        if (!socks[w].read_some(readers[w])) {
          drop(w, readers[w].pending() ? "stream ended inside a frame" : "");
          continue;
        }
        while (auto msg = readers[w].next()) {
          if (msg->job_id != job_id && msg->kind() != wire::Kind::Error) continue;
          if (const auto* res = msg->as<wire::Result>()) {
            rep.result_received = true;
            if (accepted_at) continue;
            bool ok = false;
            try {
              ok = validate_solution(inst, res->values);
            } catch (const MalformedAssignment&) {
            }
            if (!ok) {
              rep.rejected = true;
              out.warnings.push_back("worker " + rep.endpoint.str() + " sent an invalid assignment");
              drop(w, "invalid assignment");
              break;
            }
            accepted_at = Clock::now();
            rep.accepted = true;
            out.winner = w;
            out.solution = res->values;
            ++out.results_accepted;
            winner_search = std::chrono::round<Micros>(
                std::chrono::duration<double, std::milli>(std::max(0.0, res->search_millis)));
            rep.finished = true;
            for (std::size_t o = 0; o < socks.size(); ++o) {
              if (o == w || !socks[o].valid()) continue;
              auto& other = out.workers[o];
              try {
                socks[o].send({job_id, wire::Stop{}});
                other.stop_sent = true;
              } catch (const std::exception& e) {
                drop(o, e.what());
              }
            }
            socks[w].close();
            break;
          } else if (msg->kind() == wire::Kind::Stop) {
            if (rep.stop_sent && !rep.stop_acked && accepted_at) {
              rep.stop_acked = true;
              rep.ack_latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - *accepted_at).count();
            }
          } else if (const auto* err = msg->as<wire::Error>()) {
            if (err->code == wire::kUnsolved) {
              rep.finished = true;
            } else {
              drop(w, "worker error " + std::to_string(err->code) + ": " + err->text);
              break;
            }
          }
        }
      } catch (const std::exception& e) {
        drop(w, e.what());
      }
    }
  }

  const auto tat = std::chrono::duration_cast<Micros>(Clock::now() - launched);
  out.timing = TimingBreakdown::from(tat, accepted_at ? std::min(winner_search, tat) : Micros{0});
  for (auto& s : socks) s.close();
  return out;
}

}  // namespace gef::dist
