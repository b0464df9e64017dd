#include <gtest/gtest.h>

#include <poll.h>

#include <thread>

#include "gef/dist.hpp"
#include "process.hpp"

namespace {

namespace w = gef::wire;
namespace net = gef::net;
using namespace std::chrono_literals;

class ServerThread {
 public:
  explicit ServerThread(std::size_t agents = 2) : server_([agents] {
    gef::dist::AgentOptions o;
    o.agents = agents;
    return o;
  }()) {
    thread_ = std::jthread([this] { server_.serve(); });
  }
  ~ServerThread() {
    server_.shutdown();
    thread_.join();
  }
  net::Endpoint endpoint() const { return server_.local(); }
  gef::dist::AgentServer& server() { return server_; }

 private:
  gef::dist::AgentServer server_;
  std::jthread thread_;
};

struct Client {
  explicit Client(const net::Endpoint& ep) : sock(net::connect_to(ep, 2000ms)) {}

  std::optional<w::Message> receive(std::chrono::milliseconds timeout = 10s) {
    if (auto m = reader.next()) return m;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{sock.fd(), POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) continue;
      if (!sock.read_some(reader)) return std::nullopt;
      if (auto m = reader.next()) return m;
    }
  }

  bool closed_by_peer(std::chrono::milliseconds timeout = 2s) {
    pollfd p{sock.fd(), POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return false;
    return !sock.read_some(reader);
  }

  net::Socket sock;
  w::FrameReader reader;
};

w::Job job_for(std::uint64_t n, std::uint64_t seed, std::size_t max_restarts = 0) {
  auto cfg = gef::SearchConfig::defaults_for(n, seed);
  cfg.max_restarts = max_restarts;
  return w::Job::from(n, cfg, 0);
}

TEST(AgentServe, JobYieldsValidResult) {
  ServerThread srv;
  Client c(srv.endpoint());
  c.sock.send({11, job_for(8, 1)});
  const auto m = c.receive();
  ASSERT_TRUE(m);
  ASSERT_EQ(m->kind(), w::Kind::Result);
  EXPECT_EQ(m->job_id, 11u);
  const auto* r = m->as<w::Result>();
  EXPECT_TRUE(gef::validate_solution(gef::make_nqueens(8), r->values));
  EXPECT_GE(r->search_millis, 0.0);
}

TEST(AgentServe, StopHaltsSearchAndSuppressesResult) {
  ServerThread srv;
  Client c(srv.endpoint());
  c.sock.send({12, job_for(3, 1)});  // unsolvable, unbounded
  c.sock.send({12, w::Stop{}});
  const auto ack = c.receive();
  ASSERT_TRUE(ack);
  EXPECT_EQ(ack->kind(), w::Kind::Stop);
  EXPECT_EQ(ack->job_id, 12u);
  EXPECT_FALSE(c.receive(300ms));
  // The worker is free for another job afterwards.
  c.sock.send({13, job_for(6, 2)});
  const auto next = c.receive();
  ASSERT_TRUE(next);
  EXPECT_EQ(next->kind(), w::Kind::Result);
}

TEST(AgentServe, SecondStopIsNoOp) {
  ServerThread srv;
  Client c(srv.endpoint());
  c.sock.send({14, job_for(3, 1)});
  c.sock.send({14, w::Stop{}});
  c.sock.send({14, w::Stop{}});
  for (int i = 0; i < 2; ++i) {
    const auto ack = c.receive();
    ASSERT_TRUE(ack);
    EXPECT_EQ(ack->kind(), w::Kind::Stop);
  }
}

TEST(AgentServe, ProbeRequest) {
  ServerThread srv;
  Client c(srv.endpoint());
  c.sock.send({0, w::ProbeReq{200}});
  const auto m = c.receive();
  ASSERT_TRUE(m);
  ASSERT_EQ(m->kind(), w::Kind::ProbeResp);
  EXPECT_GT(m->as<w::ProbeResp>()->p, 0.0);
}

TEST(AgentServe, MalformedFrameGetsErrorAndClose) {
  ServerThread srv;
  Client c(srv.endpoint());
  const std::string junk = "{nope";
  const std::uint8_t header[4] = {0, 0, 0, static_cast<std::uint8_t>(junk.size())};
  c.sock.send_all(header, 4);
  c.sock.send_all(reinterpret_cast<const std::uint8_t*>(junk.data()), junk.size());
  const auto m = c.receive();
  ASSERT_TRUE(m);
  ASSERT_EQ(m->kind(), w::Kind::Error);
  EXPECT_EQ(m->as<w::Error>()->code, w::kMalformed);
  EXPECT_TRUE(c.closed_by_peer());
}

TEST(AgentServe, DuplicateJobRejected) {
  ServerThread srv;
  Client a(srv.endpoint()), b(srv.endpoint());
  a.sock.send({21, job_for(3, 1)});
  std::this_thread::sleep_for(50ms);
  b.sock.send({21, job_for(3, 2)});
  const auto m = b.receive();
  ASSERT_TRUE(m);
  ASSERT_EQ(m->kind(), w::Kind::Error);
  EXPECT_EQ(m->as<w::Error>()->code, w::kDuplicateJob);
  // A different job while busy is refused as well.
  b.sock.send({22, job_for(8, 2)});
  const auto busy = b.receive();
  ASSERT_TRUE(busy);
  EXPECT_EQ(busy->as<w::Error>()->code, w::kBusy);
  a.sock.send({21, w::Stop{}});
  EXPECT_EQ(a.receive()->kind(), w::Kind::Stop);
}

TEST(AgentServe, UnsolvedBudgetReportsError) {
  ServerThread srv;
  Client c(srv.endpoint());
  c.sock.send({31, job_for(3, 1, 3)});
  const auto m = c.receive();
  ASSERT_TRUE(m);
  ASSERT_EQ(m->kind(), w::Kind::Error);
  EXPECT_EQ(m->as<w::Error>()->code, w::kUnsolved);
}

TEST(AgentServe, InvalidJobRejected) {
  ServerThread srv;
  Client c(srv.endpoint());
  auto job = job_for(8, 1);
  job.max_tries = 0;
  c.sock.send({41, job});
  const auto m = c.receive();
  ASSERT_TRUE(m);
  EXPECT_EQ(m->kind(), w::Kind::Error);
}

TEST(Initiator, FourWorkersOneAcceptedResult) {
  std::vector<std::unique_ptr<ServerThread>> servers;
  std::vector<net::Endpoint> eps;
  for (int i = 0; i < 4; ++i) {
    servers.push_back(std::make_unique<ServerThread>(1));
    eps.push_back(servers.back()->endpoint());
  }
  const auto r = gef::dist::initiator_run(eps, 24, gef::SearchConfig::defaults_for(24), 42);
  ASSERT_TRUE(r.solution);
  EXPECT_TRUE(gef::validate_solution(gef::make_nqueens(24), *r.solution));
  EXPECT_EQ(r.results_accepted, 1u);
  int accepted = 0;
  for (std::size_t i = 0; i < r.workers.size(); ++i) {
    const auto& wr = r.workers[i];
    accepted += wr.accepted;
    if (i == *r.winner) continue;
    EXPECT_TRUE(wr.stop_sent);
    EXPECT_TRUE(wr.stop_acked);
  }
  EXPECT_EQ(accepted, 1);
  EXPECT_EQ(r.timing.t_tat, r.timing.t_o + r.timing.t_ove);
  EXPECT_GT(r.timing.t_ove.count(), 0);
}

TEST(Initiator, EndpointErrors) {
  EXPECT_THROW(gef::dist::initiator_run({}, 8, gef::SearchConfig::defaults_for(8), 0), std::invalid_argument);
  // Bind then drop a listener to get a port nobody is serving.
  net::Endpoint dead;
  {
    net::Listener l({"127.0.0.1", 0});
    dead = l.local();
  }
  EXPECT_THROW(gef::dist::initiator_run({dead}, 8, gef::SearchConfig::defaults_for(8), 0), gef::dist::NoWorkers);

  ServerThread live;
  const auto r = gef::dist::initiator_run({dead, live.endpoint()}, 8, gef::SearchConfig::defaults_for(8), 0);
  ASSERT_TRUE(r.solution);
  EXPECT_FALSE(r.workers[0].reachable);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Initiator, CorruptedResultIsRejected) {
  net::Listener stub({"127.0.0.1", 0});
  std::jthread stub_thread([&stub] {
    auto conn = stub.accept();
    if (!conn) return;
    w::FrameReader reader;
    const auto job = conn->receive(reader);
    if (!job) return;
    const auto n = job->as<w::Job>()->n;
    conn->send({job->job_id, w::Result{std::vector<int>(n, 1), 0, 0.1}});
    while (auto m = conn->receive(reader))
      if (m->kind() == w::Kind::Stop) conn->send({m->job_id, w::Stop{}});
  });
  ServerThread honest(1);
  const auto r =
      gef::dist::initiator_run({stub.local(), honest.endpoint()}, 24, gef::SearchConfig::defaults_for(24), 3);
  ASSERT_TRUE(r.solution);
  EXPECT_TRUE(gef::validate_solution(gef::make_nqueens(24), *r.solution));
  EXPECT_TRUE(r.workers[0].rejected);
  EXPECT_FALSE(r.workers[0].accepted);
  EXPECT_TRUE(r.workers[1].accepted);
  stub.shutdown();
}

TEST(Initiator, NoResultWhenUnsolvable) {
  ServerThread a, b;
  auto cfg = gef::SearchConfig::defaults_for(3);
  cfg.max_restarts = 3;
  const auto r = gef::dist::initiator_run({a.endpoint(), b.endpoint()}, 3, cfg, 1);
  EXPECT_FALSE(r.solution);
  EXPECT_EQ(r.results_accepted, 0u);
  EXPECT_EQ(r.timing.t_o.count(), 0);
}

TEST(Initiator, ResultTimeout) {
  ServerThread a;
  auto cfg = gef::SearchConfig::defaults_for(3);
  gef::dist::InitiatorOptions opts;
  opts.result_timeout = 200ms;
  const auto start = std::chrono::steady_clock::now();
  const auto r = gef::dist::initiator_run({a.endpoint()}, 3, cfg, 1, opts);
  EXPECT_FALSE(r.solution);
  EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
}

TEST(WorkerProcess, ServesOverLoopback) {
  auto [child, ep] = testproc::start_worker(GEFQ_PATH, {"--agents", "1"});
  const auto r = gef::dist::initiator_run({net::parse_endpoint(ep)}, 12, gef::SearchConfig::defaults_for(12), 4);
  ASSERT_TRUE(r.solution);
  EXPECT_TRUE(gef::validate_solution(gef::make_nqueens(12), *r.solution));
  EXPECT_EQ(child.terminate(), 0);
}

TEST(Endpoint, Parse) {
  const auto ep = net::parse_endpoint("127.0.0.1:8080");
  EXPECT_EQ(ep.host, "127.0.0.1");
  EXPECT_EQ(ep.port, 8080);
  EXPECT_THROW(net::parse_endpoint("nohost"), std::invalid_argument);
  EXPECT_THROW(net::parse_endpoint("h:99999"), std::invalid_argument);
  EXPECT_THROW(net::parse_endpoint("h:12x"), std::invalid_argument);
}

}  // namespace
