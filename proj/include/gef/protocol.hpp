#pragma once

// Initiator/worker wire format.
//
// A frame is a 4-byte big-endian payload length followed by the payload: one
// minified JSON object whose keys appear in a fixed order, "type" and
// "job_id" first and then the body fields in declaration order. For example
// STOP for job 7 is the 26-byte payload {"type":"STOP","job_id":7}.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gef/csp.hpp"
#include "gef/search.hpp"

namespace gef::wire {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { Job, Result, Stop, ProbeReq, ProbeResp, Error };

struct Job {
  std::uint64_t n = 0;
  double random_walk_prob = 0.02;
  std::uint64_t max_tries = 1;
  std::uint64_t max_restarts = 0;
  std::uint64_t stagnation_limit = 0;
  std::uint64_t agents = 0;  ///< 0 = worker's own default
  std::uint64_t seed = 0;

  SearchConfig config() const {
    SearchConfig cfg;
    cfg.random_walk_prob = random_walk_prob;
    cfg.max_tries = max_tries;
    cfg.max_restarts = max_restarts;
    cfg.stagnation_limit = stagnation_limit;
    cfg.seed = seed;
    return cfg;
  }

  static Job from(std::uint64_t n, const SearchConfig& cfg, std::uint64_t agents) {
    return {n, cfg.random_walk_prob, cfg.max_tries, cfg.max_restarts, cfg.stagnation_limit, agents, cfg.seed};
  }

  friend bool operator==(const Job&, const Job&) = default;
};

struct Result {
  std::vector<int> values;
  std::uint64_t steps = 0;
  double search_millis = 0;
  friend bool operator==(const Result&, const Result&) = default;
};

struct Stop {
  friend bool operator==(const Stop&, const Stop&) = default;
};

struct ProbeReq {
  std::uint64_t duration_ms = 0;
  friend bool operator==(const ProbeReq&, const ProbeReq&) = default;
};

struct ProbeResp {
  double p = 0;
  friend bool operator==(const ProbeResp&, const ProbeResp&) = default;
};

/// Error codes carried in ERROR bodies.
enum ErrorCode : std::int64_t {
  kMalformed = 1,
  kDuplicateJob = 2,
  kUnsolved = 3,
  kBusy = 4,
  kUnexpected = 5,
};

struct Error {
  std::int64_t code = 0;
  std::string text;
  friend bool operator==(const Error&, const Error&) = default;
};

using Body = std::variant<Job, Result, Stop, ProbeReq, ProbeResp, Error>;

struct Message {
  std::uint64_t job_id = 0;
  Body body;

  Kind kind() const { return static_cast<Kind>(body.index()); }
  template <class T>
  const T* as() const {
    return std::get_if<T>(&body);
  }
  friend bool operator==(const Message&, const Message&) = default;
};

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Job: return "JOB";
    case Kind::Result: return "RESULT";
    case Kind::Stop: return "STOP";
    case Kind::ProbeReq: return "PROBE_REQ";
    case Kind::ProbeResp: return "PROBE_RESP";
    case Kind::Error: return "ERROR";
  }
  return "?";
}

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kHeaderBytes = 4;
/// Receivers refuse frames larger than this.
inline constexpr std::size_t kMaxFrameBytes = 64u << 20;

namespace detail {

using ojson = nlohmann::ordered_json;

inline void put_finite(ojson& j, const char* key, double v) {
  if (!std::isfinite(v)) throw ProtocolError(std::string("non-finite value for ") + key);
  j[key] = v;
}

inline const ojson& field(const ojson& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ProtocolError(std::string("missing field ") + key);
  return *it;
}

inline std::uint64_t get_u64(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_unsigned()) throw ProtocolError(std::string("field ") + key + " must be an unsigned integer");
  return v.get<std::uint64_t>();
}

inline std::int64_t get_i64(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_integer()) throw ProtocolError(std::string("field ") + key + " must be an integer");
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw ProtocolError(std::string("field ") + key + " out of range");
  return v.get<std::int64_t>();
}

inline double get_double(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number()) throw ProtocolError(std::string("field ") + key + " must be a number");
  return v.get<double>();
}

inline ojson to_json(const Message& m) {
  ojson j;
  j["type"] = kind_name(m.kind());
  j["job_id"] = m.job_id;
  std::visit(
      [&j](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, Job>) {
          j["n"] = b.n;
          put_finite(j, "random_walk_prob", b.random_walk_prob);
          j["max_tries"] = b.max_tries;
          j["max_restarts"] = b.max_restarts;
          j["stagnation_limit"] = b.stagnation_limit;
          j["agents"] = b.agents;
          j["seed"] = b.seed;
        } else if constexpr (std::is_same_v<T, Result>) {
          j["values"] = b.values;
          j["steps"] = b.steps;
          put_finite(j, "search_millis", b.search_millis);
        } else if constexpr (std::is_same_v<T, ProbeReq>) {
          j["duration_ms"] = b.duration_ms;
        } else if constexpr (std::is_same_v<T, ProbeResp>) {
          put_finite(j, "p", b.p);
        } else if constexpr (std::is_same_v<T, Error>) {
          j["code"] = b.code;
          j["text"] = b.text;
        }
      },
      m.body);
  return j;
}

inline Message from_json(const ojson& j) {
  if (!j.is_object()) throw ProtocolError("payload is not a JSON object");
  const auto& type = field(j, "type");
  if (!type.is_string()) throw ProtocolError("type must be a string");
  const auto name = type.get<std::string>();
  Message m;
  m.job_id = get_u64(j, "job_id");
  if (name == "JOB") {
    m.body = Job{get_u64(j, "n"),          get_double(j, "random_walk_prob"), get_u64(j, "max_tries"),
                 get_u64(j, "max_restarts"), get_u64(j, "stagnation_limit"),  get_u64(j, "agents"),
                 get_u64(j, "seed")};
  } else if (name == "RESULT") {
    const auto& vals = field(j, "values");
    if (!vals.is_array()) throw ProtocolError("values must be an array");
    Result r;
    for (const auto& v : vals) {
      if (!v.is_number_integer()) throw ProtocolError("values must be integers");
      const auto x = v.get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw ProtocolError("value out of range");
      r.values.push_back(static_cast<int>(x));
    }
    r.steps = get_u64(j, "steps");
    r.search_millis = get_double(j, "search_millis");
    m.body = std::move(r);
  } else if (name == "STOP") {
    m.body = Stop{};
  } else if (name == "PROBE_REQ") {
    m.body = ProbeReq{get_u64(j, "duration_ms")};
  } else if (name == "PROBE_RESP") {
    m.body = ProbeResp{get_double(j, "p")};
  } else if (name == "ERROR") {
    const auto& text = field(j, "text");
    if (!text.is_string()) throw ProtocolError("text must be a string");
    m.body = Error{get_i64(j, "code"), text.get<std::string>()};
  } else {
    throw ProtocolError("unknown message type " + name);
  }
  return m;
}

}  // namespace detail

inline std::string encode_payload(const Message& m) { return detail::to_json(m).dump(); }

inline Bytes encode_message(const Message& m) {
  const auto payload = encode_payload(m);
  if (payload.size() > std::numeric_limits<std::uint32_t>::max()) throw ProtocolError("payload too large to frame");
  const auto len = static_cast<std::uint32_t>(payload.size());
  Bytes out;
  out.reserve(kHeaderBytes + payload.size());
  out.push_back(static_cast<std::uint8_t>(len >> 24));
  out.push_back(static_cast<std::uint8_t>(len >> 16));
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(len));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline Message decode_payload(std::string_view payload) {
  detail::ojson j;
  try {
    j = detail::ojson::parse(payload);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("invalid JSON payload: ") + e.what());
  }
  try {
    return detail::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad message field: ") + e.what());
  }
}

inline std::uint32_t read_length(std::span<const std::uint8_t> header) {
  return (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) | (std::uint32_t{header[2]} << 8) |
         std::uint32_t{header[3]};
}

/// Frames still incomplete yield nullopt; on success `consumed` is set to the
/// frame's total size.
inline std::optional<Message> try_decode_frame(std::span<const std::uint8_t> buf, std::size_t& consumed) {
  consumed = 0;
  if (buf.size() < kHeaderBytes) return std::nullopt;
  const auto len = read_length(buf.first(kHeaderBytes));
  if (len > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(len) + " exceeds limit");
  if (buf.size() < kHeaderBytes + len) return std::nullopt;
  const auto* p = reinterpret_cast<const char*>(buf.data() + kHeaderBytes);
  auto m = decode_payload(std::string_view(p, len));
  consumed = kHeaderBytes + len;
  return m;
}

/// Decodes exactly one complete frame; a short or over-long buffer is an error.
inline Message decode_message(std::span<const std::uint8_t> frame) {
  std::size_t consumed = 0;
  auto m = try_decode_frame(frame, consumed);
  if (!m) throw ProtocolError("truncated frame");
  if (consumed != frame.size()) throw ProtocolError("trailing bytes after frame");
  return *m;
}

/// Accumulates stream bytes and yields complete frames.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  std::optional<Message> next() {
    std::size_t consumed = 0;
    auto m = try_decode_frame(buf_, consumed);
    if (m) buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(consumed));
    return m;
  }

  /// Bytes of an incomplete frame still buffered; non-zero at end of stream
  /// means the peer truncated a frame.
  std::size_t pending() const { return buf_.size(); }

 private:
  Bytes buf_;
};

}  // namespace gef::wire
