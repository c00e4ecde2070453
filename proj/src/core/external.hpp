#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "core/objective.hpp"

namespace zopo {

/// Where and how to reach an external scorer. Two interchangeable transports:
///   subprocess: `address` is a shell command; one JSON object per line on
///     stdin {"id","text"}, one per line {"id","score"} on stdout, in order.
///   http: `address` is a URL; POST {"id","text"}, expect 200 {"score": x}.
/// A bearer token for HTTP is read from the ZOPO_EVALUATOR_TOKEN environment
/// variable when present; it is sent in the Authorization header and never
/// logged.
struct ExternalEndpoint {
  enum class Transport { subprocess, http };
  Transport transport = Transport::subprocess;
  std::string address;
  int timeout_ms = 30000;
  int retries = 3;
  int backoff_ms = 250;
};

class ExternalTransport;

/// Scores candidates through an external evaluator. Responses are cached by
/// candidate id for the lifetime of the object (one run), so each candidate
/// costs at most one outbound request. Requests are serialized; scores
/// outside [0,1] are clamped with a logged warning.
class ExternalObjective : public Objective {
 public:
  explicit ExternalObjective(ExternalEndpoint endpoint);
  ~ExternalObjective() override;

  double evaluate_clean(const Candidate& candidate) const override;

  std::size_t requests_sent() const;
  std::size_t retries_used() const;
  std::size_t clamp_warnings() const;

 private:
  ExternalEndpoint endpoint_;
  std::unique_ptr<ExternalTransport> transport_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, double> cache_;
  mutable std::size_t requests_ = 0;
  mutable std::size_t retries_ = 0;
  mutable std::size_t clamps_ = 0;
};

}  // namespace zopo
