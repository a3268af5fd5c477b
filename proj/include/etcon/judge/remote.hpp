#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "etcon/judge/judge.hpp"

namespace etcon::judge {

struct RemoteEndpoint {
  std::string url;  // http(s)://host[:port]/path
  std::string model = "gpt-4.1";
  std::string api_key_env = "JUDGE_API_KEY";
  double timeout_seconds = 30.0;
  int attempts = 3;
  int backoff_ms = 250;
  std::size_t max_in_flight = 4;

  nlohmann::json to_json() const;
  static RemoteEndpoint from_json(const nlohmann::json& j);
};

class RemoteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class RemoteNetworkError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};
class RemoteTimeoutError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};
class RemoteHttpError : public RemoteError {
 public:
  RemoteHttpError(int status, const std::string& what) : RemoteError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};
class RemoteParseError : public RemoteError {
 public:
  using RemoteError::RemoteError;
};

// The full grading prompt with question, gold and prediction filled in.
std::string judge_prompt(std::string_view question, std::string_view gold, std::string_view predicted);

// Extracts a single A/B letter from a chat-completion style reply body.
Grade parse_reply(const std::string& body);

Verdict remote_grade(const RemoteEndpoint& ep, std::string_view question, std::string_view gold,
                     std::string_view predicted);

struct GradeRequest {
  std::string question;
  std::string gold;
  std::string predicted;
};

// At most ep.max_in_flight requests run at once. Throws the first error.
std::vector<Verdict> remote_grade_all(const RemoteEndpoint& ep, const std::vector<GradeRequest>& reqs);

}  // namespace etcon::judge
