#include "etcon/judge/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <semaphore>
#include <thread>

#include "httplib.h"

namespace etcon::judge {

namespace {

constexpr const char* kPrompt = R"PROMPT(You are an impartial grader. Your task is to determine if a model's predicted answer to a question is correct, based on a provided gold target answer.

Follow these rules carefully:

**1. Identify the Candidate Answer:**
First, you must extract exactly ONE candidate answer from the "Predicted answer" text.
* If the text contains markers like `<answer>...</answer>`, `\boxed{...}`, "", or "Answer:", use the content of the LAST such marker.
* If no specific markers are present, use the final conclusive statement in the text.
* If a marker contains multiple distinct answers (e.g., "Paris or London"), it is ambiguous and should be graded as INCORRECT.

**2. Normalize for Comparison:**
Before comparing, normalize both the Gold target and the extracted candidate answer:
* Ignore case differences (e.g., "Paris" is the same as "paris").
* Trim leading/trailing whitespace.
* Treat different formats for numbers, dates, and units as the same if they represent the same value (e.g., "20" is the same as "twenty"; "USA" is the same as "United States").

**3. Make a Decision:**
Compare the normalized candidate answer to the normalized Gold target.
* **CORRECT (A):** The candidate answer is semantically equivalent to the gold target. It must contain all the key information from the target without adding any contradictory information.
* **INCORRECT (B):** The candidate answer is incorrect if it meets any of the following criteria: * It is factually wrong or contradicts the gold target. * It is missing key information present in the gold target. * It contains extra information that contradicts the gold target. * It is ambiguous or provides multiple mutually exclusive options. * The output is garbled, unreadable, or doesn't answer the question.

**4. Review Examples:**

*Example 1: CORRECT*
```
Question: What is the capital of the United Kingdom?
Gold target: London
Predicted answer: ... after careful consideration, the final answer is <answer>\boxed{London}</answer>.
```
*Grade:* CORRECT (A). The extracted answer is factually correct and matches the gold target.

*Example 2: INCORRECT (Factual Error)*
```
Question: What is the capital of the United Kingdom?
Gold target: London
Predicted answer: ... the capital is <answer>\boxed{the United States}</answer>.
```
*Grade:* INCORRECT (B). The extracted answer is factually incorrect.
*Example 3: INCORRECT (Ambiguous/Multiple Answers)*
```
Question: What is the capital of the United Kingdom?
Gold target: London
Predicted answer: ... the answer is <answer>\boxed{London}{Paris}</answer>.
```
*Grade:* INCORRECT (B). The response is ambiguous because it provides multiple distinct options within the final answer tag.

*Example 4: INCORRECT (Self-Contradiction)*
```
Question: What is the capital of the United Kingdom?
Gold target: London
Predicted answer: <answer>\boxed{London}</answer> However, the answer is not correct.
```
*Grade:* INCORRECT (B). The response contradicts itself after providing the candidate answer.

**5. Provide Your Grade:**
Now, grade the following submission. Respond with a single letter only: "A" for CORRECT or "B" for INCORRECT.

---
Question: @QUESTION@
Gold target: @TARGET@
Predicted answer: @PREDICTED@

Return only A or B.)PROMPT";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) s.replace(p, from.size(), to);
}

struct Url {
  std::string origin;  // scheme://host:port
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("judge endpoint must start with http:// or https://");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string reply_text(const nlohmann::json& j) {
  if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const auto& c = j["choices"][0];
    if (c.contains("message") && c["message"].contains("content")) return c["message"]["content"].get<std::string>();
    if (c.contains("text")) return c["text"].get<std::string>();
  }
  if (j.contains("content") && j["content"].is_string()) return j["content"].get<std::string>();
  throw RemoteParseError("judge reply has no message content");
}

}  // namespace

nlohmann::json RemoteEndpoint::to_json() const {
  return {{"url", url},
          {"model", model},
          {"api_key_env", api_key_env},
          {"timeout_seconds", timeout_seconds},
          {"attempts", attempts},
          {"backoff_ms", backoff_ms},
          {"max_in_flight", max_in_flight}};
}

RemoteEndpoint RemoteEndpoint::from_json(const nlohmann::json& j) {
  RemoteEndpoint e;
  e.url = j.value("url", e.url);
  e.model = j.value("model", e.model);
  e.api_key_env = j.value("api_key_env", e.api_key_env);
  e.timeout_seconds = j.value("timeout_seconds", e.timeout_seconds);
  e.attempts = j.value("attempts", e.attempts);
  e.backoff_ms = j.value("backoff_ms", e.backoff_ms);
  e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
  if (e.attempts < 1) throw std::invalid_argument("judge.remote.attempts must be >= 1");
  if (e.max_in_flight < 1) throw std::invalid_argument("judge.remote.max_in_flight must be >= 1");
  return e;
}

std::string judge_prompt(std::string_view question, std::string_view gold, std::string_view predicted) {
  std::string p = kPrompt;
  replace_all(p, "@QUESTION@", question);
  replace_all(p, "@TARGET@", gold);
  replace_all(p, "@PREDICTED@", predicted);
  return p;
}

Grade parse_reply(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw RemoteParseError(std::string("judge reply is not JSON: ") + e.what());
  }
  std::string text;
  try {
    text = reply_text(j);
  } catch (const nlohmann::json::exception& e) {
    throw RemoteParseError(std::string("judge reply has an unexpected shape: ") + e.what());
  }
  std::string letter;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == '"' || c == '\'') continue;
    letter += c;
  }
  if (letter == "A") return Grade::A_correct;
  if (letter == "B") return Grade::B_incorrect;
  throw RemoteParseError("judge reply is not a single A or B: " + text);
}

Verdict remote_grade(const RemoteEndpoint& ep, std::string_view question, std::string_view gold,
                     std::string_view predicted) {
  const Url url = split_url(ep.url);
  nlohmann::json body = {{"model", ep.model},
                         {"messages", {{{"role", "user"}, {"content", judge_prompt(question, gold, predicted)}}}}};
  httplib::Headers headers;
  if (const char* key = std::getenv(ep.api_key_env.c_str())) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto secs = static_cast<time_t>(ep.timeout_seconds);
  const auto usecs = static_cast<time_t>((ep.timeout_seconds - static_cast<double>(secs)) * 1e6);
  std::exception_ptr last;
  for (int attempt = 0; attempt < ep.attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ep.backoff_ms << (attempt - 1)));
    try {
      httplib::Client cli(url.origin);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      auto res = cli.Post(url.path, headers, body.dump(), "application/json");
      if (!res) {
        if (res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout) {
          throw RemoteTimeoutError("judge request timed out: " + httplib::to_string(res.error()));
        }
        throw RemoteNetworkError("judge request failed: " + httplib::to_string(res.error()));
      }
      if (res->status < 200 || res->status >= 300) {
        throw RemoteHttpError(res->status, "judge endpoint returned HTTP " + std::to_string(res->status));
      }
      Verdict v;
      v.grade = parse_reply(res->body);
      v.reason = v.grade == Grade::A_correct ? Reason::match : Reason::factual_mismatch;
      return v;
    } catch (const RemoteParseError&) {
      throw;
    } catch (const RemoteError&) {
      last = std::current_exception();
    }
  }
  std::rethrow_exception(last);
}

std::vector<Verdict> remote_grade_all(const RemoteEndpoint& ep, const std::vector<GradeRequest>& reqs) {
  std::vector<Verdict> out(reqs.size());
  std::counting_semaphore<1024> slots(static_cast<std::ptrdiff_t>(std::min<std::size_t>(ep.max_in_flight, 1024)));
  std::mutex mu;
  std::exception_ptr first;
  std::vector<std::thread> threads;
  threads.reserve(reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    slots.acquire();
    threads.emplace_back([&, i] {
      try {
        out[i] = remote_grade(ep, reqs[i].question, reqs[i].gold, reqs[i].predicted);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
      }
      slots.release();
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
  return out;
}

}  // namespace etcon::judge
