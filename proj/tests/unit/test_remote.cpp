#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "etcon/judge/remote.hpp"

using namespace etcon::judge;

namespace {

std::string reply(const std::string& letter) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", letter}}}}}}}.dump();
}

// Local judge endpoint. The rubric route answers by running the rule-based
// judge on the fixture whose prompt it receives.
struct MockJudge {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> flaky_calls{0};
  std::atomic<int> down_calls{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};
  std::string last_auth;
  nlohmann::json last_body;
  std::mutex mu;
  std::vector<Fixture> fixtures = load_fixtures(default_fixture_path());

  MockJudge() {
    server.Post("/ok", [&](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu);
      last_auth = req.get_header_value("Authorization");
      last_body = nlohmann::json::parse(req.body);
      res.set_content(reply("A"), "application/json");
    });
    server.Post("/maybe", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(reply("maybe"), "application/json");
    });
    server.Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
      if (flaky_calls++ < 2) {
        res.status = 500;
        return;
      }
      res.set_content(reply("B"), "application/json");
    });
    server.Post("/down", [&](const httplib::Request&, httplib::Response& res) {
      ++down_calls;
      res.status = 503;
    });
    server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(800));
      res.set_content(reply("A"), "application/json");
    });
    server.Post("/rubric", [&](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight;
      int seen = max_in_flight.load();
      while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(30));
      const auto body = nlohmann::json::parse(req.body);
      const std::string prompt = body.at("messages").at(0).at("content");
      std::string letter = "?";
      for (const auto& f : fixtures) {
        if (prompt == judge_prompt(f.question, f.gold, f.predicted)) {
          letter = grade(f.question, f.gold, f.predicted).grade == Grade::A_correct ? "A" : "B";
        }
      }
      --in_flight;
      res.set_content(reply(letter), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockJudge() {
    server.stop();
    thread.join();
  }

  RemoteEndpoint endpoint(const std::string& path) const {
    RemoteEndpoint ep;
    ep.url = "http://127.0.0.1:" + std::to_string(port) + path;
    ep.backoff_ms = 5;
    ep.timeout_seconds = 5.0;
    return ep;
  }
};

}  // namespace

TEST_SUITE("remote") {

TEST_CASE("prompt carries the rubric and the substitutions") {
  const auto p = judge_prompt("What is X?", "Lima", "it is <answer>\\boxed{Lima}</answer>");
  CHECK(p.find("Return only A or B.") != std::string::npos);
  CHECK(p.find("What is X?") != std::string::npos);
  CHECK(p.find("it is <answer>\\boxed{Lima}</answer>") != std::string::npos);
  CHECK(p.find("@QUESTION@") == std::string::npos);
}

TEST_CASE("reply parsing") {
  CHECK(parse_reply(reply("A")) == Grade::A_correct);
  CHECK(parse_reply(reply(" B.\n")) == Grade::B_incorrect);
  CHECK(parse_reply(R"({"choices": [{"text": "A"}]})") == Grade::A_correct);
  CHECK(parse_reply(R"({"content": "B"})") == Grade::B_incorrect);
  CHECK_THROWS_AS(parse_reply(R"({"text": "A"})"), RemoteParseError);
  CHECK_THROWS_AS(parse_reply(R"({"content": 3})"), RemoteParseError);
  CHECK_THROWS_AS(parse_reply(reply("maybe")), RemoteParseError);
  CHECK_THROWS_AS(parse_reply("not json"), RemoteParseError);
  CHECK_THROWS_AS(parse_reply(reply("AB")), RemoteParseError);
}

TEST_CASE("remote protocol against a local mock") {
  MockJudge mock;
  ::setenv("JUDGE_API_KEY", "secret-token", 1);

  SUBCASE("A verdict with auth and chat body") {
    const auto v = remote_grade(mock.endpoint("/ok"), "q", "g", "p");
    CHECK(v.grade == Grade::A_correct);
    CHECK(v.reason == Reason::match);
    std::lock_guard<std::mutex> lock(mock.mu);
    CHECK(mock.last_auth == "Bearer secret-token");
    CHECK(mock.last_body.at("model") == "gpt-4.1");
    CHECK(mock.last_body.at("messages").at(0).at("role") == "user");
  }
  SUBCASE("non A/B reply is a parse error") {
    CHECK_THROWS_AS(remote_grade(mock.endpoint("/maybe"), "q", "g", "p"), RemoteParseError);
  }
  SUBCASE("transient failures are retried") {
    const auto v = remote_grade(mock.endpoint("/flaky"), "q", "g", "p");
    CHECK(v.grade == Grade::B_incorrect);
    CHECK(mock.flaky_calls == 3);
  }
  SUBCASE("persistent HTTP failure surfaces after three attempts") {
    try {
      remote_grade(mock.endpoint("/down"), "q", "g", "p");
      FAIL("expected an error");
    } catch (const RemoteHttpError& e) {
      CHECK(e.status() == 503);
    }
    CHECK(mock.down_calls == 3);
  }
  SUBCASE("timeout") {
    auto ep = mock.endpoint("/slow");
    ep.timeout_seconds = 0.2;
    ep.attempts = 1;
    CHECK_THROWS_AS(remote_grade(ep, "q", "g", "p"), RemoteTimeoutError);
  }
  SUBCASE("remote and rule-based judges agree on the fixtures") {
    auto ep = mock.endpoint("/rubric");
    ep.max_in_flight = 2;
    const auto fixtures = load_fixtures(default_fixture_path());
    std::vector<GradeRequest> reqs;
    for (const auto& f : fixtures) reqs.push_back({f.question, f.gold, f.predicted});
    const auto verdicts = remote_grade_all(ep, reqs);
    for (std::size_t i = 0; i < fixtures.size(); ++i) {
      CHECK(verdicts[i].grade == grade(fixtures[i].question, fixtures[i].gold, fixtures[i].predicted).grade);
      CHECK(verdicts[i].grade == fixtures[i].expected_grade);
    }
    CHECK(mock.max_in_flight <= 2);
  }
}

TEST_CASE("unreachable endpoint is a network error") {
  RemoteEndpoint ep;
  ep.url = "http://127.0.0.1:1/judge";
  ep.attempts = 2;
  ep.backoff_ms = 1;
  ep.timeout_seconds = 1.0;
  CHECK_THROWS_AS(remote_grade(ep, "q", "g", "p"), RemoteNetworkError);
}

}  // TEST_SUITE
