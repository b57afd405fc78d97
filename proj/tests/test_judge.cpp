#include <doctest.h>

#include "mock_judge.hpp"
#include "sidlab/judge_client.hpp"

using namespace sidlab;
using testutil::chat_body;
using testutil::MockJudge;
using testutil::verdict_text;

static JudgeEndpoint endpoint(const MockJudge& m, int retries = 2) {
  JudgeEndpoint e;
  e.url = m.url();
  e.api_key = "test-key";
  e.max_retries = retries;
  e.backoff_ms = 1;
  return e;
}

TEST_CASE("prompt formatting") {
  JudgeRequest r{"a dog", "x", "y"};
  CHECK(format_judge_prompt(r, "A:{a} B:{b}") == "A:x B:y");
  CHECK(format_judge_prompt(r, "{reference}|{a}|{b}") == "a dog|x|y");
  JudgeRequest tricky{"", "{b}", "z"};
  CHECK(format_judge_prompt(tricky, "{a}/{b}") == "{b}/z");
  CHECK_THROWS_AS(format_judge_prompt(r, "only {a}"), TemplateError);
  CHECK_THROWS_AS(format_judge_prompt(r, "only {b}"), TemplateError);
  CHECK_NOTHROW(format_judge_prompt(r, kDefaultJudgeTemplate));
}

TEST_CASE("verdict parsing") {
  CHECK(parse_verdict(verdict_text(6, 5, 7, 5)) == JudgeVerdict{6, 5, 7, 5});
  CHECK(parse_verdict("Correctness:10 Detailedness:0 ... Correctness: 3\nDetailedness: 9") ==
        JudgeVerdict{10, 0, 3, 9});
  CHECK_THROWS_AS(parse_verdict("Correctness: 6 Detailedness: 5"), JudgeParseError);
  CHECK_THROWS_AS(parse_verdict(verdict_text(11, 5, 7, 5)), JudgeParseError);
  CHECK_THROWS_AS(parse_verdict("no scores here"), JudgeParseError);
}

TEST_CASE("round trip through a local endpoint") {
  MockJudge m;
  m.script({{200, chat_body(verdict_text(6, 5, 7, 5))}});
  JudgeDiagnostics d;
  auto v = request_verdict(endpoint(m), "hello", 5.0, &d);
  CHECK(v == JudgeVerdict{6, 5, 7, 5});
  CHECK(d.retries == 0);
  CHECK(d.status == 200);
  auto reqs = m.requests();
  REQUIRE(reqs.size() == 1);
  auto body = nlohmann::json::parse(reqs[0]);
  CHECK(body["messages"][0]["content"] == "hello");
  CHECK(body["temperature"] == 0.0);
  CHECK(m.auth_headers()[0] == "Bearer test-key");
}

TEST_CASE("server errors are retried") {
  MockJudge m;
  m.script({{500, "busy"}, {500, "busy"}, {200, chat_body(verdict_text(1, 2, 3, 4))}});
  JudgeDiagnostics d;
  CHECK(request_verdict(endpoint(m, 2), "p", 5.0, &d) == JudgeVerdict{1, 2, 3, 4});
  CHECK(d.retries == 2);
  CHECK(m.requests().size() == 3);
}

TEST_CASE("retries run out") {
  MockJudge m;
  m.script({{503, "down"}});
  try {
    request_verdict(endpoint(m, 1), "p", 5.0);
    FAIL("expected JudgeStatusError");
  } catch (const JudgeStatusError& e) {
    CHECK(e.status() == 503);
    CHECK(e.body() == "down");
  }
  CHECK(m.requests().size() == 2);
}

TEST_CASE("client errors are not retried") {
  MockJudge m;
  m.script({{401, "no"}});
  CHECK_THROWS_AS(request_verdict(endpoint(m, 3), "p", 5.0), JudgeStatusError);
  CHECK(m.requests().size() == 1);
}

TEST_CASE("malformed bodies raise parse errors") {
  MockJudge m;
  m.script({{200, "{not json"}});
  CHECK_THROWS_AS(request_verdict(endpoint(m), "p", 5.0), JudgeParseError);
  m.script({{200, R"({"choices": []})"}});
  CHECK_THROWS_AS(request_verdict(endpoint(m), "p", 5.0), JudgeParseError);
  m.script({{200, chat_body("I refuse to grade this.")}});
  try {
    request_verdict(endpoint(m), "p", 5.0);
    FAIL("expected JudgeParseError");
  } catch (const JudgeParseError& e) {
    CHECK(e.raw() == "I refuse to grade this.");
  }
}

TEST_CASE("unreachable endpoint") {
  JudgeEndpoint e;
  e.url = "http://127.0.0.1:1/v1/chat/completions";
  e.max_retries = 0;
  CHECK_THROWS_AS(request_verdict(e, "p", 1.0), JudgeConnectionError);
  e.url = "ftp://example";
  CHECK_THROWS_AS(request_verdict(e, "p", 1.0), JudgeError);
}

TEST_CASE("swapped order is averaged per caption") {
  MockJudge m;
  // The first prompt puts "left" in slot A, the swapped one in slot B.
  m.respond_with([](const std::string& body) {
    auto content = nlohmann::json::parse(body)["messages"][0]["content"].get<std::string>();
    const bool left_first = content.find("A=left") != std::string::npos;
    return testutil::MockReply{200, chat_body(left_first ? verdict_text(8, 4, 2, 6) : verdict_text(4, 6, 6, 2))};
  });
  auto s = judge_pair(endpoint(m), {"", "left", "right"}, "A={a} B={b}", true, 5.0);
  CHECK(s.correctness_a == doctest::Approx(7.0));
  CHECK(s.detailedness_a == doctest::Approx(3.0));
  CHECK(s.correctness_b == doctest::Approx(3.0));
  CHECK(s.detailedness_b == doctest::Approx(6.0));
  auto once = judge_pair(endpoint(m), {"", "left", "right"}, "A={a} B={b}", false, 5.0);
  CHECK(once.correctness_a == 8.0);
}

TEST_CASE("batch keeps request order") {
  MockJudge m;
  m.respond_with([](const std::string& body) {
    auto content = nlohmann::json::parse(body)["messages"][0]["content"].get<std::string>();
    const int k = content.back() - '0';
    return testutil::MockReply{200, chat_body(verdict_text(k, k, 10 - k, 0))};
  });
  std::vector<JudgeRequest> reqs;
  for (int i = 0; i < 8; ++i) reqs.push_back({"", "c", std::to_string(i)});
  auto out = judge_batch(endpoint(m), reqs, "{a}{b}", 3, false, 5.0);
  REQUIRE(out.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(out[i].correctness_a == i);
}

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sidlab/cli.hpp"

TEST_CASE("judge subcommand against the local endpoint") {
  MockJudge m;
  m.script({{500, "warming up"}, {200, chat_body(verdict_text(9, 4, 5, 6))}});
  ::setenv("JUDGE_ENDPOINT", m.url().c_str(), 1);
  auto dir = std::filesystem::temp_directory_path() / "sidlab_cli_judge";
  std::filesystem::remove_all(dir);
  const std::string out = dir.string();
  const char* argv[] = {"sidlab", "judge", "--out", out.c_str(), "--scenes", "3", "--strategy", "SID",
                        "--strategy", "NORMAL", "judge.backoff_ms=1", "judge.parallelism=1", "judge.swap=false"};
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(std::size(argv)), argv, o, e);
  ::unsetenv("JUDGE_ENDPOINT");
  REQUIRE_MESSAGE(code == 0, e.str());
  std::ifstream is(dir / "judge.csv");
  std::string header, row;
  std::getline(is, header);
  CHECK(header == "scene,strategy_a,strategy_b,correctness_a,detailedness_a,correctness_b,detailedness_b,retries");
  int rows = 0;
  while (std::getline(is, row)) ++rows;
  CHECK(rows == 3);
  CHECK(o.str().find("SID correctness=9") != std::string::npos);
  CHECK(m.requests().size() == 4);
}

TEST_CASE("judge subcommand without an endpoint fails") {
  ::unsetenv("JUDGE_ENDPOINT");
  const char* argv[] = {"sidlab", "judge", "--out", "/tmp/sidlab_cli_judge_none", "--scenes", "1"};
  std::ostringstream o, e;
  CHECK(run_cli(6, argv, o, e) == 1);
  CHECK(e.str().find("JUDGE_ENDPOINT") != std::string::npos);
}
