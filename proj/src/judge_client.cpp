#include "sidlab/judge_client.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace sidlab {

JudgeStatusError::JudgeStatusError(int status, std::string body)
    : JudgeError("judge returned HTTP " + std::to_string(status) + ": " + body),
      status_(status),
      body_(std::move(body)) {}

JudgeParseError::JudgeParseError(const std::string& what, std::string raw)
    : JudgeError(what), raw_(std::move(raw)) {}

const char* const kDefaultJudgeTemplate =
    "You are comparing two descriptions of the same image.\n"
    "Objects actually in the image: {reference}\n\n"
    "Description A:\n{a}\n\n"
    "Description B:\n{b}\n\n"
    "Rate each description from 0 to 10 for correctness (no objects that are not in the image) "
    "and for detailedness (how much of the image it covers). Answer in exactly this form:\n"
    "A: Correctness: <int> Detailedness: <int>\n"
    "B: Correctness: <int> Detailedness: <int>\n";

std::string format_judge_prompt(const JudgeRequest& request, const std::string& tmpl) {
  if (tmpl.find("{a}") == std::string::npos) throw TemplateError("judge template lacks {a}");
  if (tmpl.find("{b}") == std::string::npos) throw TemplateError("judge template lacks {b}");
  // Single pass, so placeholders inside captions are left alone.
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, 3, "{a}") == 0) {
      out += request.caption_a;
      i += 3;
    } else if (tmpl.compare(i, 3, "{b}") == 0) {
      out += request.caption_b;
      i += 3;
    } else if (tmpl.compare(i, 11, "{reference}") == 0) {
      out += request.reference;
      i += 11;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

JudgeEndpoint JudgeEndpoint::from_env() {
  JudgeEndpoint e;
  const char* url = std::getenv("JUDGE_ENDPOINT");
  if (!url || !*url) throw JudgeError("JUDGE_ENDPOINT is not set");
  e.url = url;
  if (const char* key = std::getenv("JUDGE_API_KEY")) e.api_key = key;
  return e;
}

JudgeVerdict parse_verdict(const std::string& content) {
  static const std::regex corr(R"(Correctness:\s*(-?\d+))");
  static const std::regex det(R"(Detailedness:\s*(-?\d+))");
  auto grab = [&](const std::regex& re, const char* name) {
    std::vector<int> v;
    for (auto it = std::sregex_iterator(content.begin(), content.end(), re); it != std::sregex_iterator(); ++it) {
      long x = 0;
      try {
        x = std::stol((*it)[1].str());
      } catch (const std::exception&) {
        throw JudgeParseError(std::string("unreadable ") + name + " score", content);
      }
      if (x < 0 || x > 10) throw JudgeParseError(std::string(name) + " score out of range", content);
      v.push_back(static_cast<int>(x));
    }
    if (v.size() < 2) throw JudgeParseError(std::string("expected two ") + name + " scores", content);
    return v;
  };
  auto c = grab(corr, "Correctness");
  auto d = grab(det, "Detailedness");
  return {c[0], d[0], c[1], d[1]};
}

namespace {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw JudgeError("bad judge endpoint URL: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

}  // namespace

JudgeVerdict request_verdict(const JudgeEndpoint& endpoint, const std::string& payload, double timeout_s,
                             JudgeDiagnostics* diag) {
  const SplitUrl u = split_url(endpoint.url);
  httplib::Client cli(u.base);
  if (!cli.is_valid()) throw JudgeConnectionError("unsupported judge endpoint: " + endpoint.url);
  const auto to = std::chrono::duration<double>(timeout_s);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(to));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(to));
  cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(to));

  nlohmann::json body = {{"model", endpoint.model},
                         {"temperature", endpoint.temperature},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", payload}}})}};
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);
  const std::string text = body.dump();

  int retries = 0;
  int backoff = endpoint.backoff_ms;
  for (;;) {
    auto res = cli.Post(u.path, headers, text, "application/json");
    const bool transient = !res || res->status >= 500;
    if (transient && retries < endpoint.max_retries) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
      ++retries;
      continue;
    }
    if (diag) diag->retries = retries;
    if (!res) throw JudgeConnectionError("judge request failed: " + httplib::to_string(res.error()));
    if (diag) diag->status = res->status;
    if (res->status < 200 || res->status >= 300) throw JudgeStatusError(res->status, res->body);

    std::string content;
    try {
      const auto j = nlohmann::json::parse(res->body);
      content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw JudgeParseError(std::string("malformed judge response: ") + e.what(), res->body);
    }
    if (diag) diag->raw = content;
    return parse_verdict(content);
  }
}

PairScore judge_pair(const JudgeEndpoint& endpoint, const JudgeRequest& request, const std::string& tmpl,
                     bool swap, double timeout_s) {
  JudgeDiagnostics d1;
  const JudgeVerdict ab = request_verdict(endpoint, format_judge_prompt(request, tmpl), timeout_s, &d1);
  PairScore s{static_cast<double>(ab.correctness_a), static_cast<double>(ab.detailedness_a),
              static_cast<double>(ab.correctness_b), static_cast<double>(ab.detailedness_b), d1.retries};
  if (!swap) return s;
  JudgeRequest r = request;
  std::swap(r.caption_a, r.caption_b);
  JudgeDiagnostics d2;
  const JudgeVerdict ba = request_verdict(endpoint, format_judge_prompt(r, tmpl), timeout_s, &d2);
  s.correctness_a = (s.correctness_a + ba.correctness_b) / 2.0;
  s.detailedness_a = (s.detailedness_a + ba.detailedness_b) / 2.0;
  s.correctness_b = (s.correctness_b + ba.correctness_a) / 2.0;
  s.detailedness_b = (s.detailedness_b + ba.detailedness_a) / 2.0;
  s.retries += d2.retries;
  return s;
}

std::vector<PairScore> judge_batch(const JudgeEndpoint& endpoint, const std::vector<JudgeRequest>& requests,
                                   const std::string& tmpl, int parallelism, bool swap, double timeout_s) {
  std::vector<PairScore> out(requests.size());
  const int n = static_cast<int>(requests.size());
  const int workers = std::max(1, std::min(parallelism, n));
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < n; i = next++) out[i] = judge_pair(endpoint, requests[i], tmpl, swap, timeout_s);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace sidlab
