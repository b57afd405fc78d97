#pragma once

#include <string>
#include <vector>

#include "sidlab/errors.hpp"

namespace sidlab {

class JudgeError : public Error {
 public:
  using Error::Error;
};
class TemplateError : public JudgeError {
 public:
  using JudgeError::JudgeError;
};
class JudgeConnectionError : public JudgeError {
 public:
  using JudgeError::JudgeError;
};
class JudgeStatusError : public JudgeError {
 public:
  JudgeStatusError(int status, std::string body);
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};
class JudgeParseError : public JudgeError {
 public:
  JudgeParseError(const std::string& what, std::string raw);
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

struct JudgeRequest {
  std::string reference;  // scene description
  std::string caption_a;
  std::string caption_b;
  std::string template_id = "default";
};

struct JudgeVerdict {
  int correctness_a = 0;
  int detailedness_a = 0;
  int correctness_b = 0;
  int detailedness_b = 0;

  bool operator==(const JudgeVerdict&) const = default;
};

// Paraphrased instructions, not the original evaluation prompt.
extern const char* const kDefaultJudgeTemplate;

// Substitutes {reference}, {a} and {b}. {a} and {b} are required.
std::string format_judge_prompt(const JudgeRequest& request, const std::string& tmpl);

struct JudgeEndpoint {
  std::string url;  // full chat-completions URL
  std::string api_key;
  std::string model = "judge";
  double temperature = 0.0;
  int max_retries = 3;
  int backoff_ms = 250;  // doubled after every retry

  // JUDGE_ENDPOINT / JUDGE_API_KEY; JudgeError when the endpoint is unset.
  static JudgeEndpoint from_env();
};

struct JudgeDiagnostics {
  int retries = 0;
  int status = 0;
  std::string raw;  // message content of the accepted response
};

// Parses "Correctness: <int>" / "Detailedness: <int>"; the first occurrence of
// each belongs to caption A, the second to caption B.
JudgeVerdict parse_verdict(const std::string& content);

JudgeVerdict request_verdict(const JudgeEndpoint& endpoint, const std::string& payload, double timeout_s,
                             JudgeDiagnostics* diag = nullptr);

struct PairScore {
  double correctness_a = 0, detailedness_a = 0;
  double correctness_b = 0, detailedness_b = 0;
  int retries = 0;
};

// Runs A/B and, when swap is set, B/A, averaging per caption.
PairScore judge_pair(const JudgeEndpoint& endpoint, const JudgeRequest& request, const std::string& tmpl,
                     bool swap = true, double timeout_s = 60.0);

std::vector<PairScore> judge_batch(const JudgeEndpoint& endpoint, const std::vector<JudgeRequest>& requests,
                                   const std::string& tmpl, int parallelism, bool swap = true,
                                   double timeout_s = 60.0);

}  // namespace sidlab
