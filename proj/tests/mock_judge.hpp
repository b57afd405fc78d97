#pragma once

// Local chat-completions stand-in: replies from a scripted queue, then
// repeats the last reply.

#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace testutil {

struct MockReply {
  int status = 200;
  std::string body;
};

inline std::string chat_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

inline std::string verdict_text(int ca, int da, int cb, int db) {
  return "A: Correctness: " + std::to_string(ca) + " Detailedness: " + std::to_string(da) +
         "\nB: Correctness: " + std::to_string(cb) + " Detailedness: " + std::to_string(db) + "\n";
}

class MockJudge {
 public:
  MockJudge() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu_);
      requests_.push_back(req.body);
      auth_.push_back(req.get_header_value("Authorization"));
      MockReply r = script_.empty() ? last_ : script_.front();
      if (!script_.empty()) {
        last_ = script_.front();
        script_.pop_front();
      }
      if (responder_) r = responder_(req.body);
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockJudge() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  void script(std::vector<MockReply> replies) {
    std::lock_guard<std::mutex> lock(mu_);
    script_.assign(replies.begin(), replies.end());
    last_ = replies.empty() ? MockReply{} : replies.back();
  }
  // Computes the reply from the request body; overrides the script.
  void respond_with(std::function<MockReply(const std::string&)> f) {
    std::lock_guard<std::mutex> lock(mu_);
    responder_ = std::move(f);
  }
  std::vector<std::string> requests() {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }
  std::vector<std::string> auth_headers() {
    std::lock_guard<std::mutex> lock(mu_);
    return auth_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::deque<MockReply> script_;
  MockReply last_;
  std::function<MockReply(const std::string&)> responder_;
  std::vector<std::string> requests_, auth_;
};

}  // namespace testutil
