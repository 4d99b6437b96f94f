#pragma once

#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "fcmir/evalkit.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

/// In-process fixture-replay endpoint. Chat fixtures are selected by the
/// X-Fcmir-Kind request header; each can fail with a 5xx a fixed number of
/// times first, to exercise the retry path. /embeddings answers with the
/// deterministic hashing embedding of the input text, so similarity metrics
/// work offline without fixtures per string.
class MockLlmServer {
 public:
  struct Fixture {
    std::string content;    // assistant message content to replay
    int fail_times = 0;     // 5xx responses served before the first success
    int fail_status = 500;
  };

  MockLlmServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      handle_chat(req, res);
    });
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      handle_embeddings(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw StageError("mock server: could not bind a port");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  MockLlmServer(const MockLlmServer&) = delete;
  MockLlmServer& operator=(const MockLlmServer&) = delete;

  ~MockLlmServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  void set_fixture(const std::string& kind, Fixture fixture) {
    std::lock_guard lk(mu_);
    fixtures_[kind] = fixture;
    remaining_fails_[kind] = fixture.fail_times;
  }

  int request_count(const std::string& kind) const {
    std::lock_guard lk(mu_);
    const auto it = counts_.find(kind);
    return it == counts_.end() ? 0 : it->second;
  }

 private:
  void handle_chat(const httplib::Request& req, httplib::Response& res) {
    std::string kind = req.get_header_value("X-Fcmir-Kind");
    if (kind.empty()) kind = "default";
    std::lock_guard lk(mu_);
    counts_[kind]++;
    const auto it = fixtures_.find(kind);
    if (it == fixtures_.end()) {
      res.status = 404;
      res.set_content(R"({"error":"no fixture for kind"})", "application/json");
      return;
    }
    if (remaining_fails_[kind] > 0) {
      remaining_fails_[kind]--;
      res.status = it->second.fail_status;
      res.set_content(R"({"error":"transient"})", "application/json");
      return;
    }
    const nlohmann::json body{
        {"choices",
         nlohmann::json::array(
             {nlohmann::json{{"message", {{"role", "assistant"}, {"content", it->second.content}}}}})}};
    res.set_content(body.dump(), "application/json");
  }

  void handle_embeddings(const httplib::Request& req, httplib::Response& res) {
    std::string input;
    try {
      input = nlohmann::json::parse(req.body).at("input").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":"bad request"})", "application/json");
      return;
    }
    {
      std::lock_guard lk(mu_);
      counts_["embed"]++;
    }
    HashingEmbeddingProvider provider;
    const nlohmann::json body{
        {"data", nlohmann::json::array({nlohmann::json{{"embedding", provider.embed(input)}}})}};
    res.set_content(body.dump(), "application/json");
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::map<std::string, Fixture> fixtures_;
  std::map<std::string, int> counts_;
  std::map<std::string, int> remaining_fails_;
};

/// Plausible canned replies for every request kind the client sends. The
/// summarize fixture arrives fenced to exercise fence stripping.
inline void install_default_fixtures(MockLlmServer& server) {
  server.set_fixture("summarize",
                     {"```json\n"
                      "{\"Operation\": \"Opened the transit app, searched for a route to the "
                      "central station, and compared the two fastest connections.\", "
                      "\"Intent\": \"Plan the quickest trip to the central station.\"}\n"
                      "```"});
  const nlohmann::json ops{{"Suggestions",
                            {"Buy a ticket for the 08:15 express connection.",
                             "Set a departure reminder 20 minutes before the train leaves.",
                             "Check the platform number for the chosen connection."}}};
  server.set_fixture("suggest_operation", {ops.dump()});
  const nlohmann::json searches{{"Suggestions",
                                 {"Search for coffee shops near the central station.",
                                  "Look up the weather at the destination this afternoon.",
                                  "Find timetable changes announced for this route."}}};
  server.set_fixture("suggest_search", {searches.dump()});
  const nlohmann::json judge_sum{{"Action Information Completeness", 2},
                                 {"Action Sequence Accuracy", 2},
                                 {"Object Detail Accuracy", 1},
                                 {"Output Format Standardization", 2},
                                 {"Generated Intent Reasonableness", 2}};
  server.set_fixture("judge_summary", {judge_sum.dump()});
  const nlohmann::json judge_sug{{"Relevance", 2},
                                 {"Usefulness", 1},
                                 {"Clarity", 2},
                                 {"Executability", 1},
                                 {"Novelty/Surprise", 0}};
  server.set_fixture("judge_suggestion", {judge_sug.dump()});
  server.set_fixture("default", {"OK"});
}

}  // namespace fcmir
