#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "fcmir/llm.hpp"
#include "fcmir/mock_llm.hpp"
#include "helpers.hpp"

using namespace fcmir;
using Catch::Matchers::ContainsSubstring;

namespace {

struct EnvGuard {
  std::string name;
  std::string saved;
  bool had = false;
  explicit EnvGuard(const char* n) : name(n) {
    if (const char* v = std::getenv(n)) {
      saved = v;
      had = true;
    }
  }
  ~EnvGuard() {
    if (had)
      ::setenv(name.c_str(), saved.c_str(), 1);
    else
      ::unsetenv(name.c_str());
  }
};

Image flat_image(int w, int h, std::uint8_t v) { return Image(w, h, Rgb{v, v, v}); }

Image decode_payload(const std::string& png, const std::filesystem::path& dir, int i) {
  const auto path = dir / ("payload_" + std::to_string(i) + ".png");
  std::ofstream out(path, std::ios::binary);
  out << png;
  out.close();
  return load_png(path);
}

}  // namespace

TEST_CASE("base64 reference vectors") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foob") == "Zm9vYg==");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
}

TEST_CASE("strip_code_fence") {
  CHECK(strip_code_fence("  hi  ") == "hi");
  CHECK(strip_code_fence("```json\n{\"a\":1}\n```") == "{\"a\":1}");
  CHECK(strip_code_fence("```\ntext\n```") == "text");
  CHECK(strip_code_fence("\n```json\n{}\n```\n\n") == "{}");
  CHECK(strip_code_fence("{\"a\":1}") == "{\"a\":1}");
  CHECK(strip_code_fence("```") == "");
  CHECK(strip_code_fence("```json\nunclosed") == "unclosed");
}

TEST_CASE("render_prompt substitutes placeholders and attaches images") {
  PromptTemplate tpl;
  tpl.kind = PromptKind::summarize;
  tpl.text = "Count: {{frame_count}} end";
  const auto body = render_prompt(tpl, {{"frame_count", "3"}}, {"fakepng"});
  const auto& content = body["messages"][0]["content"];
  REQUIRE(content.size() == 2);
  CHECK(content[0]["type"] == "text");
  CHECK(content[0]["text"] == "Count: 3 end");
  CHECK(content[1]["type"] == "image_url");
  const std::string url = content[1]["image_url"]["url"];
  CHECK(url.rfind("data:image/png;base64,", 0) == 0);
  CHECK(url.substr(22) == base64_encode("fakepng"));

  PromptTemplate twice = tpl;
  twice.text = "{{a}}+{{a}}";
  const auto b2 = render_prompt(twice, {{"a", "x"}}, {"p"});
  CHECK(b2["messages"][0]["content"][0]["text"] == "x+x");
}

TEST_CASE("render_prompt failure modes") {
  PromptTemplate tpl;
  tpl.kind = PromptKind::summarize;
  tpl.text = "Count: {{frame_count}}";
  CHECK_THROWS_AS(render_prompt(tpl, {}, {"p"}), StageError);
  CHECK_THROWS_WITH(render_prompt(tpl, {}, {"p"}), ContainsSubstring("frame_count"));
  CHECK_THROWS_AS(render_prompt(tpl, {{"frame_count", "1"}}, {}), StageError);

  PromptTemplate unterminated = tpl;
  unterminated.text = "{{oops";
  CHECK_THROWS_AS(render_prompt(unterminated, {}, {"p"}), StageError);

  PromptTemplate capped = tpl;
  capped.max_images = 2;
  CHECK_THROWS_AS(render_prompt(capped, {{"frame_count", "3"}}, {"a", "b", "c"}), StageError);

  PromptTemplate sugg;
  sugg.kind = PromptKind::suggest_search;
  sugg.text = "no images needed";
  CHECK_NOTHROW(render_prompt(sugg, {}, {}));
}

TEST_CASE("intent summaries round-trip through serialization") {
  const IntentSummary s{"Opened the app and searched.", "Find a train."};
  CHECK(parse_intent_response(to_json(s).dump()) == s);
  CHECK(parse_intent_response("```json\n" + to_json(s).dump() + "\n```") == s);

  testutil::Splitmix rng(321);
  for (int i = 0; i < 50; ++i) {
    IntentSummary r{"op " + testutil::random_text(rng, 8), "in " + testutil::random_text(rng, 8)};
    REQUIRE(parse_intent_response(to_json(r).dump()) == r);
  }
}

TEST_CASE("intent parsing failure modes") {
  CHECK_THROWS_AS(parse_intent_response("{\"Operation\": \"x\"}"), StageError);
  CHECK_THROWS_WITH(parse_intent_response("{\"Operation\": \"x\"}"), ContainsSubstring("Intent"));
  CHECK_THROWS_AS(parse_intent_response("{\"Operation\": \"\", \"Intent\": \"y\"}"), StageError);
  CHECK_THROWS_AS(parse_intent_response("{\"Operation\": 3, \"Intent\": \"y\"}"), StageError);
  CHECK_THROWS_AS(parse_intent_response("not json"), StageError);
}

TEST_CASE("suggestion parsing") {
  const auto set = parse_suggestions(R"({"Suggestions": ["a", "b"]})", SuggestionKind::search);
  CHECK(set.kind == SuggestionKind::search);
  CHECK(set.suggestions == std::vector<std::string>{"a", "b"});
  CHECK(std::string(to_string(SuggestionKind::operation)) == "operation");

  CHECK_THROWS_AS(parse_suggestions(R"({"Ideas": ["a"]})", SuggestionKind::search), StageError);
  CHECK_THROWS_AS(parse_suggestions(R"({"Suggestions": []})", SuggestionKind::search), StageError);
  CHECK_THROWS_AS(parse_suggestions(R"({"Suggestions": [1]})", SuggestionKind::search), StageError);
  CHECK_THROWS_AS(parse_suggestions(R"({"Suggestions": [""]})", SuggestionKind::search), StageError);
}

TEST_CASE("scorecard parsing") {
  nlohmann::json all2;
  for (const auto& name : metric_names(Rubric::summary)) all2[name] = 2;
  const auto card = parse_scorecard(all2.dump(), Rubric::summary);
  CHECK(card.total() == 10);
  CHECK_NOTHROW(card.validate());

  nlohmann::json bad = all2;
  bad["Action Sequence Accuracy"] = 3;
  CHECK_THROWS_AS(parse_scorecard(bad.dump(), Rubric::summary), StageError);
  bad["Action Sequence Accuracy"] = 1.5;
  CHECK_THROWS_AS(parse_scorecard(bad.dump(), Rubric::summary), StageError);
  bad["Action Sequence Accuracy"] = "2";
  CHECK_THROWS_AS(parse_scorecard(bad.dump(), Rubric::summary), StageError);

  nlohmann::json incomplete = all2;
  incomplete.erase("Object Detail Accuracy");
  CHECK_THROWS_AS(parse_scorecard(incomplete.dump(), Rubric::summary), StageError);
  CHECK_THROWS_AS(parse_scorecard(all2.dump(), Rubric::suggestion), StageError);
}

TEST_CASE("base_url splitting") {
  const auto a = detail::split_base_url("http://127.0.0.1:9100");
  CHECK(a.origin == "http://127.0.0.1:9100");
  CHECK(a.path_prefix == "/v1");
  const auto b = detail::split_base_url("http://h:1/v1");
  CHECK(b.origin == "http://h:1");
  CHECK(b.path_prefix == "/v1");
  const auto c = detail::split_base_url("https://api.example.com/api/");
  CHECK(c.origin == "https://api.example.com");
  CHECK(c.path_prefix == "/api");
  CHECK_THROWS_AS(detail::split_base_url("127.0.0.1:9100"), ConfigError);
}

TEST_CASE("endpoint environment overrides") {
  EnvGuard base_guard("FCMIR_API_BASE");
  EnvGuard key_guard("FCMIR_API_KEY");

  EndpointConfig cfg;
  cfg.base_url = "http://file:1/v1";
  ::unsetenv("FCMIR_API_BASE");
  ::unsetenv("FCMIR_API_KEY");
  auto same = endpoint_from_env(cfg);
  CHECK(same.base_url == "http://file:1/v1");
  CHECK(same.api_key.empty());

  ::setenv("FCMIR_API_BASE", "http://env:2/v1", 1);
  ::setenv("FCMIR_API_KEY", "sk-test", 1);
  auto overridden = endpoint_from_env(cfg);
  CHECK(overridden.base_url == "http://env:2/v1");
  CHECK(overridden.api_key == "sk-test");

  ::setenv("FCMIR_API_BASE", "", 1);
  auto empty_env = endpoint_from_env(cfg);
  CHECK(empty_env.base_url == "http://file:1/v1");
}

TEST_CASE("endpoint config validation") {
  EndpointConfig cfg;
  cfg.base_url = "http://h:1/v1";
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.max_in_flight = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.max_retries = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.max_images = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.image_width = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK_THROWS_AS(LlmClient(EndpointConfig{}), ConfigError);
  EndpointConfig no_scheme;
  no_scheme.base_url = "host:1";
  CHECK_THROWS_AS(LlmClient(no_scheme), ConfigError);
}

TEST_CASE("upload encoding caps, subsamples, and downscales") {
  const auto dir = testutil::fresh_dir("upload");

  std::vector<Image> few{flat_image(24, 30, 10), flat_image(24, 30, 20)};
  const auto small = encode_images_for_upload(few, 32, 8);
  REQUIRE(small.size() == 2);
  for (int i = 0; i < 2; ++i) {
    const Image img = decode_payload(small[static_cast<std::size_t>(i)], dir, i);
    CHECK(img.width == 24);  // never upscaled
    CHECK(img.height == 30);
    CHECK(img.at(0, 0).r == (i == 0 ? 10 : 20));
  }

  std::vector<Image> many;
  for (int i = 0; i < 10; ++i) many.push_back(flat_image(16, 16, static_cast<std::uint8_t>(10 * i)));
  const auto picked = encode_images_for_upload(many, 32, 4);
  REQUIRE(picked.size() == 4);
  const int want[4] = {0, 30, 60, 90};  // first and last always survive
  for (int i = 0; i < 4; ++i) {
    const Image img = decode_payload(picked[static_cast<std::size_t>(i)], dir, 10 + i);
    CHECK(static_cast<int>(img.at(8, 8).r) == want[i]);
  }

  std::vector<Image> wide{flat_image(64, 80, 77)};
  const auto scaled = encode_images_for_upload(wide, 32, 8);
  const Image img = decode_payload(scaled[0], dir, 99);
  CHECK(img.width == 32);
  CHECK(img.height == 40);
  CHECK(static_cast<int>(img.at(16, 20).r) == 77);
}

TEST_CASE("mock endpoint round-trips") {
  MockLlmServer server;
  install_default_fixtures(server);
  const auto dir = testutil::fresh_dir("responses");

  EndpointConfig cfg;
  cfg.base_url = server.base_url();
  cfg.backoff_ms = 1;
  LlmClient client(cfg, dir);

  const std::vector<Image> imgs{flat_image(40, 60, 180)};

  SECTION("summarization strips the fence and parses the fixture") {
    const auto summary = summarize_intent(imgs, client, default_template(PromptKind::summarize));
    CHECK(summary.intent == "Plan the quickest trip to the central station.");
    CHECK_THAT(summary.operation, ContainsSubstring("transit app"));
    CHECK(std::filesystem::exists(dir / "0000_summarize.json"));
  }

  SECTION("suggestions of both kinds") {
    const IntentSummary s{"Compared connections.", "Catch a train."};
    const auto ops = generate_suggestions(s, imgs, SuggestionKind::operation, client,
                                          default_template(PromptKind::suggest_operation));
    CHECK(ops.kind == SuggestionKind::operation);
    CHECK(ops.suggestions.size() == 3);
    const auto searches = generate_suggestions(s, imgs, SuggestionKind::search, client,
                                               default_template(PromptKind::suggest_search));
    CHECK(searches.kind == SuggestionKind::search);
    CHECK(searches.suggestions.size() == 3);

    CHECK_THROWS_AS(generate_suggestions(s, imgs, SuggestionKind::search, client,
                                         default_template(PromptKind::suggest_operation)),
                    StageError);
  }

  SECTION("judging fills a complete rubric") {
    const auto sum_card = judge_score("pred", "ref", Rubric::summary, client,
                                      default_template(PromptKind::judge_summary));
    CHECK(sum_card.total() == 9);
    const auto sug_card = judge_score("pred", "ref", Rubric::suggestion, client,
                                      default_template(PromptKind::judge_suggestion));
    CHECK(sug_card.total() == 6);
    CHECK_THROWS_AS(judge_score("p", "r", Rubric::summary, client,
                                default_template(PromptKind::judge_suggestion)),
                    StageError);
  }

  SECTION("template kind is enforced for summarization") {
    CHECK_THROWS_AS(summarize_intent(imgs, client, default_template(PromptKind::suggest_search)),
                    StageError);
    CHECK_THROWS_AS(summarize_intent({}, client, default_template(PromptKind::summarize)),
                    StageError);
  }
}

TEST_CASE("transient failures are retried, permanent ones are not") {
  MockLlmServer server;
  PromptTemplate tpl;
  tpl.kind = PromptKind::suggest_search;
  tpl.text = "ping";
  const auto prompt = render_prompt(tpl, {}, {});

  EndpointConfig cfg;
  cfg.base_url = server.base_url();
  cfg.backoff_ms = 1;

  SECTION("5xx then success") {
    server.set_fixture("flaky", {"OK", 2, 500});
    LlmClient client(cfg);
    CHECK(client.chat(prompt, "flaky") == "OK");
    CHECK(client.retries_performed() == 2);
    CHECK(server.request_count("flaky") == 3);
  }

  SECTION("4xx fails immediately") {
    LlmClient client(cfg);
    CHECK_THROWS_AS(client.chat(prompt, "absent"), EndpointError);
    CHECK(client.retries_performed() == 0);
    CHECK(server.request_count("absent") == 1);
  }

  SECTION("retry budget is finite") {
    server.set_fixture("down", {"OK", 99, 503});
    cfg.max_retries = 1;
    LlmClient client(cfg);
    CHECK_THROWS_AS(client.chat(prompt, "down"), EndpointError);
    CHECK(server.request_count("down") == 2);
  }

  SECTION("unreachable endpoint raises EndpointError") {
    EndpointConfig dead;
    dead.base_url = "http://127.0.0.1:1/v1";
    dead.max_retries = 0;
    dead.timeout_s = 0.2;
    LlmClient client(dead);
    CHECK_THROWS_AS(client.chat(prompt, "any"), EndpointError);
  }
}

TEST_CASE("endpoint embeddings mirror the hashing provider") {
  MockLlmServer server;
  EndpointConfig cfg;
  cfg.base_url = server.base_url();
  LlmClient client(cfg);

  HashingEmbeddingProvider reference;
  CHECK(client.embed("open the app") == reference.embed("open the app"));

  HttpEmbeddingProvider http(client);
  CHECK(http.identity() == "endpoint:mock-mllm");
  const auto v = http.embed("buy a ticket");
  CHECK(http.dimensionality() == 128);
  CHECK(v == reference.embed("buy a ticket"));
  CHECK_THAT(embedding_similarity("open the app", "open the app", http), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("in-flight requests never exceed the configured bound") {
  Semaphore sem(3);
  std::atomic<int> current{0}, peak{0}, done{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 16; ++i)
    threads.emplace_back([&] {
      SemaphoreGuard guard(sem);
      const int cur = current.fetch_add(1) + 1;
      int prev = peak.load();
      while (prev < cur && !peak.compare_exchange_weak(prev, cur)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      current.fetch_sub(1);
      done.fetch_add(1);
    });
  for (auto& t : threads) t.join();
  CHECK(done.load() == 16);
  CHECK(peak.load() <= 3);
  CHECK(peak.load() >= 1);
}

TEST_CASE("parallel chats through one client all succeed") {
  MockLlmServer server;
  server.set_fixture("burst", {"OK"});
  EndpointConfig cfg;
  cfg.base_url = server.base_url();
  cfg.max_in_flight = 2;
  LlmClient client(cfg);

  PromptTemplate tpl;
  tpl.kind = PromptKind::suggest_search;
  tpl.text = "ping";
  const auto prompt = render_prompt(tpl, {}, {});

  std::atomic<int> ok{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&] {
      if (client.chat(prompt, "burst") == "OK") ok.fetch_add(1);
    });
  for (auto& t : threads) t.join();
  CHECK(ok.load() == 8);
  CHECK(server.request_count("burst") == 8);
}

TEST_CASE("templates load from disk and honor missing files") {
  const auto dir = testutil::fresh_dir("templates");
  {
    std::ofstream out(dir / "summarize.txt", std::ios::binary);
    out << "Frames: {{frame_count}}";
  }
  const auto tpl = load_template(dir / "summarize.txt", PromptKind::summarize, 4);
  CHECK(tpl.kind == PromptKind::summarize);
  CHECK(tpl.text == "Frames: {{frame_count}}");
  CHECK(tpl.max_images == 4);
  CHECK_THROWS_AS(load_template(dir / "missing.txt", PromptKind::summarize), ConfigError);
}

TEST_CASE("default templates render with their documented slots") {
  const std::vector<std::string> png{"p"};
  CHECK_NOTHROW(render_prompt(default_template(PromptKind::summarize), {{"frame_count", "4"}}, png));
  const std::map<std::string, std::string> sugg{{"operation", "o"}, {"intent", "i"}};
  CHECK_NOTHROW(render_prompt(default_template(PromptKind::suggest_operation), sugg, png));
  CHECK_NOTHROW(render_prompt(default_template(PromptKind::suggest_search), sugg, {}));
  const std::map<std::string, std::string> judge{{"prediction", "p"}, {"reference", "r"}};
  CHECK_NOTHROW(render_prompt(default_template(PromptKind::judge_summary), judge, {}));
  CHECK_NOTHROW(render_prompt(default_template(PromptKind::judge_suggestion), judge, {}));
}
