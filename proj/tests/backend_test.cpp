#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "crisisrag/backend.hpp"
#include "crisisrag/prompting.hpp"
#include "crisisrag/remote.hpp"
#include "test_support.hpp"

using namespace crisisrag;
using namespace std::chrono_literals;

namespace {

constexpr const char* kOkBody =
    R"({"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"{\"humanitarian_label\": \"not_humanitarian\", \"event_type\": \"fire\"}"},)"
    R"("logprobs":{"content":[{"token":"{","logprob":-0.1},{"token":"}","logprob":-0.3}]}}],)"
    R"("usage":{"prompt_tokens":120,"completion_tokens":18}})";

// Local server that answers with a scripted sequence of status codes.
class FaultServer {
 public:
  explicit FaultServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const auto n = hits_++;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      const int status = n < statuses_.size() ? statuses_[n] : 200;
      res.status = status;
      res.set_content(status == 200 ? kOkBody : R"({"error":"nope"})", "application/json");
    });
    server_.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
      auto j = nlohmann::json::parse(req.body);
      nlohmann::json out = nlohmann::json::array();
      for (std::size_t i = 0; i < j["texts"].size(); ++i) out.push_back({1.0, double(i), 0.0});
      res.set_content(nlohmann::json{{"embeddings", out}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FaultServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t hits() const { return hits_; }
  std::string last_body() const { return last_body_; }
  std::string last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::atomic<std::size_t> hits_{0};
  std::string last_body_, last_auth_;
  int port_ = 0;
  std::thread thread_;
};

HttpChatConfig config_for(const std::string& url) {
  HttpChatConfig c;
  c.base_url = url;
  c.api_key = "test-key";
  c.model = "llama-3.1-8b";
  c.timeout = 5s;
  c.retry.initial_backoff = 1ms;
  return c;
}

}  // namespace

TEST(DecodingConfig, Defaults) {
  DecodingConfig d;
  EXPECT_EQ(d.temperature, 0.0);
  EXPECT_EQ(d.top_p, 1.0);
  EXPECT_EQ(d.max_tokens, 50);
  EXPECT_FALSE(d.logprobs);
  auto body = chat_request_body("m", build_zero_shot("hi"), d);
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["top_p"], 1.0);
  EXPECT_EQ(body["max_tokens"], 50);
  EXPECT_EQ(body["logprobs"], false);
  EXPECT_EQ(body["messages"][1]["role"], "user");
  EXPECT_EQ(body["messages"][1]["content"], "Tweet: hi");
}

TEST(Scripted, ServesInOrderAndRecords) {
  ScriptedBackend b({{"first", std::vector<double>{-0.5}, std::nullopt}, {"second", std::nullopt, std::nullopt}});
  auto t = build_zero_shot("hello");
  DecodingConfig with_lp;
  with_lp.logprobs = true;
  auto c1 = b.complete(t, with_lp);
  EXPECT_EQ(c1.text, "first");
  ASSERT_TRUE(c1.token_logprobs);
  EXPECT_EQ(c1.token_logprobs->at(0), -0.5);
  auto c2 = b.complete(t, {});
  EXPECT_EQ(c2.text, "second");
  EXPECT_FALSE(c2.token_logprobs);
  try {
    b.complete(t, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ScriptExhausted);
    EXPECT_TRUE(is_backend_error(e.code()));
  }
  auto reqs = b.requests();
  ASSERT_EQ(reqs.size(), 3u);
  EXPECT_EQ(render_transcript(reqs[0].messages), render_transcript(t));
  EXPECT_TRUE(reqs[0].config.logprobs);
}

TEST(Scripted, KeyedEntriesMatchTweet) {
  ScriptedBackend b({{"for b", std::nullopt, "tweet b"}, {"for a", std::nullopt, "tweet a"}});
  EXPECT_EQ(b.complete(build_zero_shot("tweet a"), {}).text, "for a");
  EXPECT_EQ(b.complete(build_few_shot({{"x", HumanitarianLabel::NotHumanitarian, EventType::Fire}}, "tweet b"), {}).text,
            "for b");
  EXPECT_EQ(b.remaining(), 0u);
}

TEST(Scripted, EmptyMessagesRejected) {
  ScriptedBackend b({{"x", std::nullopt, std::nullopt}});
  try {
    b.complete({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyMessages);
  }
  EXPECT_EQ(b.remaining(), 1u);
}

TEST(Scripted, LoadScript) {
  auto dir = crisisrag::testing::scratch_dir("script");
  std::ofstream(dir / "s.jsonl") << R"({"completion": "a", "logprobs": [-0.1, -0.2]})" << "\n\n"
                                 << R"({"completion": "b", "tweet": "t"})" << "\n";
  auto entries = ScriptedBackend::load_script(dir / "s.jsonl");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].logprobs->size(), 2u);
  EXPECT_EQ(*entries[1].tweet, "t");
  std::ofstream(dir / "bad.jsonl") << "{\"text\": 1}\n";
  EXPECT_THROW(ScriptedBackend::load_script(dir / "bad.jsonl"), Error);
}

TEST(QueryTweet, StripsQuotes) {
  EXPECT_EQ(query_tweet(build_zero_shot("abc")), "abc");
  EXPECT_EQ(query_tweet(build_few_shot({{"d", HumanitarianLabel::NotHumanitarian, EventType::Fire}}, "q q")), "q q");
}

TEST(ParseResponse, ShapeChecks) {
  auto c = parse_chat_response(nlohmann::json::parse(kOkBody));
  EXPECT_NE(c.text.find("not_humanitarian"), std::string::npos);
  ASSERT_TRUE(c.token_logprobs);
  EXPECT_EQ(*c.token_logprobs, (std::vector<double>{-0.1, -0.3}));
  EXPECT_EQ(c.usage.prompt_tokens, 120u);
  auto legacy = parse_chat_response(nlohmann::json::parse(
      R"({"choices":[{"message":{"content":"x"},"logprobs":{"token_logprobs":[-1.0,-2.0]}}],"extra":1})"));
  EXPECT_EQ(legacy.token_logprobs->size(), 2u);
  for (auto bad : {R"({})", R"({"choices":[]})", R"({"choices":[{"message":{}}]})", R"({"choices":[{"text":"x"}]})"}) {
    try {
      parse_chat_response(nlohmann::json::parse(bad));
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ProtocolShape);
    }
  }
}

TEST(HttpChat, ConfigGuards) {
  auto c = config_for("http://127.0.0.1:1");
  c.api_key.clear();
  try {
    HttpChatBackend b(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AuthMissing);
  }
  c = config_for("");
  EXPECT_THROW(HttpChatBackend b(c), Error);
  HttpChatBackend prefixed(config_for("http://h:8000/proxy/"));
  EXPECT_EQ(prefixed.endpoint().origin, "http://h:8000");
  EXPECT_EQ(prefixed.endpoint().path, "/proxy/v1/chat/completions");
}

TEST(HttpChat, EmptyMessagesBeforeNetwork) {
  const auto before = http_attempt_counter().load();
  HttpChatBackend b(config_for("http://127.0.0.1:1"));
  try {
    b.complete({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyMessages);
  }
  EXPECT_EQ(http_attempt_counter().load(), before);
  EXPECT_EQ(b.attempts(), 0u);
}

TEST(HttpChat, RetriesTransientThenSucceeds) {
  FaultServer server({500, 500});
  HttpChatBackend b(config_for(server.url()));
  DecodingConfig d;
  d.logprobs = true;
  auto c = b.complete(build_zero_shot("bridge down"), d);
  EXPECT_EQ(b.attempts(), 3u);
  EXPECT_EQ(server.hits(), 3u);
  EXPECT_TRUE(parsed_ok(parse_prediction(c.text)));
  ASSERT_TRUE(c.token_logprobs);
  auto sent = nlohmann::json::parse(server.last_body());
  EXPECT_EQ(sent["model"], "llama-3.1-8b");
  EXPECT_EQ(sent["temperature"], 0.0);
  EXPECT_EQ(sent["max_tokens"], 50);
  EXPECT_EQ(sent["logprobs"], true);
  EXPECT_EQ(server.last_auth(), "Bearer test-key");
}

TEST(HttpChat, GivesUpAfterThreeAttempts) {
  FaultServer server({503, 502, 500, 500});
  HttpChatBackend b(config_for(server.url()));
  try {
    b.complete(build_zero_shot("x"), {});
    FAIL();
  } catch (const HttpStatusError& e) {
    EXPECT_EQ(e.status(), 500);
    EXPECT_EQ(e.code(), Errc::HttpStatus);
  }
  EXPECT_EQ(server.hits(), 3u);
}

TEST(HttpChat, ClientErrorNotRetried) {
  for (int status : {400, 401, 404}) {
    FaultServer server({status});
    HttpChatBackend b(config_for(server.url()));
    try {
      b.complete(build_zero_shot("x"), {});
      FAIL();
    } catch (const HttpStatusError& e) {
      EXPECT_EQ(e.status(), status);
    }
    EXPECT_EQ(server.hits(), 1u);
  }
}

TEST(HttpChat, TooManyRequestsIsRetried) {
  FaultServer server({429});
  HttpChatBackend b(config_for(server.url()));
  b.complete(build_zero_shot("x"), {});
  EXPECT_EQ(server.hits(), 2u);
}

TEST(HttpChat, UnreachableIsBackendError) {
  // Bind and release a port so nothing is listening there.
  int port;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  auto cfg = config_for("http://127.0.0.1:" + std::to_string(port));
  cfg.retry.max_attempts = 2;
  HttpChatBackend b(cfg);
  try {
    b.complete(build_zero_shot("x"), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(is_backend_error(e.code()));
  }
  EXPECT_EQ(b.attempts(), 2u);
}

TEST(HttpEmbed, BatchesAndShapes) {
  FaultServer server({});
  HttpEmbedder e(server.url() + "/embed", 3);
  auto v = e.embed({"a", "b", "c"});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[2], (Vector{1.0, 2.0, 0.0}));
  HttpEmbedder wrong(server.url() + "/embed", 4);
  EXPECT_THROW(wrong.embed({"a"}), Error);
}
