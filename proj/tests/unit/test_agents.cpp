#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "rulesmith/agents.hpp"
#include "support/fake_endpoint.hpp"
#include "support/fixtures.hpp"

using namespace rulesmith;
using namespace rulesmith::testing;
using nlohmann::json;

namespace {

const std::string kReturn = "\xE9\x80\x80\xE8\xB4\xA7";  // 退货

// 20 refund samples, 18 mention 退货; 20 others, 1 mentions it.
std::vector<DialogueSample> return_corpus() {
  std::vector<DialogueSample> corpus;
  for (int i = 0; i < 20; ++i) {
    std::string text = "w" + std::to_string(i % 7) + " order " + (i < 18 ? kReturn : std::string("hmm"));
    corpus.push_back(intent_sample("r" + std::to_string(i), text, "refund"));
  }
  for (int i = 0; i < 20; ++i) {
    std::string text = "w" + std::to_string(i % 5) + " order " + (i == 0 ? kReturn : std::string("track"));
    corpus.push_back(intent_sample("o" + std::to_string(i), text, i % 2 ? "shipping" : "other"));
  }
  return corpus;
}

AgentContext refund_context(const std::vector<DialogueSample>& corpus) {
  AgentContext ctx;
  ctx.task = Task::intent;
  ctx.label = "refund";
  ctx.exemplars.assign(corpus.begin(), corpus.begin() + 8);
  ctx.validation = corpus;
  return ctx;
}

}  // namespace

TEST_CASE("make_estimate rejects out-of-range values") {
  CHECK_NOTHROW(make_estimate(0.0, 1.0));
  try {
    make_estimate(1.3, 0.5);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.field() == "reward");
  }
  CHECK_THROWS_AS(make_estimate(0.5, -0.1), ProtocolError);
  CHECK_THROWS_AS(make_estimate(std::nan(""), 0.5), ProtocolError);
}

TEST_CASE("finalize_proposals parses, deduplicates and caps") {
  AgentContext ctx;
  ctx.current = {pred(Field::any_text, Op::contains, "a")};
  ctx.siblings = {pred(Field::any_text, Op::contains, "b")};
  auto out = finalize_proposals({"any_text contains \"a\"", "any_text contains \"b\"", "garbage", "ocr_text contains \"c\"",
                                 "ocr_text contains \"c\"", "user_text ends_with \"d\""},
                                ctx, 5);
  CHECK(out.dropped == 1);
  REQUIRE(out.predicates.size() == 2);
  CHECK(out.predicates[0] == pred(Field::ocr_text, Op::contains, "c"));
  CHECK(finalize_proposals({"ocr_text contains \"c\"", "ocr_text contains \"d\""}, ctx, 1).predicates.size() == 1);
}

TEST_CASE("mock proposals surface the discriminative token") {
  const auto corpus = return_corpus();
  // Frequencies recomputed by substring search.
  int in_label = 0, in_label_total = 0, other = 0, other_total = 0;
  for (const auto& s : corpus) {
    const bool has = s.turns[0].text.find(kReturn) != std::string::npos;
    if (s.gold_label == "refund") {
      ++in_label_total;
      in_label += has;
    } else {
      ++other_total;
      other += has;
    }
  }
  REQUIRE(double(in_label) / in_label_total == 0.9);
  REQUIRE(double(other) / other_total == 0.05);

  MockAgent agent(corpus, {7, 0.05});
  const auto ctx = refund_context(corpus);
  auto proposals = agent.propose_predicates(ctx, 5);
  CHECK(proposals.dropped == 0);
  CHECK(proposals.predicates.size() == 5);
  const auto want = pred(Field::any_text, Op::contains, kReturn);
  CHECK(std::find(proposals.predicates.begin(), proposals.predicates.end(), want) != proposals.predicates.end());
  CHECK(agent.ranked_tokens(ctx).front() == kReturn);

  SUBCASE("every proposal parses") {
    for (const auto& p : proposals.predicates) CHECK(parse_predicate(render_predicate(p)) == p);
  }
  SUBCASE("k=1 caps the list") { CHECK(agent.propose_predicates(ctx, 1).predicates.size() == 1); }
  SUBCASE("candidates already in the rule or tried by siblings are removed") {
    auto narrowed = ctx;
    narrowed.current = {want};
    narrowed.siblings = proposals.predicates;
    for (const auto& p : agent.propose_predicates(narrowed, 5).predicates) {
      CHECK(p != want);
      CHECK(std::find(proposals.predicates.begin(), proposals.predicates.end(), p) == proposals.predicates.end());
    }
  }
  SUBCASE("all candidates duplicated gives an empty list") {
    std::vector<DialogueSample> tiny{intent_sample("a", "solo", "refund"), intent_sample("b", "other", "shipping")};
    MockAgent small(tiny, {});
    AgentContext c;
    c.task = Task::intent;
    c.label = "refund";
    c.current = {pred(Field::any_text, Op::contains, "solo")};
    c.siblings = {pred(Field::any_text, Op::contains, "how")};
    CHECK(small.propose_predicates(c, 5).predicates.empty());
  }
}

TEST_CASE("mock evaluation is measured precision plus seeded noise") {
  std::vector<DialogueSample> validation{
      intent_sample("v0", "late parcel", "shipping"), intent_sample("v1", "late again", "shipping"),
      intent_sample("v2", "so late", "shipping"),     intent_sample("v3", "late refund", "refund"),
      intent_sample("v4", "hello", "other"),          intent_sample("v5", "hi", "other")};
  AgentContext ctx;
  ctx.task = Task::intent;
  ctx.label = "shipping";
  ctx.validation = validation;
  auto rule = make_rule("r", "shipping", {pred(Field::user_text, Op::contains, "late")}, 0.0);

  MockAgent exact({}, {3, 0.0});
  auto estimate = exact.evaluate_rule(ctx, rule);
  CHECK(estimate.reward == 0.75);
  CHECK(estimate.confidence == doctest::Approx(0.4));

  auto vacuous = make_rule("v", "shipping", {pred(Field::user_text, Op::contains, "zebra")}, 0.0);
  MockAgent noisy({}, {3, 0.3});
  auto none = noisy.evaluate_rule(ctx, vacuous);
  CHECK(none.reward == 0.0);
  CHECK(none.confidence == 0.0);

  auto a = noisy.evaluate_rule(ctx, rule);
  auto b = noisy.evaluate_rule(ctx, rule);
  CHECK(a == b);
  CHECK(a.reward >= 0.45);
  CHECK(a.reward <= 1.0);
  CHECK(std::abs(a.reward - 0.75) <= 0.3);

  MockAgent other_seed({}, {4, 0.3});
  CHECK(other_seed.evaluate_rule(ctx, rule).reward != a.reward);
}

TEST_CASE("mock rephrase echoes") {
  MockAgent agent({}, {});
  CHECK(agent.rephrase("hello") == "hello");
  CHECK(agent.rephrase("") == "");
}

TEST_CASE("parse_fenced_object contract") {
  CHECK(parse_fenced_object("```json\n{\"a\":1}\n```")["a"] == 1);
  CHECK(parse_fenced_object("text\n```\n{\"a\":2}\n```\nmore")["a"] == 2);
  CHECK_THROWS_AS(parse_fenced_object("{\"a\":1}"), ProtocolError);
  CHECK_THROWS_AS(parse_fenced_object("```json\n{\"a\":1}\n``` ```json\n{}\n```"), ProtocolError);
  CHECK_THROWS_AS(parse_fenced_object("```json\n[1,2]\n```"), ProtocolError);
  CHECK_THROWS_AS(parse_fenced_object("```json\n{oops\n```"), ProtocolError);
}

TEST_CASE("remote agent proposals") {
  FakeChatServer server([](const json&) {
    return fenced({{"predicates",
                    {"any_text contains \"a\"", "not a predicate", "layout contains \"x\"", "ocr_text starts_with \"b\"",
                     "any_text contains \"a\""}}});
  });
  RemoteAgent agent(EndpointConfig{server.url()});
  AgentContext ctx;
  ctx.label = "refund";
  ctx.exemplars = {intent_sample("e", "want my money back", "refund")};
  auto out = agent.propose_predicates(ctx, 5);
  CHECK(out.dropped == 2);
  REQUIRE(out.predicates.size() == 2);
  CHECK(out.predicates[1] == pred(Field::ocr_text, Op::starts_with, "b"));

  const auto requests = server.requests();
  REQUIRE(requests.size() == 1);
  const auto prompt = requests[0]["messages"][1]["content"].get<std::string>();
  CHECK(prompt.find("want my money back") != std::string::npos);
  CHECK(prompt.find("refund") != std::string::npos);
}

TEST_CASE("remote agent rejects out-of-range rewards after retries") {
  FakeChatServer server([](const json&) { return fenced({{"reward", 1.3}, {"confidence", 0.5}, {"rationale", "x"}}); });
  RemoteAgent agent(EndpointConfig{server.url()});
  auto rule = make_rule("r", "refund", {pred(Field::any_text, Op::contains, "a")}, 0.0);
  try {
    agent.evaluate_rule(AgentContext{}, rule);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.field() == "reward");
    CHECK(std::string(e.what()).find("reward") != std::string::npos);
  }
  const auto requests = server.requests();
  REQUIRE(requests.size() == 3);
  // The parse error is echoed back before each retry.
  const auto& retry = requests[1]["messages"];
  REQUIRE(retry.size() == 4);
  CHECK(retry[3]["content"].get<std::string>().find("reward") != std::string::npos);
}

TEST_CASE("remote agent recovers from one malformed reply") {
  std::atomic<int> calls{0};
  FakeChatServer server([&](const json&) -> std::optional<std::string> {
    if (calls++ == 0) return "I think it is about 0.9";
    return fenced({{"reward", 0.9}, {"confidence", 0.6}, {"rationale", "fires on refunds"}});
  });
  RemoteAgent agent(EndpointConfig{server.url()});
  auto rule = make_rule("r", "refund", {pred(Field::any_text, Op::contains, "a")}, 0.0);
  auto estimate = agent.evaluate_rule(AgentContext{}, rule);
  CHECK(estimate == RewardEstimate{0.9, 0.6, "fires on refunds"});
  CHECK(calls == 2);
}

TEST_CASE("remote rephrase passes text through") {
  FakeChatServer server([](const json& request) -> std::optional<std::string> {
    const auto prompt = request["messages"][1]["content"].get<std::string>();
    if (prompt.find("EMPTY") != std::string::npos) return "   \n";
    return "  Where is my  package?\n";
  });
  RemoteAgent agent(EndpointConfig{server.url()});
  CHECK(agent.rephrase("where is my parcel") == "Where is my  package?");
  try {
    agent.rephrase("EMPTY");
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.field() == "content");
  }
}

TEST_CASE("transport failures surface as AgentUnavailable") {
  FakeChatServer server([](const json&) -> std::optional<std::string> { return std::nullopt; });
  RemoteAgent agent(EndpointConfig{server.url()});
  try {
    agent.rephrase("x");
    FAIL("expected AgentUnavailable");
  } catch (const ProtocolError&) {
    FAIL("HTTP 500 is not a protocol error");
  } catch (const AgentUnavailable& e) {
    CHECK(std::string(e.what()).find("500") != std::string::npos);
  }
  CHECK(server.requests().size() == 3);

  EndpointConfig dead{"http://127.0.0.1:1"};
  dead.timeout = std::chrono::milliseconds(500);
  RemoteAgent unreachable(dead);
  CHECK_THROWS_AS(unreachable.rephrase("x"), AgentUnavailable);
}

TEST_CASE("credential comes from the environment") {
  FakeChatServer server([](const json&) { return std::string("ok"); });
  ::setenv("RULESMITH_AGENT_KEY", "sekrit", 1);
  RemoteAgent agent(EndpointConfig::from_env(server.url(), "RULESMITH_AGENT_KEY"));
  ::unsetenv("RULESMITH_AGENT_KEY");
  CHECK(agent.rephrase("x") == "ok");
  CHECK(server.auth_headers().at(0) == "Bearer sekrit");
}

TEST_CASE("requests in flight never exceed the concurrency cap") {
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  FakeChatServer server([&](const json&) -> std::optional<std::string> {
    const int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --in_flight;
    return "done";
  });
  EndpointConfig config{server.url()};
  config.max_concurrency = 2;
  RemoteAgent agent(config);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { CHECK(agent.rephrase("x") == "done"); });
  for (auto& t : threads) t.join();
  CHECK(peak.load() <= 2);
  CHECK(peak.load() >= 1);
}
