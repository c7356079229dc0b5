#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "refaudit/response_source.hpp"
#include "test_support.hpp"

using namespace refaudit;
using nlohmann::json;

namespace {

PromptPair sample_pair(PromptStyle style = PromptStyle::separate_system) {
  PromptPair pair;
  pair.style = style;
  if (style == PromptStyle::separate_system) {
    pair.system_text = "You are a helpful, respectful, and honest librarian "
                       "from Louisiana State University.";
    pair.user_text = "Dear librarian,\n\nA question.\n\nBest regards,\nMalik "
                     "Robinson";
  } else {
    pair.user_text = "You are a helpful librarian.\n\nDear librarian,\n\nA "
                     "question.";
  }
  return pair;
}

PatronIdentity malik() {
  PatronIdentity id;
  id.first_name = "malik";
  id.surname = "robinson";
  id.group = {Sex::male, RaceEthnicity::black_african_american};
  return id;
}

// In-process chat-completions stub. The handler runs on the server thread;
// captured request state is guarded by a mutex and read after joining.
class stub_server {
 public:
  using handler_fn = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit stub_server(handler_fn handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   {
                     std::lock_guard<std::mutex> lock(mutex_);
                     requests_.push_back(req);
                   }
                   handler_(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~stub_server() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::size_t request_count() {
    std::lock_guard<std::mutex> lock(mutex_);
    return requests_.size();
  }
  httplib::Request request(std::size_t i) {
    std::lock_guard<std::mutex> lock(mutex_);
    return requests_.at(i);
  }

 private:
  httplib::Server server_;
  handler_fn handler_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mutex_;
  std::vector<httplib::Request> requests_;
};

void respond_with_text(httplib::Response& res, const std::string& text) {
  const json body = {
      {"id", "chatcmpl-1"},
      {"choices",
       json::array({{{"index", 0},
                     {"message", {{"role", "assistant"}, {"content", text}}},
                     {"finish_reason", "stop"}}})},
  };
  res.set_content(body.dump(), "application/json");
}

GenerationConfig fast_config(const std::string& url) {
  GenerationConfig cfg;
  cfg.model_id = "test-model";
  cfg.endpoint_url = url;
  cfg.max_retries = 3;
  cfg.backoff_base = std::chrono::milliseconds(1);
  cfg.backoff_jitter = 0.0;
  cfg.bearer_token_env = "REFAUDIT_TEST_TOKEN";
  return cfg;
}

}  // namespace

TEST_CASE("outcome constructors enforce their invariants") {
  CHECK_THROWS_AS(ResponseOutcome::success(""), std::invalid_argument);
  const ResponseOutcome ok = ResponseOutcome::success("hi");
  CHECK(ok.status == ResponseStatus::ok);
  CHECK(ok.failure_reason.empty());

  const ResponseOutcome failed = ResponseOutcome::failure("");
  CHECK(failed.status == ResponseStatus::failed);
  CHECK(failed.failure_reason == "unspecified failure");
}

TEST_CASE("reply pool and choice-group expansion") {
  const ReplyPool& pool = builtin_reply_pool();
  for (int t = 0; t < 6; ++t)
    CHECK_FALSE(pool.for_template(static_cast<TemplateId>(t)).empty());

  RngEngine rng = make_rng(3);
  CHECK(render_reply("fixed text, no choices", rng) == "fixed text, no choices");

  // each [a|b] group takes one uniform draw, in order of appearance
  bool saw_first = false, saw_second = false;
  for (int i = 0; i < 64; ++i) {
    const std::string out = render_reply("You can [walk|ride] there.", rng);
    if (out == "You can walk there.") saw_first = true;
    if (out == "You can ride there.") saw_second = true;
  }
  CHECK(saw_first);
  CHECK(saw_second);

  RngEngine a = make_rng(9), b = make_rng(9);
  for (int i = 0; i < 16; ++i)
    CHECK(render_reply("[x|y] and [1 one|2 two|3 three]", a) ==
          render_reply("[x|y] and [1 one|2 two|3 three]", b));
}

TEST_CASE("null generator is identity-blind and deterministic") {
  PatronIdentity other;
  other.first_name = "sarah";
  other.surname = "kim";
  other.group = {Sex::female, RaceEthnicity::asian_pacific_islander};

  RngEngine a = make_rng(17), b = make_rng(17);
  const ResponseOutcome ra =
      generate_null(sample_pair(), malik(), TemplateId::sports, a);
  const ResponseOutcome rb =
      generate_null(sample_pair(), other, TemplateId::sports, b);
  CHECK(ra.status == ResponseStatus::ok);
  CHECK(ra.text == rb.text);  // identity cannot influence the text
  CHECK(ra.text.rfind("Hello,\n\n", 0) == 0);
}

TEST_CASE("bias spec validation") {
  const SyntheticBiasSpec spec = SyntheticBiasSpec::by_sex(0.662, 0.484);
  for (int g = 0; g < kNumGroups; ++g) {
    const DemographicGroup group = DemographicGroup::from_index(g);
    CHECK(spec.rate_by_group[g] ==
          (group.sex == Sex::female ? 0.662 : 0.484));
  }

  CHECK_THROWS_AS(SyntheticBiasSpec::by_sex(1.2, 0.4), std::invalid_argument);
  CHECK_THROWS_AS(SyntheticBiasSpec::uniform(0.5, ""), std::invalid_argument);
}

TEST_CASE("injected generator plants the marker salutation") {
  RngEngine rng = make_rng(23);

  const SyntheticBiasSpec always = SyntheticBiasSpec::uniform(1.0);
  const ResponseOutcome marked =
      generate_injected(sample_pair(), malik(), always, TemplateId::subject, rng);
  CHECK(marked.text.rfind("Dear Malik,\n\n", 0) == 0);

  const SyntheticBiasSpec never = SyntheticBiasSpec::uniform(0.0);
  const ResponseOutcome plain =
      generate_injected(sample_pair(), malik(), never, TemplateId::subject, rng);
  CHECK(plain.text.rfind("Hello,\n\n", 0) == 0);

  SUBCASE("marker frequency tracks the configured rate") {
    const SyntheticBiasSpec spec = SyntheticBiasSpec::uniform(0.6);
    RngEngine r2 = make_rng(31);
    int hits = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i)
      if (generate_injected(sample_pair(), malik(), spec, TemplateId::subject, r2)
              .text.rfind("Dear", 0) == 0)
        ++hits;
    // 0.6 * 2000 = 1200, sd = sqrt(2000*0.6*0.4) ~ 21.9; allow ~4.5 sd
    CHECK(hits > 1100);
    CHECK(hits < 1300);
  }
}

TEST_CASE("batch generation conserves the plan") {
  const AuditConfig config = test_support::small_config();
  const DataTables tables = load_data_tables(config);
  const PlanBundle bundle = build_plan(config, tables);
  const std::span<const PlannedInteraction> plan(bundle.plan.data(), 48);

  SUBCASE("one record per row, in plan order, failures preserved") {
    const SourceFn source = [](const PromptPair&, const PlannedInteraction& planned,
                               std::size_t index) -> ResponseOutcome {
      if (index % 5 == 3) return ResponseOutcome::failure("simulated outage");
      if (index % 7 == 2) throw std::runtime_error("handler exploded");
      return ResponseOutcome::success("Hello,\n\nanswer for " +
                                      planned.item.identity.first_name);
    };
    const std::vector<InteractionRecord> records =
        batch_generate(plan, source, 3);
    REQUIRE(records.size() == plan.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      CHECK(records[i].identity == plan[i].item.identity);
      CHECK(records[i].run_seed == plan[i].run_seed);
      CHECK(records[i].created_at == std::string(kEpochTimestamp));
      CHECK(records[i].model_id == "synthetic-null");
      if (i % 5 == 3) {
        CHECK(records[i].status == ResponseStatus::failed);
        CHECK(records[i].failure_reason == "simulated outage");
        CHECK(records[i].response_text.empty());
      } else if (i % 7 == 2) {
        CHECK(records[i].status == ResponseStatus::failed);
        CHECK(records[i].failure_reason.find("handler exploded") !=
              std::string::npos);
      } else {
        CHECK(records[i].status == ResponseStatus::ok);
        CHECK(records[i].user_text.find("Dear librarian,") == 0);
      }
    }
  }

  SUBCASE("in-flight calls never exceed the concurrency limit") {
    std::atomic<int> in_flight{0};
    std::atomic<int> max_seen{0};
    const int limit = 4;
    const SourceFn source = [&](const PromptPair&, const PlannedInteraction&,
                                std::size_t) -> ResponseOutcome {
      const int now = ++in_flight;
      int best = max_seen.load();
      while (now > best && !max_seen.compare_exchange_weak(best, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --in_flight;
      return ResponseOutcome::success("ok");
    };
    batch_generate(plan, source, limit);
    CHECK(max_seen.load() <= limit);
    CHECK(max_seen.load() >= 2);  // the pool really does run in parallel
  }

  SUBCASE("custom stamp and prompt style") {
    BatchOptions options;
    options.model_id = "remote-model";
    options.style = PromptStyle::prepend_system;
    options.timestamp = [] { return std::string("2026-08-15T00:00:00Z"); };
    const SourceFn source = [](const PromptPair& pair, const PlannedInteraction&,
                               std::size_t) {
      CHECK(pair.style == PromptStyle::prepend_system);
      return ResponseOutcome::success("ok");
    };
    const auto records = batch_generate(plan.subspan(0, 4), source, 1, options);
    for (const InteractionRecord& r : records) {
      CHECK(r.model_id == "remote-model");
      CHECK(r.created_at == "2026-08-15T00:00:00Z");
      CHECK(r.system_text.empty());  // prepended style has no system message
      CHECK(r.user_text.find("You are a helpful") == 0);
    }
  }

  SUBCASE("bad arguments") {
    const SourceFn source = [](const PromptPair&, const PlannedInteraction&,
                               std::size_t) { return ResponseOutcome::success("x"); };
    CHECK_THROWS_AS(batch_generate({}, source, 2), std::invalid_argument);
    CHECK_THROWS_AS(batch_generate(plan, source, 0), std::invalid_argument);
  }
}

TEST_CASE("remote source sends a well-formed chat completion request") {
  stub_server server([](const httplib::Request&, httplib::Response& res) {
    respond_with_text(res, "Hello,\n\nhere is the answer.");
  });

  setenv("REFAUDIT_TEST_TOKEN", "sekrit-bearer-value-123", 1);
  GenerationConfig cfg = fast_config(server.url());
  cfg.temperature = 0.25;
  cfg.max_tokens = 512;
  cfg.request_seed = 777;

  const ResponseOutcome outcome = generate_remote(sample_pair(), cfg);
  REQUIRE(outcome.status == ResponseStatus::ok);
  CHECK(outcome.text == "Hello,\n\nhere is the answer.");

  REQUIRE(server.request_count() == 1);
  const httplib::Request req = server.request(0);
  CHECK(req.get_header_value("Authorization") == "Bearer sekrit-bearer-value-123");
  CHECK(req.get_header_value("Content-Type") == "application/json");

  const json body = json::parse(req.body);
  CHECK(body.at("model") == "test-model");
  CHECK(body.at("temperature").get<double>() == doctest::Approx(0.25));
  CHECK(body.at("max_tokens") == 512);
  CHECK(body.at("seed") == 777);
  REQUIRE(body.at("messages").size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"].get<std::string>().find("Dear librarian") !=
        std::string::npos);

  unsetenv("REFAUDIT_TEST_TOKEN");
}

TEST_CASE("remote source omits optional parts when not configured") {
  stub_server server([](const httplib::Request&, httplib::Response& res) {
    respond_with_text(res, "ok then");
  });
  unsetenv("REFAUDIT_TEST_TOKEN");

  GenerationConfig cfg = fast_config(server.url());
  const ResponseOutcome outcome =
      generate_remote(sample_pair(PromptStyle::prepend_system), cfg);
  REQUIRE(outcome.status == ResponseStatus::ok);

  const httplib::Request req = server.request(0);
  CHECK_FALSE(req.has_header("Authorization"));  // no token in the environment
  const json body = json::parse(req.body);
  REQUIRE(body.at("messages").size() == 1);  // prepended style: user only
  CHECK(body["messages"][0]["role"] == "user");
  CHECK_FALSE(body.contains("seed"));
}

TEST_CASE("remote source retries transient statuses with backoff") {
  std::atomic<int> calls{0};
  stub_server server([&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n <= 2) {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
    } else {
      respond_with_text(res, "third time lucky");
    }
  });

  GenerationConfig cfg = fast_config(server.url());
  const ResponseOutcome outcome = generate_remote(sample_pair(), cfg);
  CHECK(outcome.status == ResponseStatus::ok);
  CHECK(outcome.text == "third time lucky");
  CHECK(server.request_count() == 3);
}

TEST_CASE("remote source gives up after the retry budget") {
  stub_server server([](const httplib::Request&, httplib::Response& res) {
    res.status = 429;
    res.set_content("slow down", "text/plain");
  });

  GenerationConfig cfg = fast_config(server.url());
  cfg.max_retries = 1;
  const ResponseOutcome outcome = generate_remote(sample_pair(), cfg);
  CHECK(outcome.status == ResponseStatus::failed);
  CHECK(outcome.failure_reason == "http 429");
  CHECK(server.request_count() == 2);  // initial try + one retry
}

TEST_CASE("remote source does not retry client errors") {
  setenv("REFAUDIT_TEST_TOKEN", "sekrit-bearer-value-123", 1);
  stub_server server([](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("{\"error\": \"bad token\"}", "application/json");
  });

  GenerationConfig cfg = fast_config(server.url());
  const ResponseOutcome outcome = generate_remote(sample_pair(), cfg);
  CHECK(outcome.status == ResponseStatus::failed);
  CHECK(outcome.failure_reason == "http 401");
  CHECK(server.request_count() == 1);
  // the bearer token must never surface in the failure text
  CHECK(outcome.failure_reason.find("sekrit") == std::string::npos);
  unsetenv("REFAUDIT_TEST_TOKEN");
}

TEST_CASE("remote source reports malformed and unreachable endpoints") {
  SUBCASE("missing configuration") {
    GenerationConfig cfg;
    cfg.model_id = "m";
    CHECK(generate_remote(sample_pair(), cfg).failure_reason ==
          "no endpoint_url configured");
    cfg.endpoint_url = "no-scheme-here";
    CHECK(generate_remote(sample_pair(), cfg).failure_reason.find("scheme") !=
          std::string::npos);
  }
  SUBCASE("response without choices") {
    stub_server server([](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"choices\": []}", "application/json");
    });
    GenerationConfig cfg = fast_config(server.url());
    const ResponseOutcome outcome = generate_remote(sample_pair(), cfg);
    CHECK(outcome.status == ResponseStatus::failed);
    CHECK(outcome.failure_reason.find("malformed response") == 0);
  }
  SUBCASE("connection refused surfaces as a transport failure") {
    GenerationConfig cfg = fast_config("http://127.0.0.1:9/v1");  // discard port
    cfg.max_retries = 0;
    cfg.timeout = std::chrono::milliseconds(2000);
    const ResponseOutcome outcome = generate_remote(sample_pair(), cfg);
    CHECK(outcome.status == ResponseStatus::failed);
    CHECK(outcome.failure_reason.find("transport:") == 0);
  }
}
