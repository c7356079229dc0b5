#include "refaudit/response_source.hpp"

#include <atomic>
#include <cctype>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace refaudit {

using nlohmann::json;

ResponseOutcome ResponseOutcome::success(std::string text) {
  if (text.empty())
    throw std::invalid_argument("ResponseOutcome::success: empty text");
  ResponseOutcome o;
  o.status = ResponseStatus::ok;
  o.text = std::move(text);
  return o;
}

ResponseOutcome ResponseOutcome::failure(std::string reason) {
  if (reason.empty()) reason = "unspecified failure";
  ResponseOutcome o;
  o.status = ResponseStatus::failed;
  o.failure_reason = std::move(reason);
  return o;
}

// ---- synthetic sources ----------------------------------------------------

SyntheticBiasSpec SyntheticBiasSpec::by_sex(double female_rate, double male_rate,
                                            std::string marker) {
  SyntheticBiasSpec spec;
  spec.marker = std::move(marker);
  for (int g = 0; g < kNumGroups; ++g) {
    const DemographicGroup group = DemographicGroup::from_index(g);
    spec.rate_by_group[g] = group.sex == Sex::female ? female_rate : male_rate;
  }
  spec.validate();
  return spec;
}

SyntheticBiasSpec SyntheticBiasSpec::uniform(double rate, std::string marker) {
  SyntheticBiasSpec spec;
  spec.marker = std::move(marker);
  spec.rate_by_group.fill(rate);
  spec.validate();
  return spec;
}

void SyntheticBiasSpec::validate() const {
  if (marker.empty())
    throw std::invalid_argument("SyntheticBiasSpec: empty marker token");
  for (double rate : rate_by_group)
    if (!(rate >= 0.0 && rate <= 1.0))
      throw std::invalid_argument("SyntheticBiasSpec: rate outside [0, 1]");
}

namespace {

std::string capitalize_word(std::string_view word) {
  std::string out(word);
  if (!out.empty())
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

const ReplyPool& pool_or_builtin(const ReplyPool* pool) {
  return pool ? *pool : builtin_reply_pool();
}

// Base reply shared by the null and injected sources: variant choice, then
// choice-group expansion, all driven by rng only.
std::string draw_base_reply(TemplateId template_id, RngEngine& rng,
                            const ReplyPool& pool) {
  const auto variants = pool.for_template(template_id);
  if (variants.empty())
    throw std::invalid_argument("no base replies configured for template '" +
                                std::string(to_string(template_id)) + "'");
  const std::string& variant = variants[uniform_index(rng, variants.size())];
  return render_reply(variant, rng);
}

}  // namespace

ResponseOutcome generate_null(const PromptPair& /*pair*/,
                              const PatronIdentity& /*identity*/,
                              TemplateId template_id, RngEngine& rng,
                              const ReplyPool* pool) {
  // The prompt and identity are deliberately unused: the null source is the
  // equitable-by-construction oracle.
  std::string body = draw_base_reply(template_id, rng, pool_or_builtin(pool));
  return ResponseOutcome::success("Hello,\n\n" + std::move(body));
}

ResponseOutcome generate_injected(const PromptPair& /*pair*/,
                                  const PatronIdentity& identity,
                                  const SyntheticBiasSpec& spec,
                                  TemplateId template_id, RngEngine& rng) {
  spec.validate();
  const double rate = spec.rate_by_group[identity.group.index()];
  // Fixed draw order (marker first, then base reply) keeps streams stable.
  const bool use_marker = uniform_real(rng) < rate;
  std::string body =
      draw_base_reply(template_id, rng, pool_or_builtin(spec.base_pool));
  std::string opening =
      use_marker ? capitalize_word(spec.marker) + " " +
                       capitalize_word(identity.first_name) + ","
                 : std::string("Hello,");
  return ResponseOutcome::success(std::move(opening) + "\n\n" + std::move(body));
}

// ---- remote source ---------------------------------------------------------

namespace {

struct ParsedUrl {
  std::string scheme_host_port;  // httplib client target
  std::string base_path;         // "" or "/v1"
};

ParsedUrl parse_endpoint(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw std::invalid_argument("endpoint_url must include a scheme: " + url);
  const std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string base = url.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {url.substr(0, path_start), base};
}

bool retryable_status(int status) { return status >= 500 || status == 429; }

std::chrono::milliseconds backoff_delay(const GenerationConfig& cfg, int attempt,
                                        RngEngine& jitter_rng) {
  double delay = static_cast<double>(cfg.backoff_base.count());
  for (int i = 0; i < attempt; ++i) delay *= cfg.backoff_factor;
  const double jitter =
      1.0 + cfg.backoff_jitter * (2.0 * uniform_real(jitter_rng) - 1.0);
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(std::max(0.0, delay * jitter)));
}

}  // namespace

ResponseOutcome generate_remote(const PromptPair& pair, const GenerationConfig& cfg) {
  if (cfg.endpoint_url.empty())
    return ResponseOutcome::failure("no endpoint_url configured");
  if (cfg.model_id.empty())
    return ResponseOutcome::failure("no model_id configured");
  if (!(cfg.temperature >= 0.0))
    throw std::invalid_argument("GenerationConfig: temperature must be >= 0");
  if (cfg.max_tokens < 1)
    throw std::invalid_argument("GenerationConfig: max_tokens must be >= 1");

  ParsedUrl endpoint;
  try {
    endpoint = parse_endpoint(cfg.endpoint_url);
  } catch (const std::exception& e) {
    return ResponseOutcome::failure(e.what());
  }

  json body{{"model", cfg.model_id},
            {"temperature", cfg.temperature},
            {"max_tokens", cfg.max_tokens}};
  json messages = json::array();
  if (pair.style == PromptStyle::separate_system)
    messages.push_back({{"role", "system"}, {"content", pair.system_text}});
  messages.push_back({{"role", "user"}, {"content", pair.user_text}});
  body["messages"] = std::move(messages);
  if (cfg.request_seed) body["seed"] = *cfg.request_seed;
  const std::string payload = body.dump();

  httplib::Client client(endpoint.scheme_host_port);
  const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  client.set_connection_timeout(timeout_s.count(), 0);
  client.set_read_timeout(timeout_s.count(), 0);
  client.set_write_timeout(timeout_s.count(), 0);

  httplib::Headers headers;
  if (const char* token = std::getenv(cfg.bearer_token_env.c_str());
      token && *token) {
    // The only place the token is used; it must never reach logs, errors,
    // or artifacts.
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const std::string path = endpoint.base_path + "/chat/completions";
  thread_local RngEngine jitter_rng = make_rng(std::random_device{}());

  std::string last_failure = "no attempts made";
  const int attempts = std::max(1, cfg.max_retries + 1);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(backoff_delay(cfg, attempt - 1, jitter_rng));

    httplib::Result result = client.Post(path, headers, payload, "application/json");
    if (!result) {
      last_failure = "transport: " + httplib::to_string(result.error());
      continue;  // retryable
    }
    if (result->status < 200 || result->status >= 300) {
      last_failure = "http " + std::to_string(result->status);
      if (retryable_status(result->status)) continue;
      return ResponseOutcome::failure(last_failure);
    }
    try {
      const json reply = json::parse(result->body);
      const json& choices = reply.at("choices");
      if (!choices.is_array() || choices.empty())
        return ResponseOutcome::failure("malformed response: no choices");
      std::string text =
          choices.at(0).at("message").at("content").get<std::string>();
      if (text.empty()) return ResponseOutcome::failure("empty response");
      return ResponseOutcome::success(std::move(text));
    } catch (const std::exception& e) {
      return ResponseOutcome::failure(std::string("malformed response: ") + e.what());
    }
  }
  return ResponseOutcome::failure(last_failure);
}

// ---- batching ---------------------------------------------------------------

std::vector<InteractionRecord> batch_generate(std::span<const PlannedInteraction> plan,
                                              const SourceFn& source,
                                              int concurrency_limit,
                                              const BatchOptions& options) {
  if (plan.empty()) throw std::invalid_argument("batch_generate: empty plan");
  if (concurrency_limit < 1)
    throw std::invalid_argument("batch_generate: concurrency_limit must be >= 1");

  const auto stamp = options.timestamp
                         ? options.timestamp
                         : [] { return std::string(kEpochTimestamp); };

  std::vector<InteractionRecord> records(plan.size());
  auto run_one = [&](std::size_t i) {
    const PlannedInteraction& planned = plan[i];
    InteractionRecord& record = records[i];
    record.run_seed = planned.run_seed;
    record.setting = planned.item.tmpl.setting;
    record.model_id = options.model_id;
    record.template_id = planned.item.tmpl.id;
    record.institution = planned.item.institution.name;
    record.identity = planned.item.identity;
    record.created_at = stamp();

    ResponseOutcome outcome;
    try {
      const PromptPair pair = build_prompt_pair(planned.item.tmpl,
                                                planned.item.institution,
                                                planned.item.identity, options.style);
      record.system_text = pair.system_text;
      record.user_text = pair.user_text;
      outcome = source(pair, planned, i);
    } catch (const std::exception& e) {
      outcome = ResponseOutcome::failure(std::string("generation error: ") + e.what());
    }
    record.status = outcome.status;
    record.response_text = std::move(outcome.text);
    record.failure_reason = std::move(outcome.failure_reason);
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(concurrency_limit), plan.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < plan.size(); ++i) run_one(i);
    return records;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < plan.size(); i = next.fetch_add(1))
        run_one(i);
    });
  }
  for (std::thread& t : threads) t.join();
  return records;
}

}  // namespace refaudit
