#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refaudit/corpus.hpp"
#include "refaudit/demographics.hpp"
#include "refaudit/query_builder.hpp"
#include "refaudit/rng.hpp"

namespace refaudit {

// Knobs for the chat-completions client. The bearer token is read from the
// environment variable named here at request time; it is sent in the
// Authorization header and nowhere else (never logged, never persisted).
struct GenerationConfig {
  std::string model_id;
  std::string endpoint_url;  // e.g. "http://127.0.0.1:8080/v1"
  double temperature = 0.7;
  int max_tokens = 4096;
  std::optional<std::uint64_t> request_seed;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{1000};
  double backoff_factor = 2.0;
  double backoff_jitter = 0.2;  // +-20%
  std::string bearer_token_env = "REFAUDIT_API_TOKEN";
};

struct ResponseOutcome {
  ResponseStatus status = ResponseStatus::failed;
  std::string text;            // non-empty iff ok
  std::string failure_reason;  // non-empty iff failed

  static ResponseOutcome success(std::string text);
  static ResponseOutcome failure(std::string reason);
};

// Issues one chat-completion request for the pair (system message separate
// or already prepended per pair.style), retrying transport errors and
// retryable HTTP statuses (5xx, 429) with exponential backoff. Returns the
// first choice's message text.
ResponseOutcome generate_remote(const PromptPair& pair, const GenerationConfig& cfg);

// Identity-blind reply bodies per query template. Bodies may contain
// [option a|option b] choice groups, expanded one uniform draw per group in
// order of appearance.
struct ReplyPool {
  std::array<std::vector<std::string>, 6> variants;  // indexed by TemplateId

  std::span<const std::string> for_template(TemplateId id) const {
    return variants[static_cast<int>(id)];
  }
};

const ReplyPool& builtin_reply_pool();

// Expands the choice groups of one variant body.
std::string render_reply(const std::string& variant_body, RngEngine& rng);

// Synthetic bias injection: with probability rate_by_group[group] the reply
// opens with "Dear {FirstName}," (the marker salutation), otherwise with the
// fixed neutral "Hello,".
struct SyntheticBiasSpec {
  std::string marker = "dear";
  std::array<double, kNumGroups> rate_by_group{};
  const ReplyPool* base_pool = nullptr;  // nullptr -> builtin_reply_pool()

  static SyntheticBiasSpec by_sex(double female_rate, double male_rate,
                                  std::string marker = "dear");
  static SyntheticBiasSpec uniform(double rate, std::string marker = "dear");

  // Throws std::invalid_argument if any rate is outside [0, 1] or the
  // marker is empty.
  void validate() const;
};

// Equitable-by-construction reply: base variant + filler variation, all
// drawn from rng; the identity and prompt are deliberately ignored so
// output is a function of (rng state, template_id) only.
ResponseOutcome generate_null(const PromptPair& pair, const PatronIdentity& identity,
                              TemplateId template_id, RngEngine& rng,
                              const ReplyPool* pool = nullptr);

// As generate_null, but the opening line carries the marker salutation with
// the configured per-group probability.
ResponseOutcome generate_injected(const PromptPair& pair,
                                  const PatronIdentity& identity,
                                  const SyntheticBiasSpec& spec,
                                  TemplateId template_id, RngEngine& rng);

// How batch_generate stamps and attributes the records it assembles.
struct BatchOptions {
  std::string model_id = "synthetic-null";
  PromptStyle style = PromptStyle::separate_system;
  // Stamp for created_at. Default: fixed epoch timestamp (deterministic
  // sources). Remote callers pass utc_timestamp_now.
  std::function<std::string()> timestamp;
};

// Produces exactly one record per planned interaction, in plan order, with
// at most concurrency_limit source calls in flight. Source exceptions and
// failures become failed records; nothing is dropped. Throws
// std::invalid_argument on an empty plan.
using SourceFn = std::function<ResponseOutcome(const PromptPair& pair,
                                               const PlannedInteraction& planned,
                                               std::size_t index)>;

std::vector<InteractionRecord> batch_generate(std::span<const PlannedInteraction> plan,
                                              const SourceFn& source,
                                              int concurrency_limit,
                                              const BatchOptions& options = {});

}  // namespace refaudit
