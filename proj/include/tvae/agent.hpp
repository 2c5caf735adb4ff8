#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tvae/codec.hpp"
#include "tvae/failure_forge.hpp"
#include "tvae/prompt.hpp"
#include "tvae/trajectory.hpp"

namespace tvae {

inline constexpr int kWireSchemaVersion = 1;

enum class Capability { ConcurrentSafe, Serialized };

/// What the agent is shown on one turn.
struct Observation {
  std::string instruction;
  std::string screen_ref;
  std::optional<std::string> screen_asset_path;
  std::vector<HistoryEntry> history;
  std::optional<std::string> last_expected_effect;
  std::size_t step_budget_remaining = 0;
};

/// Wire form of an observation (without prompts).
nlohmann::json observation_to_json(const Observation& obs);
Observation observation_from_json(const nlohmann::json& j);

/// White-box information handed to scripted agents only. Remote agents never
/// receive ground truth.
struct ScriptContext {
  const StepRecord* gt = nullptr;
  /// Attempts on the current ground-truth step that did not advance.
  std::size_t failures_on_step = 0;
  std::uint64_t episode_seed = 0;
  std::size_t attempt = 0;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string identity() const = 0;
  virtual Capability capability() const = 0;
  /// One stateless turn: observation in, raw TVAE text out.
  /// Throws AgentUnavailable or Timeout.
  virtual std::string turn(const Observation& obs, const ScriptContext& ctx) = 0;
};

struct ScriptedVariant {
  enum class Kind { Oracle, Loopy, FailK, Bernoulli, OffsetThenCorrect };
  Kind kind = Kind::Oracle;
  std::size_t k = 1;  // FailK
  double p = 1.0;     // Bernoulli

  /// "oracle", "loopy", "failk:<k>", "bernoulli:<p>", "offset-then-correct".
  static ScriptedVariant parse(std::string_view text);
  std::string name() const;
};

/// Deterministic function of (variant, obs, ctx): identical inputs give identical text.
std::string scripted_turn(const ScriptedVariant& variant, const Observation& obs, const ScriptContext& ctx,
                          const ForgeConfig& forge = {});

/// A well-formed turn for `action`: success-path think when `verification`
/// is SUCCESS, diagnose/recovery think otherwise.
std::string compose_turn(const ActionRecord& action, Verification verification, std::string_view expected_effect,
                         bool first_turn);

class ScriptedAgent final : public Agent {
 public:
  explicit ScriptedAgent(ScriptedVariant variant, ForgeConfig forge = {})
      : variant_(variant), forge_(std::move(forge)) {}
  std::string identity() const override { return "scripted:" + variant_.name(); }
  Capability capability() const override { return Capability::ConcurrentSafe; }
  std::string turn(const Observation& obs, const ScriptContext& ctx) override {
    return scripted_turn(variant_, obs, ctx, forge_);
  }

 private:
  ScriptedVariant variant_;
  ForgeConfig forge_;
};

/// Bounds the number of concurrent calls.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t limit_;
  std::size_t in_flight_ = 0;
};

struct Endpoint {
  std::string host;
  int port = 80;
  std::string path = "/turn";
  std::optional<std::string> bearer_token;
  double timeout_seconds = 30.0;
  /// 1 means Serialized.
  std::size_t max_in_flight = 1;

  /// http://host[:port][/path]
  static Endpoint parse(std::string_view url);
  std::string url() const;
};

/// Request body: observation fields plus schema_version and the rendered prompts.
nlohmann::json wire_request(const Observation& obs, const PromptTemplates& templates);

/// POSTs one observation and returns the response body verbatim. Retries
/// once on a transport error. Throws AgentUnavailable or Timeout.
std::string remote_turn(const Endpoint& endpoint, const Observation& obs, const PromptTemplates& templates);

class RemoteAgent final : public Agent {
 public:
  RemoteAgent(Endpoint endpoint, PromptTemplates templates);
  std::string identity() const override { return "remote:" + endpoint_.url(); }
  Capability capability() const override {
    return endpoint_.max_in_flight > 1 ? Capability::ConcurrentSafe : Capability::Serialized;
  }
  std::string turn(const Observation& obs, const ScriptContext& ctx) override;

 private:
  Endpoint endpoint_;
  PromptTemplates templates_;
  InFlightLimiter limiter_;
};

inline constexpr std::string_view kStdioSentinel = "<<<END_TURN>>>";

/// Local subprocess agent: one JSON request line on stdin, the reply on
/// stdout terminated by a line holding kStdioSentinel.
class SubprocessAgent final : public Agent {
 public:
  SubprocessAgent(std::string command, PromptTemplates templates, double timeout_seconds = 30.0);
  ~SubprocessAgent() override;
  SubprocessAgent(const SubprocessAgent&) = delete;
  SubprocessAgent& operator=(const SubprocessAgent&) = delete;

  std::string identity() const override { return "stdio:" + command_; }
  Capability capability() const override { return Capability::Serialized; }
  std::string turn(const Observation& obs, const ScriptContext& ctx) override;

 private:
  void start();
  void stop() noexcept;

  std::string command_;
  PromptTemplates templates_;
  double timeout_seconds_;
  std::mutex mu_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
};

struct AgentOptions {
  PromptTemplates templates = PromptTemplates::defaults();
  ForgeConfig forge;
  std::optional<std::string> bearer_token;
  double timeout_seconds = 30.0;
  std::size_t max_in_flight = 1;
};

/// "scripted:<variant>", "remote:http://host:port/turn" or "stdio:<command>".
/// Throws std::invalid_argument for an unknown spec.
std::unique_ptr<Agent> make_agent(std::string_view spec, const AgentOptions& opts = {});

}  // namespace tvae
