#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace homeagent {

// Base for every recoverable error raised by the engine. `code()` is a stable
// machine-readable identifier, used in TurnRecords and API error bodies.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Caller broke an operation's precondition.
struct PreconditionViolation : Error {
    explicit PreconditionViolation(const std::string& m) : Error("precondition_violation", m) {}
};

struct UnknownDestination : Error {
    explicit UnknownDestination(std::string text)
        : Error("unknown_destination", "unknown destination: '" + text + "'"), text(std::move(text)) {}
    std::string text;
};

struct InconsistentEvent : Error {
    explicit InconsistentEvent(const std::string& m) : Error("inconsistent_event", m) {}
};

// --- gateway ---

struct TransportError : Error {
    explicit TransportError(const std::string& m) : Error("transport_error", m) {}
};

struct ProtocolError : Error {
    explicit ProtocolError(const std::string& m) : Error("protocol_error", m) {}
};

struct BackendRefusal : Error {
    BackendRefusal(int status, std::string body)
        : Error("backend_refusal", "backend answered HTTP " + std::to_string(status) + ": " + body),
          status(status), body(std::move(body)) {}
    int status;
    std::string body;
};

// --- agents ---

struct RoutingUndecidable : Error {
    explicit RoutingUndecidable(const std::string& m) : Error("routing_undecidable", m) {}
};

struct NoJsonFound : Error {
    NoJsonFound() : Error("no_json_found", "reply contains no well-formed JSON document") {}
};

struct MalformedPlan : Error {
    explicit MalformedPlan(const std::string& m) : Error("malformed_plan", m) {}
};

struct PlanningFailed : Error {
    PlanningFailed(std::string cause_code, const std::string& cause_message, std::string first_reply,
                   std::string retry_reply)
        : Error("planning_failed", "planning failed (" + cause_code + "): " + cause_message),
          cause_code(std::move(cause_code)), first_reply(std::move(first_reply)),
          retry_reply(std::move(retry_reply)) {}
    std::string cause_code;
    std::string first_reply;
    std::string retry_reply;  // empty when no retry happened
};

// --- memory ---

struct DuplicateEntry : Error {
    explicit DuplicateEntry(long long id)
        : Error("duplicate_entry", "memory already holds entry_id " + std::to_string(id)), entry_id(id) {}
    long long entry_id;
};

struct EmptyStore : Error {
    EmptyStore() : Error("empty_store", "memory store is empty") {}
};

struct StoreFormatError : Error {
    explicit StoreFormatError(const std::string& m) : Error("store_format_error", m) {}
};

// --- fixtures / simulator ---

struct UnknownScenario : Error {
    explicit UnknownScenario(const std::string& id) : Error("unknown_scenario", "unknown scenario: " + id) {}
};

struct FixtureError : Error {
    explicit FixtureError(const std::string& m) : Error("fixture_error", m) {}
};

}  // namespace homeagent
