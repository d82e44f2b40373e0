#pragma once

// Session loop: router -> planner or historian -> simulator -> memory.

#include "homeagent/historian.hpp"
#include "homeagent/planner.hpp"
#include "homeagent/router.hpp"
#include "homeagent/simulator.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>

namespace homeagent {

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() = 0;
    virtual std::chrono::milliseconds monotonic() = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() override { return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()); }
    std::chrono::milliseconds monotonic() override {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch());
    }
};

// Deterministic clock for replays: every now() advances by `step`, and no
// time passes between stages.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp start, std::chrono::seconds step = std::chrono::seconds(60))
        : next_(start), step_(step) {}

    Timestamp now() override {
        std::lock_guard lock(mutex_);
        const auto t = next_;
        next_ += step_;
        return t;
    }

    std::chrono::milliseconds monotonic() override { return std::chrono::milliseconds(0); }

private:
    std::mutex mutex_;
    Timestamp next_;
    std::chrono::seconds step_;
};

}  // namespace homeagent

namespace homeagent::orchestrator {

struct Agents {
    PromptPack prompts;
    gateway::Model router;
    gateway::Model planner;
    gateway::Model historian;
    std::shared_ptr<gateway::Backend> embedder;
};

struct SessionConfig {
    std::string scenario_id = "dining_table";
    std::size_t k = memory::kDefaultTopK;
    sim::SpokenOverride spoken_overrides;  // error injection: object -> destination told to the user
};

// {"scenario": id, "k": n, "spoken_overrides": {"Jacket": "storage_box"}}
inline SessionConfig parse_session_config(const json& j) {
    SessionConfig c;
    if (!j.is_object()) throw PreconditionViolation("session config must be a JSON object");
    try {
        c.scenario_id = j.value("scenario", c.scenario_id);
        const auto k = j.value("k", static_cast<long long>(c.k));
        if (k < 1) throw PreconditionViolation("k must be >= 1");
        c.k = static_cast<std::size_t>(k);
        const json overrides = j.value("spoken_overrides", json::object());
        for (const auto& [object, dest] : overrides.items()) {
            c.spoken_overrides[fold_name(object)] = parse_destination(dest.get<std::string>());
        }
    } catch (const json::exception& e) {
        throw PreconditionViolation(std::string("session config: ") + e.what());
    }
    return c;
}

inline json to_json_config(const SessionConfig& c) {
    json overrides = json::object();
    for (const auto& [object, dest] : c.spoken_overrides) overrides[object] = destination_id(dest);
    return json{{"scenario", c.scenario_id}, {"k", c.k}, {"spoken_overrides", overrides}};
}

struct Session {
    std::string id;
    SessionConfig config;
    sim::Scenario scenario;
    WorldState world;
    std::unique_ptr<memory::MemoryStore> memory = std::make_unique<memory::MemoryStore>();
    std::vector<memory::DialogueEntry> history;  // entry_ids dense from 1
    std::set<std::string> visited;               // scenarios already perceived
};

inline Session make_session(std::string id, const sim::ScenarioLibrary& library, SessionConfig config) {
    Session s;
    s.id = std::move(id);
    s.scenario = library.get(config.scenario_id);
    s.world = sim::initial_world(s.scenario);
    s.visited.insert(s.scenario.id);
    s.config = std::move(config);
    return s;
}

// Switches the active scenario. The first visit perceives the room afresh, so
// a same-named object seen elsewhere (a second plate) is placed in this room;
// later visits keep whatever the robot already moved.
inline void enter_scenario(Session& session, const sim::ScenarioLibrary& library, std::string_view id) {
    session.scenario = library.get(id);
    session.config.scenario_id = std::string(id);
    if (session.visited.insert(session.scenario.id).second) {
        for (const auto& o : session.scenario.objects) session.world.placements[o] = session.scenario.cleanup_zone;
    }
}

struct AgentTranscript {
    std::string agent;
    std::vector<gateway::ChatMessage> messages;
};

struct PlanSummary {
    TaskPlan plan;
    std::vector<std::string> warnings;
    int retries = 0;
};

struct TurnError {
    std::string stage;
    std::string code;
    std::string message;
};

struct TurnRecord {
    int turn_id = 0;
    UserRequest request;
    RouteDecision route;
    std::vector<AgentTranscript> transcripts;
    std::optional<PlanSummary> plan;
    std::optional<historian::HistorianAnswer> answer;
    std::optional<std::string> clarification;
    std::optional<sim::ExecutionOutcome> execution;
    std::vector<MoveEvent> events;
    std::string narration;
    std::optional<memory::DialogueEntry> memory_entry;
    std::vector<std::string> notes;
    std::optional<TurnError> error;
    std::map<std::string, long long> latency_ms;
};

// One sentence per executed or skipped move, using the destination the user
// is told about.
inline std::string narrate_outcome(const sim::ExecutionOutcome& outcome) {
    if (outcome.executed.empty() && outcome.skipped.empty()) return "No actions were performed.";
    std::string out;
    auto add = [&out](const std::string& sentence) {
        if (!out.empty()) out += ' ';
        out += sentence;
    };
    for (const auto& m : outcome.executed) {
        if (m.spoken == Destination::user_handover) {
            add("Handed " + m.object + " to you.");
        } else {
            add("Moved " + m.object + " to " + std::string(destination_phrase(m.spoken)) + ".");
        }
    }
    for (const auto& s : outcome.skipped) {
        if (s.reason == sim::SkipReason::object_not_present) {
            add("Could not move " + s.object + ": object not present.");
        } else {
            add("Left " + s.object + " at " + std::string(destination_phrase(s.destination)) + ": already there.");
        }
    }
    return out;
}

using StageListener = std::function<void(std::string_view stage, const json& detail)>;

class Orchestrator {
public:
    Orchestrator(Agents agents, sim::ScenarioLibrary library, std::shared_ptr<Clock> clock)
        : agents_(std::move(agents)), library_(std::move(library)), clock_(std::move(clock)) {}

    const sim::ScenarioLibrary& library() const { return library_; }
    const Agents& agents() const { return agents_; }

    Session new_session(std::string id, SessionConfig config) const {
        return make_session(std::move(id), library_, std::move(config));
    }

    TurnRecord handle_turn(Session& session, const std::string& text, const StageListener& listener = {}) {
        auto emit = [&](std::string_view stage, const json& detail) {
            if (listener) listener(stage, detail);
        };
        TurnRecord rec;
        rec.turn_id = static_cast<int>(session.history.size()) + 1;
        rec.request = make_request(text, session.id, clock_->now());
        auto stage_start = clock_->monotonic();
        auto lap = [&](const std::string& stage) {
            const auto t = clock_->monotonic();
            rec.latency_ms[stage] = (t - stage_start).count();
            stage_start = t;
        };
        auto fail = [&](std::string stage, const Error& e) {
            rec.error = TurnError{std::move(stage), e.code(), e.what()};
            emit("failed", json{{"stage", rec.error->stage}, {"code", rec.error->code}});
            return rec;
        };

        // route
        try {
            auto routed = router::route_with_transcript(rec.request, agents_.prompts.router, agents_.router);
            rec.route = routed.decision;
            rec.transcripts.push_back({"router", std::move(routed.transcript)});
        } catch (const RoutingUndecidable& e) {
            rec.route = RouteDecision{RouteCategory::unclear, agents_.prompts.router.default_clarification,
                                      RouteVia::undecidable};
            rec.notes.push_back(std::string("routing_undecidable: ") + e.what());
        } catch (const Error& e) {
            return fail("route", e);
        }
        lap("route");
        emit("routed", rec.route);

        std::string memory_answer;
        switch (rec.route.category) {
            case RouteCategory::action_command: {
                planner::PlanOutcome planned;
                try {
                    planned = planner::plan(rec.request, sim::observe(session.scenario), agents_.prompts.planner,
                                            agents_.planner);
                } catch (const PlanningFailed& e) {
                    rec.transcripts.push_back({"planner", {gateway::assistant_message(e.first_reply)}});
                    if (!e.retry_reply.empty()) {
                        rec.transcripts.back().messages.push_back(gateway::assistant_message(e.retry_reply));
                    }
                    return fail("plan", e);
                } catch (const Error& e) {
                    return fail("plan", e);
                }
                rec.transcripts.push_back({"planner", std::move(planned.transcript)});
                rec.plan = PlanSummary{planned.extraction.plan, planned.extraction.warnings, planned.retries};
                if (rec.plan->plan.steps.empty()) rec.notes.push_back("empty_plan");
                lap("plan");
                emit("planned", plan_to_schema(rec.plan->plan));

                auto outcome = sim::execute(rec.plan->plan, session.world, session.config.spoken_overrides,
                                            clock_->now());
                rec.events.assign(outcome.state.event_log.begin() +
                                      static_cast<std::ptrdiff_t>(session.world.event_log.size()),
                                  outcome.state.event_log.end());
                session.world = outcome.state;
                rec.narration = narrate_outcome(outcome);
                rec.execution = std::move(outcome);
                lap("execute");
                emit("executed", json{{"moves", rec.events.size()}});
                memory_answer = rec.narration;
                break;
            }
            case RouteCategory::history_query: {
                try {
                    rec.answer = historian::answer(rec.request, session.config.k, *session.memory,
                                                   agents_.prompts.historian, agents_.historian, *agents_.embedder);
                } catch (const Error& e) {
                    return fail("answer", e);
                }
                rec.transcripts.push_back({"historian", rec.answer->transcript});
                rec.narration = rec.answer->text;
                lap("answer");
                emit("answered", json{{"evidence", rec.answer->provenance.hits.size()}});
                memory_answer = rec.answer->text;
                break;
            }
            case RouteCategory::unclear:
                rec.clarification = rec.route.clarification_prompt;
                rec.narration = rec.route.clarification_prompt;
                memory_answer = rec.route.clarification_prompt;
                break;
        }

        if (trim(memory_answer).empty()) memory_answer = "(no answer)";
        memory::DialogueEntry entry{static_cast<long long>(session.history.size()) + 1, rec.request.received_at,
                                    rec.request.text, memory_answer};
        try {
            session.memory->ingest({entry}, *agents_.embedder);
        } catch (const Error& e) {
            return fail("memorize", e);
        }
        session.history.push_back(entry);
        rec.memory_entry = entry;
        lap("memorize");
        emit("memorized", json{{"entry_id", entry.entry_id}});
        return rec;
    }

private:
    Agents agents_;
    sim::ScenarioLibrary library_;
    std::shared_ptr<Clock> clock_;
};

// ---------------------------------------------------------------------------

inline json to_json(const TurnRecord& r) {
    json j{{"turn_id", r.turn_id}, {"request", r.request}, {"route", r.route}};
    json transcripts = json::array();
    for (const auto& t : r.transcripts) transcripts.push_back({{"agent", t.agent}, {"messages", t.messages}});
    j["transcripts"] = transcripts;
    if (r.plan) {
        j["plan"] = {{"tasks", plan_to_schema(r.plan->plan)["tasks"]},
                     {"raw_agent_text", r.plan->plan.raw_agent_text},
                     {"warnings", r.plan->warnings},
                     {"retries", r.plan->retries}};
    } else {
        j["plan"] = nullptr;
    }
    if (r.answer) {
        j["answer"] = {{"text", r.answer->text},
                       {"k_requested", r.answer->provenance.k_requested},
                       {"evidence", r.answer->provenance.hits}};
    } else {
        j["answer"] = nullptr;
    }
    j["clarification"] = r.clarification ? json(*r.clarification) : json(nullptr);
    j["execution"] = r.execution ? json(*r.execution) : json(nullptr);
    j["events"] = r.events;
    j["narration"] = r.narration;
    j["memory_entry"] = r.memory_entry ? json(*r.memory_entry) : json(nullptr);
    j["notes"] = r.notes;
    j["error"] = r.error ? json{{"stage", r.error->stage}, {"code", r.error->code}, {"message", r.error->message}}
                         : json(nullptr);
    j["latency_ms"] = r.latency_ms;
    return j;
}

}  // namespace homeagent::orchestrator
