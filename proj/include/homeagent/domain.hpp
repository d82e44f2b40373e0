#pragma once

// Core vocabulary shared by every module: objects, destinations, plans,
// requests, routing decisions and the simulated world.

#include "homeagent/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace homeagent {

using json = nlohmann::json;
using Timestamp = std::chrono::sys_seconds;

// ---------------------------------------------------------------------------
// text helpers

inline std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Key used for object-name identity: trimmed and case-folded.
inline std::string fold_name(std::string_view s) { return to_lower(trim(s)); }

// ---------------------------------------------------------------------------
// timestamps (UTC, second resolution, ISO-8601 "YYYY-MM-DDTHH:MM:SSZ")

inline std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

inline Timestamp parse_iso8601(std::string_view text) {
    using namespace std::chrono;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char tail = 0;
    const std::string str(text);
    if (str.size() != 20 ||
        std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &tail) != 7 ||
        tail != 'Z') {
        throw PreconditionViolation("not an ISO-8601 UTC timestamp: '" + str + "'");
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59) {
        throw PreconditionViolation("timestamp out of range: '" + str + "'");
    }
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

// ---------------------------------------------------------------------------
// destinations

enum class Destination { sink, trash_can, fridge, food_shelf, storage_box, user_handover, stationary };

inline constexpr std::array<Destination, 7> kAllDestinations{
    Destination::sink,         Destination::trash_can,     Destination::fridge,    Destination::food_shelf,
    Destination::storage_box,  Destination::user_handover, Destination::stationary};

// The five physical placement locations shared by all scenarios.
inline constexpr std::array<Destination, 5> kPlacementDestinations{
    Destination::sink, Destination::trash_can, Destination::fridge, Destination::food_shelf,
    Destination::storage_box};

inline std::string_view destination_id(Destination d) {
    switch (d) {
        case Destination::sink: return "sink";
        case Destination::trash_can: return "trash_can";
        case Destination::fridge: return "fridge";
        case Destination::food_shelf: return "food_shelf";
        case Destination::storage_box: return "storage_box";
        case Destination::user_handover: return "user_handover";
        case Destination::stationary: return "stationary";
    }
    return "stationary";
}

// Natural-language definition handed to the planning agent.
inline std::string_view destination_description(Destination d) {
    switch (d) {
        case Destination::sink: return "Sink – For items that need washing.";
        case Destination::trash_can: return "Trash Can – For disposable or inedible items.";
        case Destination::fridge: return "Fridge – For perishable food.";
        case Destination::food_shelf: return "Food Shelf – For non-perishable food items.";
        case Destination::storage_box: return "Storage Box – For general storage.";
        case Destination::user_handover: return "User Handover – For items the user asks to be handed to them.";
        case Destination::stationary: return "Stationary – Objects that must stay where they are; give them no task.";
    }
    return "";
}

// Phrase used in narration ("Moved Plate to the sink.").
inline std::string_view destination_phrase(Destination d) {
    switch (d) {
        case Destination::sink: return "the sink";
        case Destination::trash_can: return "the trash can";
        case Destination::fridge: return "the fridge";
        case Destination::food_shelf: return "the food shelf";
        case Destination::storage_box: return "the storage box";
        case Destination::user_handover: return "you";
        case Destination::stationary: return "its current place";
    }
    return "";
}

// Location string an object ends up at after being moved to `d`.
inline std::string destination_location(Destination d) {
    if (d == Destination::user_handover) return "with_user";
    return std::string(destination_id(d));
}

namespace detail {

// lower-case, every run of non-alphanumerics collapsed to one space, trimmed,
// leading article removed
inline std::string normalize_destination_text(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isalnum(c) != 0 || c == '\'') {
            if (c == '\'') continue;
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_space = true;
        }
    }
    for (std::string_view article : {"the ", "a ", "an ", "to the ", "into the ", "in the ", "on the "}) {
        if (out.rfind(article, 0) == 0) {
            out.erase(0, article.size());
            break;
        }
    }
    return out;
}

struct Synonym {
    std::string_view text;
    Destination id;
};

inline constexpr std::array kDestinationSynonyms{
    Synonym{"sink", Destination::sink},
    Synonym{"kitchen sink", Destination::sink},
    Synonym{"trash can", Destination::trash_can},
    Synonym{"trashcan", Destination::trash_can},
    Synonym{"trash", Destination::trash_can},
    Synonym{"trash bin", Destination::trash_can},
    Synonym{"garbage", Destination::trash_can},
    Synonym{"garbage can", Destination::trash_can},
    Synonym{"garbage bin", Destination::trash_can},
    Synonym{"bin", Destination::trash_can},
    Synonym{"waste bin", Destination::trash_can},
    Synonym{"rubbish bin", Destination::trash_can},
    Synonym{"fridge", Destination::fridge},
    Synonym{"refrigerator", Destination::fridge},
    Synonym{"food shelf", Destination::food_shelf},
    Synonym{"foodshelf", Destination::food_shelf},
    Synonym{"pantry", Destination::food_shelf},
    Synonym{"storage box", Destination::storage_box},
    Synonym{"storagebox", Destination::storage_box},
    Synonym{"storage", Destination::storage_box},
    Synonym{"user handover", Destination::user_handover},
    Synonym{"user", Destination::user_handover},
    Synonym{"handover", Destination::user_handover},
    Synonym{"hand over", Destination::user_handover},
    Synonym{"hand to user", Destination::user_handover},
    Synonym{"with user", Destination::user_handover},
    Synonym{"stationary", Destination::stationary},
    Synonym{"no task", Destination::stationary},
    Synonym{"none", Destination::stationary},
    Synonym{"stay", Destination::stationary},
};

}  // namespace detail

inline Destination parse_destination(std::string_view text) {
    const std::string key = detail::normalize_destination_text(text);
    for (const auto& s : detail::kDestinationSynonyms) {
        if (s.text == key) return s.id;
    }
    throw UnknownDestination(std::string(text));
}

// ---------------------------------------------------------------------------
// observations, plans, requests

struct ObjectObservation {
    std::string name;
    int observation_index = 0;

    bool operator==(const ObjectObservation&) const = default;
};

// Checks the list invariants: non-empty names, unique after case-folding.
inline void validate_observations(const std::vector<ObjectObservation>& objects) {
    std::vector<std::string> seen;
    for (const auto& o : objects) {
        auto key = fold_name(o.name);
        if (key.empty()) throw PreconditionViolation("object name is empty");
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
            throw PreconditionViolation("duplicate object name: " + o.name);
        }
        seen.push_back(std::move(key));
    }
}

inline std::vector<ObjectObservation> make_observations(const std::vector<std::string>& names) {
    std::vector<ObjectObservation> out;
    out.reserve(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) out.push_back({names[i], static_cast<int>(i)});
    validate_observations(out);
    return out;
}

struct TaskStep {
    std::vector<std::string> objects;
    Destination destination = Destination::storage_box;

    bool operator==(const TaskStep&) const = default;
};

struct TaskPlan {
    std::vector<TaskStep> steps;
    std::string raw_agent_text;

    // Plans compare by their steps; the raw text is provenance only.
    bool same_steps(const TaskPlan& other) const { return steps == other.steps; }
};

// Returns a description of the first violated TaskPlan invariant, if any.
inline std::optional<std::string> check_plan_invariants(const TaskPlan& plan,
                                                        const std::vector<ObjectObservation>& objects) {
    std::vector<std::string> known;
    for (const auto& o : objects) known.push_back(fold_name(o.name));
    std::vector<std::string> used;
    for (const auto& step : plan.steps) {
        if (step.objects.empty()) return "step has no objects";
        if (step.destination == Destination::stationary) return "step targets 'stationary'";
        for (const auto& name : step.objects) {
            auto key = fold_name(name);
            if (std::find(known.begin(), known.end(), key) == known.end()) return "unobserved object: " + name;
            if (std::find(used.begin(), used.end(), key) != used.end()) return "object assigned twice: " + name;
            used.push_back(std::move(key));
        }
    }
    return std::nullopt;
}

struct UserRequest {
    std::string text;
    std::string session_id;
    Timestamp received_at{};
};

inline UserRequest make_request(std::string text, std::string session_id, Timestamp at) {
    if (trim(text).empty()) throw PreconditionViolation("request text is empty");
    return UserRequest{std::move(text), std::move(session_id), at};
}

enum class RouteCategory { action_command, history_query, unclear };

inline std::string_view category_name(RouteCategory c) {
    switch (c) {
        case RouteCategory::action_command: return "action_command";
        case RouteCategory::history_query: return "history_query";
        case RouteCategory::unclear: return "unclear";
    }
    return "unclear";
}

inline RouteCategory parse_category(std::string_view s) {
    if (s == "action_command") return RouteCategory::action_command;
    if (s == "history_query") return RouteCategory::history_query;
    if (s == "unclear") return RouteCategory::unclear;
    throw PreconditionViolation("unknown route category: " + std::string(s));
}

// How the router reached its decision.
enum class RouteVia { tool_call, keyword_fallback, undecidable };

inline std::string_view via_name(RouteVia v) {
    switch (v) {
        case RouteVia::tool_call: return "tool_call";
        case RouteVia::keyword_fallback: return "keyword_fallback";
        case RouteVia::undecidable: return "undecidable";
    }
    return "undecidable";
}

struct RouteDecision {
    RouteCategory category = RouteCategory::unclear;
    std::string clarification_prompt;  // non-empty iff category == unclear
    RouteVia via = RouteVia::tool_call;

    bool valid() const { return (category == RouteCategory::unclear) == !clarification_prompt.empty(); }
};

// ---------------------------------------------------------------------------
// world

struct MoveEvent {
    Timestamp at{};
    std::string object;
    std::string from;
    std::string to;

    bool operator==(const MoveEvent&) const = default;
};

struct WorldState {
    std::map<std::string, std::string> placements;  // object -> location
    std::vector<MoveEvent> event_log;

    bool operator==(const WorldState&) const = default;
};

// Applies `events` to `initial` as a left fold. The returned log is the
// initial log followed by `events`.
inline WorldState replay(const WorldState& initial, const std::vector<MoveEvent>& events) {
    WorldState state = initial;
    for (const auto& e : events) {
        if (!state.event_log.empty() && e.at < state.event_log.back().at) {
            throw PreconditionViolation("events not in chronological order at object " + e.object);
        }
        auto it = state.placements.find(e.object);
        if (it == state.placements.end()) {
            throw InconsistentEvent("event moves unknown object '" + e.object + "'");
        }
        if (it->second != e.from) {
            throw InconsistentEvent("event moves '" + e.object + "' from '" + e.from + "' but it is at '" +
                                    it->second + "'");
        }
        it->second = e.to;
        state.event_log.push_back(e);
    }
    return state;
}

// ---------------------------------------------------------------------------
// JSON encodings

inline void to_json(json& j, Destination d) { j = std::string(destination_id(d)); }
inline void from_json(const json& j, Destination& d) { d = parse_destination(j.get<std::string>()); }

inline void to_json(json& j, const TaskStep& s) { j = json{{"objects", s.objects}, {"destination", s.destination}}; }

inline json plan_to_schema(const TaskPlan& p) {
    json tasks = json::array();
    for (const auto& s : p.steps) tasks.push_back(s);
    return json{{"tasks", tasks}};
}

inline void to_json(json& j, const UserRequest& r) {
    j = json{{"text", r.text}, {"session_id", r.session_id}, {"received_at", format_iso8601(r.received_at)}};
}

inline void to_json(json& j, const RouteDecision& d) {
    j = json{{"category", category_name(d.category)}, {"via", via_name(d.via)}};
    j["clarification_prompt"] = d.category == RouteCategory::unclear ? json(d.clarification_prompt) : json(nullptr);
}

inline void to_json(json& j, const MoveEvent& e) {
    j = json{{"at", format_iso8601(e.at)}, {"object", e.object}, {"from", e.from}, {"to", e.to}};
}

inline void from_json(const json& j, MoveEvent& e) {
    e.at = parse_iso8601(j.at("at").get<std::string>());
    e.object = j.at("object").get<std::string>();
    e.from = j.at("from").get<std::string>();
    e.to = j.at("to").get<std::string>();
}

inline void to_json(json& j, const WorldState& w) {
    j = json{{"placements", w.placements}, {"event_log", w.event_log}};
}

}  // namespace homeagent
