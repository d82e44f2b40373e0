#pragma once

// Deterministic household world: scenario fixtures, perception stand-in,
// and symbolic execution of task plans as move events.

#include "homeagent/gateway.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace homeagent::sim {

struct GoldEntry {
    Destination destination = Destination::stationary;  // stationary for objects that stay
    std::vector<Destination> lenient;                   // reasonable alternatives
    bool stationary = false;
    std::string rationale;
};

struct Scenario {
    std::string id;     // dining_table | living_room | desk
    std::string title;  // column heading in reports
    std::string cleanup_zone;
    std::vector<std::string> objects;  // perceived list, in observation order
    std::string command;
    std::map<std::string, GoldEntry> gold;

    const GoldEntry& gold_for(const std::string& object) const {
        auto it = gold.find(object);
        if (it == gold.end()) throw FixtureError("scenario " + id + " has no gold entry for " + object);
        return it->second;
    }
};

// Returns every violated scenario invariant (empty when valid).
inline std::vector<std::string> check_scenario(const Scenario& s) {
    std::vector<std::string> problems;
    if (s.id.empty()) problems.push_back("scenario without id");
    if (s.cleanup_zone.empty()) problems.push_back(s.id + ": empty cleanup_zone");
    if (trim(s.command).empty()) problems.push_back(s.id + ": empty command");
    if (s.objects.empty()) problems.push_back(s.id + ": no objects");
    try {
        (void)make_observations(s.objects);
    } catch (const Error& e) {
        problems.push_back(s.id + ": " + e.what());
    }
    for (const auto& o : s.objects) {
        if (!s.gold.contains(o)) problems.push_back(s.id + ": no gold entry for observed object " + o);
    }
    for (const auto& [name, g] : s.gold) {
        if (std::find(s.objects.begin(), s.objects.end(), name) == s.objects.end()) {
            problems.push_back(s.id + ": gold entry for unobserved object " + name);
        }
        if (g.stationary && g.destination != Destination::stationary) {
            problems.push_back(s.id + ": stationary object " + name + " has a destination");
        }
        if (!g.stationary && g.destination == Destination::stationary) {
            problems.push_back(s.id + ": movable object " + name + " has destination 'stationary'");
        }
        if (g.stationary && !g.lenient.empty()) {
            problems.push_back(s.id + ": stationary object " + name + " has a lenient set");
        }
        if (std::find(g.lenient.begin(), g.lenient.end(), g.destination) != g.lenient.end()) {
            problems.push_back(s.id + ": lenient set of " + name + " repeats the gold destination");
        }
        if (g.rationale.empty()) problems.push_back(s.id + ": gold entry for " + name + " lacks a rationale");
    }
    return problems;
}

inline Scenario parse_scenario(const json& doc) {
    try {
        Scenario s;
        s.id = doc.at("id").get<std::string>();
        s.title = doc.value("title", s.id);
        s.cleanup_zone = doc.at("cleanup_zone").get<std::string>();
        s.objects = doc.at("objects").get<std::vector<std::string>>();
        s.command = doc.at("command").get<std::string>();
        for (const auto& [name, g] : doc.at("gold").items()) {
            GoldEntry e;
            e.stationary = g.value("stationary", false);
            e.destination = g.contains("destination") && !g["destination"].is_null()
                                ? parse_destination(g["destination"].get<std::string>())
                                : Destination::stationary;
            for (const auto& l : g.value("lenient", json::array())) e.lenient.push_back(parse_destination(l.get<std::string>()));
            e.rationale = g.value("rationale", std::string());
            s.gold.emplace(name, std::move(e));
        }
        return s;
    } catch (const json::exception& e) {
        throw FixtureError(std::string("scenario document: ") + e.what());
    }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    auto s = parse_scenario(gateway::read_json_file(path.string()));
    auto problems = check_scenario(s);
    if (!problems.empty()) throw FixtureError(path.string() + ": " + problems.front());
    return s;
}

inline constexpr std::array<std::string_view, 3> kScenarioIds{"dining_table", "living_room", "desk"};

// The three scenarios in their canonical order.
class ScenarioLibrary {
public:
    static ScenarioLibrary load_dir(const std::filesystem::path& dir) {
        ScenarioLibrary lib;
        for (auto id : kScenarioIds) lib.scenarios_.push_back(load_scenario(dir / (std::string(id) + ".json")));
        return lib;
    }

    const Scenario& get(std::string_view id) const {
        for (const auto& s : scenarios_) {
            if (s.id == id) return s;
        }
        throw UnknownScenario(std::string(id));
    }

    const std::vector<Scenario>& all() const { return scenarios_; }

private:
    std::vector<Scenario> scenarios_;
};

inline std::vector<ObjectObservation> observe(const Scenario& scenario) { return make_observations(scenario.objects); }

inline std::vector<ObjectObservation> observe(const ScenarioLibrary& lib, std::string_view id) {
    return observe(lib.get(id));
}

inline WorldState initial_world(const Scenario& scenario) {
    WorldState w;
    for (const auto& o : scenario.objects) w.placements.emplace(o, scenario.cleanup_zone);
    return w;
}

// ---------------------------------------------------------------------------

enum class SkipReason { object_not_present, already_at_destination };

inline std::string_view skip_reason_name(SkipReason r) {
    return r == SkipReason::object_not_present ? "ObjectNotPresent" : "AlreadyAtDestination";
}

struct ExecutedMove {
    std::string object;
    std::string from;
    Destination destination;
    Destination spoken;  // what the user is told; differs only under error injection
};

struct SkippedMove {
    std::string object;
    Destination destination;
    SkipReason reason;
};

// One entry per object assignment in the plan:
// executed.size() + skipped.size() == total objects across plan steps.
struct ExecutionOutcome {
    std::vector<ExecutedMove> executed;
    std::vector<SkippedMove> skipped;
    WorldState state;
};

using SpokenOverride = std::map<std::string, Destination>;  // keyed by folded object name

inline ExecutionOutcome execute(const TaskPlan& plan, const WorldState& state, const SpokenOverride& spoken_override,
                                Timestamp at) {
    ExecutionOutcome out;
    std::vector<MoveEvent> events;
    WorldState working = state;
    for (const auto& step : plan.steps) {
        for (const auto& name : step.objects) {
            auto it = working.placements.find(name);
            if (it == working.placements.end()) {
                const auto key = fold_name(name);
                it = std::find_if(working.placements.begin(), working.placements.end(),
                                  [&](const auto& p) { return fold_name(p.first) == key; });
            }
            if (it == working.placements.end()) {
                out.skipped.push_back({name, step.destination, SkipReason::object_not_present});
                continue;
            }
            const std::string to = destination_location(step.destination);
            if (it->second == to) {
                out.skipped.push_back({it->first, step.destination, SkipReason::already_at_destination});
                continue;
            }
            Destination spoken = step.destination;
            if (auto o = spoken_override.find(fold_name(it->first)); o != spoken_override.end()) spoken = o->second;
            out.executed.push_back({it->first, it->second, step.destination, spoken});
            events.push_back({at, it->first, it->second, to});
            it->second = to;
        }
    }
    out.state = replay(state, events);
    return out;
}

inline void to_json(json& j, const ExecutionOutcome& o) {
    json executed = json::array();
    for (const auto& m : o.executed) {
        executed.push_back({{"object", m.object},
                            {"from", m.from},
                            {"destination", m.destination},
                            {"spoken_destination", m.spoken}});
    }
    json skipped = json::array();
    for (const auto& s : o.skipped) {
        skipped.push_back({{"object", s.object}, {"destination", s.destination}, {"reason", skip_reason_name(s.reason)}});
    }
    j = json{{"executed", executed}, {"skipped", skipped}};
}

}  // namespace homeagent::sim
