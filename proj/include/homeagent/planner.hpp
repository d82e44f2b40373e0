#pragma once

// Task planning agent: prompt construction from the observed object list,
// and extraction/validation of the JSON plan contained in the reply.
//
// Plan schema (pack-v1): {"tasks": [{"objects": ["Plate", ...], "destination": "Sink"}]}

#include "homeagent/gateway.hpp"
#include "homeagent/prompt_pack.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace homeagent::planner {

struct PlanExtraction {
    TaskPlan plan;
    std::vector<std::string> warnings;
};

inline std::vector<gateway::ChatMessage> build_prompt(const std::vector<ObjectObservation>& objects,
                                                      const UserRequest& request, const PlannerPromptConfig& config) {
    if (objects.empty()) throw PreconditionViolation("planner needs at least one observed object");
    if (trim(request.text).empty()) throw PreconditionViolation("request text is empty");
    std::string user = "Observed objects:\n";
    for (std::size_t i = 0; i < objects.size(); ++i) {
        user += std::to_string(i + 1) + ". " + objects[i].name + "\n";
    }
    user += "\nUser request: " + request.text;
    return {gateway::system_message(config.system_prompt + "\n\n" + config.format_instruction),
            gateway::user_message(std::move(user))};
}

namespace detail {

inline std::optional<json> parse_container(std::string_view text) {
    json doc = json::parse(text.begin(), text.end(), nullptr, false);
    if (doc.is_discarded() || !(doc.is_object() || doc.is_array())) return std::nullopt;
    return doc;
}

// Bodies of ``` fenced blocks, in order. An unterminated fence is ignored.
inline std::optional<json> first_fenced_document(std::string_view text) {
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find("```", pos);
        if (open == std::string_view::npos) return std::nullopt;
        auto body_start = text.find('\n', open + 3);
        if (body_start == std::string_view::npos) return std::nullopt;
        ++body_start;
        const auto close = text.find("```", body_start);
        if (close == std::string_view::npos) return std::nullopt;
        if (auto doc = parse_container(text.substr(body_start, close - body_start))) return doc;
        pos = close + 3;
    }
}

// Single left-to-right scan over top-level balanced {...} spans. Each span is
// parsed at most once and spans are disjoint, so the work is linear.
inline std::optional<json> first_braced_document(std::string_view text) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (depth == 0) {
            if (c == '{') {
                depth = 1;
                start = i;
                in_string = false;
                escaped = false;
            }
            continue;
        }
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) {
            if (auto doc = parse_container(text.substr(start, i - start + 1))) return doc;
        }
    }
    return std::nullopt;
}

}  // namespace detail

// First well-formed JSON document: fenced blocks take priority over bare braces.
inline std::optional<json> find_json_document(std::string_view text) {
    if (auto doc = detail::first_fenced_document(text)) return doc;
    return detail::first_braced_document(text);
}

inline PlanExtraction extract_plan(const gateway::ChatMessage& reply, const std::vector<ObjectObservation>& objects) {
    if (reply.role != gateway::Role::assistant) throw PreconditionViolation("extract_plan needs an assistant reply");
    auto doc = find_json_document(reply.content);
    if (!doc) throw NoJsonFound();

    json tasks;
    if (doc->is_object() && doc->contains("tasks")) {
        tasks = (*doc)["tasks"];
    } else if (doc->is_object() && doc->contains("objects") && doc->contains("destination")) {
        tasks = json::array({*doc});  // a single bare action
    } else {
        throw MalformedPlan("plan document has no \"tasks\" field");
    }
    if (!tasks.is_array()) throw MalformedPlan("\"tasks\" is not an array");

    struct RawStep {
        std::vector<std::string> objects;
        std::string destination;
    };
    std::vector<RawStep> raw;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = tasks[i];
        const std::string where = "task " + std::to_string(i);
        if (!t.is_object()) throw MalformedPlan(where + " is not an object");
        if (!t.contains("objects")) throw MalformedPlan(where + " has no \"objects\" field");
        if (!t.contains("destination") || !t["destination"].is_string()) {
            throw MalformedPlan(where + " has no string \"destination\" field");
        }
        RawStep step;
        const auto& objs = t["objects"];
        if (objs.is_string()) {
            step.objects.push_back(objs.get<std::string>());
        } else if (objs.is_array()) {
            for (const auto& o : objs) {
                if (!o.is_string()) throw MalformedPlan(where + " lists a non-string object");
                step.objects.push_back(o.get<std::string>());
            }
        } else {
            throw MalformedPlan(where + " \"objects\" is neither a list nor a string");
        }
        step.destination = t["destination"].get<std::string>();
        raw.push_back(std::move(step));
    }

    PlanExtraction out;
    out.plan.raw_agent_text = reply.content;
    std::vector<std::string> assigned;
    for (const auto& step : raw) {
        const Destination dest = parse_destination(step.destination);
        TaskStep kept{{}, dest};
        for (const auto& name : step.objects) {
            const auto key = fold_name(name);
            auto obs = std::find_if(objects.begin(), objects.end(),
                                    [&](const ObjectObservation& o) { return fold_name(o.name) == key; });
            if (obs == objects.end()) {
                out.warnings.push_back("unknown object '" + name + "' dropped");
                continue;
            }
            if (std::find(assigned.begin(), assigned.end(), key) != assigned.end()) {
                out.warnings.push_back("object '" + obs->name + "' assigned more than once; first assignment kept");
                continue;
            }
            assigned.push_back(key);
            if (dest != Destination::stationary) kept.objects.push_back(obs->name);
        }
        if (dest == Destination::stationary) {
            out.warnings.push_back("explicit 'stationary' assignment treated as no task");
            continue;
        }
        if (kept.objects.empty()) {
            out.warnings.push_back("step to " + std::string(destination_id(dest)) + " has no valid objects; dropped");
            continue;
        }
        out.plan.steps.push_back(std::move(kept));
    }
    return out;
}

struct PlanOutcome {
    PlanExtraction extraction;
    int retries = 0;
    std::vector<gateway::ChatMessage> transcript;
};

// build_prompt -> chat -> extract_plan, with one corrective retry when the
// reply holds no JSON at all. Any terminal failure becomes PlanningFailed.
inline PlanOutcome plan(const UserRequest& request, const std::vector<ObjectObservation>& objects,
                        const PlannerPromptConfig& config, gateway::Model& model) {
    auto messages = build_prompt(objects, request, config);
    auto first = gateway::chat(*model.backend, messages);
    messages.push_back(first);
    try {
        return {extract_plan(first, objects), 0, messages};
    } catch (const NoJsonFound&) {
        // fall through to the corrective retry
    } catch (const Error& e) {
        throw PlanningFailed(e.code(), e.what(), first.content, "");
    }

    messages.push_back(gateway::user_message(config.corrective_instruction));
    auto second = gateway::chat(*model.backend, messages);
    messages.push_back(second);
    try {
        return {extract_plan(second, objects), 1, messages};
    } catch (const Error& e) {
        throw PlanningFailed(e.code(), e.what(), first.content, second.content);
    }
}

}  // namespace homeagent::planner
