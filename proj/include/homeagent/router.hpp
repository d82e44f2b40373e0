#pragma once

// Routing agent: classify a request as an action command, a question about
// history, or an unclear request that needs clarification.

#include "homeagent/gateway.hpp"
#include "homeagent/metrics.hpp"
#include "homeagent/prompt_pack.hpp"

#include <optional>
#include <span>
#include <utility>

namespace homeagent::router {

inline std::vector<gateway::ChatMessage> build_messages(const UserRequest& request, const RouterPromptConfig& config,
                                                        bool tool_calling) {
    std::string system = config.system_prompt;
    if (!tool_calling) system += "\n\n" + config.keyword_instruction;
    return {gateway::system_message(std::move(system)), gateway::user_message(request.text)};
}

inline std::optional<RouteCategory> category_for_tool(std::string_view name) {
    if (name == kToolPlanner) return RouteCategory::action_command;
    if (name == kToolKnowledge) return RouteCategory::history_query;
    if (name == kToolClarify) return RouteCategory::unclear;
    return std::nullopt;
}

// Keyword fallback for models without tool calling. Succeeds only when the
// text names exactly one of ACTION / HISTORY / UNCLEAR (case-insensitive,
// whole words). For UNCLEAR, text after the keyword becomes the prompt.
inline std::optional<RouteDecision> parse_keyword_reply(std::string_view text, const RouterPromptConfig& config) {
    std::optional<RouteCategory> found;
    std::size_t unclear_end = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isalpha(static_cast<unsigned char>(text[i])) == 0) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j])) != 0) ++j;
        const std::string word = to_lower(text.substr(i, j - i));
        std::optional<RouteCategory> cat;
        if (word == "action") cat = RouteCategory::action_command;
        else if (word == "history") cat = RouteCategory::history_query;
        else if (word == "unclear") cat = RouteCategory::unclear;
        if (cat) {
            if (found && *found != *cat) return std::nullopt;
            if (!found && *cat == RouteCategory::unclear) unclear_end = j;
            found = cat;
        }
        i = j;
    }
    if (!found) return std::nullopt;
    RouteDecision d{*found, {}, RouteVia::keyword_fallback};
    if (d.category == RouteCategory::unclear) {
        std::string rest = trim(text.substr(unclear_end));
        while (!rest.empty() && (rest.front() == ':' || rest.front() == '-' || rest.front() == '.')) rest = trim(rest.substr(1));
        d.clarification_prompt = rest.empty() ? config.default_clarification : rest;
    }
    return d;
}

// Maps a router reply to a decision; throws RoutingUndecidable when neither a
// known tool call nor a single category keyword is present.
inline RouteDecision interpret_reply(const gateway::ChatMessage& reply, const RouterPromptConfig& config) {
    for (const auto& call : reply.tool_calls) {
        auto cat = category_for_tool(call.name);
        if (!cat) continue;
        RouteDecision d{*cat, {}, RouteVia::tool_call};
        if (*cat == RouteCategory::unclear) {
            const auto q = call.arguments.is_object() ? call.arguments.find("question") : call.arguments.end();
            if (q != call.arguments.end() && q->is_string() && !trim(q->get<std::string>()).empty()) {
                d.clarification_prompt = trim(q->get<std::string>());
            } else {
                d.clarification_prompt = config.default_clarification;
            }
        }
        return d;
    }
    if (auto d = parse_keyword_reply(reply.content, config)) return *d;
    throw RoutingUndecidable("router reply carries neither a handoff tool call nor a category keyword");
}

struct RouteResult {
    RouteDecision decision;
    std::vector<gateway::ChatMessage> transcript;  // request messages + reply
};

inline RouteResult route_with_transcript(const UserRequest& request, const RouterPromptConfig& config,
                                         gateway::Model& model) {
    if (trim(request.text).empty()) throw PreconditionViolation("request text is empty");
    const bool tools_on = model.config.tool_calling;
    auto messages = build_messages(request, config, tools_on);
    const std::span<const gateway::ToolSpec> tools =
        tools_on ? std::span<const gateway::ToolSpec>(config.tools) : std::span<const gateway::ToolSpec>();
    auto reply = gateway::chat(*model.backend, messages, tools);
    messages.push_back(reply);
    return {interpret_reply(reply, config), std::move(messages)};
}

inline RouteDecision route(const UserRequest& request, const RouterPromptConfig& config, gateway::Model& model) {
    return route_with_transcript(request, config, model).decision;
}

// Percentage of correct routing decisions, counts preserved.
inline Ratio score_routing(std::span<const std::pair<RouteCategory, RouteCategory>> decisions) {
    if (decisions.empty()) throw PreconditionViolation("score_routing needs at least one decision");
    Ratio r{0.0, static_cast<double>(decisions.size())};
    for (const auto& [expected, actual] : decisions) {
        if (expected == actual) r.numerator += 1.0;
    }
    return r;
}

}  // namespace homeagent::router
