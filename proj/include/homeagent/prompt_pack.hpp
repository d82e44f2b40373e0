#pragma once

// Versioned prompt pack: every agent's system prompt and the router's tool
// specs are configuration loaded from prompts/*.json, never hard-coded.

#include "homeagent/gateway.hpp"

#include <string>
#include <vector>

namespace homeagent {

inline constexpr std::string_view kToolPlanner = "transfer_to_task_planner";
inline constexpr std::string_view kToolKnowledge = "transfer_to_knowledge_base";
inline constexpr std::string_view kToolClarify = "ask_clarification";

struct RouterPromptConfig {
    std::string system_prompt;
    std::string keyword_instruction;  // appended when the model cannot call tools
    std::string default_clarification;
    std::vector<gateway::ToolSpec> tools;

    void validate() const {
        if (system_prompt.empty()) throw FixtureError("router system prompt is empty");
        if (keyword_instruction.empty()) throw FixtureError("router keyword instruction is empty");
        if (default_clarification.empty()) throw FixtureError("router default clarification is empty");
        if (tools.size() != 3) throw FixtureError("router needs exactly three tools");
        for (auto name : {kToolPlanner, kToolKnowledge, kToolClarify}) {
            auto n = std::count_if(tools.begin(), tools.end(), [&](const auto& t) { return t.name == name; });
            if (n != 1) throw FixtureError("router tool missing or repeated: " + std::string(name));
        }
    }
};

struct PlannerPromptConfig {
    std::string system_prompt;         // destinations + chain-of-thought instruction
    std::string format_instruction;    // plan schema
    std::string corrective_instruction;

    void validate() const {
        for (auto d : kPlacementDestinations) {
            if (system_prompt.find(destination_description(d)) == std::string::npos) {
                throw FixtureError("planner prompt lacks destination definition: " +
                                   std::string(destination_description(d)));
            }
        }
        if (format_instruction.find("\"tasks\"") == std::string::npos) {
            throw FixtureError("planner format instruction does not describe the plan schema");
        }
        if (corrective_instruction.empty()) throw FixtureError("planner corrective instruction is empty");
    }
};

struct HistorianPromptConfig {
    std::string system_prompt;
    std::string no_fabrication_instruction;  // must appear verbatim in system_prompt
    std::string context_header = "Known history:";
    std::string context_footer = "Answer using only the history above.";
    std::string empty_context = "No history is available yet.";

    void validate() const {
        if (no_fabrication_instruction.empty() ||
            system_prompt.find(no_fabrication_instruction) == std::string::npos) {
            throw FixtureError("historian prompt lacks its no-fabrication instruction");
        }
    }
};

struct PromptPack {
    std::string version;
    RouterPromptConfig router;
    PlannerPromptConfig planner;
    HistorianPromptConfig historian;

    void validate() const {
        if (version.empty()) throw FixtureError("prompt pack has no version");
        router.validate();
        planner.validate();
        historian.validate();
    }
};

inline PromptPack parse_prompt_pack(const json& doc) {
    // Long prompts may be stored as arrays of lines.
    auto text = [](const json& j) {
        if (j.is_string()) return j.get<std::string>();
        std::string out;
        for (const auto& line : j) {
            if (!out.empty()) out += '\n';
            out += line.get<std::string>();
        }
        return out;
    };
    try {
        PromptPack p;
        p.version = doc.at("version").get<std::string>();
        const auto& r = doc.at("router");
        p.router.system_prompt = text(r.at("system"));
        p.router.keyword_instruction = text(r.at("keyword_instruction"));
        p.router.default_clarification = text(r.at("default_clarification"));
        for (const auto& t : r.at("tools")) {
            p.router.tools.push_back({t.at("name").get<std::string>(), t.at("description").get<std::string>(),
                                      t.value("parameters", json{{"type", "object"}, {"properties", json::object()}})});
        }
        const auto& pl = doc.at("planner");
        p.planner.system_prompt = text(pl.at("system"));
        p.planner.format_instruction = text(pl.at("format_instruction"));
        p.planner.corrective_instruction = text(pl.at("corrective_instruction"));
        const auto& h = doc.at("historian");
        p.historian.system_prompt = text(h.at("system"));
        p.historian.no_fabrication_instruction = text(h.at("no_fabrication_instruction"));
        if (h.contains("context_header")) p.historian.context_header = text(h["context_header"]);
        if (h.contains("context_footer")) p.historian.context_footer = text(h["context_footer"]);
        if (h.contains("empty_context")) p.historian.empty_context = text(h["empty_context"]);
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw FixtureError(std::string("prompt pack: ") + e.what());
    }
}

inline PromptPack load_prompt_pack(const std::string& path) {
    return parse_prompt_pack(gateway::read_json_file(path));
}

}  // namespace homeagent
