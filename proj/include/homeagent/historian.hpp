#pragma once

// Knowledge base agent: answers questions about past actions from
// retrieved, timestamped dialogue history.

#include "homeagent/memory.hpp"
#include "homeagent/prompt_pack.hpp"

namespace homeagent::historian {

enum class ContextMode {
    retrieval,     // top-k chunks by cosine similarity
    full_history,  // every stored pair (the no-retrieval ablation)
};

struct HistorianAnswer {
    std::string text;
    memory::RetrievalResult provenance;  // exactly the chunks placed in the prompt
    std::vector<gateway::ChatMessage> transcript;
};

// Context lines are chronological, one render_chunk line per chunk.
inline std::string build_context(const std::vector<memory::RetrievalHit>& hits, const HistorianPromptConfig& config) {
    std::vector<const memory::RetrievalHit*> ordered;
    for (const auto& h : hits) ordered.push_back(&h);
    std::sort(ordered.begin(), ordered.end(),
              [](const auto* a, const auto* b) { return a->entry.entry_id < b->entry.entry_id; });
    std::string out = config.context_header + "\n";
    if (ordered.empty()) out += config.empty_context + "\n";
    for (const auto* h : ordered) out += h->rendered_text + "\n";
    out += "\n" + config.context_footer;
    return out;
}

inline std::vector<gateway::ChatMessage> build_prompt(const std::string& question,
                                                      const std::vector<memory::RetrievalHit>& hits,
                                                      const HistorianPromptConfig& config) {
    return {gateway::system_message(config.system_prompt),
            gateway::user_message(build_context(hits, config) + "\n\nQuestion: " + question)};
}

inline HistorianAnswer answer(const UserRequest& query, std::size_t k, const memory::MemoryStore& store,
                              const HistorianPromptConfig& config, gateway::Model& model,
                              gateway::Backend& embedder, ContextMode mode = ContextMode::retrieval) {
    if (trim(query.text).empty()) throw PreconditionViolation("question is empty");
    HistorianAnswer out;
    if (!store.empty()) {
        if (mode == ContextMode::retrieval) {
            out.provenance = store.retrieve(query.text, k, embedder);
        } else {
            for (auto& e : store.entries()) {
                auto text = memory::render_chunk(e);
                out.provenance.hits.push_back({std::move(e), std::move(text), 0.0});
            }
            out.provenance.k_requested = out.provenance.hits.size();
        }
    } else {
        out.provenance.k_requested = k;
    }
    out.transcript = build_prompt(query.text, out.provenance.hits, config);
    auto reply = gateway::chat(*model.backend, out.transcript);
    out.text = reply.content;
    out.transcript.push_back(std::move(reply));
    return out;
}

}  // namespace homeagent::historian
