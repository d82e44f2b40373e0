#include "test_support.hpp"

namespace homeagent {
namespace {

using namespace test_support;

const HistorianPromptConfig& config() { return prompts().historian; }

std::unique_ptr<memory::MemoryStore> fixture_store() {
    auto store = std::make_unique<memory::MemoryStore>();
    gateway::HashEmbedder h;
    store->ingest(fixtures().knowledge.dialogue, h);
    return store;
}

const eval::KnowledgeQuestion& question(const std::string& id) {
    for (const auto& q : fixtures().knowledge.questions) {
        if (q.id == id) return q;
    }
    throw std::runtime_error("no question " + id);
}

UserRequest request(const std::string& t) { return make_request(t, "s1", at("2025-03-11T09:00:00Z")); }

TEST(HistorianPrompt, CarriesNoFabricationInstruction) {
    auto msgs = historian::build_prompt("q?", {}, config());
    ASSERT_EQ(msgs.size(), 2U);
    EXPECT_NE(msgs[0].content.find(config().no_fabrication_instruction), std::string::npos);
    EXPECT_NE(msgs[1].content.find(config().empty_context), std::string::npos);
    EXPECT_TRUE(msgs[1].content.ends_with("\n\nQuestion: q?"));
}

TEST(HistorianPrompt, ContextIsChronological) {
    std::vector<memory::RetrievalHit> hits{
        {{5, at("2025-03-10T19:00:00Z"), "q5", "a5"}, "line five", 0.9},
        {{2, at("2025-03-10T18:40:00Z"), "q2", "a2"}, "line two", 0.8},
        {{9, at("2025-03-10T20:00:00Z"), "q9", "a9"}, "line nine", 0.7},
    };
    auto ctx = historian::build_context(hits, config());
    auto two = ctx.find("line two"), five = ctx.find("line five"), nine = ctx.find("line nine");
    ASSERT_NE(two, std::string::npos);
    EXPECT_LT(two, five);
    EXPECT_LT(five, nine);
    EXPECT_EQ(ctx.rfind(config().context_header, 0), 0U);
    EXPECT_EQ(ctx.find("0.9"), std::string::npos);
}

TEST(Answer, TrashQuestionWithRetrieval) {
    auto store = fixture_store();
    auto model = file_model("qwen_like");
    gateway::HashEmbedder h;
    const auto& q = question("trash");
    auto a = historian::answer(request(q.text), 5, *store, config(), model, h);
    EXPECT_NE(a.text.find("three objects"), std::string::npos);
    EXPECT_EQ(a.provenance.k_requested, 5U);
    EXPECT_EQ(a.provenance.k_returned(), 5U);
    // provenance is exactly what retrieval returned, and every hit is in the prompt
    EXPECT_EQ(a.provenance, store->retrieve(q.text, 5, h));
    for (const auto& hit : a.provenance.hits) {
        EXPECT_NE(a.transcript[1].content.find(hit.rendered_text), std::string::npos);
    }
    ASSERT_EQ(a.transcript.size(), 3U);
    EXPECT_EQ(a.transcript[2].content, a.text);
}

TEST(Answer, LaptopIsNotFabricated) {
    auto store = fixture_store();
    auto model = file_model("qwen_like");
    gateway::HashEmbedder h;
    auto a = historian::answer(request(question("hallucination").text), 5, *store, config(), model, h);
    auto verdict = eval::score_knowledge(a.text, question("hallucination"));
    EXPECT_DOUBLE_EQ(verdict, 1.0);
}

TEST(Answer, FullHistoryModeUsesEveryEntry) {
    auto store = fixture_store();
    auto model = file_model("qwen_like");
    gateway::HashEmbedder h;
    auto a = historian::answer(request(question("err_detection").text), 5, *store, config(), model, h,
                               historian::ContextMode::full_history);
    EXPECT_EQ(a.provenance.k_returned(), 21U);
    EXPECT_NE(a.text.find("trash can"), std::string::npos);
}

TEST(Answer, EmptyStoreSaysSo) {
    memory::MemoryStore empty;
    auto model = file_model("qwen_like");
    gateway::HashEmbedder h;
    auto a = historian::answer(request("Where is the jacket?"), 5, empty, config(), model, h);
    EXPECT_TRUE(a.provenance.hits.empty());
    EXPECT_NE(a.transcript[1].content.find(config().empty_context), std::string::npos);
    EXPECT_NE(a.text.find("history"), std::string::npos);
}

TEST(Answer, EmptyQuestionIsPrecondition) {
    auto store = fixture_store();
    auto model = file_model("qwen_like");
    gateway::HashEmbedder h;
    UserRequest blank{"  ", "s", {}};
    EXPECT_THROW(historian::answer(blank, 5, *store, config(), model, h), PreconditionViolation);
}

TEST(Answer, JacketEvidenceIncludesTheMisnarratedEntry) {
    auto store = fixture_store();
    gateway::HashEmbedder h;
    const auto& injected = fixtures().knowledge.injected_errors.at(0);
    auto r = store->retrieve(question("err_detection").text, 5, h);
    bool found = false;
    for (const auto& hit : r.hits) found = found || hit.entry.entry_id == injected.entry_id;
    EXPECT_TRUE(found);
}

}  // namespace
}  // namespace homeagent
