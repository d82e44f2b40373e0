#include "test_support.hpp"

#include <random>

namespace homeagent {
namespace {

using namespace test_support;
using gateway::ChatMessage;
using gateway::Role;

ChatMessage reply(std::string content) { return {Role::assistant, std::move(content), {}}; }

const std::vector<ObjectObservation>& dining() {
    static const auto obs = sim::observe(fixtures().scenarios, "dining_table");
    return obs;
}

UserRequest request(const std::string& t) { return make_request(t, "s1", at("2025-03-11T09:00:00Z")); }

TEST(BuildPrompt, ListsObjectsInObservationOrder) {
    auto msgs = planner::build_prompt(dining(), request("clear the dining table"), prompts().planner);
    ASSERT_EQ(msgs.size(), 2U);
    EXPECT_EQ(msgs[0].role, Role::system);
    EXPECT_NE(msgs[0].content.find(prompts().planner.format_instruction), std::string::npos);
    for (auto d : kPlacementDestinations) {
        EXPECT_NE(msgs[0].content.find(destination_description(d)), std::string::npos);
    }
    EXPECT_EQ(msgs[1].content.rfind("Observed objects:\n1. Plate\n2. Fork\n3. Spoon\n", 0), 0U);
    EXPECT_NE(msgs[1].content.find("10. Pepper grinder\n\nUser request: clear the dining table"), std::string::npos);
}

TEST(BuildPrompt, Preconditions) {
    EXPECT_THROW(planner::build_prompt({}, request("x"), prompts().planner), PreconditionViolation);
    UserRequest blank{" ", "s", {}};
    EXPECT_THROW(planner::build_prompt(dining(), blank, prompts().planner), PreconditionViolation);
}

TEST(FindJsonDocument, FencedBeatsBare) {
    auto doc = planner::find_json_document("{\"a\":1}\n```json\n{\"b\":2}\n```");
    ASSERT_TRUE(doc);
    EXPECT_TRUE(doc->contains("b"));
}

TEST(FindJsonDocument, SkipsBrokenFencesAndBraces) {
    auto doc = planner::find_json_document("```\nnot json\n```\nthen {oops} and {\"x\": \"}\"}");
    ASSERT_TRUE(doc);
    EXPECT_EQ((*doc)["x"], "}");
    EXPECT_FALSE(planner::find_json_document("no json here"));
    // an unterminated fence is ignored and the braced scan still finds the object
    EXPECT_EQ(planner::find_json_document("```json\n{\"a\":1}").value()["a"], 1);
    EXPECT_FALSE(planner::find_json_document("{\"a\": 1"));
}

TEST(FindJsonDocument, NestedBraces) {
    auto doc = planner::find_json_document("Plan: {\"tasks\": [{\"objects\": [\"Plate\"], \"destination\": \"Sink\"}]} done");
    ASSERT_TRUE(doc);
    EXPECT_EQ((*doc)["tasks"][0]["destination"], "Sink");
}

TEST(ExtractPlan, ProseAroundFencedJson) {
    auto out = planner::extract_plan(reply("Reasoning first.\n```json\n{\"tasks\": ["
                                           "{\"objects\": [\"plate\", \"Fork\"], \"destination\": \"Sink\"},"
                                           "{\"objects\": \"Salt shaker\", \"destination\": \"storage\"}]}\n```"),
                                     dining());
    ASSERT_EQ(out.plan.steps.size(), 2U);
    EXPECT_EQ(out.plan.steps[0].objects, (std::vector<std::string>{"Plate", "Fork"}));
    EXPECT_EQ(out.plan.steps[0].destination, Destination::sink);
    EXPECT_EQ(out.plan.steps[1].objects, std::vector<std::string>{"Salt shaker"});
    EXPECT_EQ(out.plan.steps[1].destination, Destination::storage_box);
    EXPECT_TRUE(out.warnings.empty());
    EXPECT_FALSE(check_plan_invariants(out.plan, dining()));
}

TEST(ExtractPlan, SingleBareActionIsAccepted) {
    auto out = planner::extract_plan(reply(R"({"objects": ["Chair"], "destination": "Storage Box"})"), dining());
    ASSERT_EQ(out.plan.steps.size(), 1U);
    EXPECT_EQ(out.plan.steps[0].destination, Destination::storage_box);
}

TEST(ExtractPlan, EmptyTasksIsAnEmptyPlan) {
    auto out = planner::extract_plan(reply("There is no banana.\n```json\n{\"tasks\": []}\n```"), dining());
    EXPECT_TRUE(out.plan.steps.empty());
    EXPECT_TRUE(out.warnings.empty());
}

TEST(ExtractPlan, UnknownObjectsAreDroppedWithWarning) {
    auto out = planner::extract_plan(
        reply(R"({"tasks": [{"objects": ["Banana"], "destination": "User Handover"}, {"objects": ["Plate", "Cake"], "destination": "Sink"}]})"),
        dining());
    ASSERT_EQ(out.plan.steps.size(), 1U);
    EXPECT_EQ(out.plan.steps[0].objects, std::vector<std::string>{"Plate"});
    ASSERT_EQ(out.warnings.size(), 3U);
    EXPECT_NE(out.warnings[0].find("Banana"), std::string::npos);
}

TEST(ExtractPlan, DuplicateAssignmentKeepsFirst) {
    auto out = planner::extract_plan(
        reply(R"({"tasks": [{"objects": ["Plate"], "destination": "Sink"}, {"objects": ["PLATE"], "destination": "trash"}]})"),
        dining());
    ASSERT_EQ(out.plan.steps.size(), 1U);
    EXPECT_EQ(out.plan.steps[0].destination, Destination::sink);
    EXPECT_EQ(out.warnings.size(), 2U);
}

TEST(ExtractPlan, StationaryStepIsNoTask) {
    auto out = planner::extract_plan(
        reply(R"({"tasks": [{"objects": ["Chair", "Table top"], "destination": "stationary"}, {"objects": ["Chair"], "destination": "Sink"}]})"),
        dining());
    EXPECT_TRUE(out.plan.steps.empty());
    EXPECT_FALSE(out.warnings.empty());
}

TEST(ExtractPlan, Errors) {
    EXPECT_THROW(planner::extract_plan(reply("I will clear it."), dining()), NoJsonFound);
    EXPECT_THROW(planner::extract_plan(reply("{\"plan\": []}"), dining()), MalformedPlan);
    EXPECT_THROW(planner::extract_plan(reply("{\"tasks\": {}}"), dining()), MalformedPlan);
    EXPECT_THROW(planner::extract_plan(reply("{\"tasks\": [1]}"), dining()), MalformedPlan);
    EXPECT_THROW(planner::extract_plan(reply("{\"tasks\": [{\"objects\": [\"Plate\"]}]}"), dining()), MalformedPlan);
    EXPECT_THROW(planner::extract_plan(reply("{\"tasks\": [{\"objects\": [1], \"destination\": \"Sink\"}]}"), dining()),
                 MalformedPlan);
    EXPECT_THROW(planner::extract_plan(reply("{\"tasks\": [{\"objects\": 3, \"destination\": \"Sink\"}]}"), dining()),
                 MalformedPlan);
    EXPECT_THROW(planner::extract_plan(reply("{\"tasks\": [{\"objects\": [\"Plate\"], \"destination\": \"Dishwasher\"}]}"),
                                       dining()),
                 UnknownDestination);
    EXPECT_THROW(planner::extract_plan(ChatMessage{Role::user, "{}", {}}, dining()), PreconditionViolation);
}

TEST(ExtractPlan, SchemaRoundTrip) {
    TaskPlan p{{{{"Plate", "Fork"}, Destination::sink}, {{"Chair"}, Destination::storage_box}}, ""};
    auto text = plan_to_schema(p).dump();
    auto back = planner::extract_plan(reply(text), dining());
    EXPECT_TRUE(back.plan.same_steps(p));
}

// Property: every accepted reply yields a plan that satisfies the plan
// invariants; every rejection is one of the three extraction errors.
TEST(ExtractPlan, FuzzedRepliesKeepInvariants) {
    std::mt19937_64 rng(5);
    const auto& objects = dining();
    const std::vector<std::string> dests{"Sink", "trash", "Fridge", "food shelf", "Storage Box", "User Handover",
                                         "stationary", "Dishwasher", "", "kitchen sink"};
    int accepted = 0;
    for (int i = 0; i < 3000; ++i) {
        json tasks = json::array();
        for (int t = 0, n = int(rng() % 5); t < n; ++t) {
            json objs = json::array();
            for (int o = 0, m = int(rng() % 4); o < m; ++o) {
                objs.push_back(rng() % 5 == 0 ? random_word(rng) : objects[rng() % objects.size()].name);
            }
            json task{{"objects", objs}, {"destination", dests[rng() % dests.size()]}};
            if (rng() % 20 == 0) task.erase("destination");
            tasks.push_back(task);
        }
        std::string text = json{{"tasks", tasks}}.dump();
        switch (rng() % 4) {
            case 0: text = "Reasoning.\n```json\n" + text + "\n```"; break;
            case 1: text = "Plan: " + text + " end"; break;
            case 2: text = text.substr(0, rng() % (text.size() + 1)); break;
            default: break;
        }
        try {
            auto out = planner::extract_plan(reply(text), objects);
            ASSERT_FALSE(check_plan_invariants(out.plan, objects)) << text;
            ++accepted;
        } catch (const NoJsonFound&) {
        } catch (const MalformedPlan&) {
        } catch (const UnknownDestination&) {
        }
    }
    EXPECT_GT(accepted, 100);
}

TEST(Plan, ScriptedPersonaProducesPlan) {
    auto model = file_model("qwen_like");
    auto out = planner::plan(request(fixtures().scenarios.get("dining_table").command), dining(), prompts().planner, model);
    EXPECT_EQ(out.retries, 0);
    EXPECT_EQ(out.transcript.size(), 3U);
    std::size_t moved = 0;
    for (const auto& s : out.extraction.plan.steps) moved += s.objects.size();
    EXPECT_EQ(moved, 8U);
}

TEST(Plan, CorrectiveRetryAfterProse) {
    auto model = file_model("llama_like");
    auto living = sim::observe(fixtures().scenarios, "living_room");
    auto out = planner::plan(request(fixtures().scenarios.get("living_room").command), living, prompts().planner, model);
    EXPECT_EQ(out.retries, 1);
    ASSERT_EQ(out.transcript.size(), 5U);
    EXPECT_EQ(out.transcript[3].content, prompts().planner.corrective_instruction);
    EXPECT_FALSE(out.extraction.plan.steps.empty());
}

TEST(Plan, GarbageTwiceFails) {
    auto model = inline_model(json::array({entry({{"last_user_contains", "Observed objects"}}, text_reply("I refuse.")),
                                           entry({{"last_user_contains", "JSON"}}, text_reply("Still no."))}));
    try {
        planner::plan(request("clear"), dining(), prompts().planner, model);
        FAIL() << "expected PlanningFailed";
    } catch (const PlanningFailed& e) {
        EXPECT_EQ(e.cause_code, "no_json_found");
        EXPECT_EQ(e.first_reply, "I refuse.");
        EXPECT_EQ(e.retry_reply, "Still no.");
    }
}

TEST(Plan, MalformedIsNotRetried) {
    auto model = inline_model(json::array({entry({{"last_user_contains", "Observed objects"}},
                                                 text_reply(R"({"tasks": [{"objects": ["Plate"], "destination": "Dishwasher"}]})"))}));
    try {
        planner::plan(request("clear"), dining(), prompts().planner, model);
        FAIL() << "expected PlanningFailed";
    } catch (const PlanningFailed& e) {
        EXPECT_EQ(e.cause_code, "unknown_destination");
        EXPECT_TRUE(e.retry_reply.empty());
    }
}

}  // namespace
}  // namespace homeagent
