#include "test_support.hpp"

namespace homeagent {
namespace {

using namespace test_support;
using eval::EvalReport;
using eval::Phase;
using eval::RunSpec;

const sim::Scenario& scenario(const std::string& id) { return fixtures().scenarios.get(id); }

const eval::KnowledgeQuestion& question(const std::string& id) {
    for (const auto& q : fixtures().knowledge.questions) {
        if (q.id == id) return q;
    }
    throw std::runtime_error("no question " + id);
}

Ratio count(const std::vector<eval::ObjectVerdict>& v, bool lenient) {
    Ratio r{0.0, double(v.size())};
    for (const auto& o : v) r.numerator += (lenient ? o.lenient : o.strict) ? 1.0 : 0.0;
    return r;
}

RunSpec spec_for(Phase phase, std::vector<std::string> personas, int reps = 5) {
    RunSpec s;
    s.phase = phase;
    s.repetitions = reps;
    for (const auto& p : personas) s.models.push_back(gateway::script_config(script_path(p)));
    return s;
}

TEST(ParsePhase, AcceptsShortAndLongNames) {
    EXPECT_EQ(eval::parse_phase("task"), Phase::task_planning);
    EXPECT_EQ(eval::parse_phase("KB"), Phase::knowledge_base);
    EXPECT_EQ(eval::parse_phase("routing"), Phase::routing);
    EXPECT_EQ(eval::parse_phase("knowledge_base"), Phase::knowledge_base);
    EXPECT_THROW(eval::parse_phase("vibes"), PreconditionViolation);
}

TEST(ScorePlan, GoldPlanIsFullyCorrect) {
    const auto& s = scenario("dining_table");
    TaskPlan gold;
    for (const auto& o : s.objects) {
        const auto& g = s.gold_for(o);
        if (!g.stationary) gold.steps.push_back({{o}, g.destination});
    }
    auto v = eval::score_plan(gold, s);
    EXPECT_EQ(count(v, false).numerator, 10.0);
    EXPECT_EQ(count(v, true).numerator, 10.0);
}

TEST(ScorePlan, LenientAlternativeCountsOnlyForLenient) {
    const auto& s = scenario("dining_table");
    TaskPlan p{{{{"Plate", "Fork", "Spoon", "Glass", "Frying pan", "Spatula"}, Destination::sink},
                {{"Salt shaker", "Pepper grinder"}, Destination::storage_box}},
               ""};
    auto v = eval::score_plan(p, s);
    EXPECT_EQ(count(v, false).numerator, 8.0);
    EXPECT_EQ(count(v, true).numerator, 10.0);
}

TEST(ScorePlan, MovingStationaryObjectIsWrong) {
    const auto& s = scenario("dining_table");
    TaskPlan p{{{{"Chair"}, Destination::storage_box}}, ""};
    auto v = eval::score_plan(p, s);
    for (const auto& o : v) {
        if (o.object == "Chair") EXPECT_FALSE(o.lenient);
        if (o.object == "Table top") EXPECT_TRUE(o.strict);
        if (o.object == "Plate") EXPECT_FALSE(o.lenient);
    }
}

TEST(ScorePlan, EmptyPlanCreditsOnlyStationary) {
    const auto& s = scenario("desk");
    auto v = eval::score_plan(TaskPlan{}, s);
    EXPECT_EQ(count(v, false).numerator, 8.0);  // desk has eight objects that stay
    EXPECT_EQ(v.size(), 15U);
}

TEST(ScorePlan, NoPlanIsAllWrong) {
    auto v = eval::score_plan(std::nullopt, scenario("living_room"));
    EXPECT_EQ(count(v, true).numerator, 0.0);
    EXPECT_EQ(v.size(), 9U);
}

TEST(ScoreKnowledge, SingleQuestion) {
    const auto& q = question("err_detection");
    EXPECT_EQ(eval::score_knowledge("It is in the trash can, not the storage box.", q), 1.0);
    EXPECT_EQ(eval::score_knowledge("The jacket is in the storage box.", q), 0.0);
    EXPECT_EQ(eval::score_knowledge("I don't know.", q), 0.0);
    EXPECT_EQ(eval::score_knowledge("It is still in the storage box, next to the trash can.", q), 0.0);
}

TEST(ScoreKnowledge, WholeWordMatching) {
    EXPECT_EQ(eval::normalize_for_match("Trash-can, here!"), " trash can here ");
    EXPECT_TRUE(eval::mentions(eval::normalize_for_match("in the bin."), "bin"));
    EXPECT_FALSE(eval::mentions(eval::normalize_for_match("in the cabinet"), "bin"));
    EXPECT_FALSE(eval::mentions(eval::normalize_for_match("anything"), "!!"));
}

TEST(ScoreKnowledge, SetQuestionGivesPartialCredit) {
    const auto& q = question("trash");
    EXPECT_DOUBLE_EQ(eval::score_knowledge("The crumbs, the bag of chips and the salt packet.", q), 0.75);
    EXPECT_DOUBLE_EQ(eval::score_knowledge("Crumbs, chips, salt packet and the jacket.", q), 1.0);
    EXPECT_DOUBLE_EQ(eval::score_knowledge("Nothing.", q), 0.0);
    const auto& food = question("food");
    EXPECT_DOUBLE_EQ(eval::score_knowledge("There is a lemon.", food), 0.5);
}

TEST(RunSpec, ValidateAndJsonRoundTrip) {
    auto s = spec_for(Phase::knowledge_base, {"qwen_like"});
    s.rag_ablation = true;
    s.k = 3;
    EXPECT_NO_THROW(s.validate());
    json j = s;
    auto back = j.get<RunSpec>();
    EXPECT_EQ(back.phase, Phase::knowledge_base);
    EXPECT_TRUE(back.rag_ablation);
    EXPECT_EQ(back.k, 3U);
    EXPECT_EQ(back.models.size(), 1U);
    s.repetitions = 0;
    EXPECT_THROW(s.validate(), PreconditionViolation);
    RunSpec none;
    EXPECT_THROW(none.validate(), PreconditionViolation);
}

class HarnessTest : public ::testing::Test {
protected:
    eval::Harness harness{fixtures()};
};

TEST_F(HarnessTest, TaskPlanningCountsAndTotals) {
    auto report = harness.run(spec_for(Phase::task_planning, {"qwen_like"}));
    EXPECT_TRUE(report.warnings.empty());
    const auto* dining = report.find("", "Qwen-like", "dining_table", "strict");
    ASSERT_NE(dining, nullptr);
    EXPECT_EQ(dining->ratio.denominator, 50.0);
    EXPECT_EQ(dining->ratio.numerator, 40.0);
    EXPECT_EQ(report.cell("", "Qwen-like", "dining_table", "lenient"), "100.0");
    EXPECT_EQ(report.find("", "Qwen-like", "living_room", "strict")->ratio.denominator, 45.0);
    EXPECT_EQ(report.find("", "Qwen-like", "desk", "strict")->ratio.denominator, 75.0);
    EXPECT_EQ(report.cell("", "Qwen-like", "total", "strict"), "81.5");
    EXPECT_EQ(report.cell("", "Qwen-like", "total", "lenient"), "94.1");
    EXPECT_TRUE(eval::check_report(report).empty());
    EXPECT_EQ(report.runs.size(), 15U);
    EXPECT_EQ(report.metadata["fixture_hash"], fixtures().hash);
    EXPECT_EQ(report.metadata["repetitions"], 5);
}

TEST_F(HarnessTest, FailedPlansScoreZero) {
    auto report = harness.run(spec_for(Phase::task_planning, {"gemma_like"}, 2));
    EXPECT_EQ(report.cell("", "Gemma-like", "dining_table", "lenient"), "0.0");
    EXPECT_EQ(report.find("", "Gemma-like", "dining_table", "strict")->ratio.denominator, 20.0);
    bool logged = false;
    for (const auto& r : report.runs) logged = logged || r.value("error", "") == "unknown_destination";
    EXPECT_TRUE(logged);
}

TEST_F(HarnessTest, KnowledgeBaseUnitsAndAblation) {
    auto spec = spec_for(Phase::knowledge_base, {"qwen_like"});
    spec.rag_ablation = true;
    auto report = harness.run(spec);
    const auto* trash = report.find("with_rag", "Qwen-like", "trash", "validity");
    ASSERT_NE(trash, nullptr);
    EXPECT_EQ(trash->ratio.denominator, 20.0);
    EXPECT_DOUBLE_EQ(trash->ratio.numerator, 15.0);
    EXPECT_EQ(report.find("with_rag", "Qwen-like", "food", "validity")->ratio.denominator, 10.0);
    EXPECT_EQ(report.find("with_rag", "Qwen-like", "err_detection", "validity")->ratio.denominator, 5.0);
    EXPECT_EQ(report.cell("with_rag", "Qwen-like", "total", "validity"), "93.8");
    EXPECT_NE(report.find("without_rag", "Qwen-like", "total", "validity"), nullptr);
    // scripted personas are not live, so no RAG comparison warning
    EXPECT_TRUE(report.warnings.empty());
    EXPECT_EQ(report.metadata["blocks"], json::array({"with_rag", "without_rag"}));
    EXPECT_NE(eval::render_text(report).find("Without RAG (Ablation Study)"), std::string::npos);
}

TEST_F(HarnessTest, RoutingExcludesModelsWithoutToolCalling) {
    auto report = harness.run(spec_for(Phase::routing, {"llama_like", "qwen_like", "gemma_like"}));
    EXPECT_EQ(report.metadata["excluded_models"], json::array({"Gemma-like"}));
    EXPECT_EQ(report.cell("", "Gemma-like", "total", "success"), "-");
    EXPECT_EQ(report.cell("", "LLaMa-like", "task_planning", "success"), "75.0");
    EXPECT_EQ(report.cell("", "LLaMa-like", "knowledge_base", "success"), "100.0");
    EXPECT_EQ(report.cell("", "LLaMa-like", "total", "success"), "87.5");
    EXPECT_EQ(report.cell("", "Qwen-like", "total", "success"), "100.0");
    EXPECT_EQ(report.find("", "Qwen-like", "task_planning", "success")->ratio.denominator, 20.0);
    EXPECT_NE(eval::render_text(report).find("(excluded: Gemma-like, no tool calling)"), std::string::npos);
}

TEST_F(HarnessTest, KeywordFallbackAdmitsModel) {
    auto spec = spec_for(Phase::routing, {"gemma_like"}, 1);
    spec.keyword_fallback = true;
    auto report = harness.run(spec);
    EXPECT_EQ(report.cell("", "Gemma-like", "total", "success"), "100.0");
}

TEST_F(HarnessTest, TransportFailuresAbortItem) {
    RunSpec spec;
    spec.phase = Phase::routing;
    spec.repetitions = 5;
    spec.abort_after = 2;
    gateway::BackendConfig dead{"Dead", "http://127.0.0.1:1", "dead"};
    dead.timeout = std::chrono::milliseconds(300);
    spec.models.push_back(dead);
    auto report = harness.run(spec);
    EXPECT_EQ(report.cell("", "Dead", "total", "success"), "0.0");
    EXPECT_EQ(report.invalid_items.size(), fixtures().routing.size());
    int aborted = 0, transport = 0;
    for (const auto& r : report.runs) {
        if (r.value("error", "") == "Aborted") ++aborted;
        if (r.value("error", "") == "transport_error") ++transport;
    }
    const int n = int(fixtures().routing.size());
    EXPECT_EQ(transport, 2 * n);
    EXPECT_EQ(aborted, 3 * n);
}

TEST_F(HarnessTest, ParallelRunMatchesSerial) {
    auto spec = spec_for(Phase::task_planning, {"qwen_like", "llama_like"}, 2);
    auto serial = harness.run(spec);
    spec.jobs = 4;
    auto parallel = harness.run(spec);
    EXPECT_EQ(eval::render_csv(serial), eval::render_csv(parallel));
    EXPECT_EQ(serial.runs, parallel.runs);
}

TEST_F(HarnessTest, CsvIsDeterministic) {
    auto spec = spec_for(Phase::knowledge_base, {"llama_like"}, 2);
    auto a = eval::render_csv(harness.run(spec));
    auto b = eval::render_csv(harness.run(spec));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.rfind("phase,model,item,metric,numerator,denominator,percent\n", 0), 0U);
    EXPECT_NE(a.find("knowledge_base,LLaMa-like,total,validity_with_rag,"), std::string::npos);
}

TEST(CheckReport, DetectsInconsistentTotals) {
    EvalReport r;
    r.rows.push_back({"", "m", "a", "strict", {1, 2}});
    r.rows.push_back({"", "m", "b", "strict", {1, 1}});
    r.rows.push_back({"", "m", "total", "strict", {1.5, 2}});
    EXPECT_TRUE(eval::check_report(r).empty());
    r.rows.back().ratio = {2, 3};  // pooled counts instead of the macro average
    EXPECT_EQ(eval::check_report(r).size(), 1U);
    r.rows.push_back({"", "m", "c", "lenient", {3, 2}});
    EXPECT_GE(eval::check_report(r).size(), 2U);
}

TEST(Csv, QuotesFields) {
    EXPECT_EQ(eval::csv_field("plain"), "plain");
    EXPECT_EQ(eval::csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(eval::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(WriteReport, WritesFilesAndManifest) {
    EvalReport r;
    r.phase = Phase::routing;
    r.metadata = {{"fixture_hash", "abc"}, {"items", {"task_planning"}}};
    r.rows.push_back({"", "m", "task_planning", "success", {1, 2}});
    r.rows.push_back({"", "m", "total", "success", {0.5, 1}});
    auto dir = std::filesystem::temp_directory_path() / "homeagent_write_report";
    std::filesystem::remove_all(dir);
    auto names = eval::write_report(r, dir);
    ASSERT_EQ(names.size(), 4U);
    for (const auto& n : names) EXPECT_TRUE(std::filesystem::exists(dir / n)) << n;
    auto manifest = json::parse(eval::read_text_file(dir / "manifest_routing.json"));
    EXPECT_EQ(manifest["fixture_hash"], "abc");
    const auto csv = eval::read_text_file(dir / "report_routing.csv");
    EXPECT_EQ(manifest["files"][2]["fnv1a64"], gateway::hex64(gateway::fnv1a64(csv)));
    auto doc = json::parse(eval::read_text_file(dir / "report_routing.json"));
    EXPECT_EQ(doc["format"], "homeagent-eval-report");
    EXPECT_EQ(doc["rows"][0]["percent"], 50.0);
}

TEST(Fixtures, ShippedSetIsValid) {
    EXPECT_TRUE(eval::validate_fixtures(fixtures()).empty());
    EXPECT_EQ(fixtures().knowledge.dialogue.size(), 21U);
    EXPECT_EQ(fixtures().hash.size(), 16U);
}

TEST(Fixtures, CheckKnowledgeFindsProblems) {
    auto k = fixtures().knowledge;
    k.dialogue.pop_back();
    k.dialogue[3].entry_id = 40;
    k.injected_errors[0].spoken = Destination::fridge;
    auto problems = eval::check_knowledge(k);
    EXPECT_GE(problems.size(), 3U);
}

TEST(Fixtures, CheckRoutingFindsProblems) {
    std::vector<eval::RoutingQuery> q{{"a", "", RouteCategory::unclear, "misc"}};
    EXPECT_EQ(eval::check_routing(q).size(), 3U);
    EXPECT_EQ(eval::check_routing({}).size(), 1U);
}

TEST(Fixtures, MissingDirectoryIsFixtureError) {
    EXPECT_THROW(eval::load_fixtures("/nonexistent", source_dir() / "prompts" / "pack_v1.json"), FixtureError);
}

}  // namespace
}  // namespace homeagent
