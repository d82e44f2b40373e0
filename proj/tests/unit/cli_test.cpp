#include "test_support.hpp"

#include <sstream>

namespace homeagent {
namespace {

using namespace test_support;

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args, const std::string& input = "") {
    args.insert(args.begin(), {"homeagent", "--fixtures", source_path("fixtures"), "--prompts",
                               source_path("prompts/pack_v1.json")});
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::istringstream in(input);
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), {in, out, err});
    r.out = out.str();
    r.err = err.str();
    return r;
}

class TempDir {
public:
    explicit TempDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("homeagent_cli_" + name + "_" + std::to_string(::getpid()))) {
        std::filesystem::remove_all(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

TEST(Cli, FixturesValidate) {
    auto r = run_cli({"fixtures", "validate", "--script", script_path("qwen_like")});
    EXPECT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_NE(r.out.find("ok: 3 scenarios, 21 dialogue pairs"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("qwen_like.script"), std::string::npos);
}

TEST(Cli, FixturesValidateReportsMissingDirectory) {
    TempDir dir("missing");
    std::vector<std::string> args{"homeagent", "--fixtures", dir.str(), "fixtures", "validate"};
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::istringstream in;
    std::ostringstream out, err;
    EXPECT_EQ(cli::run(static_cast<int>(argv.size()), argv.data(), {in, out, err}), cli::kExitInvalid);
    EXPECT_NE(err.str().find("fixture:"), std::string::npos);
}

TEST(Cli, InvalidArgumentsExitOne) {
    EXPECT_EQ(run_cli({"eval", "--bogus"}).code, cli::kExitInvalid);
    EXPECT_EQ(run_cli({"eval", "--phase", "dance"}).code, cli::kExitInvalid);
    EXPECT_EQ(run_cli({}).code, cli::kExitInvalid);
    EXPECT_EQ(run_cli({"eval", "--phase", "task"}).code, cli::kExitInvalid);  // no models
    EXPECT_EQ(run_cli({"replay", "--scripted", script_path("qwen_like"), "--override", "Jacket"}).code,
              cli::kExitInvalid);
    EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

TEST(Cli, UnreachableModelExitsTwo) {
    TempDir dir("unreachable");
    std::filesystem::create_directories(dir.path());
    const auto models = dir.path() / "models.json";
    std::ofstream(models) << json::array({{{"label", "down"}, {"base_url", "http://127.0.0.1:1"}, {"model", "m"},
                                           {"timeout_ms", 500}}})
                                 .dump();
    auto r = run_cli({"eval", "--phase", "routing", "--models", models.string(), "--out", dir.str()});
    EXPECT_EQ(r.code, cli::kExitUnreachable);
    EXPECT_NE(r.err.find("backend unreachable: down"), std::string::npos);
}

TEST(Cli, EvalWritesDeterministicReports) {
    TempDir a("eval_a"), b("eval_b");
    auto ra = run_cli({"eval", "--phase", "routing", "--scripted", script_path("qwen_like"), "--scripted",
                       script_path("llama_like"), "--reps", "2", "--out", a.str()});
    ASSERT_EQ(ra.code, cli::kExitOk) << ra.err;
    auto rb = run_cli({"eval", "--phase", "routing", "--scripted", script_path("qwen_like"), "--scripted",
                       script_path("llama_like"), "--reps", "2", "--jobs", "3", "--out", b.str()});
    ASSERT_EQ(rb.code, cli::kExitOk) << rb.err;
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(a.path())) {
        ++files;
        EXPECT_TRUE(std::filesystem::exists(b.path() / e.path().filename()));
    }
    EXPECT_EQ(files, 4U);
    const auto csv = a.path() / "report_routing.csv";
    ASSERT_TRUE(std::filesystem::exists(csv));
    EXPECT_EQ(slurp(csv), slurp(b.path() / "report_routing.csv"));
    EXPECT_NE(ra.out.find("wrote "), std::string::npos);
}

TEST(Cli, EvalKnowledgeAblationBlock) {
    TempDir dir("kb");
    auto r = run_cli({"eval", "--phase", "kb", "--scripted", script_path("qwen_like"), "--reps", "1", "--no-rag",
                      "--out", dir.str()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_NE(r.out.find("With RAG"), std::string::npos);
    EXPECT_NE(r.out.find("Without RAG (Ablation Study)"), std::string::npos);
}

TEST(Cli, ReplayIsByteIdentical) {
    TempDir a("replay_a"), b("replay_b");
    auto ra = run_cli({"replay", "--scripted", script_path("qwen_like"), "--out", a.str()});
    ASSERT_EQ(ra.code, cli::kExitOk) << ra.err;
    auto rb = run_cli({"replay", "--scripted", script_path("qwen_like"), "--out", b.str()});
    ASSERT_EQ(rb.code, cli::kExitOk) << rb.err;
    const auto text = slurp(a.path() / "turns.jsonl");
    EXPECT_EQ(text, slurp(b.path() / "turns.jsonl"));
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 8);
    EXPECT_TRUE(std::filesystem::exists(a.path() / "manifest_replay.json"));

    auto stdout_run = run_cli({"replay", "--scripted", script_path("qwen_like")});
    EXPECT_EQ(stdout_run.out, text);
}

TEST(Cli, ChatLoop) {
    auto r = run_cli({"chat", "--scripted", script_path("qwen_like")}, "Blue.\n:history\n:scenario desk\n:quit\n");
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_NE(r.out.find("scenario dining_table: 10 objects"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("[unclear]"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("\"entry_id\": 1"), std::string::npos);
    EXPECT_NE(r.out.find("scenario desk\n"), std::string::npos);
}

TEST(Cli, ParseOverrides) {
    auto o = cli::parse_overrides({"Jacket=storage_box"});
    EXPECT_EQ(o.at(fold_name("Jacket")), Destination::storage_box);
    EXPECT_THROW(cli::parse_overrides({"Jacket=moon"}), UnknownDestination);
    EXPECT_THROW(cli::parse_overrides({"Jacket"}), PreconditionViolation);
}

TEST(Cli, ParseConfig) {
    auto c = cli::parse_config(json{{"k", 7},
                                    {"temperature", 0.0},
                                    {"agents", {{"router", {{"base_url", "stub:hash"}, {"model", "r"}}}}},
                                    {"models", json::array({{{"base_url", "http://h:1"}, {"model", "m"}}})}});
    EXPECT_EQ(c.k, 7U);
    ASSERT_TRUE(c.router);
    EXPECT_EQ(c.router->model, "r");
    EXPECT_FALSE(c.planner);
    ASSERT_EQ(c.models.size(), 1U);
    EXPECT_EQ(c.models[0].label, "m");
    EXPECT_THROW(cli::parse_config(json::array()), PreconditionViolation);
    EXPECT_THROW(cli::parse_config(json{{"k", "five"}}), PreconditionViolation);
}

}  // namespace
}  // namespace homeagent
