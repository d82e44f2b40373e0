#pragma once

// Command-line front end: batch evaluation, scripted replay, an interactive
// chat loop, fixture validation and the HTTP service.

#include "homeagent/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace homeagent::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitUnreachable = 2;

// Static configuration: backends per agent role, eval models, k, temperature
// and where prompts and fixtures live. Flags override individual fields.
struct CliConfig {
    std::string fixtures_dir = "fixtures";
    std::string prompt_pack = "prompts/pack_v1.json";
    std::size_t k = memory::kDefaultTopK;
    std::optional<double> temperature;
    std::optional<gateway::BackendConfig> router;
    std::optional<gateway::BackendConfig> planner;
    std::optional<gateway::BackendConfig> historian;
    gateway::BackendConfig embedder{"hash", "stub:hash", "hash-ngram-256"};
    std::vector<gateway::BackendConfig> models;
};

inline CliConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw PreconditionViolation("config must be a JSON object");
    try {
        CliConfig c;
        c.fixtures_dir = doc.value("fixtures", c.fixtures_dir);
        c.prompt_pack = doc.value("prompt_pack", c.prompt_pack);
        c.k = doc.value("k", c.k);
        if (doc.contains("temperature")) c.temperature = doc["temperature"].get<double>();
        if (doc.contains("agents")) {
            const auto& a = doc["agents"];
            if (a.contains("router")) c.router = a["router"].get<gateway::BackendConfig>();
            if (a.contains("planner")) c.planner = a["planner"].get<gateway::BackendConfig>();
            if (a.contains("historian")) c.historian = a["historian"].get<gateway::BackendConfig>();
        }
        if (doc.contains("embedder")) c.embedder = doc["embedder"].get<gateway::BackendConfig>();
        if (doc.contains("models")) c.models = doc["models"].get<std::vector<gateway::BackendConfig>>();
        return c;
    } catch (const json::exception& e) {
        throw PreconditionViolation(std::string("config: ") + e.what());
    }
}

// A models file is either a bare array of backend configs or a full config.
inline std::vector<gateway::BackendConfig> load_models(const std::string& path) {
    const auto doc = gateway::read_json_file(path);
    if (doc.is_array()) {
        try {
            return doc.get<std::vector<gateway::BackendConfig>>();
        } catch (const json::exception& e) {
            throw PreconditionViolation(path + ": " + e.what());
        }
    }
    return parse_config(doc).models;
}

inline orchestrator::Agents build_agents(const CliConfig& c, const PromptPack& prompts) {
    auto role = [&](const std::optional<gateway::BackendConfig>& cfg, const char* name) {
        if (!cfg) throw PreconditionViolation(std::string("no backend configured for the ") + name + " agent");
        auto copy = *cfg;
        if (c.temperature) copy.temperature = *c.temperature;
        return gateway::make_model(copy);
    };
    orchestrator::Agents a;
    a.prompts = prompts;
    a.router = role(c.router, "router");
    a.planner = role(c.planner, "planner");
    a.historian = role(c.historian, "historian");
    a.embedder = gateway::make_backend(c.embedder);
    return a;
}

// Unreachable backends, by label; scripted and stub backends always answer.
inline std::vector<std::string> unreachable(const std::vector<gateway::BackendConfig>& configs) {
    std::vector<std::string> out;
    for (const auto& cfg : configs) {
        if (!gateway::make_backend(cfg)->reachable()) out.push_back(cfg.label.empty() ? cfg.base_url : cfg.label);
    }
    return out;
}

inline Timestamp replay_start() { return parse_iso8601("2025-03-10T18:30:00Z"); }

// The scripted demonstration: the three tidy-up commands in one session, then
// the four follow-up questions. Returns one TurnRecord document per turn.
inline std::vector<json> run_replay(const orchestrator::Agents& agents, const eval::FixtureSet& fx,
                                    const sim::SpokenOverride& overrides) {
    orchestrator::Orchestrator orch(agents, fx.scenarios, std::make_shared<ManualClock>(replay_start()));
    orchestrator::SessionConfig cfg;
    cfg.scenario_id = std::string(sim::kScenarioIds.front());
    cfg.spoken_overrides = overrides;
    auto session = orch.new_session("replay", cfg);
    std::vector<json> out;
    for (const auto& scenario : fx.scenarios.all()) {
        orchestrator::enter_scenario(session, orch.library(), scenario.id);
        out.push_back(orchestrator::to_json(orch.handle_turn(session, scenario.command)));
    }
    for (const auto& q : fx.knowledge.questions) out.push_back(orchestrator::to_json(orch.handle_turn(session, q.text)));
    json final_world = session.world;
    out.push_back({{"world", final_world}});
    return out;
}

inline sim::SpokenOverride parse_overrides(const std::vector<std::string>& items) {
    sim::SpokenOverride out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw PreconditionViolation("override must look like Object=destination: " + item);
        out[fold_name(item.substr(0, eq))] = parse_destination(item.substr(eq + 1));
    }
    return out;
}

inline std::atomic<service::Service*> g_serving{nullptr};

inline void stop_serving(int) {
    if (auto* s = g_serving.load()) s->server().stop();
}

struct Io {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
};

inline int run(int argc, const char* const* argv, Io io) {
    CLI::App app{"Household robot agent orchestration: evaluation, chat and service"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string config_path;
    std::string fixtures_dir;
    std::string prompt_pack;
    std::vector<std::string> scripted;
    app.add_option("--config", config_path, "Configuration file (JSON)")->check(CLI::ExistingFile);
    app.add_option("--fixtures", fixtures_dir, "Fixture directory");
    app.add_option("--prompts", prompt_pack, "Prompt pack file");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Run one evaluation phase and write reports");
    std::string phase_text;
    std::string models_path;
    int reps = 5;
    bool no_rag = false;
    bool keyword_fallback = false;
    int jobs = 1;
    std::size_t k = 0;
    std::string out_dir = "eval_out";
    eval_cmd->add_option("--phase", phase_text, "task | kb | routing")
        ->required()
        ->check(CLI::IsMember({"task", "kb", "routing", "task_planning", "knowledge_base"}));
    eval_cmd->add_option("--models", models_path, "Model list (JSON array or config file)")->check(CLI::ExistingFile);
    eval_cmd->add_option("--scripted", scripted, "Scripted backend file; repeat for several models")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--reps", reps, "Repetitions per item")->check(CLI::PositiveNumber);
    eval_cmd->add_flag("--no-rag", no_rag, "Knowledge base: add the without-retrieval ablation block");
    eval_cmd->add_flag("--keyword-fallback", keyword_fallback, "Routing: admit models without tool calling");
    eval_cmd->add_option("--k", k, "Retrieved chunks per question")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--jobs", jobs, "Concurrent items")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--out", out_dir, "Output directory");

    // replay
    auto* replay_cmd = app.add_subcommand("replay", "Replay the scripted scenarios and questions as TurnRecords");
    std::vector<std::string> overrides_text{"Jacket=storage_box"};
    std::string replay_out;
    replay_cmd->add_option("--scripted", scripted, "Scripted backend for all agents")->check(CLI::ExistingFile);
    replay_cmd->add_option("--override", overrides_text, "Object=destination told to the user instead of the executed one");
    replay_cmd->add_option("--out", replay_out, "Write turns.jsonl here instead of stdout");

    // chat
    auto* chat_cmd = app.add_subcommand("chat", "Interactive session against the configured agents");
    std::string scenario_id = "dining_table";
    std::vector<std::string> chat_overrides;
    bool chat_json = false;
    chat_cmd->add_option("--scenario", scenario_id, "Starting scenario");
    chat_cmd->add_option("--scripted", scripted, "Scripted backend for all agents")->check(CLI::ExistingFile);
    chat_cmd->add_option("--override", chat_overrides, "Object=destination told to the user");
    chat_cmd->add_flag("--json", chat_json, "Print full TurnRecords");

    // fixtures validate
    auto* fixtures_cmd = app.add_subcommand("fixtures", "Fixture utilities");
    auto* validate_cmd = fixtures_cmd->add_subcommand("validate", "Check every fixture invariant");
    fixtures_cmd->require_subcommand(1);
    std::vector<std::string> validate_scripts;
    validate_cmd->add_option("--script", validate_scripts, "Also parse these scripted backend files");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP service");
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string cors = "*";
    serve_cmd->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
    serve_cmd->add_option("--host", host, "Bind address");
    serve_cmd->add_option("--cors-origin", cors, "Allowed browser origin");
    serve_cmd->add_option("--scripted", scripted, "Scripted backend for all agents")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, io.out, io.err);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    try {
        CliConfig cfg;
        if (!config_path.empty()) cfg = parse_config(gateway::read_json_file(config_path));
        if (!fixtures_dir.empty()) cfg.fixtures_dir = fixtures_dir;
        if (!prompt_pack.empty()) cfg.prompt_pack = prompt_pack;
        auto load = [&] { return eval::load_fixtures(cfg.fixtures_dir, cfg.prompt_pack); };
        auto use_script_for_agents = [&]() {
            if (scripted.empty()) return;
            const auto sc = gateway::script_config(scripted.front());
            cfg.router = cfg.planner = cfg.historian = sc;
        };
        auto check_reachable = [&](const std::vector<gateway::BackendConfig>& configs) {
            const auto down = unreachable(configs);
            for (const auto& d : down) io.err << "backend unreachable: " << d << "\n";
            return down.empty();
        };

        if (*eval_cmd) {
            auto fx = load();
            if (auto problems = eval::validate_fixtures(fx); !problems.empty()) {
                for (const auto& p : problems) io.err << "fixture: " << p << "\n";
                return kExitInvalid;
            }
            eval::RunSpec spec;
            spec.phase = eval::parse_phase(phase_text);
            spec.models = models_path.empty() ? cfg.models : load_models(models_path);
            for (const auto& s : scripted) spec.models.push_back(gateway::script_config(s));
            if (cfg.temperature) {
                for (auto& m : spec.models) m.temperature = *cfg.temperature;
            }
            spec.repetitions = reps;
            spec.rag_ablation = no_rag;
            spec.keyword_fallback = keyword_fallback;
            spec.k = k > 0 ? k : cfg.k;
            spec.jobs = jobs;
            spec.embedder = cfg.embedder;
            spec.validate();
            if (!check_reachable(spec.models)) return kExitUnreachable;
            const auto report = eval::Harness(std::move(fx)).run(spec);
            io.out << eval::render_text(report);
            for (const auto& name : eval::write_report(report, out_dir)) {
                io.out << "wrote " << (std::filesystem::path(out_dir) / name).string() << "\n";
            }
            return kExitOk;
        }

        if (*replay_cmd) {
            auto fx = load();
            use_script_for_agents();
            auto agents = build_agents(cfg, fx.prompts);
            const auto turns = run_replay(agents, fx, parse_overrides(overrides_text));
            std::string text;
            for (const auto& t : turns) text += t.dump() + "\n";
            if (replay_out.empty()) {
                io.out << text;
            } else {
                std::filesystem::create_directories(replay_out);
                const auto path = std::filesystem::path(replay_out) / "turns.jsonl";
                std::ofstream(path, std::ios::binary) << text;
                json manifest{{"files", {{{"name", "turns.jsonl"}, {"fnv1a64", gateway::hex64(gateway::fnv1a64(text))}}}},
                              {"fixture_hash", fx.hash}};
                std::ofstream(std::filesystem::path(replay_out) / "manifest_replay.json") << manifest.dump(2) << "\n";
                io.out << "wrote " << path.string() << "\n";
            }
            return kExitOk;
        }

        if (*chat_cmd) {
            auto fx = load();
            use_script_for_agents();
            auto agents = build_agents(cfg, fx.prompts);
            if (!check_reachable({agents.router.config, agents.planner.config, agents.historian.config})) {
                return kExitUnreachable;
            }
            orchestrator::Orchestrator orch(std::move(agents), fx.scenarios, std::make_shared<SystemClock>());
            orchestrator::SessionConfig sc;
            sc.scenario_id = scenario_id;
            sc.k = cfg.k;
            sc.spoken_overrides = parse_overrides(chat_overrides);
            auto session = orch.new_session("chat", sc);
            io.out << "scenario " << session.scenario.id << ": " << session.scenario.objects.size()
                   << " objects. Commands: :scenario <id>, :world, :history, :quit\n";
            std::string line;
            while (io.out << "> " << std::flush, std::getline(io.in, line)) {
                line = trim(line);
                if (line.empty()) continue;
                if (line == ":quit" || line == ":q") break;
                if (line == ":world") {
                    io.out << json(session.world).dump(2) << "\n";
                    continue;
                }
                if (line == ":history") {
                    io.out << json(session.history).dump(2) << "\n";
                    continue;
                }
                if (line.rfind(":scenario", 0) == 0) {
                    try {
                        orchestrator::enter_scenario(session, orch.library(), trim(line.substr(9)));
                        io.out << "scenario " << session.scenario.id << "\n";
                    } catch (const Error& e) {
                        io.out << "error: " << e.what() << "\n";
                    }
                    continue;
                }
                const auto rec = orch.handle_turn(session, line);
                if (chat_json) {
                    io.out << orchestrator::to_json(rec).dump(2) << "\n";
                } else if (rec.error) {
                    io.out << "[" << rec.error->stage << " failed] " << rec.error->code << ": " << rec.error->message
                           << "\n";
                } else {
                    io.out << "[" << category_name(rec.route.category) << "] " << rec.narration << "\n";
                }
            }
            return kExitOk;
        }

        if (*validate_cmd) {
            int bad = 0;
            try {
                const auto fx = load();
                for (const auto& p : eval::validate_fixtures(fx)) {
                    io.err << "fixture: " << p << "\n";
                    ++bad;
                }
                if (bad == 0) {
                    io.out << "ok: " << fx.scenarios.all().size() << " scenarios, " << fx.knowledge.dialogue.size()
                           << " dialogue pairs, " << fx.knowledge.questions.size() << " questions, "
                           << fx.routing.size() << " routing queries (hash " << fx.hash << ")\n";
                }
            } catch (const Error& e) {
                io.err << "fixture: " << e.what() << "\n";
                ++bad;
            }
            for (const auto& s : validate_scripts) {
                try {
                    const auto entries = gateway::parse_script(gateway::read_json_file(s));
                    io.out << "ok: " << s << " (" << entries.size() << " entries)\n";
                } catch (const Error& e) {
                    io.err << "script: " << e.what() << "\n";
                    ++bad;
                }
            }
            return bad == 0 ? kExitOk : kExitInvalid;
        }

        if (*serve_cmd) {
            auto fx = load();
            use_script_for_agents();
            auto agents = build_agents(cfg, fx.prompts);
            if (!check_reachable({agents.router.config, agents.planner.config, agents.historian.config})) {
                return kExitUnreachable;
            }
            auto orch = std::make_shared<orchestrator::Orchestrator>(std::move(agents), fx.scenarios,
                                                                     std::make_shared<SystemClock>());
            service::ServiceConfig sc;
            sc.cors_origin = cors;
            service::Service svc(orch, std::move(fx), sc);
            if (!svc.bind(host, port)) {
                io.err << "cannot bind " << host << ":" << port << "\n";
                return kExitInvalid;
            }
            g_serving = &svc;
            std::signal(SIGINT, stop_serving);
            std::signal(SIGTERM, stop_serving);
            io.out << "listening on http://" << host << ":" << port << "/v1\n" << std::flush;
            svc.listen_after_bind();
            g_serving = nullptr;
            return kExitOk;
        }
    } catch (const TransportError& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitUnreachable;
    } catch (const Error& e) {
        io.err << "error: " << e.code() << ": " << e.what() << "\n";
        return kExitInvalid;
    }
    return kExitOk;
}

}  // namespace homeagent::cli
