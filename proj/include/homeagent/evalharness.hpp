#pragma once

// Evaluation phases: task planning accuracy, knowledge base validity (with
// and without retrieval), and routing success rate.

#include "homeagent/backends.hpp"
#include "homeagent/historian.hpp"
#include "homeagent/metrics.hpp"
#include "homeagent/planner.hpp"
#include "homeagent/router.hpp"
#include "homeagent/simulator.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace homeagent::eval {

enum class Phase { task_planning, knowledge_base, routing };

inline std::string_view phase_name(Phase p) {
    switch (p) {
        case Phase::task_planning: return "task_planning";
        case Phase::knowledge_base: return "knowledge_base";
        case Phase::routing: return "routing";
    }
    return "task_planning";
}

inline Phase parse_phase(std::string_view s) {
    const auto v = to_lower(trim(s));
    if (v == "task" || v == "task_planning") return Phase::task_planning;
    if (v == "kb" || v == "knowledge_base") return Phase::knowledge_base;
    if (v == "routing") return Phase::routing;
    throw PreconditionViolation("unknown phase: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Fixtures

struct ExpectedItem {
    std::string name;
    std::vector<std::string> aliases;
};

struct KnowledgeQuestion {
    std::string id;
    std::string label;
    bool set_valued = false;
    std::string text;
    std::string truth;
    std::vector<std::string> accept;
    std::vector<std::string> reject;
    std::vector<ExpectedItem> expected;
};

struct InjectedError {
    long long entry_id = 0;
    std::string object;
    Destination spoken = Destination::storage_box;
    Destination executed = Destination::trash_can;
};

struct KnowledgeFixture {
    std::vector<memory::DialogueEntry> dialogue;
    std::vector<InjectedError> injected_errors;
    std::vector<KnowledgeQuestion> questions;
};

struct RoutingQuery {
    std::string id;
    std::string text;
    RouteCategory expected = RouteCategory::unclear;
    std::string group;  // task_planning | knowledge_base
};

struct FixtureSet {
    sim::ScenarioLibrary scenarios;
    KnowledgeFixture knowledge;
    std::vector<RoutingQuery> routing;
    PromptPack prompts;
    std::string hash;  // FNV-1a over every fixture file, in load order
};

inline KnowledgeFixture parse_knowledge(const json& dialogue, const json& questions) {
    try {
        KnowledgeFixture k;
        k.dialogue = dialogue.at("entries").get<std::vector<memory::DialogueEntry>>();
        for (const auto& e : dialogue.value("injected_errors", json::array())) {
            k.injected_errors.push_back({e.at("entry_id").get<long long>(), e.at("object").get<std::string>(),
                                         parse_destination(e.at("spoken").get<std::string>()),
                                         parse_destination(e.at("executed").get<std::string>())});
        }
        for (const auto& q : questions.at("questions")) {
            KnowledgeQuestion kq;
            kq.id = q.at("id").get<std::string>();
            kq.label = q.value("label", kq.id);
            const auto kind = q.value("kind", std::string("single"));
            if (kind != "single" && kind != "set") throw FixtureError("question " + kq.id + ": unknown kind " + kind);
            kq.set_valued = kind == "set";
            kq.text = q.at("text").get<std::string>();
            kq.truth = q.value("truth", std::string());
            kq.accept = q.value("accept", std::vector<std::string>{});
            kq.reject = q.value("reject", std::vector<std::string>{});
            for (const auto& item : q.value("expected", json::array())) {
                kq.expected.push_back({item.at("name").get<std::string>(),
                                       item.at("aliases").get<std::vector<std::string>>()});
            }
            k.questions.push_back(std::move(kq));
        }
        return k;
    } catch (const json::exception& e) {
        throw FixtureError(std::string("knowledge fixture: ") + e.what());
    }
}

inline std::vector<RoutingQuery> parse_routing(const json& doc) {
    try {
        std::vector<RoutingQuery> out;
        for (const auto& q : doc.at("queries")) {
            out.push_back({q.at("id").get<std::string>(), q.at("text").get<std::string>(),
                           parse_category(q.at("expected").get<std::string>()), q.at("group").get<std::string>()});
        }
        return out;
    } catch (const json::exception& e) {
        throw FixtureError(std::string("routing fixture: ") + e.what());
    }
}

// Rough token estimate used only to sanity-check fixture length.
inline std::size_t approx_tokens(std::string_view text) { return (text.size() + 3) / 4; }

inline std::vector<std::string> check_knowledge(const KnowledgeFixture& k) {
    std::vector<std::string> problems;
    if (k.dialogue.size() != 21) problems.push_back("dialogue has " + std::to_string(k.dialogue.size()) + " pairs, expected 21");
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < k.dialogue.size(); ++i) {
        const auto& e = k.dialogue[i];
        if (e.entry_id != static_cast<long long>(i) + 1) problems.push_back("dialogue entry ids are not dense from 1");
        if (i > 0 && e.timestamp < k.dialogue[i - 1].timestamp) problems.push_back("dialogue timestamps go backwards");
        if (trim(e.question).empty() || trim(e.answer).empty()) problems.push_back("dialogue entry with empty text");
        tokens += approx_tokens(memory::render_chunk(e));
    }
    if (tokens < 3000 || tokens > 5000) {
        problems.push_back("dialogue length ~" + std::to_string(tokens) + " tokens, expected about 4000");
    }
    for (const auto& ie : k.injected_errors) {
        if (ie.entry_id < 1 || ie.entry_id > static_cast<long long>(k.dialogue.size())) {
            problems.push_back("injected error refers to missing entry " + std::to_string(ie.entry_id));
            continue;
        }
        const auto& answer = k.dialogue[static_cast<std::size_t>(ie.entry_id - 1)].answer;
        const auto told = "Moved " + ie.object + " to " + std::string(destination_phrase(ie.spoken)) + ".";
        if (answer.find(told) == std::string::npos) {
            problems.push_back("injected error for " + ie.object + " is not narrated in entry " + std::to_string(ie.entry_id));
        }
        if (ie.spoken == ie.executed) problems.push_back("injected error for " + ie.object + " has no discrepancy");
    }
    if (k.questions.empty()) problems.push_back("no knowledge questions");
    for (const auto& q : k.questions) {
        if (trim(q.text).empty()) problems.push_back("question " + q.id + " has no text");
        if (q.set_valued && q.expected.empty()) problems.push_back("set question " + q.id + " has no expected items");
        if (!q.set_valued && q.accept.empty()) problems.push_back("question " + q.id + " has no accept patterns");
        for (const auto& item : q.expected) {
            if (item.aliases.empty()) problems.push_back("question " + q.id + ": item " + item.name + " has no aliases");
        }
    }
    return problems;
}

inline std::vector<std::string> check_routing(const std::vector<RoutingQuery>& queries) {
    std::vector<std::string> problems;
    if (queries.empty()) problems.push_back("no routing queries");
    for (const auto& q : queries) {
        if (trim(q.text).empty()) problems.push_back("routing query " + q.id + " has no text");
        if (q.group != "task_planning" && q.group != "knowledge_base") {
            problems.push_back("routing query " + q.id + " has unknown group " + q.group);
        }
        if (q.expected == RouteCategory::unclear) problems.push_back("routing query " + q.id + " expects unclear");
    }
    return problems;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FixtureError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline FixtureSet load_fixtures(const std::filesystem::path& fixtures_dir, const std::filesystem::path& prompt_pack) {
    FixtureSet f;
    std::string all;
    auto read = [&](const std::filesystem::path& p) {
        auto text = read_text_file(p);
        all += text;
        all += '\0';
        try {
            return json::parse(text);
        } catch (const json::exception& e) {
            throw FixtureError(p.string() + ": " + e.what());
        }
    };
    for (auto id : sim::kScenarioIds) (void)read(fixtures_dir / "scenarios" / (std::string(id) + ".json"));
    f.scenarios = sim::ScenarioLibrary::load_dir(fixtures_dir / "scenarios");
    const auto dialogue = read(fixtures_dir / "knowledge" / "dialogue.json");
    const auto questions = read(fixtures_dir / "knowledge" / "questions.json");
    f.knowledge = parse_knowledge(dialogue, questions);
    f.routing = parse_routing(read(fixtures_dir / "routing" / "queries.json"));
    f.prompts = parse_prompt_pack(read(prompt_pack));
    f.hash = gateway::hex64(gateway::fnv1a64(all));
    return f;
}

// Every violated fixture invariant; empty when the set is usable.
inline std::vector<std::string> validate_fixtures(const FixtureSet& f) {
    std::vector<std::string> problems;
    for (const auto& s : f.scenarios.all()) {
        for (auto& p : sim::check_scenario(s)) problems.push_back(std::move(p));
    }
    for (auto& p : check_knowledge(f.knowledge)) problems.push_back(std::move(p));
    for (auto& p : check_routing(f.routing)) problems.push_back(std::move(p));
    try {
        f.prompts.validate();
    } catch (const Error& e) {
        problems.push_back(std::string("prompt pack: ") + e.what());
    }
    return problems;
}

// ---------------------------------------------------------------------------
// Scoring

struct ObjectVerdict {
    std::string object;
    bool strict = false;
    bool lenient = false;
};

// Per-object verdicts for one run. No plan (invalid JSON, failed run) makes
// every object incorrect, stationary ones included.
inline std::vector<ObjectVerdict> score_plan(const std::optional<TaskPlan>& plan, const sim::Scenario& scenario) {
    std::map<std::string, Destination> assigned;
    if (plan) {
        for (const auto& step : plan->steps) {
            for (const auto& o : step.objects) assigned.try_emplace(fold_name(o), step.destination);
        }
    }
    std::vector<ObjectVerdict> out;
    for (const auto& object : scenario.objects) {
        const auto& gold = scenario.gold_for(object);
        ObjectVerdict v{object, false, false};
        if (plan) {
            auto it = assigned.find(fold_name(object));
            if (it == assigned.end() || it->second == Destination::stationary) {
                v.strict = v.lenient = gold.stationary;
            } else if (!gold.stationary) {
                v.strict = it->second == gold.destination;
                v.lenient = v.strict ||
                            std::find(gold.lenient.begin(), gold.lenient.end(), it->second) != gold.lenient.end();
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

// Lowercase, punctuation to spaces, single spaces, padded with one space on
// each side so patterns match whole words.
inline std::string normalize_for_match(std::string_view text) {
    std::string out = " ";
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) != 0) {
            out += static_cast<char>(std::tolower(u));
        } else if (out.back() != ' ') {
            out += ' ';
        }
    }
    if (out.back() != ' ') out += ' ';
    return out;
}

inline bool mentions(const std::string& normalized_answer, std::string_view pattern) {
    const auto p = normalize_for_match(pattern);
    return p.size() > 2 && normalized_answer.find(p) != std::string::npos;
}

inline double score_knowledge(std::string_view answer, const KnowledgeQuestion& q) {
    const auto a = normalize_for_match(answer);
    if (q.set_valued) {
        if (q.expected.empty()) return 0.0;
        std::size_t found = 0;
        for (const auto& item : q.expected) {
            if (std::any_of(item.aliases.begin(), item.aliases.end(), [&](const auto& al) { return mentions(a, al); })) {
                ++found;
            }
        }
        return static_cast<double>(found) / static_cast<double>(q.expected.size());
    }
    for (const auto& r : q.reject) {
        if (mentions(a, r)) return 0.0;
    }
    for (const auto& p : q.accept) {
        if (mentions(a, p)) return 1.0;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Run specification and report

struct RunSpec {
    Phase phase = Phase::task_planning;
    std::vector<gateway::BackendConfig> models;
    int repetitions = 5;
    bool rag_ablation = false;  // knowledge base: add the without-retrieval block
    std::size_t k = memory::kDefaultTopK;
    int abort_after = 3;          // consecutive transport failures before an item is abandoned
    bool keyword_fallback = false;  // routing: admit models without tool calling
    int jobs = 1;
    gateway::BackendConfig embedder{"hash", "stub:hash", "hash-ngram-256"};
    std::optional<gateway::BackendConfig> judge;  // advisory only, never scored

    void validate() const {
        if (repetitions < 1) throw PreconditionViolation("repetitions must be >= 1");
        if (models.empty()) throw PreconditionViolation("run needs at least one model");
        if (k < 1) throw PreconditionViolation("k must be >= 1");
        if (abort_after < 1) throw PreconditionViolation("abort threshold must be >= 1");
        if (jobs < 1) throw PreconditionViolation("jobs must be >= 1");
        for (const auto& m : models) m.validate();
        embedder.validate();
        if (judge) judge->validate();
    }
};

inline void to_json(json& j, const RunSpec& s) {
    j = json{{"phase", phase_name(s.phase)}, {"models", s.models},         {"repetitions", s.repetitions},
             {"rag_ablation", s.rag_ablation}, {"k", s.k},                   {"abort_after", s.abort_after},
             {"keyword_fallback", s.keyword_fallback}, {"jobs", s.jobs},     {"embedder", s.embedder}};
    if (s.judge) j["judge"] = *s.judge;
}

inline void from_json(const json& j, RunSpec& s) {
    s.phase = parse_phase(j.at("phase").get<std::string>());
    s.models = j.at("models").get<std::vector<gateway::BackendConfig>>();
    s.repetitions = j.value("repetitions", 5);
    s.rag_ablation = j.value("rag_ablation", false);
    s.k = j.value("k", memory::kDefaultTopK);
    s.abort_after = j.value("abort_after", 3);
    s.keyword_fallback = j.value("keyword_fallback", false);
    s.jobs = j.value("jobs", 1);
    if (j.contains("embedder")) s.embedder = j["embedder"].get<gateway::BackendConfig>();
    if (j.contains("judge") && !j["judge"].is_null()) s.judge = j["judge"].get<gateway::BackendConfig>();
}

inline constexpr std::string_view kTotalItem = "total";

struct ReportRow {
    std::string block;  // "" or with_rag / without_rag
    std::string model;
    std::string item;  // scenario id, question id, query group, or "total"
    std::string metric;
    Ratio ratio;
};

struct EvalReport {
    Phase phase = Phase::task_planning;
    json metadata;
    std::vector<ReportRow> rows;
    json runs = json::array();  // raw per-run records
    std::vector<std::string> warnings;
    std::vector<std::string> invalid_items;

    const ReportRow* find(std::string_view block, std::string_view model, std::string_view item,
                          std::string_view metric) const {
        for (const auto& r : rows) {
            if (r.block == block && r.model == model && r.item == item && r.metric == metric) return &r;
        }
        return nullptr;
    }

    std::string cell(std::string_view block, std::string_view model, std::string_view item,
                     std::string_view metric) const {
        const auto* r = find(block, model, item, metric);
        return r == nullptr ? "-" : format_percent(r->ratio);
    }
};

inline std::string block_title(std::string_view block) {
    if (block == "with_rag") return "With RAG";
    if (block == "without_rag") return "Without RAG (Ablation Study)";
    return std::string(block);
}

// Recomputes every total from its item rows and checks percentages are
// well-formed. Returns the inconsistencies found.
inline std::vector<std::string> check_report(const EvalReport& report) {
    std::vector<std::string> problems;
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<Ratio>> items;
    for (const auto& r : report.rows) {
        if (r.ratio.denominator <= 0.0 || r.ratio.numerator < 0.0 || r.ratio.numerator > r.ratio.denominator + 1e-9) {
            problems.push_back("row " + r.model + "/" + r.item + "/" + r.metric + " has invalid counts");
        }
        if (r.item != kTotalItem) items[{r.block, r.model, r.metric}].push_back(r.ratio);
    }
    for (const auto& r : report.rows) {
        if (r.item != kTotalItem) continue;
        auto it = items.find({r.block, r.model, r.metric});
        if (it == items.end()) {
            problems.push_back("total without items for " + r.model + "/" + r.metric);
            continue;
        }
        const auto expect = macro_average(it->second);
        if (std::abs(expect.numerator - r.ratio.numerator) > 1e-9 || expect.denominator != r.ratio.denominator) {
            problems.push_back("total for " + r.model + "/" + r.metric + " does not match its items");
        }
    }
    return problems;
}

namespace detail {

inline std::string pad(std::string s, std::size_t width, bool right = false) {
    if (s.size() >= width) return s;
    return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

inline std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::vector<std::string> models_in(const EvalReport& r) {
    std::vector<std::string> out;
    for (const auto& row : r.rows) {
        if (std::find(out.begin(), out.end(), row.model) == out.end()) out.push_back(row.model);
    }
    return out;
}

inline std::vector<std::string> ordered(const json& meta, const char* key) {
    std::vector<std::string> out;
    for (const auto& v : meta.value(key, json::array())) out.push_back(v.get<std::string>());
    return out;
}

}  // namespace detail

// Plain-text table laid out like the reference tables.
inline std::string render_text(const EvalReport& report) {
    using detail::pad;
    std::ostringstream out;
    const auto models = detail::models_in(report);
    const auto items = detail::ordered(report.metadata, "items");
    const auto labels = detail::ordered(report.metadata, "item_labels");
    auto label = [&](std::size_t i) { return i < labels.size() ? labels[i] : items[i]; };
    std::size_t mw = 12;
    for (const auto& m : models) mw = std::max(mw, m.size() + 2);

    if (report.phase == Phase::task_planning) {
        out << "Task planning accuracy (%), strict / lenient\n";
        auto cols = items;
        cols.emplace_back(kTotalItem);
        std::vector<std::size_t> widths;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            widths.push_back(std::max<std::size_t>(15, i < items.size() ? label(i).size() : 5));
        }
        out << pad("Model", mw);
        for (std::size_t i = 0; i < cols.size(); ++i) out << " | " << pad(i < items.size() ? label(i) : "Total", widths[i]);
        out << "\n" << pad("", mw);
        for (std::size_t i = 0; i < cols.size(); ++i) out << " | " << pad("Strict", 7, true) << pad("Lenient", widths[i] - 7, true);
        out << "\n";
        for (const auto& m : models) {
            out << pad(m, mw);
            for (std::size_t i = 0; i < cols.size(); ++i) {
                out << " | " << pad(report.cell("", m, cols[i], "strict"), 7, true)
                    << pad(report.cell("", m, cols[i], "lenient"), widths[i] - 7, true);
            }
            out << "\n";
        }
    } else if (report.phase == Phase::knowledge_base) {
        out << "Knowledge base validity (%)\n";
        out << pad("Model", mw);
        for (std::size_t i = 0; i < items.size(); ++i) out << " | " << pad(label(i), 14, true);
        out << " | " << pad("Total", 7, true) << "\n";
        for (const auto& block : detail::ordered(report.metadata, "blocks")) {
            out << block_title(block) << "\n";
            for (const auto& m : models) {
                out << pad(m, mw);
                for (const auto& it : items) out << " | " << pad(report.cell(block, m, it, "validity"), 14, true);
                out << " | " << pad(report.cell(block, m, std::string(kTotalItem), "validity"), 7, true) << "\n";
            }
        }
    } else {
        out << "Routing success rate (%)\n";
        out << pad("Model", mw);
        for (std::size_t i = 0; i < items.size(); ++i) out << " | " << pad(label(i), 24, true);
        out << " | " << pad("Total", 7, true) << "\n";
        for (const auto& m : models) {
            out << pad(m, mw);
            for (const auto& it : items) out << " | " << pad(report.cell("", m, it, "success"), 24, true);
            out << " | " << pad(report.cell("", m, std::string(kTotalItem), "success"), 7, true) << "\n";
        }
        for (const auto& ex : report.metadata.value("excluded_models", json::array())) {
            out << "(excluded: " << ex.get<std::string>() << ", no tool calling)\n";
        }
    }
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    return out.str();
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// Columns: phase, model, item, metric, numerator, denominator, percent.
// Knowledge base rows carry their block in the metric name.
inline std::string render_csv(const EvalReport& report) {
    std::string out = "phase,model,item,metric,numerator,denominator,percent\n";
    for (const auto& r : report.rows) {
        const auto metric = r.block.empty() ? r.metric : r.metric + "_" + r.block;
        out += std::string(phase_name(report.phase)) + "," + csv_field(r.model) + "," + csv_field(r.item) + "," +
               csv_field(metric) + "," + detail::number(r.ratio.numerator) + "," +
               detail::number(r.ratio.denominator) + "," + format_percent(r.ratio) + "\n";
    }
    return out;
}

inline json to_json_document(const EvalReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        json row{{"model", r.model},
                 {"item", r.item},
                 {"metric", r.metric},
                 {"numerator", r.ratio.numerator},
                 {"denominator", r.ratio.denominator},
                 {"percent", std::stod(format_percent(r.ratio))}};
        if (!r.block.empty()) row["block"] = r.block;
        rows.push_back(std::move(row));
    }
    return json{{"format", "homeagent-eval-report"},
                {"version", 1},
                {"phase", phase_name(report.phase)},
                {"metadata", report.metadata},
                {"rows", rows},
                {"runs", report.runs},
                {"warnings", report.warnings},
                {"invalid_items", report.invalid_items}};
}

// ---------------------------------------------------------------------------
// Execution

namespace detail {

// Fixed request time so scripted runs are reproducible.
inline Timestamp eval_time() { return parse_iso8601("2025-03-11T09:00:00Z"); }

inline bool is_transport(const Error& e) {
    return dynamic_cast<const TransportError*>(&e) != nullptr || dynamic_cast<const BackendRefusal*>(&e) != nullptr;
}

inline bool is_live(const gateway::BackendConfig& c) {
    return c.base_url.rfind("script:", 0) != 0 && c.base_url.rfind("stub:", 0) != 0;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be
// written to per-index slots; exceptions are rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// Attempt loop shared by all phases: stops an item after `abort_after`
// consecutive transport failures; the remaining repetitions count as invalid.
template <typename Attempt, typename Invalid>
bool run_repetitions(int reps, int abort_after, Attempt&& attempt, Invalid&& invalid) {
    int consecutive = 0;
    for (int rep = 0; rep < reps; ++rep) {
        if (consecutive >= abort_after) {
            invalid(rep, "Aborted", "item abandoned after repeated transport failures");
            continue;
        }
        try {
            attempt(rep);
            consecutive = 0;
        } catch (const Error& e) {
            if (!is_transport(e)) throw;
            ++consecutive;
            invalid(rep, e.code(), e.what());
        }
    }
    return consecutive >= abort_after;
}

inline std::optional<bool> ask_judge(const gateway::BackendConfig& judge, const KnowledgeQuestion& q,
                                     const std::string& answer) {
    try {
        auto model = gateway::make_model(judge);
        std::vector<gateway::ChatMessage> msgs{
            gateway::system_message("You grade answers of a household robot. Reply with YES or NO only."),
            gateway::user_message("Question: " + q.text + "\nReference: " + q.truth + "\nAnswer: " + answer +
                                  "\nIs the answer consistent with the reference?")};
        const auto reply = to_lower(trim(gateway::chat(*model.backend, msgs).content));
        if (reply.rfind("yes", 0) == 0) return true;
        if (reply.rfind("no", 0) == 0) return false;
    } catch (const Error&) {
    }
    return std::nullopt;
}

}  // namespace detail

class Harness {
public:
    explicit Harness(FixtureSet fixtures) : fx_(std::move(fixtures)) {}

    const FixtureSet& fixtures() const { return fx_; }

    EvalReport run(const RunSpec& spec) const {
        spec.validate();
        EvalReport report;
        report.phase = spec.phase;
        json models = json::array();
        for (const auto& m : spec.models) {
            json mj = m;
            mj["model_id"] = m.model;
            models.push_back(std::move(mj));
        }
        double temperature = spec.models.front().temperature;
        report.metadata = {{"phase", phase_name(spec.phase)},
                           {"models", models},
                           {"temperature", temperature},
                           {"k", spec.k},
                           {"repetitions", spec.repetitions},
                           {"fixture_hash", fx_.hash},
                           {"prompt_pack", fx_.prompts.version},
                           {"embedder", spec.embedder.model}};
        switch (spec.phase) {
            case Phase::task_planning: run_task(spec, report); break;
            case Phase::knowledge_base: run_knowledge(spec, report); break;
            case Phase::routing: run_routing(spec, report); break;
        }
        for (auto& p : check_report(report)) report.warnings.push_back("self-consistency: " + p);
        return report;
    }

private:
    void run_task(const RunSpec& spec, EvalReport& report) const {
        const auto& scenarios = fx_.scenarios.all();
        json items = json::array(), labels = json::array();
        for (const auto& s : scenarios) {
            items.push_back(s.id);
            labels.push_back(s.title);
        }
        report.metadata["items"] = items;
        report.metadata["item_labels"] = labels;

        struct Slot {
            std::vector<std::vector<ObjectVerdict>> verdicts;
            json runs = json::array();
            bool aborted = false;
        };
        const std::size_t n = spec.models.size() * scenarios.size();
        std::vector<Slot> slots(n);
        detail::parallel_for(n, spec.jobs, [&](std::size_t idx) {
            const auto& cfg = spec.models[idx / scenarios.size()];
            const auto& scenario = scenarios[idx % scenarios.size()];
            auto& slot = slots[idx];
            auto model = gateway::make_model(cfg);
            const auto objects = sim::observe(scenario);
            slot.aborted = detail::run_repetitions(
                spec.repetitions, spec.abort_after,
                [&](int rep) {
                    const auto req = make_request(scenario.command, "eval", detail::eval_time());
                    json run{{"model", cfg.label}, {"item", scenario.id}, {"rep", rep}};
                    std::optional<TaskPlan> plan;
                    try {
                        auto outcome = planner::plan(req, objects, fx_.prompts.planner, model);
                        plan = outcome.extraction.plan;
                        run["plan"] = plan_to_schema(*plan);
                        run["warnings"] = outcome.extraction.warnings;
                        run["retries"] = outcome.retries;
                    } catch (const PlanningFailed& e) {
                        run["error"] = e.cause_code;
                        run["message"] = e.what();
                    }
                    auto v = score_plan(plan, scenario);
                    run["verdicts"] = verdicts_json(v);
                    slot.verdicts.push_back(std::move(v));
                    slot.runs.push_back(std::move(run));
                },
                [&](int rep, const std::string& code, const std::string& message) {
                    slot.verdicts.push_back(score_plan(std::nullopt, scenario));
                    slot.runs.push_back({{"model", cfg.label},
                                         {"item", scenario.id},
                                         {"rep", rep},
                                         {"error", code},
                                         {"message", message},
                                         {"verdicts", verdicts_json(slot.verdicts.back())}});
                });
        });

        for (std::size_t mi = 0; mi < spec.models.size(); ++mi) {
            const auto& label = spec.models[mi].label;
            std::vector<Ratio> strict, lenient;
            for (std::size_t si = 0; si < scenarios.size(); ++si) {
                const auto& slot = slots[mi * scenarios.size() + si];
                Ratio s, l;
                for (const auto& run : slot.verdicts) {
                    for (const auto& v : run) {
                        s.denominator += 1.0;
                        l.denominator += 1.0;
                        s.numerator += v.strict ? 1.0 : 0.0;
                        l.numerator += v.lenient ? 1.0 : 0.0;
                    }
                }
                report.rows.push_back({"", label, scenarios[si].id, "strict", s});
                report.rows.push_back({"", label, scenarios[si].id, "lenient", l});
                strict.push_back(s);
                lenient.push_back(l);
                for (const auto& r : slot.runs) report.runs.push_back(r);
                if (slot.aborted) report.invalid_items.push_back(label + "/" + scenarios[si].id);
            }
            report.rows.push_back({"", label, std::string(kTotalItem), "strict", macro_average(strict)});
            report.rows.push_back({"", label, std::string(kTotalItem), "lenient", macro_average(lenient)});
        }
    }

    void run_knowledge(const RunSpec& spec, EvalReport& report) const {
        const auto& questions = fx_.knowledge.questions;
        json items = json::array(), labels = json::array();
        for (const auto& q : questions) {
            items.push_back(q.id);
            labels.push_back(q.label);
        }
        std::vector<std::string> blocks{"with_rag"};
        if (spec.rag_ablation) blocks.emplace_back("without_rag");
        report.metadata["items"] = items;
        report.metadata["item_labels"] = labels;
        report.metadata["blocks"] = blocks;
        report.metadata["dialogue_pairs"] = fx_.knowledge.dialogue.size();

        auto embedder = gateway::make_backend(spec.embedder);
        memory::MemoryStore store;
        store.ingest(fx_.knowledge.dialogue, *embedder);

        struct Slot {
            std::vector<double> scores;
            json runs = json::array();
            bool aborted = false;
        };
        const std::size_t per_model = blocks.size() * questions.size();
        const std::size_t n = spec.models.size() * per_model;
        std::vector<Slot> slots(n);
        detail::parallel_for(n, spec.jobs, [&](std::size_t idx) {
            const auto& cfg = spec.models[idx / per_model];
            const auto& block = blocks[(idx % per_model) / questions.size()];
            const auto& q = questions[idx % questions.size()];
            const auto mode =
                block == "with_rag" ? historian::ContextMode::retrieval : historian::ContextMode::full_history;
            auto& slot = slots[idx];
            auto model = gateway::make_model(cfg);
            auto local_embedder = gateway::make_backend(spec.embedder);
            slot.aborted = detail::run_repetitions(
                spec.repetitions, spec.abort_after,
                [&](int rep) {
                    const auto req = make_request(q.text, "eval", detail::eval_time());
                    auto ans = historian::answer(req, spec.k, store, fx_.prompts.historian, model, *local_embedder, mode);
                    const double score = score_knowledge(ans.text, q);
                    json evidence = json::array();
                    for (const auto& h : ans.provenance.hits) evidence.push_back(h.entry.entry_id);
                    json run{{"model", cfg.label}, {"block", block}, {"item", q.id}, {"rep", rep},
                             {"answer", ans.text}, {"score", score}, {"evidence", evidence}};
                    if (spec.judge) {
                        auto j = detail::ask_judge(*spec.judge, q, ans.text);
                        run["judge_valid"] = j ? json(*j) : json(nullptr);
                    }
                    slot.scores.push_back(score);
                    slot.runs.push_back(std::move(run));
                },
                [&](int rep, const std::string& code, const std::string& message) {
                    slot.scores.push_back(0.0);
                    slot.runs.push_back({{"model", cfg.label}, {"block", block}, {"item", q.id}, {"rep", rep},
                                         {"error", code}, {"message", message}, {"score", 0.0}});
                });
        });

        for (std::size_t mi = 0; mi < spec.models.size(); ++mi) {
            const auto& label = spec.models[mi].label;
            std::map<std::string, double> totals;
            for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
                std::vector<Ratio> per_item;
                for (std::size_t qi = 0; qi < questions.size(); ++qi) {
                    const auto& slot = slots[mi * per_model + bi * questions.size() + qi];
                    // Set-valued questions count one unit per expected item.
                    const double units = questions[qi].set_valued ? static_cast<double>(questions[qi].expected.size()) : 1.0;
                    Ratio r{0.0, units * static_cast<double>(slot.scores.size())};
                    for (double s : slot.scores) r.numerator += s * units;
                    report.rows.push_back({blocks[bi], label, questions[qi].id, "validity", r});
                    per_item.push_back(r);
                    for (const auto& run : slot.runs) report.runs.push_back(run);
                    if (slot.aborted) report.invalid_items.push_back(label + "/" + blocks[bi] + "/" + questions[qi].id);
                }
                const auto total = macro_average(per_item);
                report.rows.push_back({blocks[bi], label, std::string(kTotalItem), "validity", total});
                totals[blocks[bi]] = total.percent();
            }
            if (spec.rag_ablation && detail::is_live(spec.models[mi]) &&
                !(totals["with_rag"] > totals["without_rag"])) {
                report.warnings.push_back(label + ": validity with RAG (" + format_percent(totals["with_rag"]) +
                                          ") is not above validity without RAG (" +
                                          format_percent(totals["without_rag"]) + ")");
            }
        }
    }

    void run_routing(const RunSpec& spec, EvalReport& report) const {
        std::vector<std::string> groups;
        for (const auto& q : fx_.routing) {
            if (std::find(groups.begin(), groups.end(), q.group) == groups.end()) groups.push_back(q.group);
        }
        json labels = json::array();
        for (const auto& g : groups) labels.push_back(g == "task_planning" ? "Task Planning Queries" : "Knowledge Base Queries");
        report.metadata["items"] = groups;
        report.metadata["item_labels"] = labels;

        std::vector<const gateway::BackendConfig*> admitted;
        json excluded = json::array();
        for (const auto& m : spec.models) {
            if (m.tool_calling || spec.keyword_fallback) {
                admitted.push_back(&m);
            } else {
                excluded.push_back(m.label);
            }
        }
        report.metadata["excluded_models"] = excluded;
        report.metadata["keyword_fallback"] = spec.keyword_fallback;

        struct Slot {
            std::vector<std::pair<RouteCategory, RouteCategory>> decisions;
            json runs = json::array();
            bool aborted = false;
        };
        const auto& queries = fx_.routing;
        const std::size_t n = admitted.size() * queries.size();
        std::vector<Slot> slots(n);
        detail::parallel_for(n, spec.jobs, [&](std::size_t idx) {
            const auto& cfg = *admitted[idx / queries.size()];
            const auto& q = queries[idx % queries.size()];
            auto& slot = slots[idx];
            auto model = gateway::make_model(cfg);
            slot.aborted = detail::run_repetitions(
                spec.repetitions, spec.abort_after,
                [&](int rep) {
                    const auto req = make_request(q.text, "eval", detail::eval_time());
                    json run{{"model", cfg.label}, {"item", q.id}, {"rep", rep}};
                    RouteCategory actual = RouteCategory::unclear;
                    try {
                        const auto d = router::route(req, fx_.prompts.router, model);
                        actual = d.category;
                        run["via"] = via_name(d.via);
                    } catch (const RoutingUndecidable& e) {
                        run["error"] = e.code();
                    }
                    run["expected"] = category_name(q.expected);
                    run["actual"] = category_name(actual);
                    slot.decisions.emplace_back(q.expected, actual);
                    slot.runs.push_back(std::move(run));
                },
                [&](int rep, const std::string& code, const std::string& message) {
                    // a failed call is a wrong route
                    const auto wrong =
                        q.expected == RouteCategory::unclear ? RouteCategory::action_command : RouteCategory::unclear;
                    slot.decisions.emplace_back(q.expected, wrong);
                    slot.runs.push_back({{"model", cfg.label}, {"item", q.id}, {"rep", rep}, {"error", code},
                                         {"message", message}});
                });
        });

        for (std::size_t mi = 0; mi < admitted.size(); ++mi) {
            const auto& label = admitted[mi]->label;
            std::vector<Ratio> per_group;
            for (const auto& g : groups) {
                std::vector<std::pair<RouteCategory, RouteCategory>> decisions;
                for (std::size_t qi = 0; qi < queries.size(); ++qi) {
                    if (queries[qi].group != g) continue;
                    const auto& slot = slots[mi * queries.size() + qi];
                    decisions.insert(decisions.end(), slot.decisions.begin(), slot.decisions.end());
                    if (slot.aborted) report.invalid_items.push_back(label + "/" + queries[qi].id);
                }
                const auto r = router::score_routing(decisions);
                report.rows.push_back({"", label, g, "success", r});
                per_group.push_back(r);
            }
            for (std::size_t qi = 0; qi < queries.size(); ++qi) {
                for (const auto& run : slots[mi * queries.size() + qi].runs) report.runs.push_back(run);
            }
            report.rows.push_back({"", label, std::string(kTotalItem), "success", macro_average(per_group)});
        }
    }

    static json verdicts_json(const std::vector<ObjectVerdict>& v) {
        json out = json::array();
        for (const auto& o : v) out.push_back({{"object", o.object}, {"strict", o.strict}, {"lenient", o.lenient}});
        return out;
    }

    FixtureSet fx_;
};

// Writes report.txt, report.json, report.csv and a manifest into `dir`.
// Returns the written file names.
inline std::vector<std::string> write_report(const EvalReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string stem = "report_" + std::string(phase_name(report.phase));
    const std::vector<std::pair<std::string, std::string>> files{
        {stem + ".txt", render_text(report)},
        {stem + ".json", to_json_document(report).dump(2) + "\n"},
        {stem + ".csv", render_csv(report)},
    };
    json manifest{{"phase", phase_name(report.phase)},
                  {"fixture_hash", report.metadata.value("fixture_hash", std::string())},
                  {"files", json::array()}};
    std::vector<std::string> names;
    for (const auto& [name, content] : files) {
        std::ofstream(dir / name, std::ios::binary) << content;
        manifest["files"].push_back({{"name", name}, {"fnv1a64", gateway::hex64(gateway::fnv1a64(content))}});
        names.push_back(name);
    }
    std::ofstream(dir / ("manifest_" + std::string(phase_name(report.phase)) + ".json"), std::ios::binary)
        << manifest.dump(2) << "\n";
    names.push_back("manifest_" + std::string(phase_name(report.phase)) + ".json");
    return names;
}

}  // namespace homeagent::eval
