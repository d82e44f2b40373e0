#pragma once

// HTTP facade over the orchestrator: sessions, turns, world state, history,
// a per-session event stream, and evaluation runs. All routes live under /v1.

#include "homeagent/evalharness.hpp"
#include "homeagent/orchestrator.hpp"

#include <httplib.h>

#include <condition_variable>
#include <deque>
#include <list>

namespace homeagent::service {

struct ServiceConfig {
    std::string cors_origin = "*";
    std::chrono::milliseconds heartbeat{15000};  // SSE keep-alive comment interval
};

struct ApiError {
    int status = 500;
    std::string code;
    std::string message;
    std::string correlation_id;
    json extra = json::object();
};

inline json to_json_body(const ApiError& e) {
    json err{{"code", e.code}, {"message", e.message}, {"correlation_id", e.correlation_id}};
    for (const auto& [k, v] : e.extra.items()) err[k] = v;
    return json{{"error", err}};
}

// Append-only lifecycle events of one session. Readers wait on a sequence
// number; close() wakes everyone for shutdown.
class EventLog {
public:
    std::uint64_t publish(std::string stage, json data) {
        std::lock_guard lock(mutex_);
        events_.push_back({++seq_, std::move(stage), std::move(data)});
        cv_.notify_all();
        return seq_;
    }

    struct Event {
        std::uint64_t seq;
        std::string stage;
        json data;
    };

    // Events after `after`, waiting up to `timeout` when none are pending.
    std::vector<Event> wait_after(std::uint64_t after, std::chrono::milliseconds timeout) {
        std::unique_lock lock(mutex_);
        cv_.wait_for(lock, timeout, [&] { return closed_ || seq_ > after; });
        std::vector<Event> out;
        for (const auto& e : events_) {
            if (e.seq > after) out.push_back(e);
        }
        return out;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        cv_.notify_all();
    }

    bool closed() const {
        std::lock_guard lock(mutex_);
        return closed_;
    }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Event> events_;
    std::uint64_t seq_ = 0;
    bool closed_ = false;
};

inline std::string format_sse(const EventLog::Event& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + e.stage + "\ndata: " + e.data.dump() + "\n\n";
}

class Service {
public:
    Service(std::shared_ptr<orchestrator::Orchestrator> orch, std::optional<eval::FixtureSet> fixtures,
            ServiceConfig config = {})
        : orch_(std::move(orch)), config_(std::move(config)) {
        if (fixtures) harness_.emplace(std::move(*fixtures));
        install_routes();
    }

    ~Service() { stop(); }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
    bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void wait_until_ready() const { server_.wait_until_ready(); }

    void stop() {
        {
            std::lock_guard lock(sessions_mutex_);
            for (auto& [id, slot] : sessions_) slot->events.close();
        }
        shutting_down_ = true;
        server_.stop();
        std::list<std::thread> threads;
        {
            std::lock_guard lock(runs_mutex_);
            threads.swap(run_threads_);
        }
        for (auto& t : threads) {
            if (t.joinable()) t.join();
        }
    }

    httplib::Server& server() { return server_; }

private:
    struct SessionSlot {
        std::mutex turn_mutex;  // held for the whole turn
        std::mutex snapshot_mutex;
        orchestrator::Session session;
        json world = json::object();
        json history = json::array();
        std::vector<json> turns;
        EventLog events;

        void refresh() {
            std::lock_guard lock(snapshot_mutex);
            world = session.world;
            history = session.history;
        }
    };

    struct EvalRun {
        std::string status = "running";
        json report;
        std::optional<ApiError> error;
    };

    std::string next_correlation_id() { return "req-" + std::to_string(++correlation_counter_); }

    void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json; charset=utf-8");
    }

    void send_error(httplib::Response& res, ApiError e) {
        res.set_header("X-Correlation-Id", e.correlation_id);
        send_json(res, e.status, to_json_body(e));
    }

    static json parse_body(const httplib::Request& req) {
        if (req.body.empty()) return json::object();
        try {
            return json::parse(req.body);
        } catch (const json::exception& e) {
            throw PreconditionViolation(std::string("request body is not valid JSON: ") + e.what());
        }
    }

    std::shared_ptr<SessionSlot> find_session(const std::string& id) {
        std::lock_guard lock(sessions_mutex_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    // Runs a handler, mapping engine errors to API errors.
    template <typename Fn>
    void guarded(httplib::Response& res, Fn&& fn) {
        const auto cid = next_correlation_id();
        try {
            fn(cid);
        } catch (const UnknownScenario& e) {
            send_error(res, {400, e.code(), e.what(), cid});
        } catch (const UnknownDestination& e) {
            send_error(res, {400, e.code(), e.what(), cid});
        } catch (const PreconditionViolation& e) {
            send_error(res, {400, e.code(), e.what(), cid});
        } catch (const Error& e) {
            send_error(res, {500, e.code(), e.what(), cid});
        } catch (const std::exception& e) {
            send_error(res, {500, "internal_error", e.what(), cid});
        }
    }

    static bool transport_code(const std::string& code) {
        return code == "transport_error" || code == "backend_refusal" || code == "protocol_error";
    }

    void install_routes() {
        server_.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                                     {"Access-Control-Allow-Headers", "Content-Type, Last-Event-ID"},
                                     {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server_.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server_.Get("/v1/healthz", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&](const std::string&) {
                const auto& a = orch_->agents();
                json backends{{"router", a.router.backend->reachable()},
                              {"planner", a.planner.backend->reachable()},
                              {"historian", a.historian.backend->reachable()},
                              {"embedder", a.embedder->reachable()}};
                bool ok = true;
                for (const auto& [k, v] : backends.items()) ok = ok && v.get<bool>();
                send_json(res, ok ? 200 : 503, {{"status", ok ? "ok" : "degraded"}, {"backends", backends}});
            });
        });

        server_.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&](const std::string&) {
                const auto body = parse_body(req);
                json cfg = body.value("config", json::object());
                if (body.contains("scenario")) cfg["scenario"] = body["scenario"];
                auto config = orchestrator::parse_session_config(cfg);
                auto slot = std::make_shared<SessionSlot>();
                std::string id;
                {
                    std::lock_guard lock(sessions_mutex_);
                    id = "s" + std::to_string(++session_counter_);
                    slot->session = orch_->new_session(id, std::move(config));
                    sessions_.emplace(id, slot);
                }
                slot->refresh();
                send_json(res, 201,
                          {{"id", id},
                           {"scenario", slot->session.config.scenario_id},
                           {"config", orchestrator::to_json_config(slot->session.config)},
                           {"world", slot->world}});
            });
        });

        server_.Post(R"(/v1/sessions/([^/]+)/scenario)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&](const std::string& cid) {
                auto slot = find_session(req.matches[1]);
                if (!slot) return send_error(res, {404, "unknown_session", "no session " + std::string(req.matches[1]), cid});
                std::unique_lock turn(slot->turn_mutex, std::try_to_lock);
                if (!turn.owns_lock()) {
                    return send_error(res, {409, "turn_in_progress", "a turn is in progress for this session", cid});
                }
                const auto body = parse_body(req);
                orchestrator::enter_scenario(slot->session, orch_->library(), body.at("scenario").get<std::string>());
                slot->refresh();
                send_json(res, 200, {{"id", slot->session.id}, {"scenario", slot->session.config.scenario_id},
                                     {"world", slot->world}});
            });
        });

        server_.Post(R"(/v1/sessions/([^/]+)/turns)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&](const std::string& cid) { handle_turn(req, res, cid); });
        });

        server_.Get(R"(/v1/sessions/([^/]+)/world)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&](const std::string& cid) {
                auto slot = find_session(req.matches[1]);
                if (!slot) return send_error(res, {404, "unknown_session", "no session " + std::string(req.matches[1]), cid});
                std::lock_guard lock(slot->snapshot_mutex);
                send_json(res, 200, slot->world);
            });
        });

        server_.Get(R"(/v1/sessions/([^/]+)/history)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&](const std::string& cid) {
                auto slot = find_session(req.matches[1]);
                if (!slot) return send_error(res, {404, "unknown_session", "no session " + std::string(req.matches[1]), cid});
                std::lock_guard lock(slot->snapshot_mutex);
                send_json(res, 200, slot->history);
            });
        });

        server_.Get(R"(/v1/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
            auto slot = find_session(req.matches[1]);
            if (!slot) {
                return send_error(res, {404, "unknown_session", "no session " + std::string(req.matches[1]),
                                        next_correlation_id()});
            }
            std::uint64_t after = 0;
            const auto last = req.get_header_value("Last-Event-ID");
            const auto& from = !last.empty() ? last : req.get_param_value("after");
            if (!from.empty()) {
                try {
                    after = std::stoull(from);
                } catch (const std::exception&) {
                    after = 0;
                }
            }
            res.set_header("Cache-Control", "no-cache");
            auto cursor = std::make_shared<std::uint64_t>(after);
            res.set_chunked_content_provider(
                "text/event-stream", [this, slot, cursor](std::size_t, httplib::DataSink& sink) {
                    if (shutting_down_ || slot->events.closed()) {
                        sink.done();
                        return false;
                    }
                    auto events = slot->events.wait_after(*cursor, config_.heartbeat);
                    if (events.empty()) {
                        static const std::string beat = ": keep-alive\n\n";
                        return sink.write(beat.data(), beat.size());
                    }
                    for (const auto& e : events) {
                        const auto text = format_sse(e);
                        if (!sink.write(text.data(), text.size())) return false;
                        *cursor = e.seq;
                    }
                    return true;
                });
        });

        server_.Post("/v1/eval/runs", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&](const std::string& cid) {
                if (!harness_) return send_error(res, {503, "eval_unavailable", "service has no fixtures loaded", cid});
                auto spec = parse_body(req).get<eval::RunSpec>();
                spec.validate();
                std::string id;
                {
                    std::lock_guard lock(runs_mutex_);
                    id = "r" + std::to_string(++run_counter_);
                    runs_[id] = EvalRun{};
                    run_threads_.emplace_back([this, id, spec, cid] {
                        EvalRun result;
                        try {
                            result.report = eval::to_json_document(harness_->run(spec));
                            result.status = "done";
                        } catch (const Error& e) {
                            result.status = "failed";
                            result.error = ApiError{500, e.code(), e.what(), cid};
                        } catch (const std::exception& e) {
                            result.status = "failed";
                            result.error = ApiError{500, "internal_error", e.what(), cid};
                        }
                        std::lock_guard l(runs_mutex_);
                        runs_[id] = std::move(result);
                    });
                }
                send_json(res, 202, {{"id", id}, {"status", "running"}});
            });
        });

        server_.Get(R"(/v1/eval/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&](const std::string& cid) {
                std::lock_guard lock(runs_mutex_);
                auto it = runs_.find(req.matches[1]);
                if (it == runs_.end()) return send_error(res, {404, "unknown_run", "no eval run " + std::string(req.matches[1]), cid});
                json body{{"id", it->first}, {"status", it->second.status}};
                if (it->second.status == "done") body["report"] = it->second.report;
                if (it->second.error) body["error"] = to_json_body(*it->second.error)["error"];
                send_json(res, 200, body);
            });
        });
    }

    void handle_turn(const httplib::Request& req, httplib::Response& res, const std::string& cid) {
        auto slot = find_session(req.matches[1]);
        if (!slot) return send_error(res, {404, "unknown_session", "no session " + std::string(req.matches[1]), cid});
        std::unique_lock turn(slot->turn_mutex, std::try_to_lock);
        if (!turn.owns_lock()) {
            return send_error(res, {409, "turn_in_progress", "a turn is in progress for this session", cid});
        }
        const auto body = parse_body(req);
        if (!body.contains("text") || !body["text"].is_string()) {
            throw PreconditionViolation("turn body needs a string field 'text'");
        }
        const auto text = body["text"].get<std::string>();
        if (trim(text).empty()) throw PreconditionViolation("turn text is empty");

        const int turn_id = static_cast<int>(slot->session.history.size()) + 1;
        slot->events.publish("started", {{"turn_id", turn_id}});
        auto record = orch_->handle_turn(slot->session, text, [&](std::string_view stage, const json& detail) {
            slot->events.publish(std::string(stage), {{"turn_id", turn_id}, {"detail", detail}});
        });
        slot->refresh();
        auto doc = orchestrator::to_json(record);
        {
            std::lock_guard lock(slot->snapshot_mutex);
            slot->turns.push_back(doc);
        }
        slot->events.publish("completed", {{"turn_id", turn_id}, {"ok", !record.error.has_value()}});
        if (record.error && transport_code(record.error->code)) {
            return send_error(res, {502, record.error->code,
                                    "backend failure during stage '" + record.error->stage + "': " + record.error->message,
                                    cid, json{{"stage", record.error->stage}, {"turn", doc}}});
        }
        res.set_header("X-Correlation-Id", cid);
        send_json(res, 200, doc);
    }

    std::shared_ptr<orchestrator::Orchestrator> orch_;
    ServiceConfig config_;
    std::optional<eval::Harness> harness_;
    httplib::Server server_;
    std::atomic<bool> shutting_down_{false};
    std::atomic<std::uint64_t> correlation_counter_{0};

    std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
    std::uint64_t session_counter_ = 0;

    std::mutex runs_mutex_;
    std::map<std::string, EvalRun> runs_;
    std::list<std::thread> run_threads_;
    std::uint64_t run_counter_ = 0;
};

}  // namespace homeagent::service
