#pragma once

// OpenAI-compatible HTTP backend and the backend factory.

#include "homeagent/gateway.hpp"

#include <httplib.h>

namespace homeagent::gateway {

class HttpBackend final : public Backend {
public:
    explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
        config_.validate();
        const auto& url = config_.base_url;
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw PreconditionViolation("base_url needs a scheme: " + url);
        if (url.compare(0, scheme_end, "http") != 0) {
            throw PreconditionViolation("only http:// backends are supported: " + url);
        }
        const auto path_start = url.find('/', scheme_end + 3);
        host_ = url.substr(0, path_start);
        if (path_start != std::string::npos) {
            prefix_ = url.substr(path_start);
            while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        }
    }

    ChatMessage complete(std::span<const ChatMessage> messages, std::span<const ToolSpec> tools) override {
        json body{{"model", config_.model}, {"temperature", config_.temperature}, {"max_tokens", config_.max_tokens}};
        json msgs = json::array();
        for (const auto& m : messages) {
            json jm{{"role", role_name(m.role)}, {"content", m.content}};
            if (!m.tool_calls.empty()) {
                json calls = json::array();
                for (std::size_t i = 0; i < m.tool_calls.size(); ++i) {
                    calls.push_back({{"id", "call_" + std::to_string(i)},
                                     {"type", "function"},
                                     {"function", {{"name", m.tool_calls[i].name},
                                                   {"arguments", m.tool_calls[i].arguments.dump()}}}});
                }
                jm["tool_calls"] = calls;
            }
            msgs.push_back(std::move(jm));
        }
        body["messages"] = std::move(msgs);
        if (!tools.empty()) {
            json jt = json::array();
            for (const auto& t : tools) {
                jt.push_back({{"type", "function"},
                              {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
            }
            body["tools"] = std::move(jt);
        }

        const json doc = post("/v1/chat/completions", body);
        try {
            const auto& msg = doc.at("choices").at(0).at("message");
            ChatMessage reply{Role::assistant, {}, {}};
            if (msg.contains("content") && msg["content"].is_string()) reply.content = msg["content"].get<std::string>();
            if (msg.contains("tool_calls") && msg["tool_calls"].is_array()) {
                for (const auto& tc : msg["tool_calls"]) {
                    const auto& fn = tc.at("function");
                    ToolCall call{fn.at("name").get<std::string>(), json::object()};
                    if (fn.contains("arguments")) {
                        const auto& args = fn["arguments"];
                        call.arguments = args.is_string() ? json::parse(args.get<std::string>()) : args;
                    }
                    reply.tool_calls.push_back(std::move(call));
                }
            }
            return reply;
        } catch (const json::exception& e) {
            throw ProtocolError(std::string("malformed chat completion document: ") + e.what());
        }
    }

    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
        const json doc = post("/v1/embeddings", json{{"model", config_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}});
        try {
            const auto& data = doc.at("data");
            std::vector<EmbeddingVector> out(texts.size());
            std::vector<bool> filled(texts.size(), false);
            for (std::size_t i = 0; i < data.size(); ++i) {
                const auto idx = data[i].value("index", i);
                if (idx >= out.size() || filled[idx]) throw ProtocolError("embedding index out of range or repeated");
                out[idx] = {data[i].at("embedding").get<std::vector<double>>(), model_id()};
                filled[idx] = true;
            }
            if (std::find(filled.begin(), filled.end(), false) != filled.end()) {
                throw ProtocolError("embedding response is missing inputs");
            }
            return out;
        } catch (const json::exception& e) {
            throw ProtocolError(std::string("malformed embeddings document: ") + e.what());
        }
    }

    std::string model_id() const override { return config_.model; }

    bool reachable() override {
        auto cli = client();
        cli.set_connection_timeout(std::chrono::seconds(2));
        auto res = cli.Get(prefix_ + "/v1/models");
        return static_cast<bool>(res);
    }

private:
    httplib::Client client() const {
        httplib::Client cli(host_);
        cli.set_connection_timeout(config_.timeout);
        cli.set_read_timeout(config_.timeout);
        cli.set_write_timeout(config_.timeout);
        return cli;
    }

    json post(const std::string& path, const json& body) const {
        auto cli = client();
        auto res = cli.Post(prefix_ + path, body.dump(), "application/json");
        if (!res) throw TransportError(host_ + prefix_ + path + ": " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300) throw BackendRefusal(res->status, res->body);
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw ProtocolError(std::string("response is not JSON: ") + e.what());
        }
    }

    BackendConfig config_;
    std::string host_;
    std::string prefix_;
};

// base_url schemes: http://... (OpenAI-compatible server), script:<path>
// (scripted backend), stub:hash (hash embedder).
inline std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    config.validate();
    const auto& url = config.base_url;
    if (url.rfind("script:", 0) == 0) return ScriptedBackend::from_file(url.substr(7));
    if (url == "stub:hash") return std::make_unique<HashEmbedder>();
    return std::make_unique<HttpBackend>(config);
}

inline Model make_model(const BackendConfig& config) { return Model{config, make_backend(config)}; }

}  // namespace homeagent::gateway
