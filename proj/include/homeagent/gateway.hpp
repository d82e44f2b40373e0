#pragma once

// Model gateway: chat-completion and embedding calls behind one interface.
// Transport-specific backends live in backends.hpp; this header carries the
// message types, the retry policy, the scripted backend and the hash embedder.

#include "homeagent/domain.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace homeagent::gateway {

enum class Role { system, user, assistant, tool };

inline std::string_view role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "user";
}

inline Role parse_role(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    if (s == "tool") return Role::tool;
    throw ProtocolError("unknown message role: " + std::string(s));
}

struct ToolCall {
    std::string name;
    json arguments = json::object();

    bool operator==(const ToolCall&) const = default;
};

struct ChatMessage {
    Role role = Role::user;
    std::string content;
    std::vector<ToolCall> tool_calls;  // assistant messages only

    bool operator==(const ChatMessage&) const = default;
};

inline ChatMessage system_message(std::string text) { return {Role::system, std::move(text), {}}; }
inline ChatMessage user_message(std::string text) { return {Role::user, std::move(text), {}}; }
inline ChatMessage assistant_message(std::string text) { return {Role::assistant, std::move(text), {}}; }

struct ToolSpec {
    std::string name;
    std::string description;
    json parameters = json::object();
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string model_id;
};

struct BackendConfig {
    std::string label;      // display name in reports, e.g. "Qwen2.5-32B"
    std::string base_url;   // http://host:port, script:<path>, or stub:hash
    std::string model;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::chrono::milliseconds timeout{30000};
    bool tool_calling = true;

    void validate() const {
        if (base_url.empty()) throw PreconditionViolation("backend base_url is empty");
        if (!std::isfinite(temperature) || temperature < 0.0) {
            throw PreconditionViolation("temperature must be finite and >= 0");
        }
        if (max_tokens <= 0) throw PreconditionViolation("max_tokens must be positive");
        if (timeout.count() <= 0) throw PreconditionViolation("timeout must be positive");
    }
};

inline void to_json(json& j, const ToolCall& c) { j = json{{"name", c.name}, {"arguments", c.arguments}}; }

inline void to_json(json& j, const ChatMessage& m) {
    j = json{{"role", role_name(m.role)}, {"content", m.content}};
    if (!m.tool_calls.empty()) j["tool_calls"] = m.tool_calls;
}

inline void to_json(json& j, const BackendConfig& c) {
    j = json{{"label", c.label},           {"base_url", c.base_url},     {"model", c.model},
             {"temperature", c.temperature}, {"max_tokens", c.max_tokens}, {"timeout_ms", c.timeout.count()},
             {"tool_calling", c.tool_calling}};
}

inline void from_json(const json& j, BackendConfig& c) {
    c.label = j.value("label", j.value("model", std::string()));
    c.base_url = j.at("base_url").get<std::string>();
    c.model = j.value("model", std::string());
    c.temperature = j.value("temperature", 0.0);
    c.max_tokens = j.value("max_tokens", 1024);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
    c.tool_calling = j.value("tool_calling", true);
}

// ---------------------------------------------------------------------------

class Backend {
public:
    virtual ~Backend() = default;

    virtual ChatMessage complete(std::span<const ChatMessage> messages, std::span<const ToolSpec> tools) = 0;
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
    virtual std::string model_id() const = 0;
    virtual bool reachable() { return true; }
};

// A configured backend together with its configuration.
struct Model {
    BackendConfig config;
    std::shared_ptr<Backend> backend;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw PreconditionViolation("cosine of vectors with different dimensions");
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

namespace detail {

template <class F>
auto with_transport_retry(F&& call) {
    try {
        return call();
    } catch (const TransportError&) {
        return call();
    }
}

}  // namespace detail

// Sends a chat request. One retry on TransportError; protocol errors and
// refusals propagate immediately.
inline ChatMessage chat(Backend& backend, std::span<const ChatMessage> messages, std::span<const ToolSpec> tools = {}) {
    if (messages.empty()) throw PreconditionViolation("chat needs at least one message");
    if (messages.front().role != Role::system) throw PreconditionViolation("first chat message must be a system message");
    for (std::size_t i = 0; i < tools.size(); ++i) {
        for (std::size_t j = i + 1; j < tools.size(); ++j) {
            if (tools[i].name == tools[j].name) throw PreconditionViolation("duplicate tool name: " + tools[i].name);
        }
    }
    for (const auto& m : messages) {
        if (!m.tool_calls.empty() && m.role != Role::assistant) {
            throw PreconditionViolation("tool_calls only allowed on assistant messages");
        }
    }
    ChatMessage reply = detail::with_transport_retry([&] { return backend.complete(messages, tools); });
    if (reply.role != Role::assistant) throw ProtocolError("backend reply is not an assistant message");
    return reply;
}

inline std::vector<EmbeddingVector> embed(Backend& backend, std::span<const std::string> texts) {
    if (texts.empty()) throw PreconditionViolation("embed needs at least one text");
    for (const auto& t : texts) {
        if (t.empty()) throw PreconditionViolation("cannot embed an empty text");
    }
    auto out = detail::with_transport_retry([&] { return backend.embed_batch(texts); });
    if (out.size() != texts.size()) throw ProtocolError("embedding count does not match input count");
    for (const auto& v : out) {
        if (v.values.empty() || v.values.size() != out.front().values.size()) {
            throw ProtocolError("embedding dimensions are not uniform");
        }
        if (!(dot(v.values, v.values) > 0.0)) throw ProtocolError("embedding has zero norm");
    }
    return out;
}

// ---------------------------------------------------------------------------
// hashing helpers

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffsetBasis) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Stable digest of a transcript, used as a scripted-backend key.
inline std::string transcript_digest(std::span<const ChatMessage> messages) {
    std::uint64_t h = kFnvOffsetBasis;
    for (const auto& m : messages) {
        h = fnv1a64(role_name(m.role), h);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(m.content, h);
        h = fnv1a64("\x1e", h);
    }
    return hex64(h);
}

// ---------------------------------------------------------------------------
// Deterministic embedding stub: word unigrams and bigrams hashed into 256
// signed buckets, then L2-normalized.

class HashEmbedder final : public Backend {
public:
    static constexpr std::size_t kDimension = 256;
    static constexpr std::string_view kModelId = "hash-ngram-256";

    static std::vector<double> embed_text(std::string_view text) {
        std::vector<std::string> tokens;
        std::string cur;
        for (unsigned char c : text) {
            if (std::isalnum(c) != 0) {
                cur.push_back(static_cast<char>(std::tolower(c)));
            } else if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) tokens.push_back(std::move(cur));

        std::vector<double> v(kDimension, 0.0);
        auto add = [&v](std::string_view feature) {
            const std::uint64_t h = fnv1a64(feature);
            v[h % kDimension] += (h >> 63) != 0 ? -1.0 : 1.0;
        };
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            add(tokens[i]);
            if (i + 1 < tokens.size()) add(tokens[i] + ' ' + tokens[i + 1]);
        }
        double norm = std::sqrt(dot(v, v));
        if (norm == 0.0) {
            // no alphanumeric tokens, or all features cancelled
            add(std::string("\x01") + std::string(text));
            norm = std::sqrt(dot(v, v));
        }
        for (auto& x : v) x /= norm;
        return v;
    }

    ChatMessage complete(std::span<const ChatMessage>, std::span<const ToolSpec>) override {
        throw ProtocolError("hash embedder does not serve chat completions");
    }

    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back({embed_text(t), std::string(kModelId)});
        return out;
    }

    std::string model_id() const override { return std::string(kModelId); }
};

// ---------------------------------------------------------------------------
// Scripted backend: canned replies keyed on the transcript.
//
// Script document: [{"match": {...}, "reply": {"content": "...", "tool_calls": [...]}}, ...]
// Match keys (all present keys must hold; first matching entry wins):
//   last_user_message  exact text of the last user message
//   transcript_digest  transcript_digest() of the full transcript
//   last_user_contains string or list of strings, each a substring of the last user message
//   system_contains    string or list of strings, each a substring of the first system message

struct ScriptEntry {
    std::optional<std::string> last_user_message;
    std::optional<std::string> transcript_digest;
    std::vector<std::string> last_user_contains;
    std::vector<std::string> system_contains;
    ChatMessage reply;
};

namespace detail {

inline std::vector<std::string> string_or_list(const json& j) {
    if (j.is_string()) return {j.get<std::string>()};
    return j.get<std::vector<std::string>>();
}

}  // namespace detail

// A script is either a bare array of entries or an object
// {"label", "tool_calling", "entries"} describing the persona it stands for.
inline std::vector<ScriptEntry> parse_script(const json& doc) {
    if (doc.is_object() && doc.contains("entries")) return parse_script(doc["entries"]);
    if (!doc.is_array()) throw FixtureError("script must be a JSON array or an object with entries");
    std::vector<ScriptEntry> entries;
    for (const auto& item : doc) try {
        ScriptEntry e;
        const auto& m = item.at("match");
        if (m.contains("last_user_message")) e.last_user_message = m["last_user_message"].get<std::string>();
        if (m.contains("transcript_digest")) e.transcript_digest = m["transcript_digest"].get<std::string>();
        if (m.contains("last_user_contains")) e.last_user_contains = detail::string_or_list(m["last_user_contains"]);
        if (m.contains("system_contains")) e.system_contains = detail::string_or_list(m["system_contains"]);
        if (!e.last_user_message && !e.transcript_digest && e.last_user_contains.empty()) {
            throw FixtureError("script entry has no user-side match key");
        }
        const auto& r = item.at("reply");
        e.reply.role = Role::assistant;
        e.reply.content = r.value("content", std::string());
        if (r.contains("tool_calls")) {
            for (const auto& tc : r["tool_calls"]) {
                e.reply.tool_calls.push_back({tc.at("name").get<std::string>(), tc.value("arguments", json::object())});
            }
        }
        entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
        throw FixtureError(std::string("script entry ") + std::to_string(entries.size()) + ": " + ex.what());
    }
    return entries;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FixtureError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FixtureError(path + ": " + e.what());
    }
}

// Backend configuration for a script file; label and tool_calling come from
// the file when present, otherwise from the file stem.
inline BackendConfig script_config(const std::string& path) {
    const json doc = read_json_file(path);
    auto stem = path.substr(path.find_last_of('/') + 1);
    stem = stem.substr(0, stem.find('.'));
    BackendConfig c;
    c.base_url = "script:" + path;
    c.model = stem;
    c.label = stem;
    if (doc.is_object()) {
        c.label = doc.value("label", stem);
        c.tool_calling = doc.value("tool_calling", true);
    }
    return c;
}

class ScriptedBackend final : public Backend {
public:
    ScriptedBackend(std::vector<ScriptEntry> entries, std::string name)
        : entries_(std::move(entries)), name_(std::move(name)) {}

    static std::unique_ptr<ScriptedBackend> from_file(const std::string& path) {
        auto stem = path.substr(path.find_last_of('/') + 1);
        stem = stem.substr(0, stem.find('.'));
        return std::make_unique<ScriptedBackend>(parse_script(read_json_file(path)), stem);
    }

    void replace_script(std::vector<ScriptEntry> entries) {
        std::unique_lock lock(mutex_);
        entries_ = std::move(entries);
    }

    ChatMessage complete(std::span<const ChatMessage> messages, std::span<const ToolSpec>) override {
        const std::string* last_user = nullptr;
        for (const auto& m : messages) {
            if (m.role == Role::user) last_user = &m.content;
        }
        const std::string empty;
        const std::string& user = last_user != nullptr ? *last_user : empty;
        const std::string& system = messages.front().content;
        const std::string digest = transcript_digest(messages);

        std::shared_lock lock(mutex_);
        for (const auto& e : entries_) {
            if (e.last_user_message && *e.last_user_message != user) continue;
            if (e.transcript_digest && *e.transcript_digest != digest) continue;
            auto all_in = [](const std::vector<std::string>& needles, const std::string& hay) {
                return std::all_of(needles.begin(), needles.end(),
                                   [&](const std::string& n) { return hay.find(n) != std::string::npos; });
            };
            if (!all_in(e.last_user_contains, user) || !all_in(e.system_contains, system)) continue;
            return e.reply;
        }
        std::string preview = user.substr(0, 160);
        throw ProtocolError("scripted backend '" + name_ + "' has no reply for transcript " + digest +
                            " (last user message: \"" + preview + "\")");
    }

    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
        return HashEmbedder{}.embed_batch(texts);
    }

    std::string model_id() const override { return "scripted:" + name_; }

private:
    mutable std::shared_mutex mutex_;
    std::vector<ScriptEntry> entries_;
    std::string name_;
};

}  // namespace homeagent::gateway
