#pragma once

// Retrieval memory over timestamped question-answer pairs. Each pair is
// rendered to one line of text, embedded, and searched by exact cosine.
//
// Store file (line-delimited JSON):
//   {"format":"homeagent-memory","version":1,"model_id":"...","dimension":256}
//   {"entry_id":1,"timestamp":"...","question":"...","answer":"...","vector":[...],"model_id":"..."}
//   ...

#include "homeagent/gateway.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <shared_mutex>
#include <string>
#include <vector>

namespace homeagent::memory {

inline constexpr std::size_t kDefaultTopK = 5;
inline constexpr std::string_view kStoreFormat = "homeagent-memory";

struct DialogueEntry {
    long long entry_id = 0;
    Timestamp timestamp{};
    std::string question;
    std::string answer;

    bool operator==(const DialogueEntry&) const = default;
};

inline void to_json(json& j, const DialogueEntry& e) {
    j = json{{"entry_id", e.entry_id},
             {"timestamp", format_iso8601(e.timestamp)},
             {"question", e.question},
             {"answer", e.answer}};
}

inline void from_json(const json& j, DialogueEntry& e) {
    e.entry_id = j.at("entry_id").get<long long>();
    e.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
    e.question = j.at("question").get<std::string>();
    e.answer = j.at("answer").get<std::string>();
}

// "[2025-01-01T10:00:00Z] Q: Where is the plate? A: In the sink."
inline std::string render_chunk(const DialogueEntry& e) {
    return "[" + format_iso8601(e.timestamp) + "] Q: " + e.question + " A: " + e.answer;
}

struct MemoryChunk {
    DialogueEntry entry;
    std::string rendered_text;
    std::vector<double> vector;
};

struct RetrievalHit {
    DialogueEntry entry;
    std::string rendered_text;
    double score = 0.0;

    bool operator==(const RetrievalHit&) const = default;
};

struct RetrievalResult {
    std::vector<RetrievalHit> hits;  // score descending, ties by entry_id descending
    std::size_t k_requested = 0;

    std::size_t k_returned() const { return hits.size(); }
    bool operator==(const RetrievalResult&) const = default;
};

inline void to_json(json& j, const RetrievalHit& h) {
    j = json{{"entry_id", h.entry.entry_id},
             {"timestamp", format_iso8601(h.entry.timestamp)},
             {"text", h.rendered_text},
             {"score", h.score}};
}

class MemoryStore {
public:
    MemoryStore() = default;
    MemoryStore(const MemoryStore&) = delete;
    MemoryStore& operator=(const MemoryStore&) = delete;

    // Opens a journal-backed store: existing contents are loaded, later
    // ingests are appended to the file.
    static std::unique_ptr<MemoryStore> open(const std::filesystem::path& path,
                                             std::optional<std::string> expected_model = std::nullopt) {
        std::unique_ptr<MemoryStore> store;
        if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
            store = load(path, std::move(expected_model));
        } else {
            store = std::make_unique<MemoryStore>();
        }
        store->journal_ = path;
        return store;
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return chunks_.size();
    }

    bool empty() const { return size() == 0; }

    std::string model_id() const {
        std::shared_lock lock(mutex_);
        return model_id_;
    }

    // Chronological (entry_id ascending) copy of every entry.
    std::vector<DialogueEntry> entries() const {
        std::shared_lock lock(mutex_);
        std::vector<DialogueEntry> out;
        out.reserve(chunks_.size());
        for (const auto& c : chunks_) out.push_back(c.entry);
        return out;
    }

    long long max_entry_id() const {
        std::shared_lock lock(mutex_);
        return chunks_.empty() ? 0 : chunks_.back().entry.entry_id;
    }

    void ingest(const std::vector<DialogueEntry>& entries, gateway::Backend& embedder) {
        if (entries.empty()) return;
        for (const auto& e : entries) {
            if (trim(e.question).empty() || trim(e.answer).empty()) {
                throw PreconditionViolation("dialogue entry " + std::to_string(e.entry_id) + " has an empty question or answer");
            }
        }
        std::vector<std::string> texts;
        texts.reserve(entries.size());
        for (const auto& e : entries) texts.push_back(render_chunk(e));
        auto vectors = gateway::embed(embedder, texts);

        std::vector<MemoryChunk> fresh;
        fresh.reserve(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            fresh.push_back({entries[i], std::move(texts[i]), std::move(vectors[i].values)});
        }
        commit(std::move(fresh), vectors.front().model_id);
    }

    RetrievalResult retrieve(const std::string& query, std::size_t k, gateway::Backend& embedder) const {
        if (k == 0) throw PreconditionViolation("k must be positive");
        if (empty()) throw EmptyStore();
        const std::vector<std::string> q{query};
        const auto qv = gateway::embed(embedder, q).front();

        std::shared_lock lock(mutex_);
        if (qv.model_id != model_id_) {
            throw StoreFormatError("query embedded with '" + qv.model_id + "' but store holds '" + model_id_ + "'");
        }
        if (qv.values.size() != dimension_) throw StoreFormatError("query embedding dimension mismatch");
        const double qnorm = std::sqrt(gateway::dot(qv.values, qv.values));

        std::vector<double> scores(chunks_.size());
        for (std::size_t i = 0; i < chunks_.size(); ++i) {
            const double denom = qnorm * norms_[i];
            double s = denom == 0.0 ? 0.0 : gateway::dot(qv.values, chunks_[i].vector) / denom;
            scores[i] = std::clamp(s, -1.0, 1.0);
        }
        std::vector<std::size_t> order(chunks_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        const std::size_t take = std::min(k, order.size());
        // chunks_ is sorted by entry_id, so a larger index means a newer entry
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              if (scores[a] != scores[b]) return scores[a] > scores[b];
                              return a > b;
                          });
        RetrievalResult out;
        out.k_requested = k;
        for (std::size_t i = 0; i < take; ++i) {
            const auto& c = chunks_[order[i]];
            out.hits.push_back({c.entry, c.rendered_text, scores[order[i]]});
        }
        return out;
    }

    void save(const std::filesystem::path& path) const {
        std::shared_lock lock(mutex_);
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw StoreFormatError("cannot write " + path.string());
        out << header_line() << '\n';
        for (const auto& c : chunks_) out << chunk_line(c) << '\n';
        if (!out) throw StoreFormatError("write failed: " + path.string());
    }

    static std::unique_ptr<MemoryStore> load(const std::filesystem::path& path,
                                             std::optional<std::string> expected_model = std::nullopt) {
        std::ifstream in(path);
        if (!in) throw StoreFormatError("cannot open " + path.string());
        auto store = std::make_unique<MemoryStore>();
        std::string line;
        if (!std::getline(in, line)) throw StoreFormatError(path.string() + ": missing header line");
        try {
            const json header = json::parse(line);
            if (header.at("format").get<std::string>() != kStoreFormat) throw StoreFormatError("not a memory store file");
            const auto model = header.at("model_id").get<std::string>();
            const auto dim = header.at("dimension").get<std::size_t>();
            if (expected_model && *expected_model != model) {
                throw StoreFormatError("store was built with model '" + model + "', expected '" + *expected_model + "'");
            }
            std::vector<MemoryChunk> chunks;
            while (std::getline(in, line)) {
                if (trim(line).empty()) continue;
                const json j = json::parse(line);
                if (j.at("model_id").get<std::string>() != model) {
                    throw StoreFormatError("chunk model does not match the store header");
                }
                MemoryChunk c;
                c.entry = j.get<DialogueEntry>();
                c.rendered_text = render_chunk(c.entry);
                c.vector = j.at("vector").get<std::vector<double>>();
                if (c.vector.size() != dim) throw StoreFormatError("chunk dimension does not match the store header");
                chunks.push_back(std::move(c));
            }
            if (!chunks.empty()) store->commit(std::move(chunks), model, /*journal=*/false);
            store->model_id_ = model;
            store->dimension_ = dim;
        } catch (const json::exception& e) {
            throw StoreFormatError(path.string() + ": " + e.what());
        }
        return store;
    }

private:
    // Validates and publishes new chunks in one step under the writer lock.
    void commit(std::vector<MemoryChunk> fresh, const std::string& model, bool journal = true) {
        std::unique_lock lock(mutex_);
        if (!model_id_.empty() && model != model_id_) {
            throw StoreFormatError("embedding model '" + model + "' does not match store model '" + model_id_ + "'");
        }
        const std::size_t dim = dimension_ != 0 ? dimension_ : fresh.front().vector.size();
        for (const auto& c : fresh) {
            if (c.vector.size() != dim) throw StoreFormatError("embedding dimension mismatch");
        }

        std::vector<std::pair<long long, Timestamp>> keys;
        keys.reserve(chunks_.size() + fresh.size());
        for (const auto& c : chunks_) keys.emplace_back(c.entry.entry_id, c.entry.timestamp);
        for (const auto& c : fresh) keys.emplace_back(c.entry.entry_id, c.entry.timestamp);
        std::sort(keys.begin(), keys.end());
        for (std::size_t i = 1; i < keys.size(); ++i) {
            if (keys[i].first == keys[i - 1].first) throw DuplicateEntry(keys[i].first);
            if (keys[i].second < keys[i - 1].second) {
                throw PreconditionViolation("entry_id " + std::to_string(keys[i].first) +
                                            " is newer than its predecessor but carries an older timestamp");
            }
        }

        if (journal && !journal_.empty()) {
            const bool fresh_file = !std::filesystem::exists(journal_) || std::filesystem::file_size(journal_) == 0;
            std::ofstream out(journal_, std::ios::app);
            if (!out) throw StoreFormatError("cannot append to " + journal_.string());
            if (fresh_file) out << header_line(model, dim) << '\n';
            for (const auto& c : fresh) out << chunk_line(c, model) << '\n';
            if (!out) throw StoreFormatError("journal write failed: " + journal_.string());
        }

        model_id_ = model;
        dimension_ = dim;
        for (auto& c : fresh) {
            norms_.push_back(std::sqrt(gateway::dot(c.vector, c.vector)));
            chunks_.push_back(std::move(c));
        }
        if (!std::is_sorted(chunks_.begin(), chunks_.end(),
                            [](const auto& a, const auto& b) { return a.entry.entry_id < b.entry.entry_id; })) {
            std::vector<std::size_t> idx(chunks_.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::sort(idx.begin(), idx.end(),
                      [&](auto a, auto b) { return chunks_[a].entry.entry_id < chunks_[b].entry.entry_id; });
            std::vector<MemoryChunk> sorted;
            std::vector<double> norms;
            for (auto i : idx) {
                sorted.push_back(std::move(chunks_[i]));
                norms.push_back(norms_[i]);
            }
            chunks_ = std::move(sorted);
            norms_ = std::move(norms);
        }
    }

    std::string header_line() const { return header_line(model_id_, dimension_); }

    static std::string header_line(const std::string& model, std::size_t dim) {
        return json{{"format", kStoreFormat}, {"version", 1}, {"model_id", model}, {"dimension", dim}}.dump();
    }

    std::string chunk_line(const MemoryChunk& c) const { return chunk_line(c, model_id_); }

    static std::string chunk_line(const MemoryChunk& c, const std::string& model) {
        json j = c.entry;
        j["vector"] = c.vector;
        j["model_id"] = model;
        return j.dump();
    }

    mutable std::shared_mutex mutex_;
    std::vector<MemoryChunk> chunks_;  // sorted by entry_id
    std::vector<double> norms_;
    std::string model_id_;
    std::size_t dimension_ = 0;
    std::filesystem::path journal_;
};

}  // namespace homeagent::memory
