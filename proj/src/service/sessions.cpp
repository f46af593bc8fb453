#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "iasr/service.hpp"

namespace iasr::service {

nlohmann::json ServiceError::body() const {
    nlohmann::json j = {{"code", code_}, {"message", what()}};
    if (!detail_.is_null()) j["detail"] = detail_;
    return j;
}

std::string format_time(Clock::time_point t) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
    return buf;
}

Clock::time_point parse_time(const std::string& s) {
    std::tm tm{};
    int millis = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d.%dZ", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour, &tm.tm_min,
                    &tm.tm_sec, &millis) != 7) {
        throw InvalidArgument("bad timestamp '" + s + "'");
    }
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    return Clock::from_time_t(timegm(&tm)) + std::chrono::milliseconds(millis);
}

std::string random_id() {
    thread_local std::mt19937_64 rng(std::random_device{}());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

std::string_view to_string(SessionStatus status) {
    switch (status) {
        case SessionStatus::active: return "active";
        case SessionStatus::confirmed: return "confirmed";
        case SessionStatus::errored: return "errored";
    }
    return "active";
}

nlohmann::json SessionView::to_json(bool with_history) const {
    nlohmann::json j = {{"session_id", id},
                        {"status", to_string(status)},
                        {"state", session::state_summary(state)},
                        {"created_at", format_time(created_at)},
                        {"updated_at", format_time(updated_at)}};
    if (with_history) {
        nlohmann::json history = nlohmann::json::array();
        for (const auto& r : state.history()) history.push_back(session::to_json(r));
        j["history"] = history;
    }
    return j;
}

nlohmann::json TurnResult::to_json() const {
    auto j = session.to_json(false);
    j["record"] = session::to_json(record);
    j["intent"] = session::to_string(record.intent);
    j["edit"] = record.edit ? session::to_json(*record.edit) : nlohmann::json();
    j["text"] = record.resulting_state;
    return j;
}

namespace {

ServiceError not_found(const std::string& id) {
    return ServiceError(404, "session_not_found", "no session with id '" + id + "'");
}

}  // namespace

SessionStore::SessionStore(std::shared_ptr<const pipeline::AgentPipeline> pipeline,
                           std::optional<std::filesystem::path> event_log)
    : pipeline_(std::move(pipeline)) {
    if (!pipeline_) throw InvalidArgument("session store needs a pipeline");
    if (event_log) {
        if (std::filesystem::exists(*event_log)) replay(*event_log);
        log_.emplace(*event_log, true);
    }
}

void SessionStore::replay(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::size_t number = 0;
    std::uintmax_t good_bytes = 0;
    const auto file_size = std::filesystem::file_size(path);
    while (std::getline(in, line)) {
        ++number;
        const std::uintmax_t line_end = good_bytes + line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            good_bytes = line_end;
            continue;
        }
        const auto ev = nlohmann::json::parse(line, nullptr, false);
        if (ev.is_discarded()) {
            if (line_end >= file_size) {
                // a write cut short by a crash; drop it so appends start clean
                spdlog::warn("event log {}: dropping truncated last line {}", path.string(), number);
                in.close();
                std::filesystem::resize_file(path, good_bytes);
                break;
            }
            throw Error("event log " + path.string() + " line " + std::to_string(number) + " is not JSON");
        }
        good_bytes = line_end;

        const auto type = ev.at("event").get<std::string>();
        const auto id = ev.at("session_id").get<std::string>();
        const auto at = parse_time(ev.at("at").get<std::string>());
        if (type == "create") {
            auto e = std::make_shared<Entry>();
            e->created_at = e->updated_at = at;
            sessions_[id] = std::move(e);
            continue;
        }
        auto it = sessions_.find(id);
        if (it == sessions_.end()) {
            throw Error("event log line " + std::to_string(number) + " refers to unknown session " + id);
        }
        auto& e = *it->second;
        if (type == "turn") {
            e.state = session::apply_update(e.state, session::turn_record_from_json(ev.at("record")));
            e.status = SessionStatus::active;
        } else if (type == "confirm") {
            e.status = SessionStatus::confirmed;
        } else if (type == "error") {
            e.status = SessionStatus::errored;
        } else {
            throw Error("event log line " + std::to_string(number) + " has unknown event '" + type + "'");
        }
        e.updated_at = at;
    }
    spdlog::info("replayed {} sessions from {}", sessions_.size(), path.string());
}

void SessionStore::append(const nlohmann::json& event) {
    if (!log_) return;
    std::lock_guard lock(log_mu_);
    log_->write(event);
    log_->flush();
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw not_found(id);
    return it->second;
}

SessionView SessionStore::view(const std::string& id, const Entry& e) {
    return {id, e.state, e.status, e.created_at, e.updated_at};
}

SessionView SessionStore::create() {
    auto e = std::make_shared<Entry>();
    e->created_at = e->updated_at = Clock::now();
    std::string id;
    {
        std::lock_guard lock(mu_);
        do {
            id = random_id();
        } while (sessions_.count(id));
        sessions_[id] = e;
    }
    append({{"event", "create"}, {"session_id", id}, {"at", format_time(e->created_at)}});
    return view(id, *e);
}

TurnResult SessionStore::submit(const std::string& id, const gateway::AudioRef& input) {
    auto e = find(id);
    std::unique_lock turn(e->turn_mu, std::try_to_lock);
    if (!turn.owns_lock()) {
        throw ServiceError(409, "turn_in_progress", "another turn is running on session '" + id + "'");
    }
    session::TranscriptionState before;
    {
        std::lock_guard lock(e->data_mu);
        if (e->status == SessionStatus::confirmed) {
            throw ServiceError(409, "session_confirmed", "session '" + id + "' is confirmed and takes no more turns");
        }
        before = e->state;
    }

    session::TurnRecord record;
    try {
        record = pipeline_->run_turn(before, input);
    } catch (const gateway::TransportError& err) {
        const auto now = Clock::now();
        append({{"event", "error"}, {"session_id", id}, {"at", format_time(now)}, {"message", err.what()}});
        {
            std::lock_guard lock(e->data_mu);
            e->status = SessionStatus::errored;
            e->updated_at = now;
        }
        throw ServiceError(502, "backend_unavailable", err.what());
    }
    auto after = session::apply_update(before, record);
    const auto now = Clock::now();
    append({{"event", "turn"}, {"session_id", id}, {"at", format_time(now)}, {"record", session::to_json(record)}});

    std::lock_guard lock(e->data_mu);
    e->state = std::move(after);
    e->status = SessionStatus::active;
    e->updated_at = now;
    return {std::move(record), view(id, *e)};
}

SessionView SessionStore::get(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->data_mu);
    return view(id, *e);
}

SessionView SessionStore::confirm(const std::string& id) {
    auto e = find(id);
    std::unique_lock turn(e->turn_mu, std::try_to_lock);
    if (!turn.owns_lock()) {
        throw ServiceError(409, "turn_in_progress", "a turn is running on session '" + id + "'");
    }
    std::lock_guard lock(e->data_mu);
    if (e->status != SessionStatus::confirmed) {
        const auto now = Clock::now();
        append({{"event", "confirm"}, {"session_id", id}, {"at", format_time(now)}});
        e->status = SessionStatus::confirmed;
        e->updated_at = now;
    }
    return view(id, *e);
}

std::size_t SessionStore::size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

}  // namespace iasr::service
