#pragma once

// HTTP service: interactive sessions backed by the agent pipeline, and batch
// jobs (judge, simulate, metrics) on a worker pool.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "iasr/config.hpp"
#include "iasr/dataset.hpp"
#include "iasr/session.hpp"
#include "json.hpp"

namespace iasr::service {

/// Maps onto an HTTP status and the {code, message, detail?} error body.
class ServiceError : public Error {
public:
    ServiceError(int status, std::string code, const std::string& message, nlohmann::json detail = nullptr)
        : Error(message), status_(status), code_(std::move(code)), detail_(std::move(detail)) {}
    int status() const { return status_; }
    const std::string& code() const { return code_; }
    const nlohmann::json& detail() const { return detail_; }
    nlohmann::json body() const;

private:
    int status_;
    std::string code_;
    nlohmann::json detail_;
};

using Clock = std::chrono::system_clock;

/// ISO 8601 UTC with milliseconds, e.g. "2024-05-01T12:00:00.123Z".
std::string format_time(Clock::time_point t);
Clock::time_point parse_time(const std::string& s);

enum class SessionStatus { active, confirmed, errored };
std::string_view to_string(SessionStatus status);

struct SessionView {
    std::string id;
    session::TranscriptionState state;
    SessionStatus status = SessionStatus::active;
    Clock::time_point created_at;
    Clock::time_point updated_at;

    nlohmann::json to_json(bool with_history = true) const;
};

struct TurnResult {
    session::TurnRecord record;
    SessionView session;

    nlohmann::json to_json() const;
};

/// Sessions keyed by id. Turns on one session are serialized: a submit that
/// arrives while another turn on the same session is running is refused
/// with 409 rather than queued. With an event log every change is appended
/// as one JSON line, and constructing a store over an existing log replays it.
class SessionStore {
public:
    SessionStore(std::shared_ptr<const pipeline::AgentPipeline> pipeline,
                 std::optional<std::filesystem::path> event_log = std::nullopt);

    SessionView create();
    TurnResult submit(const std::string& id, const gateway::AudioRef& input);
    SessionView get(const std::string& id) const;
    /// Idempotent; refused with 409 while a turn is running.
    SessionView confirm(const std::string& id);
    std::size_t size() const;

private:
    struct Entry {
        std::mutex turn_mu;          // held for the duration of a turn
        mutable std::mutex data_mu;  // guards the fields below
        session::TranscriptionState state;
        SessionStatus status = SessionStatus::active;
        Clock::time_point created_at;
        Clock::time_point updated_at;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    static SessionView view(const std::string& id, const Entry& e);
    void append(const nlohmann::json& event);
    void replay(const std::filesystem::path& path);

    std::shared_ptr<const pipeline::AgentPipeline> pipeline_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::mutex log_mu_;
    std::optional<dataset::JsonlWriter> log_;
};

enum class JobKind { judge, simulate, metrics };
std::string_view to_string(JobKind kind);
std::optional<JobKind> parse_job_kind(std::string_view name);

enum class JobStatus { queued, running, finished, failed };
std::string_view to_string(JobStatus status);

struct JobView {
    std::string id;
    JobKind kind = JobKind::metrics;
    JobStatus status = JobStatus::queued;
    std::size_t completed = 0;
    std::size_t total = 0;
    std::optional<std::string> result_path;  // set once finished
    std::optional<std::string> error;
    Clock::time_point created_at;

    nlohmann::json to_json() const;
};

/// Runs jobs on a fixed pool of worker threads.
///
///   metrics:  {"manifest", "hyp", "metric": "wer"|"cer"|"mer"|"ner"}
///   judge:    {"manifest", "hyp", "k"?}
///   simulate: {"manifest", "max_rounds"?, "judge_k"?, "seed"?}
///
/// Inputs are loaded and checked when the job is submitted; problems are
/// reported as 400 before anything is queued.
class JobManager {
public:
    JobManager(std::shared_ptr<const Runtime> runtime, std::filesystem::path results_dir, std::size_t workers);
    ~JobManager();
    JobManager(const JobManager&) = delete;
    JobManager& operator=(const JobManager&) = delete;

    JobView start(const std::string& kind, const nlohmann::json& params);
    JobView get(const std::string& id) const;

private:
    struct Job;

    void worker();
    void run(Job& job);

    std::shared_ptr<const Runtime> runtime_;
    std::filesystem::path results_dir_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::shared_ptr<Job>> queue_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

/// The HTTP front end. bind() then run() (blocking) or start() (background).
class Server {
public:
    Server(std::shared_ptr<const Runtime> runtime, ServiceSettings settings);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    void run();
    /// bind() + run() on a background thread; returns the port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    SessionStore& sessions() { return *sessions_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::unique_ptr<SessionStore> sessions_;
    std::unique_ptr<JobManager> jobs_;
};

/// 16 random hex digits.
std::string random_id();

}  // namespace iasr::service
