#include <algorithm>
#include <fstream>

#include <spdlog/spdlog.h>

#include "iasr/batch.hpp"
#include "iasr/service.hpp"

namespace iasr::service {

std::string_view to_string(JobKind kind) {
    switch (kind) {
        case JobKind::judge: return "judge";
        case JobKind::simulate: return "simulate";
        case JobKind::metrics: return "metrics";
    }
    return "metrics";
}

std::optional<JobKind> parse_job_kind(std::string_view name) {
    if (name == "judge") return JobKind::judge;
    if (name == "simulate") return JobKind::simulate;
    if (name == "metrics") return JobKind::metrics;
    return std::nullopt;
}

std::string_view to_string(JobStatus status) {
    switch (status) {
        case JobStatus::queued: return "queued";
        case JobStatus::running: return "running";
        case JobStatus::finished: return "finished";
        case JobStatus::failed: return "failed";
    }
    return "queued";
}

nlohmann::json JobView::to_json() const {
    nlohmann::json j = {{"job_id", id},
                        {"kind", to_string(kind)},
                        {"status", to_string(status)},
                        {"progress", {{"completed", completed}, {"total", total}}},
                        {"created_at", format_time(created_at)}};
    j["result_path"] = result_path ? nlohmann::json(*result_path) : nlohmann::json();
    if (error) j["error"] = *error;
    return j;
}

struct JobManager::Job {
    JobView view;
    std::vector<dataset::ManifestEntry> manifest;
    std::vector<dataset::HypothesisEntry> hypotheses;
    std::string metric;
    std::optional<int> k;
    simulation::SimulationConfig sim;
};

namespace {

ServiceError bad_params(const std::string& message, nlohmann::json detail = nullptr) {
    return ServiceError(400, "bad_params", message, std::move(detail));
}

std::string path_param(const nlohmann::json& params, const char* key) {
    if (!params.contains(key) || !params.at(key).is_string() || params.at(key).get<std::string>().empty()) {
        throw bad_params(std::string("params.") + key + " must be a file path");
    }
    return params.at(key).get<std::string>();
}

}  // namespace

JobManager::JobManager(std::shared_ptr<const Runtime> runtime, std::filesystem::path results_dir,
                       std::size_t workers)
    : runtime_(std::move(runtime)), results_dir_(std::move(results_dir)) {
    if (!runtime_) throw InvalidArgument("job manager needs a runtime");
    std::filesystem::create_directories(results_dir_);
    for (std::size_t i = 0; i < std::max<std::size_t>(1, workers); ++i) workers_.emplace_back([this] { worker(); });
}

JobManager::~JobManager() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
}

JobView JobManager::start(const std::string& kind_name, const nlohmann::json& params) {
    const auto kind = parse_job_kind(kind_name);
    if (!kind) throw bad_params("kind must be one of judge, simulate, metrics");
    if (!params.is_object()) throw bad_params("params must be an object");

    auto job = std::make_shared<Job>();
    job->view.kind = *kind;
    job->view.created_at = Clock::now();
    try {
        job->manifest = dataset::load_manifest(path_param(params, "manifest"));
        if (job->manifest.empty()) throw bad_params("manifest is empty");
        if (*kind == JobKind::simulate) {
            job->sim = runtime_->config().simulation;
            job->sim.max_rounds = params.value("max_rounds", job->sim.max_rounds);
            job->sim.judge_k = params.value("judge_k", job->sim.judge_k);
            job->sim.seed = params.value("seed", job->sim.seed);
            job->sim.validate();
            job->view.total = job->manifest.size();
        } else {
            job->hypotheses = dataset::load_hypotheses(path_param(params, "hyp"));
            const auto joined = dataset::join_pairs(job->manifest, job->hypotheses);
            job->view.total = joined.pairs.size();
            if (*kind == JobKind::metrics) {
                job->metric = params.value("metric", std::string("wer"));
                if (job->metric != "ner") metrics::parse_metric(job->metric);
            } else if (params.contains("k")) {
                job->k = params.at("k").get<int>();
                if (!judge::valid_k(*job->k)) throw bad_params("k must be odd and within [1, 7]");
            }
        }
    } catch (const dataset::DatasetError& e) {
        nlohmann::json detail = nullptr;
        if (e.line() > 0) detail = {{"line", e.line()}};
        throw bad_params(e.what(), detail);
    } catch (const ServiceError&) {
        throw;
    } catch (const Error& e) {
        throw bad_params(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw bad_params(e.what());
    }

    std::lock_guard lock(mu_);
    do {
        job->view.id = random_id();
    } while (jobs_.count(job->view.id));
    jobs_[job->view.id] = job;
    queue_.push_back(job);
    cv_.notify_one();
    return job->view;
}

JobView JobManager::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw ServiceError(404, "job_not_found", "no job with id '" + id + "'");
    return it->second->view;
}

void JobManager::worker() {
    for (;;) {
        std::shared_ptr<Job> job;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            job = queue_.front();
            queue_.pop_front();
            job->view.status = JobStatus::running;
        }
        run(*job);
    }
}

void JobManager::run(Job& job) {
    const auto dir = results_dir_ / job.view.id;
    auto progress = [&](std::size_t done, std::size_t) {
        std::lock_guard lock(mu_);
        job.view.completed = std::max(job.view.completed, done);
    };
    try {
        std::filesystem::create_directories(dir);
        std::filesystem::path result;
        switch (job.view.kind) {
            case JobKind::metrics: {
                result = dir / "result.json";
                const auto out = batch::score_metrics(job.manifest, job.hypotheses, job.metric, progress);
                std::ofstream(result) << out.dump(2) << '\n';
                break;
            }
            case JobKind::judge: {
                result = dir / "result.json";
                const auto judge = runtime_->make_judge(job.k);
                const auto out = batch::score_s2er(*judge, job.manifest, job.hypotheses, dir / "audit.jsonl", progress);
                std::ofstream(result) << out.dump(2) << '\n';
                break;
            }
            case JobKind::simulate: {
                result = dir / "report.json";
                auto system = runtime_->make_system();
                batch::simulate(job.manifest, *system, job.sim, runtime_->simulation_backends(job.sim.judge_k), dir,
                                progress);
                break;
            }
        }
        std::lock_guard lock(mu_);
        job.view.status = JobStatus::finished;
        job.view.completed = job.view.total;
        job.view.result_path = result.string();
    } catch (const std::exception& e) {
        spdlog::error("job {} failed: {}", job.view.id, e.what());
        std::lock_guard lock(mu_);
        job.view.status = JobStatus::failed;
        job.view.error = e.what();
    }
}

}  // namespace iasr::service
