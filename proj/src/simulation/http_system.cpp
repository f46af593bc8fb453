#include <fstream>
#include <sstream>

#include "iasr/simulation.hpp"

namespace iasr::simulation {

namespace {

nlohmann::json expect_json(const gateway::HttpResponse& res, int expected, const std::string& what) {
    if (res.status != expected) {
        throw gateway::BackendError(what + " returned HTTP " + std::to_string(res.status) + ": " + res.body, 1,
                                    res.status);
    }
    auto j = nlohmann::json::parse(res.body, nullptr, false);
    if (j.is_discarded()) throw gateway::BackendError(what + " returned a non-JSON body");
    return j;
}

class HttpSession final : public SystemSession {
public:
    HttpSession(gateway::Endpoint ep, std::chrono::milliseconds timeout)
        : ep_(std::move(ep)), transport_(gateway::make_http_transport(ep_.origin, timeout)) {
        const auto j = expect_json(transport_->post_json(ep_.base_path + "/sessions", "{}", {}), 201,
                                   "POST /sessions");
        id_ = j.at("session_id").get<std::string>();
    }

    std::string submit(const gateway::AudioRef& input) override {
        const auto path = ep_.base_path + "/sessions/" + id_ + "/turns";
        gateway::HttpResponse res;
        if (input.kind == gateway::AudioRef::Kind::text_passthrough) {
            res = transport_->post_json(path, nlohmann::json{{"text", input.payload}}.dump(), {});
        } else {
            std::ifstream in(input.payload, std::ios::binary);
            if (!in) throw gateway::InputError("cannot read audio " + input.payload);
            std::ostringstream ss;
            ss << in.rdbuf();
            res = transport_->post_multipart(path, {{"audio", ss.str(), "input.wav", "audio/wav"}}, {});
        }
        return expect_json(res, 200, "POST " + path).at("state").at("text").get<std::string>();
    }

private:
    gateway::Endpoint ep_;
    std::unique_ptr<gateway::HttpTransport> transport_;
    std::string id_;
};

}  // namespace

HttpSystem::HttpSystem(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
    gateway::parse_endpoint(base_url_);
}

std::unique_ptr<SystemSession> HttpSystem::open() {
    return std::make_unique<HttpSession>(gateway::parse_endpoint(base_url_), timeout_);
}

}  // namespace iasr::simulation
