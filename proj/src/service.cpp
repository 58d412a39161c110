#include "cps/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cps/corpus.hpp"
#include "cps/fm_index.hpp"

namespace cps {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    send_json(res, status, {{"code", code}, {"message", message}});
}

json parse_body(const httplib::Request& req, ErrorCode on_error) {
    if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) {
        return json::object();
    }
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw Error(on_error, "request body must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw Error(on_error, std::string("request body: ") + e.what());
    }
}

template <class Fn>
auto guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            send_error(res, Service::http_status(e.code()), to_string(e.code()), e.what());
        } catch (const std::exception& e) {
            spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send_error(res, 500, "Internal", e.what());
        }
    };
}

}  // namespace

Service::Service(std::shared_ptr<SessionStore> store) : store_(std::move(store)) {}

int Service::http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::SessionNotFound:
        case ErrorCode::ProductNotFound:
            return 404;
        case ErrorCode::RemoteUnavailable:
        case ErrorCode::EvaluatorUnavailable:
            return 502;
        case ErrorCode::IoError:
        case ErrorCode::CorruptIndex:
            return 500;
        default:
            return 422;
    }
}

json Service::turn_payload(const std::string& session_id, const Turn& turn, std::size_t turn_index) const {
    const auto& corpus = store_->engine().corpus();
    json results = json::array();
    for (const auto& r : turn.results) {
        const Product& p = corpus.get_product(r.product_id);
        results.push_back({{"rank", r.rank},
                           {"product_id", r.product_id},
                           {"caption", p.caption ? json(*p.caption) : json(nullptr)},
                           {"image_ref", p.image_ref ? json(*p.image_ref) : json(nullptr)},
                           {"rm_raw", r.rm_raw},
                           {"rm_ttr", r.rm_ttr},
                           {"best_sid", r.best_sid.text},
                           {"best_sid_id", r.best_sid.sid_id}});
    }
    return {{"session_id", session_id},
            {"turn_index", turn_index},
            {"user_text", turn.user_text},
            {"ref_product_id", turn.ref_product_id ? json(*turn.ref_product_id) : json(nullptr)},
            {"inferred_query", turn.inferred_query},
            {"results", std::move(results)}};
}

void Service::mount(httplib::Server& server) {
    server.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                    const auto overrides = parse_body(req, ErrorCode::InvalidOverride);
                    const auto id = store_->create(overrides);
                    send_json(res, 201, {{"session_id", id}, {"config", store_->get(id).config.to_json()}});
                }));

    server.Post(R"(/v1/sessions/([^/]+)/turns)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                    const std::string id = req.matches[1];
                    const auto body = parse_body(req, ErrorCode::MalformedRecord);
                    UserInput input;
                    std::optional<std::vector<std::string>> candidates;
                    try {
                        input.user_text = body.at("user_text").get<std::string>();
                        if (body.contains("ref_product_id") && !body["ref_product_id"].is_null()) {
                            input.ref_product_id = body["ref_product_id"].get<std::string>();
                        }
                        if (body.contains("candidate_ids") && !body["candidate_ids"].is_null()) {
                            candidates = body["candidate_ids"].get<std::vector<std::string>>();
                        }
                    } catch (const json::exception& e) {
                        throw Error(ErrorCode::MalformedRecord, std::string("turn body: ") + e.what());
                    }
                    std::size_t index = 0;
                    auto turn = store_->post_turn(id, input, candidates, &index);
                    send_json(res, 200, turn_payload(id, turn, index));
                }));

    server.Get(R"(/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   send_json(res, 200, store_->get(req.matches[1]).to_json());
               }));

    server.Get(R"(/v1/products/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   send_json(res, 200, store_->engine().corpus().get_product(std::string(req.matches[1])).to_json());
               }));

    server.Get("/v1/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
                   const auto& engine = store_->engine();
                   send_json(res, 200,
                             {{"status", "ok"},
                              {"products", engine.corpus().size()},
                              {"sids", engine.index().sid_count()},
                              {"sessions", store_->size()}});
               }));

    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (res.body.empty()) {
            send_error(res, res.status, res.status == 404 ? "NotFound" : "HttpError",
                       req.method + " " + req.path);
        }
    });
}

}  // namespace cps
