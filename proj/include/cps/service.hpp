#pragma once

#include <memory>

#include <json.hpp>

#include "cps/dialogue.hpp"
#include "cps/error.hpp"

namespace httplib {
class Server;
}

namespace cps {

/// HTTP facade over a SessionStore:
///
///   POST /v1/sessions              overrides -> {session_id, config}
///   POST /v1/sessions/{id}/turns   {user_text, ref_product_id?, candidate_ids?} -> turn payload
///   GET  /v1/sessions/{id}         full session with turns
///   GET  /v1/products/{id}         product record, image_ref passed through
///   GET  /v1/healthz
///
/// Failures answer {code, message} with 404, 422, 502 or 500.
class Service {
public:
    explicit Service(std::shared_ptr<SessionStore> store);

    void mount(httplib::Server& server);

    /// Turn payload: inferred query, ranked products with caption and
    /// best SID text, and the 0-based turn index. No timestamps, so equal
    /// session states give equal payloads.
    nlohmann::json turn_payload(const std::string& session_id, const Turn& turn, std::size_t turn_index) const;

    static int http_status(ErrorCode code);

private:
    std::shared_ptr<SessionStore> store_;
};

}  // namespace cps
