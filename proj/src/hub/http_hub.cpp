#include "satseries/hub/hub_api.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace satseries::hub {
namespace {

[[noreturn]] void throw_for_status(const std::string& what, int status) {
    if (status == 404) {
        throw HubError(what + ": not found");
    }
    if (status == 429 || status >= 500) {
        throw HubUnreachable(what + ": status " + std::to_string(status));
    }
    throw HubError(what + ": unexpected status " + std::to_string(status));
}

[[noreturn]] void throw_for_error(const std::string& what, httplib::Error err) {
    const std::string msg = what + ": " + httplib::to_string(err);
    if (err == httplib::Error::Read || err == httplib::Error::Write) {
        throw TransportError(msg);
    }
    throw HubUnreachable(msg);
}

} // namespace

struct HttpHub::Impl {
    HttpHubOptions options;
    httplib::Client client;

    explicit Impl(HttpHubOptions o) : options(std::move(o)), client(options.base_url) {
        client.set_connection_timeout(options.connect_timeout_s, 0);
        client.set_read_timeout(options.read_timeout_s, 0);
        if (options.bearer_token) {
            client.set_bearer_token_auth(*options.bearer_token);
        }
    }
};

HttpHub::HttpHub(HttpHubOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
    if (!impl_->client.is_valid()) {
        throw HubError("invalid hub url: " + impl_->options.base_url);
    }
}

HttpHub::~HttpHub() = default;

std::vector<catalog::ProductMeta> HttpHub::search(const catalog::QuerySpec& query) {
    const std::string path = query.to_request_path();
    auto res = impl_->client.Get(path);
    if (!res) {
        throw_for_error("search", res.error());
    }
    if (res->status != 200) {
        throw_for_status("search", res->status);
    }
    return catalog::parse_search_response(res->body);
}

RetrieveResult HttpHub::request_retrieval(const std::string& product_id) {
    auto res = impl_->client.Post("/retrieve/" + product_id);
    if (!res) {
        throw_for_error("retrieve " + product_id, res.error());
    }
    if (res->status == 202) {
        return RetrieveResult::Accepted;
    }
    if (res->status == 200) {
        return RetrieveResult::AlreadyOnline;
    }
    throw_for_status("retrieve " + product_id, res->status);
}

bool HttpHub::is_online(const std::string& product_id) {
    auto res = impl_->client.Get("/status/" + product_id);
    if (!res) {
        throw_for_error("status " + product_id, res.error());
    }
    if (res->status != 200) {
        throw_for_status("status " + product_id, res->status);
    }
    try {
        return nlohmann::json::parse(res->body).at("online").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw HubError("status " + product_id + ": " + e.what());
    }
}

void HttpHub::download(const std::string& product_id, std::int64_t offset, const ByteSink& sink) {
    httplib::Headers headers;
    if (offset > 0) {
        headers.emplace("Range", "bytes=" + std::to_string(offset) + "-");
    }
    int status = 0;
    std::int64_t skip = 0;
    auto res = impl_->client.Get(
        "/download/" + product_id, headers,
        [&](const httplib::Response& r) {
            status = r.status;
            // a server that ignores Range resends from the start
            skip = (offset > 0 && r.status == 200) ? offset : 0;
            return r.status == 200 || r.status == 206;
        },
        [&](const char* data, std::size_t len) {
            std::size_t start = 0;
            if (skip > 0) {
                start = static_cast<std::size_t>(std::min<std::int64_t>(skip, static_cast<std::int64_t>(len)));
                skip -= static_cast<std::int64_t>(start);
            }
            if (start < len) {
                sink(std::as_bytes(std::span(data + start, len - start)));
            }
            return true;
        });
    const std::string what = "download " + product_id;
    if (status != 0 && status != 200 && status != 206) {
        throw_for_status(what, status);
    }
    if (!res) {
        throw_for_error(what, res.error());
    }
}

} // namespace satseries::hub
