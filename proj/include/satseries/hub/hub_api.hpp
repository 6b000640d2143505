#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satseries/catalog/catalog.hpp"
#include "satseries/core/error.hpp"

namespace satseries::hub {

/// Any failure talking to the hub.
class HubError : public Error {
public:
    using Error::Error;
};

/// The hub could not be reached or refused service for now; worth retrying.
class HubUnreachable : public HubError {
public:
    using HubError::HubError;
};

/// A transfer broke off mid-stream; resume from the bytes received.
class TransportError : public HubError {
public:
    using HubError::HubError;
};

enum class RetrieveResult { Accepted, AlreadyOnline };

using ByteSink = std::function<void(std::span<const std::byte>)>;

class HubApi {
public:
    virtual ~HubApi() = default;

    virtual std::vector<catalog::ProductMeta> search(const catalog::QuerySpec& query) = 0;
    /// Asks the archive to bring a product online. Idempotent.
    virtual RetrieveResult request_retrieval(const std::string& product_id) = 0;
    virtual bool is_online(const std::string& product_id) = 0;
    /// Streams the product bytes starting at `offset` into `sink`.
    virtual void download(const std::string& product_id, std::int64_t offset, const ByteSink& sink) = 0;
};

struct HttpHubOptions {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    std::optional<std::string> bearer_token;
    int connect_timeout_s = 10;
    int read_timeout_s = 60;
};

/// Client for the hub wire protocol:
///   GET /search?..., POST /retrieve/<id>, GET /status/<id>, GET /download/<id> (Range).
class HttpHub final : public HubApi {
public:
    explicit HttpHub(HttpHubOptions options);
    ~HttpHub() override;

    std::vector<catalog::ProductMeta> search(const catalog::QuerySpec& query) override;
    RetrieveResult request_retrieval(const std::string& product_id) override;
    bool is_online(const std::string& product_id) override;
    void download(const std::string& product_id, std::int64_t offset, const ByteSink& sink) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace satseries::hub
