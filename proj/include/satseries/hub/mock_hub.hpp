#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "satseries/hub/clock.hpp"
#include "satseries/hub/hub_api.hpp"

namespace satseries::hub {

struct MockProduct {
    catalog::ProductMeta meta;  // md5 and size are filled from the payload
    std::vector<std::byte> payload;
    bool initially_online = true;
    /// Time from the first retrieval request until the product is online.
    Duration online_delay = Duration::zero();
    bool never_online = false;

    /// Breaks the first transfer that reaches this fraction of the payload.
    std::optional<double> cut_once_at_fraction;
    /// Serves this byte flipped (the advertised md5 stays that of the original).
    std::optional<std::size_t> flip_byte_at;
    /// Throttles transfers to this many bytes per second of real time; 0 = unlimited.
    std::size_t bytes_per_second = 0;
};

struct HubRequest {
    Instant ts{};
    std::string method;
    std::string path;
    std::string product_id;
    std::int64_t range_offset = -1;  // -1 when no Range header
    int status = 0;
};

/// Scripted in-process hub, timed by an injected clock. Thread-safe.
class MockHub final : public HubApi {
public:
    explicit MockHub(Clock& clock);

    void add_product(MockProduct product);
    /// The next `n` requests fail as unreachable.
    void set_unreachable_requests(int n);
    /// Rejects LTA requests closer together than this with status 429.
    void enforce_request_interval(Duration d);

    std::vector<catalog::ProductMeta> search(const catalog::QuerySpec& query) override;
    RetrieveResult request_retrieval(const std::string& product_id) override;
    bool is_online(const std::string& product_id) override;
    void download(const std::string& product_id, std::int64_t offset, const ByteSink& sink) override;

    std::vector<HubRequest> request_log() const;
    std::vector<Instant> lta_request_times() const;

    // Pieces the HTTP front end shares with the in-process calls.
    int handle_search(const catalog::QuerySpec& query, std::string* body);
    int handle_retrieve(const std::string& product_id);
    int handle_status(const std::string& product_id, std::string* body);

    struct Transfer {
        int status = 0;
        std::shared_ptr<const std::vector<std::byte>> data;
        std::int64_t offset = 0;
        std::optional<std::int64_t> cut_at;  // absolute byte offset where the stream breaks
        std::size_t bytes_per_second = 0;
    };
    Transfer open_transfer(const std::string& product_id, std::int64_t offset, bool range_requested);

private:
    struct State {
        MockProduct product;
        std::shared_ptr<const std::vector<std::byte>> served;
        std::optional<Instant> first_request;
        bool cut_used = false;
    };
    bool online_locked(const State& s) const;
    bool take_unreachable_locked();
    void log_locked(std::string method, std::string path, std::string product_id, std::int64_t range, int status);

    Clock& clock_;
    mutable std::mutex mutex_;
    std::map<std::string, State> products_;
    std::vector<HubRequest> log_;
    int unreachable_ = 0;
    std::optional<Duration> enforced_interval_;
    std::optional<Instant> last_accepted_request_;
};

/// Serves a MockHub over HTTP on 127.0.0.1 and an ephemeral port.
class MockHubServer {
public:
    explicit MockHubServer(MockHub& hub);
    ~MockHubServer();
    MockHubServer(const MockHubServer&) = delete;
    MockHubServer& operator=(const MockHubServer&) = delete;

    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

/// Parses `/search` query parameters back into a QuerySpec.
catalog::QuerySpec parse_search_params(const std::string& bbox, const std::string& start, const std::string& end,
                                       const std::string& cloudmax);

} // namespace satseries::hub
