#include "satseries/hub/mock_hub.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "satseries/core/digest.hpp"

namespace satseries::hub {

MockHub::MockHub(Clock& clock) : clock_(clock) {}

void MockHub::add_product(MockProduct product) {
    product.meta.md5 = md5_hex(std::span<const std::byte>(product.payload));
    product.meta.size_bytes = static_cast<std::int64_t>(product.payload.size());
    auto served = std::make_shared<std::vector<std::byte>>(product.payload);
    if (product.flip_byte_at && *product.flip_byte_at < served->size()) {
        (*served)[*product.flip_byte_at] ^= std::byte{0xFF};
    }
    std::lock_guard lock(mutex_);
    const std::string id = product.meta.product_id;
    products_[id] = State{std::move(product), std::move(served), std::nullopt, false};
}

void MockHub::set_unreachable_requests(int n) {
    std::lock_guard lock(mutex_);
    unreachable_ = n;
}

void MockHub::enforce_request_interval(Duration d) {
    std::lock_guard lock(mutex_);
    enforced_interval_ = d;
}

bool MockHub::online_locked(const State& s) const {
    if (s.product.never_online) {
        return false;
    }
    if (s.product.initially_online) {
        return true;
    }
    return s.first_request && clock_.now() >= *s.first_request + s.product.online_delay;
}

bool MockHub::take_unreachable_locked() {
    if (unreachable_ > 0) {
        --unreachable_;
        return true;
    }
    return false;
}

void MockHub::log_locked(std::string method, std::string path, std::string product_id, std::int64_t range,
                         int status) {
    log_.push_back({clock_.now(), std::move(method), std::move(path), std::move(product_id), range, status});
}

int MockHub::handle_search(const catalog::QuerySpec& q, std::string* body) {
    std::lock_guard lock(mutex_);
    if (take_unreachable_locked()) {
        log_locked("GET", "/search", "", -1, 503);
        return 503;
    }
    nlohmann::json j = {{"products", nlohmann::json::array()}};
    for (const auto& [id, s] : products_) {
        const catalog::ProductMeta& m = s.product.meta;
        if (m.sensing_time < q.start || !(m.sensing_time < q.end) || m.cloud_cover_pct > q.cloud_max_pct) {
            continue;
        }
        bool touches = false;
        for (const auto& part : m.footprint) {
            const geo::Rect b = geo::bounding_box(part.exterior);
            touches |= b.max_x >= q.west && b.min_x <= q.east && b.max_y >= q.south && b.min_y <= q.north;
        }
        if (!touches) {
            continue;
        }
        catalog::ProductMeta out = m;
        out.online = online_locked(s);
        j["products"].push_back(catalog::product_to_json(out));
    }
    *body = j.dump();
    log_locked("GET", q.to_request_path(), "", -1, 200);
    return 200;
}

int MockHub::handle_retrieve(const std::string& id) {
    std::lock_guard lock(mutex_);
    const std::string path = "/retrieve/" + id;
    if (take_unreachable_locked()) {
        log_locked("POST", path, id, -1, 503);
        return 503;
    }
    auto it = products_.find(id);
    if (it == products_.end()) {
        log_locked("POST", path, id, -1, 404);
        return 404;
    }
    State& s = it->second;
    if (online_locked(s)) {
        log_locked("POST", path, id, -1, 200);
        return 200;
    }
    const Instant now = clock_.now();
    if (enforced_interval_ && last_accepted_request_ && now < *last_accepted_request_ + *enforced_interval_) {
        log_locked("POST", path, id, -1, 429);
        return 429;
    }
    last_accepted_request_ = now;
    if (!s.first_request) {
        s.first_request = now;
    }
    log_locked("POST", path, id, -1, 202);
    return 202;
}

int MockHub::handle_status(const std::string& id, std::string* body) {
    std::lock_guard lock(mutex_);
    const std::string path = "/status/" + id;
    if (take_unreachable_locked()) {
        log_locked("GET", path, id, -1, 503);
        return 503;
    }
    auto it = products_.find(id);
    if (it == products_.end()) {
        log_locked("GET", path, id, -1, 404);
        return 404;
    }
    *body = nlohmann::json{{"online", online_locked(it->second)}}.dump();
    log_locked("GET", path, id, -1, 200);
    return 200;
}

MockHub::Transfer MockHub::open_transfer(const std::string& id, std::int64_t offset, bool range_requested) {
    std::lock_guard lock(mutex_);
    const std::string path = "/download/" + id;
    const std::int64_t logged_range = range_requested ? offset : -1;
    Transfer t;
    if (take_unreachable_locked()) {
        t.status = 503;
    } else if (auto it = products_.find(id); it == products_.end()) {
        t.status = 404;
    } else if (!online_locked(it->second)) {
        t.status = 409;
    } else {
        State& s = it->second;
        const auto size = static_cast<std::int64_t>(s.served->size());
        if (offset < 0 || offset > size) {
            t.status = 416;
        } else {
            t.status = range_requested ? 206 : 200;
            t.data = s.served;
            t.offset = offset;
            t.bytes_per_second = s.product.bytes_per_second;
            if (s.product.cut_once_at_fraction && !s.cut_used) {
                const auto cut = static_cast<std::int64_t>(*s.product.cut_once_at_fraction * double(size));
                if (cut > offset && cut < size) {
                    t.cut_at = cut;
                    s.cut_used = true;
                }
            }
        }
    }
    log_locked("GET", path, id, logged_range, t.status);
    return t;
}

std::vector<catalog::ProductMeta> MockHub::search(const catalog::QuerySpec& query) {
    std::string body;
    const int status = handle_search(query, &body);
    if (status != 200) {
        throw HubUnreachable("search: status " + std::to_string(status));
    }
    return catalog::parse_search_response(body);
}

RetrieveResult MockHub::request_retrieval(const std::string& id) {
    const int status = handle_retrieve(id);
    if (status == 202) {
        return RetrieveResult::Accepted;
    }
    if (status == 200) {
        return RetrieveResult::AlreadyOnline;
    }
    if (status == 404) {
        throw HubError("retrieve " + id + ": not found");
    }
    throw HubUnreachable("retrieve " + id + ": status " + std::to_string(status));
}

bool MockHub::is_online(const std::string& id) {
    std::string body;
    const int status = handle_status(id, &body);
    if (status == 404) {
        throw HubError("status " + id + ": not found");
    }
    if (status != 200) {
        throw HubUnreachable("status " + id + ": status " + std::to_string(status));
    }
    return nlohmann::json::parse(body).at("online").get<bool>();
}

void MockHub::download(const std::string& id, std::int64_t offset, const ByteSink& sink) {
    const Transfer t = open_transfer(id, offset, offset > 0);
    if (t.status == 404 || t.status == 409 || t.status == 416) {
        throw HubError("download " + id + ": status " + std::to_string(t.status));
    }
    if (t.status != 200 && t.status != 206) {
        throw HubUnreachable("download " + id + ": status " + std::to_string(t.status));
    }
    const auto size = static_cast<std::int64_t>(t.data->size());
    const std::int64_t end = t.cut_at.value_or(size);
    constexpr std::int64_t kChunk = 64 * 1024;
    for (std::int64_t pos = t.offset; pos < end; pos += kChunk) {
        const std::int64_t n = std::min(kChunk, end - pos);
        sink(std::span<const std::byte>(t.data->data() + pos, static_cast<std::size_t>(n)));
        if (t.bytes_per_second > 0) {
            std::this_thread::sleep_for(std::chrono::microseconds(n * 1000000 / std::int64_t(t.bytes_per_second)));
        }
    }
    if (t.cut_at) {
        throw TransportError("download " + id + ": connection reset at byte " + std::to_string(*t.cut_at));
    }
}

std::vector<HubRequest> MockHub::request_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::vector<Instant> MockHub::lta_request_times() const {
    std::lock_guard lock(mutex_);
    std::vector<Instant> out;
    for (const HubRequest& r : log_) {
        if (r.method == "POST" && r.status == 202) {
            out.push_back(r.ts);
        }
    }
    return out;
}

catalog::QuerySpec parse_search_params(const std::string& bbox, const std::string& start, const std::string& end,
                                       const std::string& cloudmax) {
    catalog::QuerySpec q;
    std::vector<double> v;
    std::stringstream ss(bbox);
    for (std::string part; std::getline(ss, part, ',');) {
        v.push_back(std::stod(part));
    }
    if (v.size() != 4) {
        throw ParseError("bbox needs 4 numbers");
    }
    q.west = v[0];
    q.south = v[1];
    q.east = v[2];
    q.north = v[3];
    q.start = parse_timestamp(start);
    q.end = parse_timestamp(end);
    q.cloud_max_pct = cloudmax.empty() ? 100.0 : std::stod(cloudmax);
    return q;
}

struct MockHubServer::Impl {
    MockHub& hub;
    httplib::Server server;
    std::thread thread;

    explicit Impl(MockHub& h) : hub(h) {}
};

MockHubServer::MockHubServer(MockHub& hub) : impl_(std::make_unique<Impl>(hub)) {
    httplib::Server& srv = impl_->server;
    MockHub& h = hub;
    srv.Get("/search", [&h](const httplib::Request& req, httplib::Response& res) {
        catalog::QuerySpec q;
        try {
            q = parse_search_params(req.get_param_value("bbox"), req.get_param_value("start"),
                                    req.get_param_value("end"), req.get_param_value("cloudmax"));
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(e.what(), "text/plain");
            return;
        }
        std::string body;
        res.status = h.handle_search(q, &body);
        res.set_content(body, "application/json");
    });
    srv.Post(R"(/retrieve/([^/]+))", [&h](const httplib::Request& req, httplib::Response& res) {
        res.status = h.handle_retrieve(req.matches[1]);
        res.set_content("{}", "application/json");
    });
    srv.Get(R"(/status/([^/]+))", [&h](const httplib::Request& req, httplib::Response& res) {
        std::string body;
        res.status = h.handle_status(req.matches[1], &body);
        res.set_content(body.empty() ? "{}" : body, "application/json");
    });
    srv.Get(R"(/download/([^/]+))", [&h](const httplib::Request& req, httplib::Response& res) {
        std::int64_t offset = 0;
        const bool ranged = req.has_header("Range");
        if (ranged) {
            const std::string range = req.get_header_value("Range");
            if (range.rfind("bytes=", 0) != 0) {
                res.status = 416;
                return;
            }
            offset = std::stoll(range.substr(6));
        }
        const MockHub::Transfer t = h.open_transfer(req.matches[1], offset, ranged);
        if (t.status != 200 && t.status != 206) {
            res.status = t.status;
            return;
        }
        const auto size = t.data->size();
        // httplib applies the Range header itself and asks for absolute offsets
        res.set_content_provider(size, "application/octet-stream",
                                 [t](std::size_t off, std::size_t len, httplib::DataSink& sink) {
                                     std::size_t n = std::min<std::size_t>(len, 64 * 1024);
                                     if (t.cut_at) {
                                         const auto cut = static_cast<std::size_t>(*t.cut_at);
                                         if (off >= cut) {
                                             return false;
                                         }
                                         n = std::min(n, cut - off);
                                     }
                                     if (t.bytes_per_second > 0) {
                                         std::this_thread::sleep_for(std::chrono::microseconds(
                                             std::int64_t(n) * 1000000 / std::int64_t(t.bytes_per_second)));
                                     }
                                     return sink.write(reinterpret_cast<const char*>(t.data->data() + off), n);
                                 });
    });
    port_ = srv.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) {
        throw Error("mock hub: cannot bind a port");
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

MockHubServer::~MockHubServer() {
    stop();
}

void MockHubServer::stop() {
    if (impl_ && impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

} // namespace satseries::hub
