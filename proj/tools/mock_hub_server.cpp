// Serves extracted product directories over the hub protocol, for local runs
// of the pipeline without a real archive.

#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "satseries/cli/config.hpp"
#include "satseries/cli/mock_products.hpp"
#include "satseries/core/log.hpp"
#include "satseries/hub/mock_hub.hpp"

int main(int argc, char** argv) {
    using namespace satseries;
    CLI::App app{"Local mock of the product hub", "satseries-mock-hub"};
    std::string products_dir, scratch_dir, online_delay = "0s", min_interval;
    std::size_t bytes_per_second = 0;
    bool offline = false;
    app.add_option("--products", products_dir, "Directory of product directories")->required()->check(CLI::ExistingDirectory);
    app.add_option("--scratch", scratch_dir, "Where to build the served archives (default: <products>/.archives)");
    app.add_flag("--offline", offline, "Products start in the long-term archive");
    app.add_option("--online-delay", online_delay, "Time from an LTA request until the product is online");
    app.add_option("--min-request-interval", min_interval, "Answer 429 to LTA requests closer than this");
    app.add_option("--bytes-per-second", bytes_per_second, "Throttle transfers");
    CLI11_PARSE(app, argc, argv);

    // block the stop signals before any thread starts, then wait for them
    sigset_t stop;
    sigemptyset(&stop);
    sigaddset(&stop, SIGINT);
    sigaddset(&stop, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop, nullptr);

    try {
        hub::SystemClock clock;
        hub::MockHub hub(clock);
        const std::filesystem::path root(products_dir);
        const std::filesystem::path scratch = scratch_dir.empty() ? root / ".archives" : std::filesystem::path(scratch_dir);
        const hub::Duration delay = cli::parse_duration(online_delay);
        int count = 0;
        for (const auto& e : std::filesystem::directory_iterator(root)) {
            if (!e.is_directory() || e.path() == scratch) {
                continue;
            }
            hub::MockProduct p = cli::mock_product_from_directory(e.path(), scratch);
            p.initially_online = !offline;
            p.online_delay = delay;
            p.bytes_per_second = bytes_per_second;
            log::info("serving product", {{"product_id", p.meta.product_id}});
            hub.add_product(std::move(p));
            ++count;
        }
        if (!min_interval.empty()) {
            hub.enforce_request_interval(cli::parse_duration(min_interval));
        }
        hub::MockHubServer server(hub);
        std::cout << server.base_url() << std::endl;
        log::info("mock hub listening", {{"url", server.base_url()}, {"products", std::to_string(count)}});
        int sig = 0;
        sigwait(&stop, &sig);
        server.stop();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
