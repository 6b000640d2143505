#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "satseries/cli/config.hpp"
#include "satseries/hub/clock.hpp"
#include "satseries/hub/hub_api.hpp"

namespace satseries::cli {

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitConfig = 2 };

/// Output layout under the configured output root.
struct Layout {
    std::filesystem::path root;

    std::filesystem::path report() const { return root / "query" / "report.csv"; }
    std::filesystem::path selection() const { return root / "query" / "selection.txt"; }
    std::filesystem::path catalog() const { return root / "query" / "catalog.json"; }
    std::filesystem::path downloads() const { return root / "downloads"; }
    std::filesystem::path journal() const { return root / "downloads" / "journal.jsonl"; }
    std::filesystem::path products() const { return root / "products"; }
    std::filesystem::path label_grids() const { return root / "labels"; }
    std::filesystem::path store() const { return root / "store"; }
    std::filesystem::path dataset() const { return root / "dataset"; }
};

struct RunContext {
    PipelineConfig config;
    int jobs = 1;
    bool dry_run = false;
    std::filesystem::path selection_override;  // download: --selection
    std::filesystem::path parcels_override;    // rasterize: --parcels
    /// Injected by tests; otherwise an HTTP client and the system clock.
    hub::HubApi* hub = nullptr;
    hub::Clock* clock = nullptr;
    std::ostream* out = nullptr;  // progress summary; stdout when null

    Layout layout() const { return Layout{config.output_dir()}; }
};

int cmd_query(RunContext& ctx);
int cmd_download(RunContext& ctx);
int cmd_rasterize(RunContext& ctx);
int cmd_tile(RunContext& ctx);
int cmd_assemble(RunContext& ctx);
/// query, download, rasterize (when parcels are configured), tile, assemble.
int cmd_all(RunContext& ctx);

/// Full command line: `satseries <subcommand> --config PATH [--jobs N]
/// [--dry-run] [--json-logs]`. Maps errors to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace satseries::cli
