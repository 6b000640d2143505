#include "satseries/cli/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "satseries/assembler/assembler.hpp"
#include "satseries/core/digest.hpp"
#include "satseries/core/error.hpp"
#include "satseries/core/log.hpp"
#include "satseries/ingest/archive.hpp"
#include "satseries/ingest/band.hpp"
#include "satseries/rasterizer/parcel.hpp"
#include "satseries/rasterizer/rasterize.hpp"
#include "satseries/tiler/tiler.hpp"

namespace satseries::cli {
namespace fs = std::filesystem;
namespace {

std::ostream& out_of(RunContext& ctx) { return ctx.out ? *ctx.out : std::cout; }

/// Supplies the hub and clock: the injected ones, or HTTP and the system clock.
class Services {
public:
    explicit Services(RunContext& ctx) : ctx_(ctx) {}

    hub::HubApi& hub() {
        if (ctx_.hub) {
            return *ctx_.hub;
        }
        if (!http_) {
            const PipelineConfig& c = ctx_.config;
            if (c.hub_url.empty()) {
                throw ValidationError("hub.url is not configured");
            }
            hub::HttpHubOptions o;
            o.base_url = c.hub_url;
            if (!c.hub_token_env.empty()) {
                if (const char* token = std::getenv(c.hub_token_env.c_str())) {
                    o.bearer_token = token;
                } else {
                    throw ValidationError("environment variable " + c.hub_token_env + " (hub.token_env) is not set");
                }
            }
            http_ = std::make_unique<hub::HttpHub>(o);
        }
        return *http_;
    }

    hub::Clock& clock() { return ctx_.clock ? *ctx_.clock : system_; }

private:
    RunContext& ctx_;
    std::unique_ptr<hub::HttpHub> http_;
    hub::SystemClock system_;
};

std::optional<nlohmann::json> read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) {
        return std::nullopt;
    }
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp);
        out << j.dump(2) << '\n';
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
    }
    fs::rename(tmp, p);
}

/// Extracted products, ordered by sensing time then id.
std::vector<ingest::ProductBundle> list_products(const Layout& layout) {
    std::vector<ingest::ProductBundle> out;
    if (!fs::is_directory(layout.products())) {
        return out;
    }
    for (const auto& e : fs::directory_iterator(layout.products())) {
        if (!e.is_directory() || e.path().extension() == ".extracting") {
            continue;
        }
        if (const auto manifest = ingest::find_manifest(e.path())) {
            out.push_back(ingest::parse_manifest(*manifest));
        } else {
            log::warn("product directory without manifest", {{"dir", e.path().string()}});
        }
    }
    std::sort(out.begin(), out.end(), [](const ingest::ProductBundle& a, const ingest::ProductBundle& b) {
        return std::tie(a.sensing_time, a.product_id) < std::tie(b.sensing_time, b.product_id);
    });
    return out;
}

/// First product of each tile (by id) defines the tile grid.
std::map<std::string, tiler::TileGrid> tile_grids(const std::vector<ingest::ProductBundle>& products) {
    std::map<std::string, std::pair<std::string, tiler::TileGrid>> refs;
    for (const auto& b : products) {
        const tiler::TileGrid g = tiler::TileGrid::from_bundle(b);
        auto it = refs.find(b.tile_id);
        if (it == refs.end()) {
            refs.emplace(b.tile_id, std::pair{b.product_id, g});
        } else if (!(it->second.second == g)) {
            throw ValidationError("product " + b.product_id + " does not share the grid of " + it->second.first +
                                  " on tile " + b.tile_id);
        }
    }
    std::map<std::string, tiler::TileGrid> out;
    for (auto& [tile, ref] : refs) {
        out.emplace(tile, ref.second);
    }
    return out;
}

rasterizer::GridSpec label_grid(const tiler::TileGrid& tile, int scale) {
    return rasterizer::GridSpec::from_base(tile.geotransform(10), tile.rows, tile.cols, tile.crs, scale);
}

std::string file_md5(const fs::path& p) {
    if (!fs::exists(p)) {
        throw ValidationError("cannot open " + p.string());
    }
    return md5_file(p);
}

nlohmann::json window_settings(const PipelineConfig& c) {
    return {{"window_m", c.windows.window_m},
            {"stride_m", c.windows.stride_m},
            {"labeled_only", c.windows.labeled_only},
            {"min_labeled_fraction", c.windows.min_labeled_fraction}};
}

} // namespace

int cmd_query(RunContext& ctx) {
    const PipelineConfig& c = ctx.config;
    const Layout layout = ctx.layout();
    const catalog::Aoi aoi = catalog::Aoi::from_polygon(c.aoi());
    const catalog::Poi poi = catalog::Poi::make(c.poi_start, c.poi_end);
    const catalog::QuerySpec query = catalog::build_query(aoi, poi, c.selection);
    if (ctx.dry_run) {
        out_of(ctx) << "would query " << c.hub_url << query.to_request_path() << "\n";
        return kExitOk;
    }
    Services services(ctx);
    std::vector<catalog::ProductMeta> hits;
    try {
        hits = services.hub().search(query);
    } catch (const hub::HubError& e) {
        throw hub::HubError(std::string("search failed: ") + e.what());
    }
    const catalog::RankResult ranking = catalog::rank_products(hits, aoi, c.selection);
    for (const auto& r : ranking.rejected) {
        log::info("product rejected", {{"product_id", r.product.product_id}, {"reason", r.reason}});
    }
    std::vector<catalog::SelectionEntry> entries;
    std::vector<catalog::ProductMeta> metas;
    if (ranking.no_candidates()) {
        log::warn("no candidate products for the AOI and period", {{"hits", std::to_string(hits.size())}});
    } else {
        for (const auto& r : catalog::select_products(ranking, c.selection, poi)) {
            entries.push_back({r.product.product_id, r.product.tile_id, r.product.sensing_time});
        }
    }
    for (const auto& r : ranking.ranked) {
        metas.push_back(r.product);
    }
    catalog::write_report_csv(layout.report(), ranking.ranked);
    catalog::write_selection_file(layout.selection(), entries);
    catalog::write_catalog(layout.catalog(), metas);
    out_of(ctx) << "query: " << hits.size() << " hits, " << ranking.ranked.size() << " ranked, " << entries.size()
                << " selected -> " << layout.selection().string() << "\n";
    return kExitOk;
}

int cmd_download(RunContext& ctx) {
    const PipelineConfig& c = ctx.config;
    const Layout layout = ctx.layout();
    const fs::path selection_path = ctx.selection_override.empty() ? layout.selection() : ctx.selection_override;
    if (ctx.dry_run && !fs::exists(selection_path)) {
        out_of(ctx) << "would download the products listed in " << selection_path.string() << "\n";
        return kExitOk;
    }
    const auto entries = catalog::read_selection_file(selection_path);
    std::map<std::string, catalog::ProductMeta> known;
    if (fs::exists(layout.catalog())) {
        for (auto& p : catalog::read_catalog(layout.catalog())) {
            known.emplace(p.product_id, std::move(p));
        }
    }
    std::vector<hub::DownloadTask> tasks;
    for (const auto& e : entries) {
        hub::DownloadTask t;
        t.product_id = e.product_id;
        if (auto it = known.find(e.product_id); it != known.end()) {
            t.checksum_expected = it->second.md5;
            if (it->second.size_bytes > 0) {
                t.size_bytes = it->second.size_bytes;
            }
        }
        tasks.push_back(std::move(t));
    }
    if (ctx.dry_run) {
        std::map<std::string, hub::ReplayedTask> states;
        if (fs::exists(layout.journal())) {
            states = hub::replay_journal(hub::read_journal(layout.journal())).tasks;
        }
        for (const auto& t : tasks) {
            const auto it = states.find(t.product_id);
            out_of(ctx) << "would download " << t.product_id << " (state "
                        << hub::to_string(it == states.end() ? hub::TaskState::Queued : it->second.state) << ")\n";
        }
        return kExitOk;
    }
    fs::create_directories(layout.downloads());
    Services services(ctx);
    hub::RunnerOptions ro;
    ro.policy = c.throttle;
    ro.backoff = c.backoff;
    ro.dest_dir = layout.downloads();
    ro.journal_path = layout.journal();
    hub::QueueRunner runner(services.hub(), services.clock(), ro);
    const hub::RunSummary summary = runner.run(std::move(tasks));

    int extracted = 0;
    for (const auto& t : summary.tasks) {
        if (t.state != hub::TaskState::Done) {
            log::error("download failed", {{"product_id", t.product_id}, {"reason", t.failure_reason}});
            continue;
        }
        const fs::path dest = layout.products() / t.product_id;
        if (fs::exists(dest) && ingest::find_manifest(dest)) {
            continue;
        }
        fs::remove_all(dest);
        ingest::extract_archive(hub::archive_path(layout.downloads(), t.product_id), dest);
        ++extracted;
    }
    out_of(ctx) << "download: " << summary.done << " done (" << summary.already_done << " earlier), "
                << summary.failed << " failed, " << extracted << " extracted\n";
    return summary.failed > 0 ? kExitPartial : kExitOk;
}

int cmd_rasterize(RunContext& ctx) {
    const PipelineConfig& c = ctx.config;
    const Layout layout = ctx.layout();
    const fs::path parcels = ctx.parcels_override.empty()
                                 ? (c.parcels.empty() ? fs::path() : c.resolve(c.parcels))
                                 : ctx.parcels_override;
    if (parcels.empty()) {
        throw ValidationError("no parcels file configured (labels.parcels)");
    }
    const auto products = list_products(layout);
    if (products.empty()) {
        throw ValidationError("no products under " + layout.products().string() + "; run download first");
    }
    const auto grids = tile_grids(products);
    rasterizer::ParcelCollection collection = rasterizer::read_parcels_geojson(parcels);
    std::vector<rasterizer::ParcelRecord> records =
        c.label_year ? rasterizer::filter_by_year(collection.records, *c.label_year) : std::move(collection.records);
    const std::string parcels_md5 = file_md5(parcels);

    int written = 0;
    for (const auto& [tile_id, tile] : grids) {
        const rasterizer::GridSpec grid = label_grid(tile, c.label_scale);
        const fs::path dir = layout.label_grids() / tile_id;
        nlohmann::json stamp = {{"parcels_md5", parcels_md5},
                                {"scale", c.label_scale},
                                {"background", c.background},
                                {"year", c.label_year ? nlohmann::json(*c.label_year) : nlohmann::json(nullptr)},
                                {"origin", {tile.origin_x, tile.origin_y}},
                                {"rows", grid.rows},
                                {"cols", grid.cols},
                                {"crs", tile.crs.to_string()}};
        const bool fresh = read_json(dir / "source.json") == stamp && rasterizer::verify_label_product(dir);
        if (ctx.dry_run) {
            out_of(ctx) << (fresh ? "up to date " : "would rasterize ") << tile_id << ": " << records.size()
                        << " parcels onto " << grid.rows << "x" << grid.cols << "\n";
            continue;
        }
        if (fresh) {
            log::info("labels up to date", {{"tile_id", tile_id}});
            continue;
        }
        const fs::path tmp = dir.string() + ".tmp";
        fs::remove_all(tmp);
        rasterizer::RasterizeOptions ro;
        ro.jobs = ctx.jobs;
        rasterizer::rasterize_parcels_to_directory(records, grid, c.background, c.label_year, ro, tmp);
        write_json(tmp / "source.json", stamp);
        fs::remove_all(dir);
        fs::rename(tmp, dir);
        ++written;
    }
    if (!ctx.dry_run) {
        out_of(ctx) << "rasterize: " << records.size() << " parcels, " << written << " of " << grids.size()
                    << " tile label grids written\n";
    }
    return kExitOk;
}

int cmd_tile(RunContext& ctx) {
    const PipelineConfig& c = ctx.config;
    const Layout layout = ctx.layout();
    const auto products = list_products(layout);
    if (products.empty()) {
        throw ValidationError("no products under " + layout.products().string() + "; run download first");
    }
    const auto grids = tile_grids(products);

    const fs::path settings_path = layout.store() / "tiling.json";
    const nlohmann::json settings = window_settings(c);
    if (const auto existing = read_json(settings_path); existing && *existing != settings) {
        throw ValidationError("store " + layout.store().string() +
                              " was tiled with different window settings; remove it to re-tile");
    }

    std::map<std::string, std::vector<tiler::Window>> plans;
    std::map<std::string, fs::path> label_dirs;
    for (const auto& [tile_id, tile] : grids) {
        const fs::path label_dir = layout.label_grids() / tile_id;
        const bool has_labels = rasterizer::verify_label_product(label_dir);
        if (c.windows.labeled_only && !has_labels) {
            throw ValidationError("windows.labeled_only needs label grids for tile " + tile_id +
                                  "; run rasterize first");
        }
        std::optional<tiler::LabelSource> source;
        if (has_labels) {
            source = tiler::LabelSource::directory(label_dir);
            label_dirs.emplace(tile_id, label_dir);
        }
        plans[tile_id] = tiler::plan_windows(tile, c.windows, c.windows.labeled_only ? &*source : nullptr);
        log::info("windows planned", {{"tile_id", tile_id}, {"windows", std::to_string(plans[tile_id].size())}});
    }
    if (ctx.dry_run) {
        for (const auto& [tile_id, windows] : plans) {
            out_of(ctx) << "would tile " << tile_id << ": " << windows.size() << " windows"
                        << (label_dirs.count(tile_id) ? " with labels" : "") << "\n";
        }
        out_of(ctx) << "would tile " << products.size() << " products\n";
        return kExitOk;
    }
    write_json(settings_path, settings);

    tiler::TileOptions to;
    to.jobs = ctx.jobs;
    std::size_t written = 0, present = 0, superseded = 0;
    for (const auto& b : products) {
        const tiler::TileReport r = tiler::tile_product(b, plans.at(b.tile_id), c.windows, layout.store(), to);
        written += r.windows_written;
        present += r.windows_already_present;
        superseded += r.superseded;
    }

    // label patches follow the label grid they were cut from
    const fs::path label_state_path = layout.store() / "labels.json";
    nlohmann::json label_state = read_json(label_state_path).value_or(nlohmann::json::object());
    for (const auto& [tile_id, dir] : label_dirs) {
        const std::string digest = assembler::label_digest(dir);
        if (label_state.value(tile_id, "") != digest) {
            for (const auto& w : plans.at(tile_id)) {
                fs::remove_all(layout.store() / "labels" / w.location_key);
            }
        }
        tiler::tile_labels(dir, plans.at(tile_id), layout.store(), to);
        label_state[tile_id] = digest;
    }
    write_json(label_state_path, label_state);
    out_of(ctx) << "tile: " << products.size() << " products, " << written << " window patch sets written, "
                << present << " already present, " << superseded << " superseded same-time products\n";
    return kExitOk;
}

int cmd_assemble(RunContext& ctx) {
    const PipelineConfig& c = ctx.config;
    const Layout layout = ctx.layout();
    const fs::path labels = layout.store() / "labels";
    const std::optional<fs::path> label_root = fs::is_directory(labels) ? std::optional(labels) : std::nullopt;
    if (ctx.dry_run) {
        const auto dates = assembler::scan_patch_store(layout.store());
        out_of(ctx) << "would assemble " << dates.size() << " dates into " << layout.dataset().string() << "\n";
        return kExitOk;
    }
    assembler::AssembleOptions ao;
    ao.min_T = c.min_T;
    ao.jobs = ctx.jobs;
    ao.ratios = c.split;
    ao.seed = c.seed;
    const assembler::DatasetIndex index = assembler::assemble(layout.store(), label_root, layout.dataset(), ao);
    std::size_t labeled = 0;
    for (const auto& r : index.rows) {
        labeled += r.labeled;
    }
    out_of(ctx) << "assemble: " << index.rows.size() << " samples (" << labeled << " labeled) -> "
                << (layout.dataset() / "index.csv").string() << "\n";
    return kExitOk;
}

int cmd_all(RunContext& ctx) {
    int code = cmd_query(ctx);
    if (code != kExitOk) {
        return code;
    }
    code = cmd_download(ctx);
    if (ctx.dry_run) {
        // later stages need the downloaded products
        return code;
    }
    if (!ctx.config.parcels.empty() || !ctx.parcels_override.empty()) {
        cmd_rasterize(ctx);
    }
    cmd_tile(ctx);
    cmd_assemble(ctx);
    return code;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sentinel-2 time-series dataset pipeline", "satseries"};
    app.require_subcommand(1, 1);
    std::string config_path;
    int jobs = 1;
    bool dry_run = false;
    bool json_logs = false;
    std::string selection, parcels;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Pipeline configuration (YAML)")->required();
        sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--dry-run", dry_run, "Print the planned work without doing it");
        sub->add_flag("--json-logs", json_logs, "Structured JSON log lines on stderr");
    };
    std::map<std::string, int (*)(RunContext&)> commands = {
        {"query", cmd_query}, {"download", cmd_download}, {"rasterize", cmd_rasterize},
        {"tile", cmd_tile},   {"assemble", cmd_assemble}, {"all", cmd_all}};
    const std::map<std::string, std::string> help = {
        {"query", "Search the hub, rank candidates and write the selection file"},
        {"download", "Request, download and extract the selected products"},
        {"rasterize", "Burn the parcel polygons into label grids"},
        {"tile", "Cut products and labels into window patches"},
        {"assemble", "Group patches into time series samples and write the index"},
        {"all", "Run every stage in order"}};
    for (const auto& [name, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help.at(name));
        common(sub);
        if (name == "download" || name == "all") {
            sub->add_option("--selection", selection, "Selection file (default: <output>/query/selection.txt)");
        }
        if (name == "rasterize" || name == "all") {
            sub->add_option("--parcels", parcels, "Parcel GeoJSON (default: labels.parcels)");
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    log::set_format(json_logs ? log::Format::Json : log::Format::Text);

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        RunContext ctx;
        ctx.config = load_config(config_path);
        ctx.jobs = jobs;
        ctx.dry_run = dry_run;
        ctx.selection_override = selection;
        ctx.parcels_override = parcels;
        ctx.out = &out;
        return commands.at(name)(ctx);
    } catch (const std::exception& e) {
        // configuration, input and hub errors alike: nothing partial to report
        if (json_logs) {
            log::error("command failed", {{"command", name}, {"error", e.what()}});
        } else {
            err << "error: " << e.what() << "\n";
        }
        return kExitConfig;
    }
}

} // namespace satseries::cli
