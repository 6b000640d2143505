#include "satseries/assembler/assembler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "satseries/core/digest.hpp"
#include "satseries/core/error.hpp"
#include "satseries/core/log.hpp"
#include "satseries/core/parallel.hpp"
#include "satseries/ingest/band.hpp"
#include "satseries/rasterizer/rasterize.hpp"
#include "satseries/tiler/tiler.hpp"

namespace satseries::assembler {
namespace fs = std::filesystem;
namespace {

constexpr const char* kIndexHeader = "location_key,T,labeled,path,split";

std::optional<nlohmann::json> try_read_json(const fs::path& path) {
    std::ifstream in(path);
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

void write_text_atomically(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

bool same_geometry(const ingest::GridHeader& a, const ingest::GridHeader& b) {
    return a.rows == b.rows && a.cols == b.cols && a.resolution_m == b.resolution_m && a.dtype == b.dtype &&
           a.crs == b.crs && a.geotransform.origin_x == b.geotransform.origin_x &&
           a.geotransform.origin_y == b.geotransform.origin_y;
}

/// Band headers of one key in one date directory, keyed by band id.
std::map<std::string, ingest::GridHeader> band_headers(const fs::path& dir) {
    std::map<std::string, ingest::GridHeader> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".grid") {
            out.emplace(e.path().stem().string(), ingest::read_grid_header(e.path()));
        }
    }
    return out;
}

std::vector<std::string> canonical_ids(const std::map<std::string, ingest::GridHeader>& bands) {
    std::vector<std::string> ids;
    for (const auto& [id, h] : bands) {
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end(), ingest::band_order_less);
    return ids;
}

struct Job {
    std::string key;
    std::vector<std::uint32_t> dates;  // indices into the scanned store
};

class Assembler {
public:
    Assembler(const std::vector<DateEntry>& dates, const std::optional<fs::path>& labels, const fs::path& out,
              const AssembleOptions& options)
        : dates_(dates), labels_(labels), out_(out), options_(options) {}

    std::optional<IndexRow> run(const Job& job) const {
        std::vector<std::uint32_t> order = job.dates;
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return std::tie(dates_[a].sensing_time, dates_[a].product_id) <
                   std::tie(dates_[b].sensing_time, dates_[b].product_id);
        });
        std::vector<DateEntry> chosen;
        for (std::size_t i = 0; i < order.size();) {
            std::vector<DateEntry> day;
            const long long d = utc_day_number(dates_[order[i]].sensing_time);
            for (; i < order.size() && utc_day_number(dates_[order[i]].sensing_time) == d; ++i) {
                day.push_back(dates_[order[i]]);
            }
            if (day.size() > 1) {
                log::debug("same-day patches deduplicated",
                           {{"location_key", job.key}, {"kept", dedupe_same_day(day).product_id}});
            }
            chosen.push_back(dedupe_same_day(day));
        }
        if (static_cast<std::int64_t>(chosen.size()) < options_.min_T) {
            return std::nullopt;
        }

        std::vector<std::map<std::string, ingest::GridHeader>> headers;
        for (const DateEntry& d : chosen) {
            headers.push_back(band_headers(d.dir / job.key));
        }
        const std::vector<std::string> ids = canonical_ids(headers.front());
        if (ids.empty()) {
            throw ValidationError("inconsistent patch shapes for " + job.key + ": no bands");
        }
        const ingest::GridHeader& first = headers.front().at(ids.front());
        const double extent_x = double(first.cols) * first.resolution_m;
        const double extent_y = double(first.rows) * first.resolution_m;
        for (std::size_t t = 0; t < headers.size(); ++t) {
            if (canonical_ids(headers[t]) != ids) {
                throw ValidationError("inconsistent patch shapes for " + job.key + ": band set differs on " +
                                      format_timestamp(chosen[t].sensing_time));
            }
            for (const std::string& id : ids) {
                const ingest::GridHeader& h = headers[t].at(id);
                if (!same_geometry(h, headers.front().at(id)) || h.dtype != ingest::DType::U16 ||
                    double(h.cols) * h.resolution_m != extent_x || double(h.rows) * h.resolution_m != extent_y) {
                    throw ValidationError("inconsistent patch shapes for " + job.key + ": band " + id + " on " +
                                          format_timestamp(chosen[t].sensing_time));
                }
            }
        }

        SampleMeta meta;
        meta.location_key = job.key;
        for (const DateEntry& d : chosen) {
            meta.timestamps.push_back(d.sensing_time);
            meta.product_ids.push_back(d.product_id);
        }
        for (const std::string& id : ids) {
            const ingest::GridHeader& h = headers.front().at(id);
            meta.bands.push_back({id, static_cast<int>(h.resolution_m), h.rows, h.cols});
        }
        std::optional<fs::path> label_dir;
        if (labels_ && fs::exists(*labels_ / job.key)) {
            label_dir = *labels_ / job.key;
            if (!rasterizer::verify_label_product(*label_dir)) {
                throw ValidationError("label patch for " + job.key + " fails verification");
            }
        }
        meta.labeled = label_dir.has_value();
        if (label_dir) {
            meta.label_digest = label_digest(*label_dir);
        }

        IndexRow row;
        row.location_key = job.key;
        row.T = meta.T();
        row.labeled = meta.labeled;
        row.path = "samples/" + job.key;

        const fs::path sample_dir = out_ / row.path;
        if (const auto existing = try_read_json(sample_dir / "meta.json");
            existing && *existing == meta.to_json() && verify_sample(sample_dir)) {
            return row;
        }

        const fs::path tmp = out_ / "samples" / ("." + job.key + ".tmp");
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        for (const std::string& id : ids) {
            write_stack(tmp / (id + ".grid"), chosen, job.key, id, headers.front().at(id));
        }
        if (label_dir) {
            fs::copy(*label_dir, tmp / "labels", fs::copy_options::recursive);
        }
        write_text_atomically(tmp / "meta.json", meta.to_json().dump(2) + "\n");
        fs::remove_all(sample_dir);
        fs::rename(tmp, sample_dir);
        return row;
    }

private:
    /// Streams one frame at a time into the stack payload.
    static void write_stack(const fs::path& path, const std::vector<DateEntry>& chosen, const std::string& key,
                            const std::string& band_id, ingest::GridHeader header) {
        {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            for (const DateEntry& d : chosen) {
                const fs::path patch = d.dir / key / (band_id + ".grid");
                const auto bytes = ingest::read_grid_payload(patch, ingest::read_grid_header(patch));
                out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            }
            if (!out) {
                throw Error("cannot write " + path.string());
            }
        }
        header.frames = static_cast<std::int64_t>(chosen.size());
        header.md5.reset();
        ingest::finalize_grid_file(path, std::move(header));
    }

    const std::vector<DateEntry>& dates_;
    const std::optional<fs::path>& labels_;
    const fs::path& out_;
    const AssembleOptions& options_;
};

} // namespace

std::vector<DateEntry> scan_patch_store(const fs::path& store) {
    const fs::path root = store / "patches";
    if (!fs::is_directory(root)) {
        throw ValidationError("patch store " + store.string() + " has no patches directory");
    }
    std::vector<DateEntry> out;
    for (const auto& e : fs::directory_iterator(root)) {
        if (!e.is_directory()) {
            continue;
        }
        const auto j = try_read_json(e.path() / "product.json");
        if (!j || !j->value("complete", false)) {
            log::warn("skipping incomplete date directory", {{"dir", e.path().string()}});
            continue;
        }
        DateEntry d;
        d.dir = e.path();
        try {
            d.product_id = j->at("product_id").get<std::string>();
            d.sensing_time = parse_timestamp(j->at("sensing_time").get<std::string>());
            if (j->contains("cloud_cover_pct") && (*j)["cloud_cover_pct"].is_number()) {
                d.cloud_cover_pct = (*j)["cloud_cover_pct"].get<double>();
            }
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError((e.path() / "product.json").string() + ": " + ex.what());
        }
        out.push_back(std::move(d));
    }
    std::sort(out.begin(), out.end(), [](const DateEntry& a, const DateEntry& b) {
        return std::tie(a.sensing_time, a.product_id) < std::tie(b.sensing_time, b.product_id);
    });
    return out;
}

const DateEntry& dedupe_same_day(std::span<const DateEntry> candidates) {
    if (candidates.empty()) {
        throw ValidationError("dedupe_same_day needs at least one candidate");
    }
    const DateEntry* best = &candidates.front();
    for (const DateEntry& c : candidates.subspan(1)) {
        if (tiler::preferred_product(c.cloud_cover_pct, c.product_id, best->cloud_cover_pct, best->product_id)) {
            best = &c;
        }
    }
    return *best;
}

std::string to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "train";
}

Split parse_split(const std::string& text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "test") return Split::Test;
    throw ParseError("unknown split \"" + text + "\"");
}

void SplitRatios::validate() const {
    if (!(train >= 0 && val >= 0 && test >= 0)) {
        throw ValidationError("split ratios must be non-negative");
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) {
        throw ValidationError("split ratios must sum to 1");
    }
}

Split split_for(const std::string& location_key, const SplitRatios& ratios, std::uint64_t seed) {
    const std::string digest = md5_hex(std::to_string(seed) + ":" + location_key);
    const std::uint64_t h = std::stoull(digest.substr(0, 16), nullptr, 16);
    const long double u = static_cast<long double>(h) / 18446744073709551616.0L;
    if (u < ratios.train) {
        return Split::Train;
    }
    if (u < static_cast<long double>(ratios.train) + ratios.val) {
        return Split::Val;
    }
    // rounding can leave u past train + val even when test is 0
    if (ratios.test > 0) {
        return Split::Test;
    }
    return ratios.val > 0 ? Split::Val : Split::Train;
}

void split_assign(DatasetIndex& index, const SplitRatios& ratios, std::uint64_t seed) {
    ratios.validate();
    for (IndexRow& row : index.rows) {
        row.split = split_for(row.location_key, ratios, seed);
    }
}

void write_index_csv(const fs::path& path, const DatasetIndex& index) {
    std::ostringstream out;
    out << kIndexHeader << '\n';
    for (const IndexRow& r : index.rows) {
        out << r.location_key << ',' << r.T << ',' << (r.labeled ? 1 : 0) << ',' << r.path << ','
            << to_string(r.split) << '\n';
    }
    write_text_atomically(path, out.str());
}

DatasetIndex read_index_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != kIndexHeader) {
        throw ParseError(path.string() + ":1: expected header " + kIndexHeader);
    }
    DatasetIndex index;
    for (int n = 2; std::getline(in, line); ++n) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            f.push_back(cell);
        }
        const std::string where = path.string() + ":" + std::to_string(n);
        if (f.size() != 5) {
            throw ParseError(where + ": expected 5 fields");
        }
        IndexRow r;
        r.location_key = f[0];
        try {
            r.T = std::stoll(f[1]);
        } catch (const std::exception&) {
            throw ParseError(where + ": bad T");
        }
        if (f[2] != "0" && f[2] != "1") {
            throw ParseError(where + ": labeled must be 0 or 1");
        }
        r.labeled = f[2] == "1";
        r.path = f[3];
        try {
            r.split = parse_split(f[4]);
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        index.rows.push_back(std::move(r));
    }
    return index;
}

nlohmann::json SampleMeta::to_json() const {
    nlohmann::json j;
    j["location_key"] = location_key;
    j["T"] = T();
    j["timestamps"] = nlohmann::json::array();
    for (Timestamp t : timestamps) {
        j["timestamps"].push_back(format_timestamp(t));
    }
    j["product_ids"] = product_ids;
    j["bands"] = nlohmann::json::array();
    for (const BandStackInfo& b : bands) {
        j["bands"].push_back({{"band_id", b.band_id}, {"resolution_m", b.resolution_m}, {"rows", b.rows},
                              {"cols", b.cols}});
    }
    j["labeled"] = labeled;
    if (label_digest) {
        j["label_digest"] = *label_digest;
    }
    return j;
}

SampleMeta SampleMeta::from_json(const nlohmann::json& j, const std::string& context) {
    SampleMeta m;
    try {
        m.location_key = j.at("location_key").get<std::string>();
        for (const auto& t : j.at("timestamps")) {
            m.timestamps.push_back(parse_timestamp(t.get<std::string>()));
        }
        m.product_ids = j.at("product_ids").get<std::vector<std::string>>();
        for (const auto& b : j.at("bands")) {
            m.bands.push_back({b.at("band_id").get<std::string>(), b.at("resolution_m").get<int>(),
                               b.at("rows").get<std::int64_t>(), b.at("cols").get<std::int64_t>()});
        }
        m.labeled = j.at("labeled").get<bool>();
        if (j.contains("label_digest")) {
            m.label_digest = j["label_digest"].get<std::string>();
        }
        if (j.at("T").get<std::int64_t>() != m.T()) {
            throw ParseError(context + ": T does not match timestamps");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(context + ": " + e.what());
    }
    if (m.product_ids.size() != m.timestamps.size()) {
        throw ParseError(context + ": product_ids and timestamps differ in length");
    }
    for (std::size_t i = 1; i < m.timestamps.size(); ++i) {
        if (!(m.timestamps[i - 1] < m.timestamps[i])) {
            throw ParseError(context + ": timestamps not strictly ascending");
        }
    }
    return m;
}

std::string label_digest(const fs::path& label_dir) {
    Md5 md5;
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(label_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".grid") {
            names.push_back(e.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    for (const std::string& n : names) {
        const ingest::GridHeader h = ingest::read_grid_header(label_dir / n);
        md5.update(n + ":" + h.md5.value_or("") + "\n");
    }
    std::ifstream meta(label_dir / "label.json", std::ios::binary);
    md5.update(std::string(std::istreambuf_iterator<char>(meta), {}));
    return md5.hex_digest();
}

SampleMeta read_sample_meta(const fs::path& sample_dir) {
    const fs::path p = sample_dir / "meta.json";
    std::ifstream in(p);
    if (!in) {
        throw Error("cannot open " + p.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(p.string() + ": " + e.what());
    }
    return SampleMeta::from_json(j, p.string());
}

TimeseriesSample read_sample(const fs::path& sample_dir) {
    TimeseriesSample s;
    s.meta = read_sample_meta(sample_dir);
    for (const BandStackInfo& b : s.meta.bands) {
        BandStack stack;
        stack.values = ingest::read_grid_values<std::uint16_t>(sample_dir / (b.band_id + ".grid"), &stack.header);
        if (stack.header.frame_count() != s.meta.T() || stack.header.rows != b.rows || stack.header.cols != b.cols) {
            throw ValidationError(sample_dir.string() + ": stack " + b.band_id + " does not match meta.json");
        }
        s.bands.emplace(b.band_id, std::move(stack));
    }
    return s;
}

bool verify_sample(const fs::path& sample_dir) {
    try {
        const SampleMeta meta = read_sample_meta(sample_dir);
        for (const BandStackInfo& b : meta.bands) {
            const fs::path p = sample_dir / (b.band_id + ".grid");
            if (!ingest::verify_grid(p)) {
                return false;
            }
            const ingest::GridHeader h = ingest::read_grid_header(p);
            if (h.frame_count() != meta.T() || h.rows != b.rows || h.cols != b.cols) {
                return false;
            }
        }
        return !meta.labeled || rasterizer::verify_label_product(sample_dir / "labels");
    } catch (const Error&) {
        return false;
    }
}

DatasetIndex assemble(const fs::path& store, const std::optional<fs::path>& labels, const fs::path& out,
                      const AssembleOptions& options) {
    options.ratios.validate();
    if (options.min_T < 1) {
        throw ValidationError("min_T must be at least 1");
    }
    const std::vector<DateEntry> dates = scan_patch_store(store);

    std::map<std::string, std::vector<std::uint32_t>> by_key;
    for (std::uint32_t i = 0; i < dates.size(); ++i) {
        for (const auto& e : fs::directory_iterator(dates[i].dir)) {
            if (e.is_directory()) {
                by_key[e.path().filename().string()].push_back(i);
            }
        }
    }
    std::vector<Job> jobs;
    jobs.reserve(by_key.size());
    for (auto& [key, idx] : by_key) {
        jobs.push_back({key, std::move(idx)});
    }
    by_key.clear();

    fs::create_directories(out / "samples");
    const Assembler assembler(dates, labels, out, options);
    std::vector<std::optional<IndexRow>> rows(jobs.size());
    parallel_for(jobs.size(), options.jobs, [&](std::size_t i) { rows[i] = assembler.run(jobs[i]); });

    DatasetIndex index;
    std::set<std::string> keys;
    for (auto& r : rows) {
        if (r) {
            keys.insert(r->location_key);
            index.rows.push_back(std::move(*r));
        }
    }
    for (const auto& e : fs::directory_iterator(out / "samples")) {
        if (!keys.count(e.path().filename().string())) {
            log::info("removing stale sample", {{"path", e.path().string()}});
            fs::remove_all(e.path());
        }
    }
    split_assign(index, options.ratios, options.seed);
    write_index_csv(out / "index.csv", index);
    log::info("assembled samples", {{"samples", std::to_string(index.rows.size())},
                                    {"dates", std::to_string(dates.size())}});
    return index;
}

} // namespace satseries::assembler
