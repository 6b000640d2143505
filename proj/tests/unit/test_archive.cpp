#include <doctest.h>

#include <fstream>

#include "synthetic.hpp"
#include "temp_dir.hpp"
#include "satseries/core/digest.hpp"
#include "satseries/core/error.hpp"
#include "satseries/ingest/archive.hpp"

using namespace satseries;
using namespace satseries::ingest;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const std::filesystem::path kData = SATSERIES_TEST_DATA_DIR;

} // namespace

TEST_CASE("product archive round trip is deterministic and lossless") {
    TempDir dir;
    synthetic::ProductSpec spec;
    spec.product_id = "S2A_TEST";
    spec.size_10m = 60;
    synthetic::write_product(dir.path() / "src" / "S2A_TEST", spec);
    write_product_archive(dir.path() / "a.zip", dir.path() / "src");
    write_product_archive(dir.path() / "b.zip", dir.path() / "src");
    CHECK(md5_file(dir.path() / "a.zip") == md5_file(dir.path() / "b.zip"));

    const auto entries = list_archive(dir.path() / "a.zip");
    CHECK(entries.size() == 1 + 13 * 2);
    CHECK(std::is_sorted(entries.begin(), entries.end(),
                         [](const ArchiveEntry& x, const ArchiveEntry& y) { return x.name < y.name; }));

    extract_archive(dir.path() / "a.zip", dir.path() / "out");
    for (const auto& e : entries) {
        CHECK(slurp(dir.path() / "out" / e.name) == slurp(dir.path() / "src" / e.name));
    }
    const auto manifest = find_manifest(dir.path() / "out");
    REQUIRE(manifest.has_value());
    CHECK(*manifest == dir.path() / "out" / "S2A_TEST" / "manifest.json");
    CHECK_FALSE(std::filesystem::exists(dir.path() / "out.extracting"));
}

TEST_CASE("deflate entries from a third-party writer extract") {
    TempDir dir;
    extract_archive(kData / "deflate_sample.zip", dir.path() / "x");
    std::string expected_manifest;
    for (int i = 0; i < 50; ++i) expected_manifest += "{\"hello\": \"world\"}\n";
    CHECK(slurp(dir.path() / "x" / "product" / "manifest.json") == expected_manifest);
    const std::string grid = slurp(dir.path() / "x" / "product" / "B02.grid");
    REQUIRE(grid.size() == 256 * 40);
    CHECK(static_cast<unsigned char>(grid[257]) == 1);
    CHECK(find_manifest(dir.path() / "x").has_value());
}

TEST_CASE("archive errors") {
    TempDir dir;
    CHECK_THROWS_WITH_AS(extract_archive(kData / "unsafe_entry.zip", dir.path() / "x"),
                         doctest::Contains("unsafe entry"), ParseError);
    CHECK_FALSE(std::filesystem::exists(dir.path() / "escape.txt"));

    std::ofstream(dir.path() / "not.zip") << "plain text";
    CHECK_THROWS_WITH_AS(list_archive(dir.path() / "not.zip"), doctest::Contains("not a zip"), ParseError);

    std::filesystem::create_directories(dir.path() / "src");
    std::ofstream(dir.path() / "src" / "f.txt") << "payload bytes";
    write_product_archive(dir.path() / "c.zip", dir.path() / "src");
    {
        std::fstream f(dir.path() / "c.zip", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(30 + 5 + 2);  // inside the first entry's data
        f.put('#');
    }
    CHECK_THROWS_WITH_AS(extract_archive(dir.path() / "c.zip", dir.path() / "y"), doctest::Contains("CRC"), ParseError);
    CHECK_FALSE(std::filesystem::exists(dir.path() / "y"));
}
