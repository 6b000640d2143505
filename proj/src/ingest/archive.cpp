#include "satseries/ingest/archive.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "satseries/core/error.hpp"

namespace satseries::ingest {
namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01
constexpr std::size_t kChunk = 1 << 16;

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void str(const std::string& s) { bytes(s.data(), s.size()); }
    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        pos_ += n;
    }
    std::uint64_t pos() const { return pos_; }

private:
    std::ofstream& out_;
    std::uint64_t pos_ = 0;
};

std::uint16_t get16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }
std::uint32_t get32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void read_exact(std::ifstream& in, void* dst, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw ParseError(what + ": truncated archive");
    }
}

std::uint32_t file_crc(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<char> buf(kChunk);
    uLong crc = crc32(0L, Z_NULL, 0);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(in.gcount()));
    }
    return static_cast<std::uint32_t>(crc);
}

bool safe_name(const std::string& name) {
    if (name.empty() || name.front() == '/' || name.find('\\') != std::string::npos) {
        return false;
    }
    for (const auto& part : std::filesystem::path(name)) {
        if (part == "..") {
            return false;
        }
    }
    return true;
}

} // namespace

void write_product_archive(const std::filesystem::path& zip, const std::filesystem::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            names.push_back(std::filesystem::relative(e.path(), dir).generic_string());
        }
    }
    std::sort(names.begin(), names.end());
    if (zip.has_parent_path()) {
        std::filesystem::create_directories(zip.parent_path());
    }
    std::ofstream out(zip, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + zip.string());
    }
    Writer w(out);
    std::vector<ArchiveEntry> entries;
    std::vector<char> buf(kChunk);
    for (const std::string& name : names) {
        const auto src = dir / name;
        ArchiveEntry e;
        e.name = name;
        e.size = e.compressed_size = std::filesystem::file_size(src);
        if (e.size >= 0xFFFFFFFFu || w.pos() >= 0xFFFFFFFFu) {
            throw ValidationError("archive entry too large: " + name);
        }
        e.crc32 = file_crc(src);
        e.local_header_offset = w.pos();
        w.u32(kLocalSig);
        w.u16(20);
        w.u16(0);
        w.u16(0);
        w.u16(0);
        w.u16(kDosDate);
        w.u32(e.crc32);
        w.u32(static_cast<std::uint32_t>(e.size));
        w.u32(static_cast<std::uint32_t>(e.size));
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.u16(0);
        w.str(name);
        std::ifstream in(src, std::ios::binary);
        while (in) {
            in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
            w.bytes(buf.data(), static_cast<std::size_t>(in.gcount()));
        }
        entries.push_back(e);
    }
    const std::uint64_t cd_start = w.pos();
    for (const ArchiveEntry& e : entries) {
        w.u32(kCentralSig);
        w.u16(20);
        w.u16(20);
        w.u16(0);
        w.u16(0);
        w.u16(0);
        w.u16(kDosDate);
        w.u32(e.crc32);
        w.u32(static_cast<std::uint32_t>(e.size));
        w.u32(static_cast<std::uint32_t>(e.size));
        w.u16(static_cast<std::uint16_t>(e.name.size()));
        w.u16(0);
        w.u16(0);
        w.u16(0);
        w.u16(0);
        w.u32(0);
        w.u32(static_cast<std::uint32_t>(e.local_header_offset));
        w.str(e.name);
    }
    const std::uint64_t cd_size = w.pos() - cd_start;
    if (entries.size() > 0xFFFF || w.pos() >= 0xFFFFFFFFu) {
        throw ValidationError("archive too large: " + zip.string());
    }
    w.u32(kEndSig);
    w.u16(0);
    w.u16(0);
    w.u16(static_cast<std::uint16_t>(entries.size()));
    w.u16(static_cast<std::uint16_t>(entries.size()));
    w.u32(static_cast<std::uint32_t>(cd_size));
    w.u32(static_cast<std::uint32_t>(cd_start));
    w.u16(0);
    out.close();
    if (!out) {
        throw Error("write failed: " + zip.string());
    }
}

std::vector<ArchiveEntry> list_archive(const std::filesystem::path& zip) {
    const std::string what = zip.string();
    std::ifstream in(zip, std::ios::binary);
    if (!in) {
        throw ParseError("cannot read " + what);
    }
    const auto file_size = static_cast<std::uint64_t>(std::filesystem::file_size(zip));
    const std::uint64_t tail_len = std::min<std::uint64_t>(file_size, 22 + 0xFFFF);
    std::vector<unsigned char> tail(tail_len);
    in.seekg(static_cast<std::streamoff>(file_size - tail_len));
    read_exact(in, tail.data(), tail.size(), what);
    std::optional<std::size_t> end_at;
    for (std::size_t i = tail.size() >= 22 ? tail.size() - 22 + 1 : 0; i-- > 0;) {
        if (get32(&tail[i]) == kEndSig) {
            end_at = i;
            break;
        }
    }
    if (!end_at) {
        throw ParseError(what + ": not a zip archive");
    }
    const unsigned char* eocd = &tail[*end_at];
    const std::uint16_t count = get16(eocd + 10);
    const std::uint32_t cd_size = get32(eocd + 12);
    const std::uint32_t cd_offset = get32(eocd + 16);
    if (std::uint64_t(cd_offset) + cd_size > file_size) {
        throw ParseError(what + ": corrupt central directory");
    }
    std::vector<unsigned char> cd(cd_size);
    in.seekg(cd_offset);
    read_exact(in, cd.data(), cd.size(), what);
    std::vector<ArchiveEntry> entries;
    std::size_t p = 0;
    for (std::uint16_t i = 0; i < count; ++i) {
        if (p + 46 > cd.size() || get32(&cd[p]) != kCentralSig) {
            throw ParseError(what + ": corrupt central directory");
        }
        ArchiveEntry e;
        e.method = get16(&cd[p + 10]);
        e.crc32 = get32(&cd[p + 16]);
        e.compressed_size = get32(&cd[p + 20]);
        e.size = get32(&cd[p + 24]);
        const std::uint16_t nlen = get16(&cd[p + 28]);
        const std::uint16_t elen = get16(&cd[p + 30]);
        const std::uint16_t clen = get16(&cd[p + 32]);
        e.local_header_offset = get32(&cd[p + 42]);
        if (p + 46 + nlen > cd.size()) {
            throw ParseError(what + ": corrupt central directory");
        }
        e.name.assign(reinterpret_cast<const char*>(&cd[p + 46]), nlen);
        p += 46 + std::size_t(nlen) + elen + clen;
        entries.push_back(std::move(e));
    }
    return entries;
}

void extract_archive(const std::filesystem::path& zip, const std::filesystem::path& dest) {
    const std::string what = zip.string();
    const auto entries = list_archive(zip);
    const auto staging = dest.parent_path() / (dest.filename().string() + ".extracting");
    std::filesystem::remove_all(staging);
    std::filesystem::create_directories(staging);
    std::ifstream in(zip, std::ios::binary);
    std::vector<unsigned char> inbuf(kChunk), outbuf(kChunk);
    for (const ArchiveEntry& e : entries) {
        if (!safe_name(e.name)) {
            throw ParseError(what + ": unsafe entry name " + e.name);
        }
        if (e.name.back() == '/') {
            std::filesystem::create_directories(staging / e.name);
            continue;
        }
        unsigned char local[30];
        in.seekg(static_cast<std::streamoff>(e.local_header_offset));
        read_exact(in, local, sizeof local, what);
        if (get32(local) != kLocalSig) {
            throw ParseError(what + ": bad local header for " + e.name);
        }
        in.seekg(get16(local + 26) + get16(local + 28), std::ios::cur);
        const auto target = staging / e.name;
        std::filesystem::create_directories(target.parent_path());
        std::ofstream out(target, std::ios::binary | std::ios::trunc);
        uLong crc = crc32(0L, Z_NULL, 0);
        std::uint64_t written = 0;
        auto emit = [&](const unsigned char* data, std::size_t n) {
            out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
            crc = crc32(crc, data, static_cast<uInt>(n));
            written += n;
        };
        std::uint64_t remaining = e.compressed_size;
        if (e.method == 0) {
            while (remaining > 0) {
                const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, inbuf.size()));
                read_exact(in, inbuf.data(), n, what);
                emit(inbuf.data(), n);
                remaining -= n;
            }
        } else if (e.method == 8) {
            z_stream zs{};
            if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
                throw Error("zlib init failed");
            }
            int rc = Z_OK;
            while (rc != Z_STREAM_END) {
                if (zs.avail_in == 0) {
                    if (remaining == 0) {
                        inflateEnd(&zs);
                        throw ParseError(what + ": truncated deflate data in " + e.name);
                    }
                    const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, inbuf.size()));
                    read_exact(in, inbuf.data(), n, what);
                    remaining -= n;
                    zs.next_in = inbuf.data();
                    zs.avail_in = static_cast<uInt>(n);
                }
                zs.next_out = outbuf.data();
                zs.avail_out = static_cast<uInt>(outbuf.size());
                rc = inflate(&zs, Z_NO_FLUSH);
                if (rc != Z_OK && rc != Z_STREAM_END) {
                    inflateEnd(&zs);
                    throw ParseError(what + ": corrupt deflate data in " + e.name);
                }
                emit(outbuf.data(), outbuf.size() - zs.avail_out);
            }
            inflateEnd(&zs);
        } else {
            throw ParseError(what + ": unsupported compression method " + std::to_string(e.method));
        }
        out.close();
        if (!out || written != e.size || static_cast<std::uint32_t>(crc) != e.crc32) {
            throw ParseError(what + ": CRC or size mismatch in " + e.name);
        }
    }
    std::filesystem::remove_all(dest);
    if (dest.has_parent_path()) {
        std::filesystem::create_directories(dest.parent_path());
    }
    std::filesystem::rename(staging, dest);
}

std::optional<std::filesystem::path> find_manifest(const std::filesystem::path& dir) {
    if (std::filesystem::exists(dir / "manifest.json")) {
        return dir / "manifest.json";
    }
    std::optional<std::filesystem::path> found;
    if (!std::filesystem::is_directory(dir)) {
        return found;
    }
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json")) {
            if (found) {
                return std::nullopt;
            }
            found = e.path() / "manifest.json";
        }
    }
    return found;
}

} // namespace satseries::ingest
