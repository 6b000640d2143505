#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace satseries {

/// Incremental MD5, the integrity hash used by the hub and by grid sidecars.
class Md5 {
public:
    Md5();
    ~Md5();
    Md5(Md5&&) noexcept;
    Md5& operator=(Md5&&) noexcept;

    void update(std::span<const std::byte> bytes);
    void update(std::string_view bytes);

    /// Lower-case hex digest. The object must not be updated afterwards.
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string md5_hex(std::string_view bytes);
std::string md5_hex(std::span<const std::byte> bytes);
std::string md5_file(const std::filesystem::path& path);

} // namespace satseries
