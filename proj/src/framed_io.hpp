#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "focusnas/error.hpp"
#include "json.hpp"

// Shared framing for the checkpoint and dataset formats:
// magic, u32 little-endian header length, JSON header, payload.
namespace focusnas::detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

inline void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline double get_f32(const char* p) { return static_cast<double>(std::bit_cast<float>(get_u32(p))); }

inline std::string frame(std::string_view magic, const nlohmann::json& header, const std::string& payload) {
    const std::string h = header.dump();
    std::string out(magic);
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    out += payload;
    return out;
}

struct Framed {
    nlohmann::json header;
    std::string_view payload;
};

inline Framed unframe(const std::string& bytes, std::string_view magic, const std::string& origin) {
    require(bytes.size() >= magic.size() + 4 && bytes.compare(0, magic.size(), magic) == 0, Errc::format,
            origin + ": missing " + std::string(magic) + " magic");
    const std::uint32_t len = get_u32(bytes.data() + magic.size());
    const std::size_t start = magic.size() + 4;
    require(bytes.size() >= start + len, Errc::format, origin + ": truncated header");
    Framed f;
    try {
        f.header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                         bytes.begin() + static_cast<std::ptrdiff_t>(start + len));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::format, origin + ": bad header JSON: " + e.what());
    }
    f.payload = std::string_view(bytes).substr(start + len);
    return f;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), Errc::io, "write failed for " + path.string());
}

}  // namespace focusnas::detail
