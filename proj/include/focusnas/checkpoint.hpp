#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "focusnas/tape.hpp"
#include "json.hpp"

namespace focusnas {

/// Container layout: "FFCK1", u32 little-endian header length, a JSON header
/// {"tensors": [{name, shape, byte_offset}], "meta": {...}}, then binary32
/// little-endian payload. Offsets are relative to the payload start.
struct Checkpoint {
    struct Entry {
        std::string name;
        Tensor value;
    };
    nlohmann::json meta = nlohmann::json::object();
    std::vector<Entry> tensors;

    [[nodiscard]] const Tensor& find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Same bytes `write_checkpoint` would produce.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

/// Copies stored tensors into `params` by name; shapes must match exactly.
void load_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params);
Checkpoint snapshot_parameters(const std::vector<const Parameter*>& params, nlohmann::json meta);

}  // namespace focusnas
