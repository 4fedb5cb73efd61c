#include "focusnas/checkpoint.hpp"

#include "framed_io.hpp"

namespace focusnas {

namespace {
constexpr std::string_view kMagic = "FFCK1";
}

const Tensor& Checkpoint::find(const std::string& name) const {
    for (const Entry& e : tensors)
        if (e.name == name) return e.value;
    fail(Errc::format, "checkpoint has no tensor '" + name + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json list = nlohmann::json::array();
    std::string payload;
    for (const auto& [name, value] : ckpt.tensors) {
        list.push_back({{"name", name}, {"shape", value.shape()}, {"byte_offset", payload.size()}});
        for (double v : value.data()) detail::put_f32(payload, v);
    }
    return detail::frame(kMagic, {{"tensors", list}, {"meta", ckpt.meta}}, payload);
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin) {
    const detail::Framed f = detail::unframe(bytes, kMagic, origin);
    Checkpoint ckpt;
    try {
        ckpt.meta = f.header.value("meta", nlohmann::json::object());
        for (const auto& t : f.header.at("tensors")) {
            Shape shape = t.at("shape").get<Shape>();
            const auto offset = t.at("byte_offset").get<std::size_t>();
            const std::size_t n = shape_size(shape);
            require(offset + 4 * n <= f.payload.size(), Errc::format, origin + ": tensor payload out of bounds");
            std::vector<double> data(n);
            for (std::size_t i = 0; i < n; ++i) data[i] = detail::get_f32(f.payload.data() + offset + 4 * i);
            ckpt.tensors.push_back({t.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data))});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::format, origin + ": malformed tensor table: " + e.what());
    }
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    detail::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), Errc::missing_checkpoint, "checkpoint not found: " + path.string());
    return parse_checkpoint(detail::read_file(path), path.string());
}

void load_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
    require(ckpt.tensors.size() == params.size(), Errc::format,
            "checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                std::to_string(params.size()));
    for (Parameter* p : params) {
        const Tensor& t = ckpt.find(p->name);
        require(t.shape() == p->value.shape(), Errc::format,
                "tensor '" + p->name + "' has shape " + shape_string(t.shape()) + ", expected " +
                    shape_string(p->value.shape()));
        p->value = t;
        p->zero_grad();
    }
}

Checkpoint snapshot_parameters(const std::vector<const Parameter*>& params, nlohmann::json meta) {
    Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    for (const Parameter* p : params) ckpt.tensors.push_back({p->name, p->value});
    return ckpt;
}

}  // namespace focusnas
