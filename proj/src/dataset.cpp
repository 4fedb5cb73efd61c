#include "focusnas/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "focusnas/error.hpp"
#include "focusnas/rng.hpp"
#include "framed_io.hpp"
#include "json_util.hpp"

namespace focusnas {

namespace {

constexpr std::string_view kMagic = "FFDS1";

using Sz = std::size_t;

}  // namespace

void Dataset::validate() const {
    require(images.rank() == 4, Errc::format, "dataset images must be [n x h x w x c]");
    require(images.dim(0) == labels.size(), Errc::format, "dataset image and label counts differ");
    require(images.dim(3) == 3, Errc::format, "dataset images must have 3 channels");
    require(num_classes > 0 && num_classes <= 65535, Errc::format, "num_classes out of range");
    for (int l : labels) require(l >= 0 && l < num_classes, Errc::format, "label out of range: " + std::to_string(l));
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    ds.validate();
    const nlohmann::json header = {{"n", ds.images.dim(0)},
                                   {"h", ds.images.dim(1)},
                                   {"w", ds.images.dim(2)},
                                   {"c", ds.images.dim(3)},
                                   {"num_classes", ds.num_classes}};
    std::string payload;
    payload.reserve(ds.images.size() * 4 + ds.labels.size() * 2);
    for (double v : ds.images.data()) detail::put_f32(payload, v);
    for (int l : ds.labels) {
        payload.push_back(static_cast<char>(l & 0xFF));
        payload.push_back(static_cast<char>((l >> 8) & 0xFF));
    }
    detail::write_file(path, detail::frame(kMagic, header, payload));
}

Dataset read_dataset(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    const detail::Framed f = detail::unframe(bytes, kMagic, path.string());
    constexpr const char* ctx = "dataset header";
    detail::check_keys(f.header, {"n", "h", "w", "c", "num_classes"}, ctx);
    const auto n = detail::read_req<Sz>(f.header, "n", ctx);
    const auto h = detail::read_req<Sz>(f.header, "h", ctx);
    const auto w = detail::read_req<Sz>(f.header, "w", ctx);
    const auto c = detail::read_req<Sz>(f.header, "c", ctx);
    Dataset ds;
    ds.num_classes = detail::read_req<int>(f.header, "num_classes", ctx);
    require(n > 0 && h > 0 && w > 0 && c > 0, Errc::format, path.string() + ": empty dataset");
    const Sz pixels = n * h * w * c;
    require(f.payload.size() == pixels * 4 + n * 2, Errc::format, path.string() + ": payload size mismatch");
    std::vector<double> data(pixels);
    for (Sz i = 0; i < pixels; ++i) data[i] = detail::get_f32(f.payload.data() + 4 * i);
    ds.images = Tensor({n, h, w, c}, std::move(data));
    const char* lp = f.payload.data() + pixels * 4;
    for (Sz i = 0; i < n; ++i)
        ds.labels.push_back(static_cast<unsigned char>(lp[2 * i]) | (static_cast<unsigned char>(lp[2 * i + 1]) << 8));
    ds.validate();
    return ds;
}

Dataset make_synthetic(const SyntheticTask& task, std::size_t n, std::uint64_t seed) {
    require(task.num_classes >= 2, Errc::invalid_argument, "synthetic task needs at least 2 classes");
    require(task.size >= 4, Errc::invalid_argument, "synthetic image size too small");
    require(n > 0, Errc::invalid_argument, "synthetic dataset needs at least one sample");
    const auto k = static_cast<Sz>(task.num_classes);
    const auto s = static_cast<Sz>(task.size);
    constexpr double pi = std::numbers::pi;

    Rng task_rng(task.task_seed, "synthetic-task");
    const double offset = task_rng.uniform(0.0, pi / static_cast<double>(k));
    std::vector<double> angle(k), freq(k);
    for (Sz c = 0; c < k; ++c) {
        angle[c] = offset + pi * static_cast<double>(c) / static_cast<double>(k);
        freq[c] = task_rng.uniform(0.1, 0.2);  // cycles per pixel at the native size
    }

    Rng rng(seed, "dataset");
    Dataset ds;
    ds.num_classes = task.num_classes;
    ds.images = Tensor({n, s, s, 3});
    for (Sz i = 0; i < n; ++i) {
        const Sz label = rng.index(k);
        ds.labels.push_back(static_cast<int>(label));
        const double theta = angle[label] + 0.04 * rng.normal();
        const double f = freq[label] * rng.uniform(0.85, 1.15);
        const double phase = rng.uniform(0.0, 2.0 * pi);
        const double contrast = rng.uniform(0.2, 0.4);
        double gain[3], shift[3];
        for (int ch = 0; ch < 3; ++ch) {
            gain[ch] = rng.uniform(0.5, 1.0);
            shift[ch] = rng.uniform(-0.1, 0.1);
        }
        const double cx = std::cos(theta), sy = std::sin(theta);
        double* img = ds.images.ptr() + i * s * s * 3;
        for (Sz y = 0; y < s; ++y)
            for (Sz x = 0; x < s; ++x) {
                const double wave =
                    std::sin(2.0 * pi * f * (static_cast<double>(x) * cx + static_cast<double>(y) * sy) + phase);
                for (Sz ch = 0; ch < 3; ++ch) {
                    double v = 0.5 + shift[ch] + contrast * gain[ch] * wave + task.noise * rng.normal();
                    v = std::clamp(v, 0.0, 1.0);
                    img[(y * s + x) * 3 + ch] = static_cast<double>(static_cast<float>(v));
                }
            }
    }
    return ds;
}

namespace {

struct Raster {
    Sz w = 0, h = 0, channels = 0;
    std::vector<unsigned char> pixels;
};

Raster read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::io, "cannot open raster " + path.string());
    std::string magic;
    in >> magic;
    require(magic == "P6" || magic == "P5", Errc::format, path.string() + ": expected binary PPM (P6) or PGM (P5)");
    auto next_int = [&] {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string comment;
            std::getline(in, comment);
            in >> std::ws;
        }
        long v = -1;
        in >> v;
        require(static_cast<bool>(in) && v > 0, Errc::format, path.string() + ": bad raster header");
        return static_cast<Sz>(v);
    };
    Raster r;
    r.w = next_int();
    r.h = next_int();
    const Sz maxval = next_int();
    require(maxval == 255, Errc::format, path.string() + ": only 8-bit rasters are supported");
    in.get();
    r.channels = magic == "P6" ? 3 : 1;
    r.pixels.resize(r.w * r.h * r.channels);
    in.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
    require(static_cast<bool>(in), Errc::format, path.string() + ": truncated raster");
    return r;
}

}  // namespace

Dataset import_rasters(const std::filesystem::path& dir, const std::filesystem::path& label_file, int num_classes) {
    std::ifstream in(label_file);
    require(static_cast<bool>(in), Errc::io, "cannot open label file " + label_file.string());
    std::vector<Raster> rasters;
    Dataset ds;
    ds.num_classes = num_classes;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string file;
        int label = -1;
        if (!(ls >> file)) continue;
        require(static_cast<bool>(ls >> label), Errc::format, "label file line without a label: " + line);
        require(label >= 0 && label < num_classes, Errc::format, "label out of range in: " + line);
        rasters.push_back(read_pnm(dir / file));
        require(rasters.back().w == rasters.front().w && rasters.back().h == rasters.front().h, Errc::format,
                "raster " + file + " differs in size from the first raster");
        ds.labels.push_back(label);
    }
    require(!rasters.empty(), Errc::format, "label file lists no rasters");
    const Sz h = rasters.front().h, w = rasters.front().w;
    ds.images = Tensor({rasters.size(), h, w, 3});
    for (Sz i = 0; i < rasters.size(); ++i) {
        const Raster& r = rasters[i];
        double* out = ds.images.ptr() + i * h * w * 3;
        for (Sz p = 0; p < h * w; ++p)
            for (Sz ch = 0; ch < 3; ++ch)
                out[p * 3 + ch] = static_cast<double>(static_cast<float>(r.pixels[p * r.channels + (r.channels == 3 ? ch : 0)] / 255.0));
    }
    ds.validate();
    return ds;
}

Batch gather_batch(const Dataset& ds, std::span<const std::size_t> indices, int size) {
    require(size > 0, Errc::invalid_argument, "batch image size must be positive");
    const Sz s = static_cast<Sz>(size), h = ds.images.dim(1), w = ds.images.dim(2);
    Batch batch{Tensor({indices.size(), s, s, 3}), {}};
    for (Sz b = 0; b < indices.size(); ++b) {
        const Sz i = indices[b];
        require(i < ds.size(), Errc::out_of_range, "dataset index out of range");
        const double* src = ds.images.ptr() + i * h * w * 3;
        double* dst = batch.images.ptr() + b * s * s * 3;
        for (Sz y = 0; y < s; ++y) {
            const Sz sy = y * h / s;
            for (Sz x = 0; x < s; ++x) {
                const Sz sx = x * w / s;
                std::copy_n(src + (sy * w + sx) * 3, 3, dst + (y * s + x) * 3);
            }
        }
        batch.labels.push_back(ds.labels[i]);
    }
    return batch;
}

Tensor resize_nearest(const Tensor& images, int size) {
    require(images.rank() == 4 && images.dim(3) == 3, Errc::shape_mismatch, "resize expects [n x h x w x 3]");
    Dataset view;
    view.images = images;
    view.labels.assign(images.dim(0), 0);
    std::vector<Sz> idx(images.dim(0));
    for (Sz i = 0; i < idx.size(); ++i) idx[i] = i;
    return gather_batch(view, idx, size).images;
}

}  // namespace focusnas
