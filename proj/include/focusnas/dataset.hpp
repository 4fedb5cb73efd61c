#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "focusnas/supernet.hpp"
#include "focusnas/tensor.hpp"

namespace focusnas {

/// Images [n x h x w x c] in [0, 1] (binary32-representable) with labels.
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int num_classes = 0;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] std::size_t height() const { return images.dim(1); }
    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// "FFDS1", u32 LE header length, JSON {n, h, w, c, num_classes}, binary32 LE
/// pixels, u16 LE labels.
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

struct SyntheticTask {
    int num_classes = 10;
    int size = 24;
    /// Seeds the class definitions, so splits drawn with different sample
    /// seeds describe the same task.
    std::uint64_t task_seed = 0;
    double noise = 0.2;
};

/// Oriented stripe textures: each class owns an orientation band and a
/// frequency range; every sample draws a random phase, frequency, contrast
/// and colour tint, plus pixel noise. Phase averaging hides the class from
/// any linear function of raw pixels.
Dataset make_synthetic(const SyntheticTask& task, std::size_t n, std::uint64_t seed);

/// Reads binary PPM (P6) or PGM (P5) rasters listed in `label_file`, one
/// "<file> <label>" pair per line, relative to `dir`. All rasters must share
/// one size; grey images are replicated to three channels.
Dataset import_rasters(const std::filesystem::path& dir, const std::filesystem::path& label_file, int num_classes);

/// Nearest-neighbour resize of selected images into a training batch.
Batch gather_batch(const Dataset& ds, std::span<const std::size_t> indices, int size);
Tensor resize_nearest(const Tensor& images, int size);

}  // namespace focusnas
