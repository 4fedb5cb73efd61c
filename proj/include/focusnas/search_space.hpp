#pragma once

#include <compare>
#include <cstddef>
#include <vector>

#include "focusnas/rng.hpp"
#include "json.hpp"

namespace focusnas {

enum class DimKind { depth = 0, embed_dim = 1, mlp_ratio = 2, heads = 3 };
inline constexpr std::size_t kDimKinds = 4;

/// The choice lists that define the architecture space plus the fixed
/// network constants shared by every sub-network.
struct SearchSpaceSpec {
    std::vector<int> depth_choices{2, 3, 4};
    std::vector<int> embed_choices{16, 24, 32};
    std::vector<double> mlp_ratio_choices{1.0, 2.0};
    std::vector<int> head_choices{1, 2, 4};
    int head_dim = 8;
    int patch_size = 4;
    int num_classes = 10;
    int min_image_size = 16;
    int max_image_size = 24;
    /// Apply a separate positional convolution before every block instead of
    /// once after the patch embedding.
    bool cpe_per_block = false;

    void validate() const;

    [[nodiscard]] int max_depth() const { return depth_choices.back(); }
    [[nodiscard]] int max_embed() const { return embed_choices.back(); }
    [[nodiscard]] double max_mlp_ratio() const { return mlp_ratio_choices.back(); }
    [[nodiscard]] int max_heads() const { return head_choices.back(); }
    [[nodiscard]] int max_mlp_hidden() const;

    /// 2 + 2 * max_depth: [depth, embed, (ratio_i, heads_i)...].
    [[nodiscard]] std::size_t sequence_length() const { return 2 + 2 * static_cast<std::size_t>(max_depth()); }
    [[nodiscard]] DimKind kind_at(std::size_t position) const;
    [[nodiscard]] std::size_t choice_count(DimKind kind) const;
    [[nodiscard]] std::size_t choice_count_at(std::size_t position) const { return choice_count(kind_at(position)); }
    /// Block index of a per-block position, or -1 for depth/embed positions.
    [[nodiscard]] int block_at(std::size_t position) const;

    friend bool operator==(const SearchSpaceSpec&, const SearchSpaceSpec&) = default;
};

/// One sub-network. Per-block lists always have max_depth entries; entries at
/// indices >= depth are carried but do not affect the network.
struct ArchConfig {
    int depth = 0;
    int embed_dim = 0;
    std::vector<double> mlp_ratios;
    std::vector<int> heads;

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct ArchSequence {
    std::vector<int> indices;

    friend bool operator==(const ArchSequence&, const ArchSequence&) = default;
    friend auto operator<=>(const ArchSequence&, const ArchSequence&) = default;
};

/// MLP hidden width for a ratio at a given embedding width.
int mlp_hidden(double ratio, int embed_dim);

bool is_valid(const ArchConfig& cfg, const SearchSpaceSpec& space);
/// Throws with a description of the first violation.
void validate(const ArchConfig& cfg, const SearchSpaceSpec& space);

ArchSequence encode(const ArchConfig& cfg, const SearchSpaceSpec& space);
ArchConfig decode(const ArchSequence& seq, const SearchSpaceSpec& space);

ArchConfig min_config(const SearchSpaceSpec& space);
ArchConfig max_config(const SearchSpaceSpec& space);
/// Inert per-block entries reset to the first choice, so functionally equal
/// configs compare equal.
ArchConfig canonical(const ArchConfig& cfg, const SearchSpaceSpec& space);

ArchConfig uniform_sample(const SearchSpaceSpec& space, Rng& rng);
ArchConfig mutate(const ArchConfig& cfg, const SearchSpaceSpec& space, double rate, Rng& rng);
ArchConfig crossover(const ArchConfig& a, const ArchConfig& b, const SearchSpaceSpec& space, Rng& rng);

/// Every index sequence of the space (inert entries included).
std::vector<ArchSequence> enumerate_sequences(const SearchSpaceSpec& space);
/// Every functionally distinct config, in canonical form.
std::vector<ArchConfig> enumerate_canonical(const SearchSpaceSpec& space);

nlohmann::json to_json(const ArchConfig& cfg);
ArchConfig arch_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SearchSpaceSpec& space);
SearchSpaceSpec space_from_json(const nlohmann::json& j);

}  // namespace focusnas
