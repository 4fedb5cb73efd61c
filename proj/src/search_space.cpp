#include "focusnas/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "focusnas/error.hpp"
#include "json_util.hpp"

namespace focusnas {

namespace {

template <class T>
void check_choices(const std::vector<T>& v, const char* name) {
    require(!v.empty(), Errc::invalid_argument, std::string(name) + " must not be empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
        require(v[i] > T{0}, Errc::invalid_argument, std::string(name) + " entries must be positive");
        if (i) require(v[i - 1] < v[i], Errc::invalid_argument, std::string(name) + " must be strictly increasing");
    }
}

template <class T>
int index_of(const std::vector<T>& choices, T value) {
    const auto it = std::find(choices.begin(), choices.end(), value);
    return it == choices.end() ? -1 : static_cast<int>(it - choices.begin());
}

template <class T>
T choice_at(const std::vector<T>& choices, int index, const char* what) {
    require(index >= 0 && static_cast<std::size_t>(index) < choices.size(), Errc::out_of_range,
            std::string(what) + " index " + std::to_string(index) + " out of range");
    return choices[static_cast<std::size_t>(index)];
}

}  // namespace

void SearchSpaceSpec::validate() const {
    check_choices(depth_choices, "depth_choices");
    check_choices(embed_choices, "embed_choices");
    check_choices(mlp_ratio_choices, "mlp_ratio_choices");
    check_choices(head_choices, "head_choices");
    require(head_dim > 0 && patch_size > 0 && num_classes > 0, Errc::invalid_argument,
            "head_dim, patch_size and num_classes must be positive");
    require(min_image_size > 0 && min_image_size <= max_image_size, Errc::invalid_argument,
            "image sizes must satisfy 0 < min_image_size <= max_image_size");
    require(min_image_size % patch_size == 0 && max_image_size % patch_size == 0, Errc::invalid_argument,
            "image sizes must be divisible by patch_size");
    for (double r : mlp_ratio_choices)
        for (int e : embed_choices)
            require(mlp_hidden(r, e) >= 1, Errc::invalid_argument, "mlp ratio yields an empty hidden layer");
}

int SearchSpaceSpec::max_mlp_hidden() const {
    int best = 0;
    for (double r : mlp_ratio_choices) best = std::max(best, mlp_hidden(r, max_embed()));
    return best;
}

DimKind SearchSpaceSpec::kind_at(std::size_t position) const {
    require(position < sequence_length(), Errc::out_of_range, "sequence position out of range");
    if (position == 0) return DimKind::depth;
    if (position == 1) return DimKind::embed_dim;
    return (position - 2) % 2 == 0 ? DimKind::mlp_ratio : DimKind::heads;
}

int SearchSpaceSpec::block_at(std::size_t position) const {
    if (position < 2) return -1;
    return static_cast<int>((position - 2) / 2);
}

std::size_t SearchSpaceSpec::choice_count(DimKind kind) const {
    switch (kind) {
        case DimKind::depth: return depth_choices.size();
        case DimKind::embed_dim: return embed_choices.size();
        case DimKind::mlp_ratio: return mlp_ratio_choices.size();
        case DimKind::heads: return head_choices.size();
    }
    return 0;
}

int mlp_hidden(double ratio, int embed_dim) { return static_cast<int>(std::lround(ratio * embed_dim)); }

void validate(const ArchConfig& cfg, const SearchSpaceSpec& space) {
    const auto dmax = static_cast<std::size_t>(space.max_depth());
    require(index_of(space.depth_choices, cfg.depth) >= 0, Errc::invalid_argument,
            "depth " + std::to_string(cfg.depth) + " not in depth_choices");
    require(index_of(space.embed_choices, cfg.embed_dim) >= 0, Errc::invalid_argument,
            "embed_dim " + std::to_string(cfg.embed_dim) + " not in embed_choices");
    require(cfg.mlp_ratios.size() == dmax && cfg.heads.size() == dmax, Errc::invalid_argument,
            "per-block lists must have " + std::to_string(dmax) + " entries");
    for (std::size_t i = 0; i < dmax; ++i) {
        require(index_of(space.mlp_ratio_choices, cfg.mlp_ratios[i]) >= 0, Errc::invalid_argument,
                "mlp_ratios[" + std::to_string(i) + "] not in mlp_ratio_choices");
        require(index_of(space.head_choices, cfg.heads[i]) >= 0, Errc::invalid_argument,
                "heads[" + std::to_string(i) + "] not in head_choices");
    }
}

bool is_valid(const ArchConfig& cfg, const SearchSpaceSpec& space) {
    try {
        validate(cfg, space);
        return true;
    } catch (const Error&) {
        return false;
    }
}

ArchSequence encode(const ArchConfig& cfg, const SearchSpaceSpec& space) {
    validate(cfg, space);
    ArchSequence seq;
    seq.indices.reserve(space.sequence_length());
    seq.indices.push_back(index_of(space.depth_choices, cfg.depth));
    seq.indices.push_back(index_of(space.embed_choices, cfg.embed_dim));
    for (std::size_t i = 0; i < cfg.heads.size(); ++i) {
        seq.indices.push_back(index_of(space.mlp_ratio_choices, cfg.mlp_ratios[i]));
        seq.indices.push_back(index_of(space.head_choices, cfg.heads[i]));
    }
    return seq;
}

ArchConfig decode(const ArchSequence& seq, const SearchSpaceSpec& space) {
    require(seq.indices.size() == space.sequence_length(), Errc::invalid_argument,
            "sequence length " + std::to_string(seq.indices.size()) + ", expected " +
                std::to_string(space.sequence_length()));
    ArchConfig cfg;
    cfg.depth = choice_at(space.depth_choices, seq.indices[0], "depth");
    cfg.embed_dim = choice_at(space.embed_choices, seq.indices[1], "embed_dim");
    const auto dmax = static_cast<std::size_t>(space.max_depth());
    for (std::size_t i = 0; i < dmax; ++i) {
        cfg.mlp_ratios.push_back(choice_at(space.mlp_ratio_choices, seq.indices[2 + 2 * i], "mlp_ratio"));
        cfg.heads.push_back(choice_at(space.head_choices, seq.indices[3 + 2 * i], "heads"));
    }
    return cfg;
}

ArchConfig min_config(const SearchSpaceSpec& space) {
    ArchSequence seq{std::vector<int>(space.sequence_length(), 0)};
    return decode(seq, space);
}

ArchConfig max_config(const SearchSpaceSpec& space) {
    ArchSequence seq;
    for (std::size_t p = 0; p < space.sequence_length(); ++p)
        seq.indices.push_back(static_cast<int>(space.choice_count_at(p)) - 1);
    return decode(seq, space);
}

ArchConfig canonical(const ArchConfig& cfg, const SearchSpaceSpec& space) {
    ArchConfig out = cfg;
    for (std::size_t i = static_cast<std::size_t>(cfg.depth); i < out.heads.size(); ++i) {
        out.mlp_ratios[i] = space.mlp_ratio_choices.front();
        out.heads[i] = space.head_choices.front();
    }
    return out;
}

ArchConfig uniform_sample(const SearchSpaceSpec& space, Rng& rng) {
    ArchSequence seq;
    for (std::size_t p = 0; p < space.sequence_length(); ++p)
        seq.indices.push_back(static_cast<int>(rng.index(space.choice_count_at(p))));
    return decode(seq, space);
}

ArchConfig mutate(const ArchConfig& cfg, const SearchSpaceSpec& space, double rate, Rng& rng) {
    require(rate > 0.0 && rate <= 1.0, Errc::invalid_argument, "mutation rate must lie in (0, 1]");
    ArchSequence seq = encode(cfg, space);
    for (std::size_t p = 0; p < seq.indices.size(); ++p)
        if (rng.bernoulli(rate)) seq.indices[p] = static_cast<int>(rng.index(space.choice_count_at(p)));
    return decode(seq, space);
}

ArchConfig crossover(const ArchConfig& a, const ArchConfig& b, const SearchSpaceSpec& space, Rng& rng) {
    const ArchSequence sa = encode(a, space);
    const ArchSequence sb = encode(b, space);
    ArchSequence child;
    for (std::size_t p = 0; p < sa.indices.size(); ++p)
        child.indices.push_back(rng.bernoulli(0.5) ? sa.indices[p] : sb.indices[p]);
    return decode(child, space);
}

std::vector<ArchSequence> enumerate_sequences(const SearchSpaceSpec& space) {
    const std::size_t len = space.sequence_length();
    std::vector<ArchSequence> out;
    std::vector<int> idx(len, 0);
    while (true) {
        out.push_back({idx});
        std::size_t p = len;
        while (p > 0) {
            --p;
            if (static_cast<std::size_t>(++idx[p]) < space.choice_count_at(p)) break;
            idx[p] = 0;
            if (p == 0) return out;
        }
    }
}

std::vector<ArchConfig> enumerate_canonical(const SearchSpaceSpec& space) {
    std::vector<ArchConfig> out;
    for (const auto& seq : enumerate_sequences(space)) {
        ArchConfig cfg = decode(seq, space);
        if (cfg == canonical(cfg, space)) out.push_back(std::move(cfg));
    }
    return out;
}

nlohmann::json to_json(const ArchConfig& cfg) {
    return {{"depth", cfg.depth}, {"embed_dim", cfg.embed_dim}, {"mlp_ratios", cfg.mlp_ratios}, {"heads", cfg.heads}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
    detail::check_keys(j, {"depth", "embed_dim", "mlp_ratios", "heads"}, "arch");
    ArchConfig cfg;
    cfg.depth = detail::read_req<int>(j, "depth", "arch");
    cfg.embed_dim = detail::read_req<int>(j, "embed_dim", "arch");
    cfg.mlp_ratios = detail::read_req<std::vector<double>>(j, "mlp_ratios", "arch");
    cfg.heads = detail::read_req<std::vector<int>>(j, "heads", "arch");
    return cfg;
}

nlohmann::json to_json(const SearchSpaceSpec& s) {
    return {{"depth_choices", s.depth_choices},
            {"embed_choices", s.embed_choices},
            {"mlp_ratio_choices", s.mlp_ratio_choices},
            {"head_choices", s.head_choices},
            {"head_dim", s.head_dim},
            {"patch_size", s.patch_size},
            {"num_classes", s.num_classes},
            {"min_image_size", s.min_image_size},
            {"max_image_size", s.max_image_size},
            {"cpe_per_block", s.cpe_per_block}};
}

SearchSpaceSpec space_from_json(const nlohmann::json& j) {
    constexpr const char* ctx = "space";
    detail::check_keys(j,
                       {"depth_choices", "embed_choices", "mlp_ratio_choices", "head_choices", "head_dim",
                        "patch_size", "num_classes", "min_image_size", "max_image_size", "cpe_per_block"},
                       ctx);
    SearchSpaceSpec s;
    detail::read_opt(j, "depth_choices", s.depth_choices, ctx);
    detail::read_opt(j, "embed_choices", s.embed_choices, ctx);
    detail::read_opt(j, "mlp_ratio_choices", s.mlp_ratio_choices, ctx);
    detail::read_opt(j, "head_choices", s.head_choices, ctx);
    detail::read_opt(j, "head_dim", s.head_dim, ctx);
    detail::read_opt(j, "patch_size", s.patch_size, ctx);
    detail::read_opt(j, "num_classes", s.num_classes, ctx);
    detail::read_opt(j, "min_image_size", s.min_image_size, ctx);
    detail::read_opt(j, "max_image_size", s.max_image_size, ctx);
    detail::read_opt(j, "cpe_per_block", s.cpe_per_block, ctx);
    s.validate();
    return s;
}

}  // namespace focusnas
