#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "focusnas/engine.hpp"
#include "json.hpp"

namespace focusnas {

enum class TrainMethod { focusformer, uniform };
std::string_view to_string(TrainMethod method) noexcept;
TrainMethod train_method_from_string(std::string_view name);

struct SearchConfig {
    SearchMethod method = SearchMethod::sampler;
    int candidates = 30;
    int attempts_per_candidate = 50;
    /// Budgets searched after training and by sweeps; empty means three
    /// levels spread over the constraint range.
    std::vector<double> budgets;
    std::size_t val_subset = 512;
    EvolutionConfig evolution;

    friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

/// One experiment as a single JSON document. Unknown keys are rejected at
/// every level and omitted keys take the defaults below.
struct ExperimentConfig {
    SearchSpaceSpec space;
    ConstraintSpec constraint;
    TrainSchedule schedule;
    SamplerTrainConfig sampler;
    double sampler_init_range = 0.5;
    std::filesystem::path train_data;
    std::filesystem::path val_data;
    SearchConfig search;
    std::filesystem::path output_dir = "runs/default";
    std::uint64_t seed = 0;
    TrainMethod method = TrainMethod::focusformer;

    /// Checks every section and their mutual consistency.
    void validate() const;
    /// Budgets to search: search.budgets or the default three levels.
    [[nodiscard]] std::vector<double> search_budgets() const;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Relative data and output paths resolve against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Append-only JSONL writer. Events carry a logical timestamp (their index in
/// the run) instead of wall time, so identical runs write identical bytes.
class MetricsLog {
public:
    explicit MetricsLog(const std::filesystem::path& path);

    void write(const MetricsEvent& ev);
    [[nodiscard]] std::int64_t count() const noexcept { return count_; }

private:
    std::ofstream out_;
    std::int64_t count_ = 0;
};

nlohmann::json to_json(const MetricsEvent& ev, std::int64_t timestamp);

struct TrainOutputs {
    std::filesystem::path dir;
    std::int64_t events = 0;
};

/// Trains per the config and writes supernet.ffck, sampler.ffck (FocusFormer
/// only), metrics.jsonl and resolved-config.json into cfg.output_dir.
TrainOutputs run_train(const ExperimentConfig& cfg);

struct LoadedRun {
    ExperimentConfig config;
    SupernetParams supernet;
    std::optional<SamplerModel> sampler;
};

/// Reads a directory written by run_train.
LoadedRun load_run(const std::filesystem::path& dir);

struct SearchOptions {
    double budget = 0.0;
    std::optional<SearchMethod> method;
    std::optional<int> candidates;
    std::uint64_t seed = 0;
    int threads = 1;
};

SearchResult run_search(LoadedRun& run, const SearchOptions& opts);

enum class SweepAxis { tau, step_size, budget };
SweepAxis sweep_axis_from_string(std::string_view name);
std::string_view to_string(SweepAxis axis) noexcept;

struct SweepRow {
    double value = 0.0;
    std::string error;
    /// One result per searched budget; empty on failure.
    std::vector<SearchResult> results;
};

/// One training run per value (one shared run for the budget axis), each
/// followed by searches; rows come ordered by value. Writes
/// sweep-<axis>.csv and sweep-<axis>.json into cfg.output_dir.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis, std::vector<double> values,
                                int threads = 1);

/// Block-by-block text dump with cumulative MACs.
std::string describe_architecture(const ArchConfig& cfg, const SearchSpaceSpec& space, int image_size);

}  // namespace focusnas
