#include "focusnas/harness.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "focusnas/checkpoint.hpp"
#include "focusnas/error.hpp"
#include "framed_io.hpp"
#include "json_util.hpp"

namespace focusnas {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSupernetFile = "supernet.ffck";
constexpr const char* kSamplerFile = "sampler.ffck";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kResolvedFile = "resolved-config.json";

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return (base / p).lexically_normal();
}

json schedule_to_json(const TrainSchedule& s) {
    json j = {{"epochs", s.epochs},
              {"interval", s.interval},
              {"batch_size", s.batch_size},
              {"lr", s.lr},
              {"min_lr", s.min_lr},
              {"warmup_epochs", s.warmup_epochs},
              {"weight_decay", s.adamw.weight_decay},
              {"adam_beta1", s.adamw.beta1},
              {"adam_beta2", s.adamw.beta2},
              {"adam_eps", s.adamw.eps},
              {"reward_batch_size", s.reward_batch_size}};
    if (s.progressive) {
        json stages = json::array();
        for (const auto& st : s.progressive->stages)
            stages.push_back({{"epoch_start", st.epoch_start}, {"image_size", st.image_size}});
        j["progressive"] = std::move(stages);
    }
    return j;
}

TrainSchedule schedule_from_json(const json& j) {
    constexpr const char* ctx = "schedule";
    detail::check_keys(j,
                       {"epochs", "interval", "batch_size", "lr", "min_lr", "warmup_epochs", "weight_decay",
                        "adam_beta1", "adam_beta2", "adam_eps", "reward_batch_size", "progressive"},
                       ctx);
    TrainSchedule s;
    detail::read_opt(j, "epochs", s.epochs, ctx);
    detail::read_opt(j, "interval", s.interval, ctx);
    detail::read_opt(j, "batch_size", s.batch_size, ctx);
    detail::read_opt(j, "lr", s.lr, ctx);
    detail::read_opt(j, "min_lr", s.min_lr, ctx);
    detail::read_opt(j, "warmup_epochs", s.warmup_epochs, ctx);
    detail::read_opt(j, "weight_decay", s.adamw.weight_decay, ctx);
    detail::read_opt(j, "adam_beta1", s.adamw.beta1, ctx);
    detail::read_opt(j, "adam_beta2", s.adamw.beta2, ctx);
    detail::read_opt(j, "adam_eps", s.adamw.eps, ctx);
    detail::read_opt(j, "reward_batch_size", s.reward_batch_size, ctx);
    if (const auto it = j.find("progressive"); it != j.end()) {
        require(it->is_array(), Errc::schema, "schedule.progressive: expected a list of stages");
        ProgressiveSchedule p;
        for (const json& st : *it) {
            detail::check_keys(st, {"epoch_start", "image_size"}, "schedule.progressive[]");
            p.stages.push_back({detail::read_req<int>(st, "epoch_start", "schedule.progressive[]"),
                                detail::read_req<int>(st, "image_size", "schedule.progressive[]")});
        }
        s.progressive = std::move(p);
    }
    return s;
}

json sampler_to_json(const SamplerTrainConfig& s, double init_range) {
    json j = {{"iterations", s.iterations},
              {"lr", s.lr},
              {"beta", s.beta},
              {"use_baseline", s.pg.use_baseline},
              {"baseline_decay", s.pg.baseline_decay},
              {"accuracy_term", s.accuracy_term},
              {"init_range", init_range}};
    if (s.fixed_budget) j["fixed_budget"] = *s.fixed_budget;
    return j;
}

SamplerTrainConfig sampler_from_json(const json& j, double& init_range) {
    constexpr const char* ctx = "sampler";
    detail::check_keys(j,
                       {"iterations", "lr", "beta", "use_baseline", "baseline_decay", "accuracy_term", "init_range",
                        "fixed_budget"},
                       ctx);
    SamplerTrainConfig s;
    detail::read_opt(j, "iterations", s.iterations, ctx);
    detail::read_opt(j, "lr", s.lr, ctx);
    detail::read_opt(j, "beta", s.beta, ctx);
    detail::read_opt(j, "use_baseline", s.pg.use_baseline, ctx);
    detail::read_opt(j, "baseline_decay", s.pg.baseline_decay, ctx);
    detail::read_opt(j, "accuracy_term", s.accuracy_term, ctx);
    detail::read_opt(j, "init_range", init_range, ctx);
    if (j.contains("fixed_budget")) s.fixed_budget = detail::read_req<double>(j, "fixed_budget", ctx);
    return s;
}

json search_to_json(const SearchConfig& s) {
    const EvolutionConfig& e = s.evolution;
    return {{"method", to_string(s.method)},
            {"candidates", s.candidates},
            {"attempts_per_candidate", s.attempts_per_candidate},
            {"budgets", s.budgets},
            {"val_subset", s.val_subset},
            {"evolution",
             {{"population", e.population},
              {"generations", e.generations},
              {"parents", e.parents},
              {"mutation_rate", e.mutation_rate},
              {"mutation_count", e.mutation_count},
              {"crossover_count", e.crossover_count},
              {"tries_per_candidate", e.tries_per_candidate}}}};
}

SearchConfig search_from_json(const json& j) {
    constexpr const char* ctx = "search";
    detail::check_keys(j, {"method", "candidates", "attempts_per_candidate", "budgets", "val_subset", "evolution"},
                       ctx);
    SearchConfig s;
    std::string method(to_string(s.method));
    detail::read_opt(j, "method", method, ctx);
    s.method = search_method_from_string(method);
    detail::read_opt(j, "candidates", s.candidates, ctx);
    detail::read_opt(j, "attempts_per_candidate", s.attempts_per_candidate, ctx);
    detail::read_opt(j, "budgets", s.budgets, ctx);
    detail::read_opt(j, "val_subset", s.val_subset, ctx);
    if (const auto it = j.find("evolution"); it != j.end()) {
        constexpr const char* ectx = "search.evolution";
        detail::check_keys(*it,
                           {"population", "generations", "parents", "mutation_rate", "mutation_count",
                            "crossover_count", "tries_per_candidate"},
                           ectx);
        EvolutionConfig& e = s.evolution;
        detail::read_opt(*it, "population", e.population, ectx);
        detail::read_opt(*it, "generations", e.generations, ectx);
        detail::read_opt(*it, "parents", e.parents, ectx);
        detail::read_opt(*it, "mutation_rate", e.mutation_rate, ectx);
        detail::read_opt(*it, "mutation_count", e.mutation_count, ectx);
        detail::read_opt(*it, "crossover_count", e.crossover_count, ectx);
        detail::read_opt(*it, "tries_per_candidate", e.tries_per_candidate, ectx);
    }
    return s;
}

SearchRequest make_request(const SearchConfig& s, double budget) {
    SearchRequest req;
    req.budget = budget;
    req.candidates = s.candidates;
    req.method = s.method;
    req.attempts_per_candidate = s.attempts_per_candidate;
    req.evolution = s.evolution;
    return req;
}

std::string format_value(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

}  // namespace

std::string_view to_string(TrainMethod method) noexcept {
    return method == TrainMethod::focusformer ? "focusformer" : "uniform";
}

TrainMethod train_method_from_string(std::string_view name) {
    if (name == "focusformer") return TrainMethod::focusformer;
    if (name == "uniform") return TrainMethod::uniform;
    fail(Errc::schema, "unknown training method '" + std::string(name) + "' (expected focusformer or uniform)");
}

void ExperimentConfig::validate() const {
    space.validate();
    constraint.validate();
    schedule.validate(space);
    sampler.validate();
    search.evolution.validate();
    require(sampler_init_range > 0.0, Errc::schema, "sampler.init_range must be positive");
    require(search.candidates >= 1, Errc::schema, "search.candidates must be >= 1");
    require(search.attempts_per_candidate >= 1, Errc::schema, "search.attempts_per_candidate must be >= 1");
    require(search.val_subset >= 1, Errc::schema, "search.val_subset must be >= 1");
    require(std::is_sorted(search.budgets.begin(), search.budgets.end()), Errc::schema,
            "search.budgets must be ascending");
    if (sampler.fixed_budget)
        require(*sampler.fixed_budget >= constraint.b_min && *sampler.fixed_budget <= constraint.b_max, Errc::schema,
                "sampler.fixed_budget outside the constraint range");
}

std::vector<double> ExperimentConfig::search_budgets() const {
    if (!search.budgets.empty()) return search.budgets;
    std::vector<double> out;
    for (double f : {1.0 / 6.0, 0.5, 5.0 / 6.0})
        out.push_back(quantize_constraint(constraint.b_min + f * (constraint.b_max - constraint.b_min), constraint));
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

json to_json(const ExperimentConfig& c) {
    return {{"space", to_json(c.space)},
            {"constraint", to_json(c.constraint)},
            {"schedule", schedule_to_json(c.schedule)},
            {"sampler", sampler_to_json(c.sampler, c.sampler_init_range)},
            {"data", {{"train", c.train_data.string()}, {"val", c.val_data.string()}}},
            {"search", search_to_json(c.search)},
            {"output_dir", c.output_dir.string()},
            {"seed", c.seed},
            {"method", to_string(c.method)}};
}

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
    constexpr const char* ctx = "config";
    detail::check_keys(j, {"space", "constraint", "schedule", "sampler", "data", "search", "output_dir", "seed", "method"},
                       ctx);
    ExperimentConfig c;
    if (j.contains("space")) c.space = space_from_json(j.at("space"));
    if (j.contains("constraint")) c.constraint = constraint_from_json(j.at("constraint"));
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("sampler")) c.sampler = sampler_from_json(j.at("sampler"), c.sampler_init_range);
    if (j.contains("search")) c.search = search_from_json(j.at("search"));
    if (const auto it = j.find("data"); it != j.end()) {
        detail::check_keys(*it, {"train", "val"}, "data");
        std::string train, val;
        detail::read_opt(*it, "train", train, "data");
        detail::read_opt(*it, "val", val, "data");
        c.train_data = resolve(train, base_dir);
        c.val_data = resolve(val, base_dir);
    }
    std::string out = c.output_dir.string();
    detail::read_opt(j, "output_dir", out, ctx);
    c.output_dir = resolve(out, base_dir);
    detail::read_opt(j, "seed", c.seed, ctx);
    std::string method(to_string(c.method));
    detail::read_opt(j, "method", method, ctx);
    c.method = train_method_from_string(method);
    c.schedule.seed = c.seed;
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    const std::string text = detail::read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(Errc::schema, path.string() + ": " + e.what());
    }
    return config_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const MetricsEvent& ev, std::int64_t timestamp) {
    return {{"t", timestamp},
            {"phase", to_string(ev.phase)},
            {"epoch", ev.epoch},
            {"iteration", ev.iteration},
            {"values", ev.values}};
}

MetricsLog::MetricsLog(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out_), Errc::io, "cannot open metrics file " + path.string());
}

void MetricsLog::write(const MetricsEvent& ev) {
    out_ << to_json(ev, count_++).dump() << '\n';
    out_.flush();
    require(static_cast<bool>(out_), Errc::io, "failed writing metrics event");
}

TrainOutputs run_train(const ExperimentConfig& cfg) {
    cfg.validate();
    require(!cfg.train_data.empty() && !cfg.val_data.empty(), Errc::schema, "data.train and data.val are required");
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    detail::write_file(dir / kResolvedFile, to_json(cfg).dump(2) + "\n");
    const Dataset train = read_dataset(cfg.train_data);
    const Dataset val = read_dataset(cfg.val_data);
    const bool focus = cfg.method == TrainMethod::focusformer;
    spdlog::info("training {} for {} epochs on {} samples into {}", to_string(cfg.method), cfg.schedule.epochs,
                 train.size(), dir.string());

    MetricsLog log(dir / kMetricsFile);
    TrainHooks hooks;
    hooks.on_event = [&](const MetricsEvent& ev) {
        log.write(ev);
        if (ev.phase == Phase::supernet)
            spdlog::info("epoch {:>3}  loss {:.4f}  acc {:.4f}  size {}", ev.epoch, ev.values["loss"].get<double>(),
                         ev.values["acc"].get<double>(), ev.values["image_size"].get<int>());
        else
            spdlog::debug("sampler epoch {} iter {} reward {:.4f}", ev.epoch, ev.iteration,
                          ev.values["reward"].get<double>());
    };
    hooks.on_epoch_end = [&](int, const SupernetParams& w, const SamplerModel* s) {
        write_checkpoint(dir / kSupernetFile, to_checkpoint(w));
        if (s) write_checkpoint(dir / kSamplerFile, to_checkpoint(*s));
    };
    hooks.on_abort = [&](int epoch, const SupernetParams& w, const SamplerModel* s) {
        spdlog::error("training aborted in epoch {}; dumping state", epoch);
        write_checkpoint(dir / "abort-supernet.ffck", to_checkpoint(w));
        if (s) write_checkpoint(dir / "abort-sampler.ffck", to_checkpoint(*s));
        detail::write_file(dir / "abort.json", json{{"epoch", epoch}}.dump() + "\n");
    };
    if (focus)
        train_focusformer(cfg.space, cfg.constraint, cfg.schedule, cfg.sampler, {train, val}, hooks,
                          cfg.sampler_init_range);
    else
        train_uniform(cfg.space, cfg.constraint, cfg.schedule, {train, val}, hooks);
    return {dir, log.count()};
}

LoadedRun load_run(const fs::path& dir) {
    LoadedRun run{load_config(dir / kResolvedFile), supernet_from_checkpoint(read_checkpoint(dir / kSupernetFile)),
                  std::nullopt};
    if (fs::exists(dir / kSamplerFile)) run.sampler = sampler_from_checkpoint(read_checkpoint(dir / kSamplerFile));
    require(run.supernet.space == run.config.space, Errc::format, "checkpoint space differs from the run config");
    return run;
}

SearchResult run_search(LoadedRun& run, const SearchOptions& opts) {
    const ExperimentConfig& cfg = run.config;
    SearchRequest req = make_request(cfg.search, opts.budget);
    if (opts.method) req.method = *opts.method;
    if (opts.candidates) req.candidates = *opts.candidates;
    if (req.method == SearchMethod::sampler)
        require(run.sampler.has_value(), Errc::missing_checkpoint,
                "sampler search needs sampler.ffck in the run directory");
    const Dataset val = read_dataset(cfg.val_data);
    const Batch subset = validation_subset(val, cfg.space, cfg.search.val_subset, cfg.seed);
    Rng rng(opts.seed, "search");
    return run_search(run.supernet, run.sampler ? &*run.sampler : nullptr, cfg.constraint, req, subset, rng,
                      opts.threads);
}

SweepAxis sweep_axis_from_string(std::string_view name) {
    if (name == "tau") return SweepAxis::tau;
    if (name == "step-size") return SweepAxis::step_size;
    if (name == "budget") return SweepAxis::budget;
    fail(Errc::invalid_argument, "unknown sweep axis '" + std::string(name) + "' (expected tau, step-size or budget)");
}

std::string_view to_string(SweepAxis axis) noexcept {
    switch (axis) {
        case SweepAxis::tau: return "tau";
        case SweepAxis::step_size: return "step-size";
        case SweepAxis::budget: return "budget";
    }
    return "unknown";
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis, std::vector<double> values, int threads) {
    require(!values.empty(), Errc::invalid_argument, "sweep needs at least one value");
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    const fs::path root = cfg.output_dir / ("sweep-" + std::string(to_string(axis)));
    std::vector<SweepRow> rows;

    auto search_all = [&](const fs::path& dir, const std::vector<double>& budgets, SweepRow& row) {
        LoadedRun run = load_run(dir);
        for (double b : budgets) {
            SearchOptions opts;
            opts.budget = b;
            opts.seed = cfg.seed;
            opts.threads = threads;
            row.results.push_back(run_search(run, opts));
        }
    };

    std::optional<fs::path> shared;
    for (double v : values) {
        SweepRow row;
        row.value = v;
        try {
            ExperimentConfig c = cfg;
            if (axis == SweepAxis::tau) {
                require(v >= 1 && v == std::floor(v), Errc::invalid_argument, "tau values must be positive integers");
                c.schedule.interval = static_cast<int>(v);
            } else if (axis == SweepAxis::step_size) {
                c.constraint.step = v;
            }
            if (axis == SweepAxis::budget) {
                if (!shared) {
                    c.output_dir = root / "run";
                    run_train(c);
                    shared = c.output_dir;
                }
                search_all(*shared, {v}, row);
            } else {
                c.output_dir = root / (std::string(to_string(axis)) + "-" + format_value(v));
                c.validate();
                run_train(c);
                search_all(c.output_dir, c.search_budgets(), row);
            }
        } catch (const Error& e) {
            row.error = std::string(to_string(e.code())) + ": " + e.what();
            row.results.clear();
            spdlog::warn("sweep value {} failed: {}", v, row.error);
        }
        rows.push_back(std::move(row));
    }

    json table = json::array();
    std::ostringstream csv;
    csv << to_string(axis) << ",status,mean_accuracy,budgets,accuracies,flops,evaluated\n";
    for (const SweepRow& r : rows) {
        json results = json::array();
        std::string budgets, accs, flops;
        double mean = 0.0;
        std::int64_t evaluated = 0;
        for (const SearchResult& s : r.results) {
            results.push_back(to_json(s));
            const std::string sep = budgets.empty() ? "" : ";";
            budgets += sep + format_value(s.budget);
            accs += sep + format_value(s.accuracy);
            flops += sep + std::to_string(s.cost.flops);
            mean += s.accuracy / static_cast<double>(r.results.size());
            evaluated += s.evaluated;
        }
        json row = {{"value", r.value}, {"ok", r.error.empty()}, {"results", std::move(results)}};
        if (!r.error.empty()) row["error"] = r.error;
        if (r.error.empty()) row["mean_accuracy"] = mean;
        table.push_back(std::move(row));
        csv << format_value(r.value) << ',' << (r.error.empty() ? "ok" : "failed") << ','
            << (r.error.empty() ? format_value(mean) : "") << ',' << budgets << ',' << accs << ',' << flops << ','
            << evaluated << '\n';
    }
    const std::string stem = "sweep-" + std::string(to_string(axis));
    detail::write_file(cfg.output_dir / (stem + ".json"),
                       json{{"axis", to_string(axis)}, {"rows", std::move(table)}}.dump(2) + "\n");
    detail::write_file(cfg.output_dir / (stem + ".csv"), csv.str());
    return rows;
}

std::string describe_architecture(const ArchConfig& cfg, const SearchSpaceSpec& space, int image_size) {
    validate(cfg, space);
    const int tokens = (image_size / space.patch_size) * (image_size / space.patch_size);
    std::ostringstream os;
    os << "depth " << cfg.depth << ", embed " << cfg.embed_dim << ", image " << image_size << "x" << image_size << " ("
       << tokens << " tokens)\n";
    os << std::left << std::setw(12) << "layer" << std::right << std::setw(7) << "embed" << std::setw(7) << "heads"
       << std::setw(7) << "ratio" << std::setw(8) << "hidden" << std::setw(12) << "macs" << std::setw(14)
       << "cumulative" << std::setw(10) << "params" << '\n';
    std::int64_t cumulative = 0, params = 0;
    for (const CostItem& item : cost_breakdown(cfg, space, image_size)) {
        cumulative += item.flops;
        params += item.params;
        os << std::left << std::setw(12) << item.name << std::right << std::setw(7) << cfg.embed_dim;
        if (item.name.rfind("block_", 0) == 0) {
            const auto b = static_cast<std::size_t>(std::stoi(item.name.substr(6)));
            os << std::setw(7) << cfg.heads[b] << std::setw(7) << std::fixed << std::setprecision(1)
               << cfg.mlp_ratios[b] << std::setw(8) << mlp_hidden(cfg.mlp_ratios[b], cfg.embed_dim);
        } else {
            os << std::setw(7) << "-" << std::setw(7) << "-" << std::setw(8) << "-";
        }
        os << std::setw(12) << item.flops << std::setw(14) << cumulative << std::setw(10) << item.params << '\n';
    }
    os << std::left << std::setw(41) << "total" << std::right << std::setw(12) << cumulative << std::setw(14) << ""
       << std::setw(10) << params << '\n';
    return os.str();
}

}  // namespace focusnas
