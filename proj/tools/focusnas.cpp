#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "focusnas/dataset.hpp"
#include "focusnas/error.hpp"
#include "focusnas/harness.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace focusnas;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string log_level = "info";
};

/// Accepts a path to a JSON file or inline JSON text.
json read_json_arg(const std::string& arg) {
    std::string text = arg;
    if (fs::is_regular_file(arg)) {
        std::ifstream in(arg, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(Errc::schema, "cannot parse JSON argument: " + std::string(e.what()));
    }
}

ExperimentConfig config_for(const Globals& g, bool required) {
    ExperimentConfig cfg;
    if (!g.config.empty())
        cfg = load_config(g.config);
    else
        require(!required, Errc::schema, "--config is required for this command");
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.schedule.seed = *g.seed;
    }
    if (!g.out.empty()) cfg.output_dir = fs::absolute(g.out);
    return cfg;
}

void print_result(const SearchResult& r) {
    std::cout << "method     " << to_string(r.method) << "\n"
              << "budget     " << std::fixed << std::setprecision(0) << r.budget << "\n"
              << "accuracy   " << std::setprecision(4) << r.accuracy << "\n"
              << "flops      " << r.cost.flops << "\n"
              << "params     " << r.cost.params << "\n"
              << "evaluated  " << r.evaluated << "\n"
              << "draws      " << r.draws << "\n"
              << "wall_s     " << std::setprecision(2) << r.wall_seconds << "\n"
              << "arch       " << to_json(r.best).dump() << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"One-shot vision-transformer architecture search with a constraint-conditioned sampler"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Experiment config JSON")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Run seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory (file path for make-dataset)");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    auto* cost = app.add_subcommand("cost", "Exact MACs and parameters of an architecture");
    std::string cost_arch;
    std::optional<int> cost_size;
    cost->add_option("arch", cost_arch, "ArchConfig JSON file or inline JSON")->required();
    cost->add_option("--image-size", cost_size, "Input resolution (default: the space maximum)");

    auto* train = app.add_subcommand("train", "Train a supernet (and sampler)");
    std::optional<std::string> train_method;
    train->add_option("--method", train_method, "focusformer or uniform")
        ->check(CLI::IsMember({"focusformer", "uniform"}));

    auto* search = app.add_subcommand("search", "Specialize a sub-network for a budget");
    std::string search_dir;
    double search_budget = 0.0;
    std::optional<std::string> search_method;
    std::optional<int> search_n;
    search->add_option("run_dir", search_dir, "Directory written by train")->required()->check(CLI::ExistingDirectory);
    search->add_option("--budget", search_budget, "Resource budget")->required();
    search->add_option("--method", search_method, "sampler, evolution or random")
        ->check(CLI::IsMember({"sampler", "evolution", "random"}));
    search->add_option("--n", search_n, "Candidate count");

    auto* sweep = app.add_subcommand("sweep", "Train and search once per value of one parameter");
    std::string sweep_axis;
    std::vector<double> sweep_values;
    sweep->add_option("--vary", sweep_axis, "tau, step-size or budget")
        ->required()
        ->check(CLI::IsMember({"tau", "step-size", "budget"}));
    sweep->add_option("--values", sweep_values, "Values of the varied parameter")->required();

    auto* make = app.add_subcommand("make-dataset", "Synthesize or import an FFDS1 dataset");
    std::string make_kind = "synthetic";
    SyntheticTask task;
    std::size_t make_count = 2000;
    std::string make_dir, make_labels;
    make->add_option("--kind", make_kind, "synthetic or import")->check(CLI::IsMember({"synthetic", "import"}));
    make->add_option("--classes", task.num_classes, "Class count");
    make->add_option("--size", task.size, "Image side length (synthetic)");
    make->add_option("--count", make_count, "Sample count (synthetic)");
    make->add_option("--task-seed", task.task_seed, "Seed of the class definitions (synthetic)");
    make->add_option("--noise", task.noise, "Pixel noise std (synthetic)");
    make->add_option("--dir", make_dir, "Raster directory (import)");
    make->add_option("--labels", make_labels, "Label file with '<file> <label>' lines (import)");

    auto* describe = app.add_subcommand("describe", "Block-by-block dump of an architecture");
    std::string describe_dir, describe_arch;
    std::optional<int> describe_size;
    describe->add_option("run_dir", describe_dir, "Directory written by train")->required()->check(CLI::ExistingDirectory);
    describe->add_option("arch", describe_arch, "ArchConfig JSON file or inline JSON")->required();
    describe->add_option("--image-size", describe_size, "Input resolution (default: the space maximum)");

    for (CLI::App* sub : {cost, train, search, sweep, make, describe}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[usage]: " << e.what() << "\n";
        return 2;
    }

    auto logger = spdlog::stderr_color_st("focusnas");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    spdlog::set_pattern("[%l] %v");

    if (*cost) {
        const ExperimentConfig cfg = config_for(g, false);
        const ArchConfig arch = arch_from_json(read_json_arg(cost_arch));
        validate(arch, cfg.space);
        const int size = cost_size.value_or(cfg.space.max_image_size);
        require(size > 0 && size % cfg.space.patch_size == 0, Errc::invalid_argument,
                "--image-size must be a positive multiple of the patch size");
        std::cout << to_json(compute_cost(arch, cfg.space, size)).dump() << "\n";
    } else if (*train) {
        ExperimentConfig cfg = config_for(g, true);
        if (train_method) cfg.method = train_method_from_string(*train_method);
        const TrainOutputs out = run_train(cfg);
        std::cout << json{{"output_dir", out.dir.string()}, {"events", out.events}}.dump() << "\n";
    } else if (*search) {
        LoadedRun loaded = load_run(search_dir);
        SearchOptions opts;
        opts.budget = search_budget;
        if (search_method) opts.method = search_method_from_string(*search_method);
        opts.candidates = search_n;
        opts.seed = g.seed.value_or(loaded.config.seed);
        opts.threads = evaluation_threads();
        const SearchResult r = run_search(loaded, opts);
        const fs::path out = g.out.empty() ? fs::path(search_dir) : fs::path(g.out);
        fs::create_directories(out);
        std::ofstream(out / "result.json") << to_json(r, true).dump(2) << "\n";
        print_result(r);
    } else if (*sweep) {
        const ExperimentConfig cfg = config_for(g, true);
        const std::vector<SweepRow> rows =
            run_sweep(cfg, sweep_axis_from_string(sweep_axis), sweep_values, evaluation_threads());
        std::cout << std::left << std::setw(12) << sweep_axis << std::setw(8) << "status" << "mean_accuracy\n";
        for (const SweepRow& r : rows) {
            double mean = 0.0;
            for (const SearchResult& s : r.results) mean += s.accuracy / static_cast<double>(r.results.size());
            std::cout << std::left << std::setw(12) << r.value << std::setw(8) << (r.error.empty() ? "ok" : "failed");
            if (r.error.empty())
                std::cout << std::fixed << std::setprecision(4) << mean << std::defaultfloat;
            else
                std::cout << r.error;
            std::cout << "\n";
        }
        std::size_t failed = 0;
        for (const SweepRow& r : rows) failed += r.error.empty() ? 0 : 1;
        if (failed == rows.size()) fail(Errc::invalid_argument, "every sweep run failed");
    } else if (*make) {
        require(!g.out.empty(), Errc::invalid_argument, "make-dataset needs --out <file>");
        Dataset ds;
        if (make_kind == "synthetic") {
            ds = make_synthetic(task, make_count, g.seed.value_or(0));
        } else {
            require(!make_dir.empty() && !make_labels.empty(), Errc::invalid_argument,
                    "import needs --dir and --labels");
            ds = import_rasters(make_dir, make_labels, task.num_classes);
        }
        write_dataset(g.out, ds);
        std::cout << json{{"path", g.out}, {"n", ds.size()}, {"size", ds.height()}, {"num_classes", ds.num_classes}}
                         .dump()
                  << "\n";
    } else if (*describe) {
        const LoadedRun loaded = load_run(describe_dir);
        const SearchSpaceSpec& space = loaded.config.space;
        const ArchConfig arch = arch_from_json(read_json_arg(describe_arch));
        std::cout << describe_architecture(arch, space, describe_size.value_or(space.max_image_size));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error[" << to_string(e.code()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 1;
    }
}
