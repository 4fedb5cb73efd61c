// Python bindings. Structured values cross the boundary as JSON text; the
// focusnas package turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <spdlog/spdlog.h>

#include "focusnas/dataset.hpp"
#include "focusnas/error.hpp"
#include "focusnas/harness.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace focusnas;

namespace {

SearchSpaceSpec space_or_default(const std::string& space_json) {
    return space_json.empty() ? SearchSpaceSpec{} : space_from_json(json::parse(space_json));
}

std::string cost(const std::string& arch_json, const std::string& space_json, int image_size) {
    const SearchSpaceSpec space = space_or_default(space_json);
    const ArchConfig arch = arch_from_json(json::parse(arch_json));
    validate(arch, space);
    return to_json(compute_cost(arch, space, image_size > 0 ? image_size : space.max_image_size)).dump();
}

std::string describe(const std::string& arch_json, const std::string& space_json, int image_size) {
    const SearchSpaceSpec space = space_or_default(space_json);
    return describe_architecture(arch_from_json(json::parse(arch_json)), space,
                                 image_size > 0 ? image_size : space.max_image_size);
}

std::string resolve_config(const std::string& config_json, const std::string& base_dir) {
    const ExperimentConfig cfg = config_from_json(json::parse(config_json), base_dir);
    cfg.validate();
    return to_json(cfg).dump();
}

std::string train(const std::string& config_json, const std::string& base_dir) {
    const TrainOutputs out = run_train(config_from_json(json::parse(config_json), base_dir));
    return json{{"output_dir", out.dir.string()}, {"events", out.events}}.dump();
}

std::string search(const std::string& run_dir, double budget, const std::string& method, int candidates,
                   std::uint64_t seed) {
    LoadedRun run = load_run(run_dir);
    SearchOptions opts;
    opts.budget = budget;
    if (!method.empty()) opts.method = search_method_from_string(method);
    if (candidates > 0) opts.candidates = candidates;
    opts.seed = seed;
    opts.threads = evaluation_threads();
    return to_json(run_search(run, opts), true).dump();
}

std::string sample(const std::string& run_dir, double budget, int count, std::uint64_t seed) {
    const LoadedRun run = load_run(run_dir);
    require(run.sampler.has_value(), Errc::missing_checkpoint, "run directory has no sampler.ffck");
    require(count >= 0, Errc::invalid_argument, "count must be >= 0");
    Rng rng(seed, "python-sample");
    json out = json::array();
    for (int i = 0; i < count; ++i) {
        const ArchConfig a = decode(sample_architecture(*run.sampler, budget, rng).sequence, run.config.space);
        out.push_back({{"arch", to_json(a)}, {"cost", to_json(compute_cost(a, run.config.space,
                                                                            run.config.space.max_image_size))}});
    }
    return out.dump();
}

std::string make_dataset(const std::string& path, int num_classes, int size, std::size_t count, std::uint64_t task_seed,
                         double noise, std::uint64_t seed) {
    SyntheticTask task;
    task.num_classes = num_classes;
    task.size = size;
    task.task_seed = task_seed;
    task.noise = noise;
    const Dataset ds = make_synthetic(task, count, seed);
    write_dataset(path, ds);
    return json{{"path", path}, {"n", ds.size()}, {"size", ds.height()}, {"num_classes", ds.num_classes}}.dump();
}

}  // namespace

PYBIND11_MODULE(_focusnas, m) {
    m.doc() = "One-shot vision-transformer architecture search core";
    spdlog::set_level(spdlog::level::warn);

    static py::exception<Error> error(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = error;
            PyErr_SetObject(exc.ptr(), py::make_tuple(std::string(to_string(e.code())), e.what()).ptr());
        } catch (const json::exception& e) {
            py::object exc = error;
            PyErr_SetObject(exc.ptr(), py::make_tuple("schema", e.what()).ptr());
        }
    });

    m.def("cost", &cost, py::arg("arch"), py::arg("space") = "", py::arg("image_size") = 0);
    m.def("describe", &describe, py::arg("arch"), py::arg("space") = "", py::arg("image_size") = 0);
    m.def("resolve_config", &resolve_config, py::arg("config"), py::arg("base_dir") = "");
    m.def("train", &train, py::arg("config"), py::arg("base_dir") = "", py::call_guard<py::gil_scoped_release>());
    m.def("search", &search, py::arg("run_dir"), py::arg("budget"), py::arg("method") = "", py::arg("candidates") = 0,
          py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());
    m.def("sample", &sample, py::arg("run_dir"), py::arg("budget"), py::arg("count"), py::arg("seed") = 0);
    m.def("make_dataset", &make_dataset, py::arg("path"), py::arg("num_classes") = 10, py::arg("size") = 24,
          py::arg("count") = 2000, py::arg("task_seed") = 0, py::arg("noise") = 0.2, py::arg("seed") = 0);
}
