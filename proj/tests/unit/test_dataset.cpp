#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "focusnas/dataset.hpp"
#include "focusnas/error.hpp"

using namespace focusnas;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "focusnas-test-dataset";
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Ridge-regression classifier on raw pixels; the strongest regularization
/// of a small grid is reported.
double linear_probe(const Dataset& train, const Dataset& val) {
    const auto d = static_cast<Eigen::Index>(train.images.size() / train.size());
    const auto n = static_cast<Eigen::Index>(train.size());
    Eigen::MatrixXd x(n, d + 1), y = Eigen::MatrixXd::Zero(n, train.num_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = train.images.ptr()[i * d + j];
        x(i, d) = 1.0;
        y(i, train.labels[static_cast<std::size_t>(i)]) = 1.0;
    }
    const Eigen::MatrixXd gram = x.transpose() * x;
    const Eigen::MatrixXd rhs = x.transpose() * y;
    double best = 0.0;
    for (double lambda : {0.1, 10.0, 1000.0}) {
        const Eigen::MatrixXd w =
            (gram + lambda * Eigen::MatrixXd::Identity(d + 1, d + 1)).ldlt().solve(rhs);
        int hits = 0;
        for (std::size_t i = 0; i < val.size(); ++i) {
            Eigen::VectorXd v(d + 1);
            for (Eigen::Index j = 0; j < d; ++j) v(j) = val.images.ptr()[static_cast<Eigen::Index>(i) * d + j];
            v(d) = 1.0;
            Eigen::Index pred = 0;
            (w.transpose() * v).maxCoeff(&pred);
            hits += pred == val.labels[i];
        }
        best = std::max(best, hits / static_cast<double>(val.size()));
    }
    return best;
}

}  // namespace

TEST_CASE("synthetic datasets are seeded and in range") {
    SyntheticTask task;
    const Dataset a = make_synthetic(task, 64, 1);
    const Dataset b = make_synthetic(task, 64, 1);
    const Dataset c = make_synthetic(task, 64, 2);
    CHECK(a == b);
    CHECK_FALSE(a.images == c.images);
    CHECK(a.images.shape() == Shape{64, 24, 24, 3});
    for (int l : a.labels) CHECK((l >= 0 && l < 10));
    for (double v : a.images.data()) {
        CHECK((v >= 0.0 && v <= 1.0));
        CHECK(static_cast<double>(static_cast<float>(v)) == v);
    }

    const fs::path dir = scratch_dir();
    write_dataset(dir / "a.ffds", a);
    write_dataset(dir / "b.ffds", b);
    CHECK(file_bytes(dir / "a.ffds") == file_bytes(dir / "b.ffds"));
}

TEST_CASE("dataset files round-trip bit-exactly and follow the declared layout") {
    const Dataset ds = make_synthetic(SyntheticTask{}, 10, 3);
    const fs::path path = scratch_dir() / "rt.ffds";
    write_dataset(path, ds);
    CHECK(read_dataset(path) == ds);
    const std::string bytes = file_bytes(path);
    REQUIRE(bytes.substr(0, 5) == "FFDS1");
    std::uint32_t len = 0;
    for (int i = 3; i >= 0; --i) len = len << 8 | static_cast<unsigned char>(bytes[5 + static_cast<std::size_t>(i)]);
    const auto header = nlohmann::json::parse(bytes.substr(9, len));
    CHECK(header["n"] == 10);
    CHECK(header["h"] == 24);
    CHECK(header["c"] == 3);
    CHECK(bytes.size() == 9 + len + 10 * 24 * 24 * 3 * 4 + 10 * 2);
    const std::size_t label0 = 9 + len + 10 * 24 * 24 * 3 * 4;
    CHECK(static_cast<unsigned char>(bytes[label0]) == ds.labels[0]);

    std::ofstream(scratch_dir() / "bad.ffds", std::ios::binary) << bytes.substr(0, bytes.size() - 1);
    CHECK_THROWS_AS(read_dataset(scratch_dir() / "bad.ffds"), Error);
}

TEST_CASE("rasters import with labels and grey replication") {
    const fs::path dir = scratch_dir() / "rasters";
    fs::create_directories(dir);
    {
        std::ofstream p6(dir / "a.ppm", std::ios::binary);
        p6 << "P6\n# comment\n2 2\n255\n";
        const unsigned char px[12] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 51, 102, 153};
        p6.write(reinterpret_cast<const char*>(px), 12);
        std::ofstream p5(dir / "b.pgm", std::ios::binary);
        p5 << "P5 2 2 255\n";
        const unsigned char g[4] = {0, 255, 51, 204};
        p5.write(reinterpret_cast<const char*>(g), 4);
        std::ofstream(dir / "labels.txt") << "a.ppm 3\nb.pgm 1\n";
    }
    const Dataset ds = import_rasters(dir, dir / "labels.txt", 4);
    CHECK(ds.labels == std::vector<int>{3, 1});
    CHECK(ds.images.shape() == Shape{2, 2, 2, 3});
    CHECK(ds.images[0] == 1.0);
    CHECK(ds.images[9] == static_cast<double>(static_cast<float>(51 / 255.0)));
    CHECK(ds.images[12 + 9] == ds.images[12 + 10]);

    std::ofstream(dir / "bad.txt") << "a.ppm 7\n";
    CHECK_THROWS_AS(import_rasters(dir, dir / "bad.txt", 4), Error);
}

TEST_CASE("nearest-neighbour batches pick source pixels by integer scaling") {
    Dataset ds;
    ds.num_classes = 2;
    ds.images = Tensor({2, 4, 4, 3});
    for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = static_cast<double>(i % 97) / 97.0;
    ds.labels = {0, 1};
    const std::vector<std::size_t> idx{1};
    const Batch b = gather_batch(ds, idx, 2);
    CHECK(b.labels == std::vector<int>{1});
    CHECK(b.images.shape() == Shape{1, 2, 2, 3});
    // output (y, x) reads source (2y, 2x)
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                CHECK(b.images[(y * 2 + x) * 3 + c] == ds.images[48 + ((2 * y) * 4 + 2 * x) * 3 + c]);
    const Batch same = gather_batch(ds, idx, 4);
    CHECK(std::equal(same.images.data().begin(), same.images.data().end(), ds.images.data().begin() + 48));
    const Tensor up = resize_nearest(ds.images, 8);
    CHECK(up.shape() == Shape{2, 8, 8, 3});
    CHECK(up[(1 * 8 + 1) * 3] == ds.images[0]);
}

TEST_CASE("raw pixels do not linearly separate the synthetic classes") {
    SyntheticTask task;
    const Dataset train = make_synthetic(task, 2000, 1);
    const Dataset val = make_synthetic(task, 512, 2);
    const double probe = linear_probe(train, val);
    MESSAGE("linear probe accuracy " << probe);
    CHECK(probe < 0.6);
    CHECK(probe > 0.1);
}

TEST_CASE("the maximal network learns the synthetic task") {
    SyntheticTask task;
    const Dataset train = make_synthetic(task, 2000, 1);
    const Dataset val = make_synthetic(task, 512, 2);
    SearchSpaceSpec space;
    Rng init(0);
    SupernetParams w = SupernetParams::init(space, init);
    const SubnetView view(w, max_config(space));
    AdamW opt(w.all(), {}, true);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(1);
    const int epochs = 20, per_epoch = 62;
    const double peak = 2e-3;
    int step = 0;
    for (int e = 0; e < epochs; ++e) {
        shuffle.shuffle(order.begin(), order.end());
        for (int b = 0; b < per_epoch; ++b, ++step) {
            const double lr = step < per_epoch ? peak * (step + 1) / per_epoch
                                               : 0.5 * peak * (1 + std::cos(M_PI * step / (epochs * per_epoch)));
            train_step(view, gather_batch(train, std::span(order).subspan(static_cast<std::size_t>(b) * 32, 32), 24),
                       opt, lr);
        }
    }
    std::vector<std::size_t> all(val.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const double acc = minibatch_accuracy(view, gather_batch(val, all, 24));
    MESSAGE("maximal network validation accuracy " << acc);
    CHECK(acc > 0.9);
}
