#include "focusnas/supernet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "focusnas/error.hpp"
#include "focusnas/ops.hpp"
#include "json_util.hpp"

namespace focusnas {

namespace {

constexpr double kInitStd = 0.02;
constexpr std::size_t kEvalChunk = 64;

using Sz = std::size_t;

Sz sz(int v) { return static_cast<Sz>(v); }

std::atomic<std::uint64_t> g_accuracy_calls{0};

std::size_t argmax_hits(const Tensor& logits, std::span<const int> labels) {
    const Sz k = logits.dim(1);
    std::size_t hits = 0;
    for (Sz i = 0; i < logits.dim(0); ++i) {
        const double* row = logits.ptr() + i * k;
        if (static_cast<int>(std::max_element(row, row + k) - row) == labels[i]) ++hits;
    }
    return hits;
}

Parameter normal_param(std::string name, Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        double x = rng.normal();
        while (std::abs(x) > 2.0) x = rng.normal();  // truncated at two sigma
        v = kInitStd * x;
    }
    return Parameter(std::move(name), std::move(t));
}

Parameter const_param(std::string name, Shape shape, double value) {
    return Parameter(std::move(name), Tensor(std::move(shape), value));
}

}  // namespace

SupernetParams SupernetParams::init(const SearchSpaceSpec& space, Rng& rng, StoragePrecision precision) {
    space.validate();
    SupernetParams w;
    w.space = space;
    w.precision = precision;
    const Sz e = sz(space.max_embed());
    const Sz p2c = sz(space.patch_size * space.patch_size * 3);
    const Sz qkv = 3 * sz(space.head_dim * space.max_heads());
    const Sz att = sz(space.head_dim * space.max_heads());
    const Sz hid = sz(space.max_mlp_hidden());

    w.patch_w = normal_param("patch_embed.weight", {p2c, e}, rng);
    w.patch_b = const_param("patch_embed.bias", {e}, 0.0);
    if (!space.cpe_per_block) {
        w.cpe_k = normal_param("cpe.kernel", {3, 3, e}, rng);
        w.cpe_b = const_param("cpe.bias", {e}, 0.0);
    }
    for (int b = 0; b < space.max_depth(); ++b) {
        const std::string pre = "blocks." + std::to_string(b) + ".";
        BlockParams blk;
        if (space.cpe_per_block) {
            blk.cpe_k = normal_param(pre + "cpe.kernel", {3, 3, e}, rng);
            blk.cpe_b = const_param(pre + "cpe.bias", {e}, 0.0);
        }
        blk.ln1_g = const_param(pre + "ln1.weight", {e}, 1.0);
        blk.ln1_b = const_param(pre + "ln1.bias", {e}, 0.0);
        blk.qkv_w = normal_param(pre + "qkv.weight", {e, qkv}, rng);
        blk.qkv_b = const_param(pre + "qkv.bias", {qkv}, 0.0);
        blk.proj_w = normal_param(pre + "proj.weight", {att, e}, rng);
        blk.proj_b = const_param(pre + "proj.bias", {e}, 0.0);
        blk.ln2_g = const_param(pre + "ln2.weight", {e}, 1.0);
        blk.ln2_b = const_param(pre + "ln2.bias", {e}, 0.0);
        blk.fc1_w = normal_param(pre + "fc1.weight", {e, hid}, rng);
        blk.fc1_b = const_param(pre + "fc1.bias", {hid}, 0.0);
        blk.fc2_w = normal_param(pre + "fc2.weight", {hid, e}, rng);
        blk.fc2_b = const_param(pre + "fc2.bias", {e}, 0.0);
        w.blocks.push_back(std::move(blk));
    }
    w.norm_g = const_param("norm.weight", {e}, 1.0);
    w.norm_b = const_param("norm.bias", {e}, 0.0);
    w.head_w = normal_param("head.weight", {e, sz(space.num_classes)}, rng);
    w.head_b = const_param("head.bias", {sz(space.num_classes)}, 0.0);
    if (precision == StoragePrecision::f32)
        for (Parameter* p : w.all()) p->round_to_f32();
    return w;
}

std::vector<Parameter*> SupernetParams::all() {
    std::vector<Parameter*> out;
    auto add = [&](Parameter& p) {
        if (!p.value.empty()) out.push_back(&p);
    };
    add(patch_w);
    add(patch_b);
    add(cpe_k);
    add(cpe_b);
    for (BlockParams& b : blocks) {
        add(b.cpe_k);
        add(b.cpe_b);
        for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.qkv_w, &b.qkv_b, &b.proj_w, &b.proj_b, &b.ln2_g, &b.ln2_b,
                             &b.fc1_w, &b.fc1_b, &b.fc2_w, &b.fc2_b})
            add(*p);
    }
    add(norm_g);
    add(norm_b);
    add(head_w);
    add(head_b);
    return out;
}

std::vector<const Parameter*> SupernetParams::all() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<SupernetParams*>(this)->all()) out.push_back(p);
    return out;
}

std::size_t SupernetParams::parameter_count() const {
    std::size_t n = 0;
    for (const Parameter* p : all()) n += p->value.size();
    return n;
}

void SupernetParams::zero_grad() {
    for (Parameter* p : all()) p->zero_grad();
}

SubnetView::SubnetView(SupernetParams& params, ArchConfig cfg) : params_(&params), cfg_(std::move(cfg)) {
    validate(cfg_, params.space);
}

SubnetView select_subnet(SupernetParams& params, const ArchConfig& cfg) { return SubnetView(params, cfg); }

std::vector<SubnetView::Slice> SubnetView::slices() const {
    SupernetParams& w = *params_;
    const SearchSpaceSpec& sp = w.space;
    const Sz e = sz(cfg_.embed_dim);
    const Sz p2c = sz(sp.patch_size * sp.patch_size * 3);
    std::vector<Slice> out;
    out.push_back({&w.patch_w, {p2c, e}});
    out.push_back({&w.patch_b, {e}});
    if (!sp.cpe_per_block) {
        out.push_back({&w.cpe_k, {3, 3, e}});
        out.push_back({&w.cpe_b, {e}});
    }
    for (int b = 0; b < cfg_.depth; ++b) {
        BlockParams& blk = w.blocks[sz(b)];
        const Sz width = sz(sp.head_dim * cfg_.heads[sz(b)]);
        const Sz hid = sz(mlp_hidden(cfg_.mlp_ratios[sz(b)], cfg_.embed_dim));
        if (sp.cpe_per_block) {
            out.push_back({&blk.cpe_k, {3, 3, e}});
            out.push_back({&blk.cpe_b, {e}});
        }
        out.push_back({&blk.ln1_g, {e}});
        out.push_back({&blk.ln1_b, {e}});
        out.push_back({&blk.qkv_w, {e, 3 * width}});
        out.push_back({&blk.qkv_b, {3 * width}});
        out.push_back({&blk.proj_w, {width, e}});
        out.push_back({&blk.proj_b, {e}});
        out.push_back({&blk.ln2_g, {e}});
        out.push_back({&blk.ln2_b, {e}});
        out.push_back({&blk.fc1_w, {e, hid}});
        out.push_back({&blk.fc1_b, {hid}});
        out.push_back({&blk.fc2_w, {hid, e}});
        out.push_back({&blk.fc2_b, {e}});
    }
    out.push_back({&w.norm_g, {e}});
    out.push_back({&w.norm_b, {e}});
    out.push_back({&w.head_w, {e, sz(sp.num_classes)}});
    out.push_back({&w.head_b, {sz(sp.num_classes)}});
    return out;
}

Tensor patchify(const Tensor& images, int patch_size) {
    require(images.rank() == 4 && images.dim(3) == 3, Errc::shape_mismatch,
            "images must be [b x S x S x 3], got " + shape_string(images.shape()));
    const Sz b = images.dim(0), s = images.dim(1);
    const Sz p = sz(patch_size);
    require(images.dim(2) == s, Errc::shape_mismatch, "images must be square");
    require(s % p == 0, Errc::shape_mismatch,
            "image size " + std::to_string(s) + " not divisible by patch size " + std::to_string(p));
    const Sz side = s / p;
    const Sz cols = p * p * 3;
    Tensor out({b * side * side, cols});
    for (Sz n = 0; n < b; ++n)
        for (Sz py = 0; py < side; ++py)
            for (Sz px = 0; px < side; ++px) {
                double* o = out.ptr() + ((n * side + py) * side + px) * cols;
                for (Sz dy = 0; dy < p; ++dy) {
                    const double* src = images.ptr() + ((n * s + py * p + dy) * s + px * p) * 3;
                    std::copy_n(src, p * 3, o + dy * p * 3);
                }
            }
    return out;
}

namespace {

Var apply_cpe(Tape& tape, Var tokens, Parameter& kernel, Parameter& bias, Sz batch, Sz side, Sz e) {
    Var grid = ops::reshape(tokens, {batch, side, side, e});
    Var conv = ops::depthwise_conv3x3(grid, tape.parameter(kernel, {3, 3, e}), tape.parameter(bias, {e}));
    return ops::add(tokens, ops::reshape(conv, {batch * side * side, e}));
}

Var linear(Tape& tape, Var x, Parameter& w, Parameter& b, Sz in, Sz out) {
    return ops::add_bias(ops::matmul(x, tape.parameter(w, {in, out})), tape.parameter(b, {out}));
}

}  // namespace

Var forward(const SubnetView& view, const Tensor& images, Tape& tape) {
    SupernetParams& w = view.params();
    const SearchSpaceSpec& sp = w.space;
    const ArchConfig& cfg = view.config();
    const Sz batch = images.rank() == 4 ? images.dim(0) : 0;
    Tensor patches = patchify(images, sp.patch_size);
    const Sz side = images.dim(1) / sz(sp.patch_size);
    const Sz e = sz(cfg.embed_dim);
    const Sz p2c = sz(sp.patch_size * sp.patch_size * 3);

    Var t = linear(tape, tape.constant(std::move(patches)), w.patch_w, w.patch_b, p2c, e);
    if (!sp.cpe_per_block) t = apply_cpe(tape, t, w.cpe_k, w.cpe_b, batch, side, e);
    for (int b = 0; b < cfg.depth; ++b) {
        BlockParams& blk = w.blocks[sz(b)];
        const Sz heads = sz(cfg.heads[sz(b)]);
        const Sz width = sz(sp.head_dim) * heads;
        const Sz hid = sz(mlp_hidden(cfg.mlp_ratios[sz(b)], cfg.embed_dim));
        if (sp.cpe_per_block) t = apply_cpe(tape, t, blk.cpe_k, blk.cpe_b, batch, side, e);

        Var h = ops::layer_norm(t, tape.parameter(blk.ln1_g, {e}), tape.parameter(blk.ln1_b, {e}));
        Var qkv = linear(tape, h, blk.qkv_w, blk.qkv_b, e, 3 * width);
        Var att = ops::attention(qkv, batch, heads, sz(sp.head_dim));
        t = ops::add(t, linear(tape, att, blk.proj_w, blk.proj_b, width, e));

        Var h2 = ops::layer_norm(t, tape.parameter(blk.ln2_g, {e}), tape.parameter(blk.ln2_b, {e}));
        Var m = ops::gelu(linear(tape, h2, blk.fc1_w, blk.fc1_b, e, hid));
        t = ops::add(t, linear(tape, m, blk.fc2_w, blk.fc2_b, hid, e));
    }
    Var normed = ops::layer_norm(t, tape.parameter(w.norm_g, {e}), tape.parameter(w.norm_b, {e}));
    Var pooled = ops::mean_pool(normed, batch);
    return linear(tape, pooled, w.head_w, w.head_b, e, sz(sp.num_classes));
}

Tensor forward(const SubnetView& view, const Tensor& images) {
    Tape tape(false);
    return forward(view, images, tape).value();
}

double train_step(const SubnetView& view, const Batch& batch, AdamW& optimizer, double lr, std::size_t* correct) {
    SupernetParams& w = view.params();
    w.zero_grad();
    double loss_value = 0.0;
    {
        Tape tape;
        Var logits = forward(view, batch.images, tape);
        if (correct) *correct = argmax_hits(logits.value(), batch.labels);
        Var loss = ops::cross_entropy(logits, batch.labels);
        loss_value = loss.value()[0];
        tape.backward(loss);
    }
    for (const Parameter* p : w.all())
        require(p->grad.all_finite(), Errc::non_finite, "non-finite gradient in " + p->name);
    optimizer.step(lr);
    return loss_value;
}

std::size_t correct_count(const SubnetView& view, const Batch& batch) {
    const Tensor& images = batch.images;
    require(images.rank() == 4, Errc::shape_mismatch, "images must be [b x S x S x 3]");
    const Sz b = images.dim(0);
    require(batch.labels.size() == b, Errc::shape_mismatch, "label count does not match batch");
    const Sz per_image = images.size() / b;
    std::size_t correct = 0;
    for (Sz start = 0; start < b; start += kEvalChunk) {
        const Sz n = std::min(kEvalChunk, b - start);
        Shape shape = images.shape();
        shape[0] = n;
        std::vector<double> chunk(images.data().begin() + static_cast<std::ptrdiff_t>(start * per_image),
                                  images.data().begin() + static_cast<std::ptrdiff_t>((start + n) * per_image));
        const Tensor logits = forward(view, Tensor(std::move(shape), std::move(chunk)));
        correct += argmax_hits(logits, std::span(batch.labels).subspan(start, n));
    }
    return correct;
}

double minibatch_accuracy(const SubnetView& view, const Batch& batch) {
    g_accuracy_calls.fetch_add(1, std::memory_order_relaxed);
    if (batch.labels.empty()) return 0.0;
    return static_cast<double>(correct_count(view, batch)) / static_cast<double>(batch.labels.size());
}

std::uint64_t accuracy_evaluations() noexcept { return g_accuracy_calls.load(std::memory_order_relaxed); }

Checkpoint to_checkpoint(const SupernetParams& w) {
    return snapshot_parameters(w.all(), {{"kind", "supernet"}, {"space", to_json(w.space)}});
}

SupernetParams supernet_from_checkpoint(const Checkpoint& ckpt) {
    require(ckpt.meta.value("kind", "") == "supernet", Errc::format, "checkpoint does not hold a supernet");
    const SearchSpaceSpec space = space_from_json(detail::read_req<nlohmann::json>(ckpt.meta, "space", "checkpoint.meta"));
    Rng unused(0);
    SupernetParams w = SupernetParams::init(space, unused);
    load_parameters(ckpt, w.all());
    return w;
}

}  // namespace focusnas
