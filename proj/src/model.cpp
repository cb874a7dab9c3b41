#include "planter/model.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "planter/io.hpp"
#include "planter/kernels.hpp"
#include "planter/rng.hpp"
#include "planter/threading.hpp"

namespace planter::model {

namespace {

constexpr std::uint32_t kMagic = 0x504C4E54;  // "PLNT"
constexpr std::uint32_t kVersion = 1;

// Parameter order: conv1..5 (weight, bias), fc1, fc2. Seed tags match.
constexpr int kParamTensors = (ArchitectureSpec::kConvLayers + 2) * 2;

std::string conv_name(int l, bool weight) {
    return "conv" + std::to_string(l + 1) + (weight ? ".weight" : ".bias");
}

/// He-uniform fill over a contiguous flat range, draws in ascending index
/// order so the result is independent of how the tensor got here.
void he_uniform_fill(Tensor4& t, std::size_t begin, std::size_t end, int fan_in,
                     rng::Prng& rng) {
    const double bound = std::sqrt(6.0 / double(fan_in));
    for (std::size_t i = begin; i < end; ++i) t[i] = rng.uniform(-bound, bound);
}

}  // namespace

ArchitectureSpec ArchitectureSpec::cifar(int classes) {
    ArchitectureSpec s;
    s.input_channels = 3;
    s.input_size = 32;
    s.pool_after = {1, 1, 0, 0, 1};
    s.fc_hidden = 128;
    s.classes = classes;
    return s;
}

ArchitectureSpec ArchitectureSpec::stl10() {
    ArchitectureSpec s;
    s.input_channels = 3;
    s.input_size = 96;
    s.pool_after = {1, 1, 1, 0, 1};
    s.fc_hidden = 128;
    s.classes = 10;
    return s;
}

ArchitectureSpec ArchitectureSpec::synthetic(int input_size, int classes) {
    ArchitectureSpec s;
    s.input_channels = 3;
    s.input_size = input_size;
    s.pool_after = {1, 0, 0, 0, 1};
    s.fc_hidden = 128;
    s.classes = classes;
    return s;
}

int ArchitectureSpec::pool_count() const {
    int n = 0;
    for (auto p : pool_after) n += p ? 1 : 0;
    return n;
}

int ArchitectureSpec::final_spatial() const { return input_size >> pool_count(); }

int ArchitectureSpec::fc_input_features(int last_conv_channels) const {
    const int s = final_spatial();
    return last_conv_channels * s * s;
}

void ArchitectureSpec::validate() const {
    if (int(pool_after.size()) != kConvLayers)
        throw std::invalid_argument("ArchitectureSpec: pool_after must list all conv layers");
    if (input_channels < 1 || fc_hidden < 1 || classes < 2)
        throw std::invalid_argument("ArchitectureSpec: bad extents");
    int s = input_size;
    for (auto p : pool_after) {
        if (s < 1) throw std::invalid_argument("ArchitectureSpec: input too small for pools");
        if (p) {
            if (s % 2 != 0)
                throw std::invalid_argument("ArchitectureSpec: pooling an odd spatial size");
            s /= 2;
        }
    }
    if (s < 1) throw std::invalid_argument("ArchitectureSpec: input too small for pools");
}

std::size_t ParamTensor::trainable_count() const {
    std::size_t n = 0;
    for (auto f : frozen) n += f ? 0 : 1;
    return n;
}

std::size_t param_count(const ArchitectureSpec& spec, const std::vector<int>& channels) {
    if (int(channels.size()) != ArchitectureSpec::kConvLayers)
        throw std::invalid_argument("param_count: need one width per conv layer");
    std::size_t total = 0;
    int in = spec.input_channels;
    for (int c : channels) {
        total += std::size_t(c) * (9 * std::size_t(in) + 1);
        in = c;
    }
    const std::size_t fc_in = std::size_t(spec.fc_input_features(channels.back()));
    total += std::size_t(spec.fc_hidden) * fc_in + spec.fc_hidden;
    total += std::size_t(spec.classes) * spec.fc_hidden + spec.classes;
    return total;
}

PlantableNetwork::PlantableNetwork(ArchitectureSpec spec, std::vector<int> channels,
                                   std::uint64_t seed, std::string label)
    : spec_(std::move(spec)), channels_(std::move(channels)), label_(std::move(label)) {
    spec_.validate();
    if (int(channels_.size()) != ArchitectureSpec::kConvLayers)
        throw std::invalid_argument("PlantableNetwork: need one width per conv layer");
    for (int c : channels_)
        if (c < 1) throw std::invalid_argument("PlantableNetwork: channel counts must be >= 1");

    params_.reserve(kParamTensors);
    int in = spec_.input_channels;
    for (int l = 0; l < ArchitectureSpec::kConvLayers; ++l) {
        const int out = channels_[l];
        ParamTensor w{conv_name(l, true), Tensor4({out, in, 3, 3}),
                      std::vector<std::uint8_t>(std::size_t(out) * in * 9, 0)};
        rng::Prng lr(rng::derive(seed, std::uint64_t(l)));
        he_uniform_fill(w.value, 0, w.value.size(), in * 9, lr);
        params_.push_back(std::move(w));
        params_.push_back({conv_name(l, false), Tensor4({1, out, 1, 1}),
                           std::vector<std::uint8_t>(std::size_t(out), 0)});
        in = out;
    }
    const int fc_in = spec_.fc_input_features(channels_.back());
    ParamTensor f1{"fc1.weight", Tensor4({spec_.fc_hidden, fc_in, 1, 1}),
                   std::vector<std::uint8_t>(std::size_t(spec_.fc_hidden) * fc_in, 0)};
    rng::Prng r1(rng::derive(seed, std::uint64_t(ArchitectureSpec::kConvLayers)));
    he_uniform_fill(f1.value, 0, f1.value.size(), fc_in, r1);
    params_.push_back(std::move(f1));
    params_.push_back({"fc1.bias", Tensor4({1, spec_.fc_hidden, 1, 1}),
                       std::vector<std::uint8_t>(std::size_t(spec_.fc_hidden), 0)});

    ParamTensor f2{"fc2.weight", Tensor4({spec_.classes, spec_.fc_hidden, 1, 1}),
                   std::vector<std::uint8_t>(std::size_t(spec_.classes) * spec_.fc_hidden, 0)};
    rng::Prng r2(rng::derive(seed, std::uint64_t(ArchitectureSpec::kConvLayers + 1)));
    he_uniform_fill(f2.value, 0, f2.value.size(), spec_.fc_hidden, r2);
    params_.push_back(std::move(f2));
    params_.push_back({"fc2.bias", Tensor4({1, spec_.classes, 1, 1}),
                       std::vector<std::uint8_t>(std::size_t(spec_.classes), 0)});
}

std::size_t PlantableNetwork::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::size_t PlantableNetwork::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.trainable_count();
    return n;
}

void PlantableNetwork::check_input(const Tensor4& images) const {
    const Shape4 s = images.shape();
    if (s.c != spec_.input_channels || s.h != spec_.input_size || s.w != spec_.input_size)
        throw std::invalid_argument("forward: input " + s.str() + ", expected (n," +
                                    std::to_string(spec_.input_channels) + "," +
                                    std::to_string(spec_.input_size) + "," +
                                    std::to_string(spec_.input_size) + ")");
}

Tensor4 PlantableNetwork::forward(const Tensor4& images) const {
    check_input(images);
    const auto& kt = kernels::active_table();
    const int n = images.shape().n;

    Tensor4 cur = images;
    int side = spec_.input_size;
    for (int l = 0; l < ArchitectureSpec::kConvLayers; ++l) {
        const Tensor4& w = params_[2 * l].value;
        const Tensor4& b = params_[2 * l + 1].value;
        const kernels::ConvDims d{n, cur.shape().c, channels_[l], side, side};
        Tensor4 out({n, d.c_out, side, side});
        threading::parallel_for(n, [&](int bi) {
            kt.conv3x3_forward(cur.data(), w.data(), b.data(), out.data(), d, bi, bi + 1);
        });
        kt.relu_forward(out.data(), out.data(), out.size());
        if (spec_.pool_after[l]) {
            side /= 2;
            Tensor4 pooled({n, d.c_out, side, side});
            std::vector<std::size_t> argmax(pooled.size());
            kernels::maxpool2x2_forward(out.data(), pooled.data(), n, d.c_out, side * 2, side * 2,
                                        argmax.data());
            out = std::move(pooled);
        }
        cur = std::move(out);
    }

    const int fc_in = spec_.fc_input_features(channels_.back());
    Tensor4 flat({n, fc_in, 1, 1}, std::move(cur.values()));  // channel-major reshape

    Tensor4 hidden({n, spec_.fc_hidden, 1, 1});
    kernels::linear_forward(flat.data(), params_[10].value.data(), params_[11].value.data(),
                            hidden.data(), {n, fc_in, spec_.fc_hidden});
    kt.relu_forward(hidden.data(), hidden.data(), hidden.size());

    Tensor4 logits({n, spec_.classes, 1, 1});
    kernels::linear_forward(hidden.data(), params_[12].value.data(), params_[13].value.data(),
                            logits.data(), {n, spec_.fc_hidden, spec_.classes});
    logits.require_finite("forward");
    return logits;
}

PlantableNetwork::TapeBinding PlantableNetwork::forward_on_tape(grad::GradTape& tape,
                                                                const Tensor4& images) const {
    check_input(images);
    TapeBinding bind;
    bind.param_ids.reserve(params_.size());
    for (const auto& p : params_) bind.param_ids.push_back(tape.leaf(p.value));

    grad::ValueId x = tape.leaf(images);
    for (int l = 0; l < ArchitectureSpec::kConvLayers; ++l) {
        x = grad::relu(tape, grad::conv2d(tape, x, bind.param_ids[2 * l],
                                          bind.param_ids[2 * l + 1]));
        if (spec_.pool_after[l]) x = grad::maxpool2x2(tape, x);
    }
    x = grad::flatten(tape, x);
    x = grad::relu(tape, grad::linear(tape, x, bind.param_ids[10], bind.param_ids[11]));
    bind.logits = grad::linear(tape, x, bind.param_ids[12], bind.param_ids[13]);
    return bind;
}

void PlantableNetwork::plant(const std::vector<int>& new_channels, std::uint64_t seed) {
    if (int(new_channels.size()) != ArchitectureSpec::kConvLayers)
        throw std::invalid_argument("plant: need one width per conv layer");
    for (int l = 0; l < ArchitectureSpec::kConvLayers; ++l)
        if (new_channels[l] < channels_[l])
            throw std::invalid_argument("plant: channels can only grow, conv" +
                                        std::to_string(l + 1) + " " +
                                        std::to_string(channels_[l]) + " -> " +
                                        std::to_string(new_channels[l]));

    // conv layers: copy + freeze the old block, zero the new-input slices of
    // old filters, He-init whole new filters
    int in_old = spec_.input_channels, in_new = spec_.input_channels;
    for (int l = 0; l < ArchitectureSpec::kConvLayers; ++l) {
        const int out_old = channels_[l], out_new = new_channels[l];
        ParamTensor& w = params_[2 * l];
        ParamTensor& b = params_[2 * l + 1];

        ParamTensor nw{w.name, Tensor4({out_new, in_new, 3, 3}),
                       std::vector<std::uint8_t>(std::size_t(out_new) * in_new * 9, 0)};
        for (int o = 0; o < out_old; ++o)
            for (int i = 0; i < in_old; ++i)
                for (int k = 0; k < 9; ++k) {
                    const std::size_t src = (std::size_t(o) * in_old + i) * 9 + k;
                    const std::size_t dst = (std::size_t(o) * in_new + i) * 9 + k;
                    nw.value[dst] = w.value[src];
                    nw.frozen[dst] = 1;
                }
        if (out_new > out_old) {
            rng::Prng lr(rng::derive(seed, std::uint64_t(l)));
            he_uniform_fill(nw.value, std::size_t(out_old) * in_new * 9,
                            std::size_t(out_new) * in_new * 9, in_new * 9, lr);
        }
        w = std::move(nw);

        ParamTensor nb{b.name, Tensor4({1, out_new, 1, 1}),
                       std::vector<std::uint8_t>(std::size_t(out_new), 0)};
        for (int o = 0; o < out_old; ++o) {
            nb.value[o] = b.value[o];
            nb.frozen[o] = 1;
        }
        b = std::move(nb);

        in_old = out_old;
        in_new = out_new;
    }

    // hidden fc layer: old feature columns keep their indices (flatten is
    // channel-major), new columns start at zero
    {
        const int fi_old = spec_.fc_input_features(channels_.back());
        const int fi_new = spec_.fc_input_features(new_channels.back());
        ParamTensor& w = params_[10];
        ParamTensor nw{w.name, Tensor4({spec_.fc_hidden, fi_new, 1, 1}),
                       std::vector<std::uint8_t>(std::size_t(spec_.fc_hidden) * fi_new, 0)};
        for (int o = 0; o < spec_.fc_hidden; ++o)
            for (int i = 0; i < fi_old; ++i) {
                const std::size_t dst = std::size_t(o) * fi_new + i;
                nw.value[dst] = w.value[std::size_t(o) * fi_old + i];
                nw.frozen[dst] = 1;
            }
        w = std::move(nw);
    }

    // everything else existed before the plant: freeze wholesale
    for (auto idx : {11, 12, 13})
        for (auto& f : params_[idx].frozen) f = 1;

    channels_ = new_channels;
}

std::vector<std::uint8_t> PlantableNetwork::serialize() const {
    io::ByteWriter w;
    w.u32(kMagic);
    w.u32(kVersion);
    w.str(label_);
    w.u32(std::uint32_t(spec_.input_channels));
    w.u32(std::uint32_t(spec_.input_size));
    w.u32(std::uint32_t(spec_.fc_hidden));
    w.u32(std::uint32_t(spec_.classes));
    w.u32(std::uint32_t(spec_.pool_after.size()));
    for (auto p : spec_.pool_after) w.u8(p);
    w.u32(std::uint32_t(channels_.size()));
    for (int c : channels_) w.u32(std::uint32_t(c));
    w.u32(std::uint32_t(params_.size()));
    for (const auto& p : params_) {
        w.str(p.name);
        const Shape4 s = p.value.shape();
        w.u32(std::uint32_t(s.n));
        w.u32(std::uint32_t(s.c));
        w.u32(std::uint32_t(s.h));
        w.u32(std::uint32_t(s.w));
        for (double v : p.value.values()) w.f64(v);
        std::uint8_t byte = 0;
        for (std::size_t i = 0; i < p.frozen.size(); ++i) {
            byte |= std::uint8_t((p.frozen[i] ? 1 : 0) << (i % 8));
            if (i % 8 == 7 || i + 1 == p.frozen.size()) {
                w.u8(byte);
                byte = 0;
            }
        }
    }
    return w.data();
}

void PlantableNetwork::save(const std::filesystem::path& path) const {
    io::atomic_write_file(path, serialize());
}

PlantableNetwork PlantableNetwork::load(const std::filesystem::path& path) {
    io::ByteReader r(io::read_file_bytes(path));
    if (r.u32() != kMagic) throw io::IoError(path.string() + ": not a network checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw io::IoError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));

    PlantableNetwork net;
    net.label_ = r.str();
    net.spec_.input_channels = int(r.u32());
    net.spec_.input_size = int(r.u32());
    net.spec_.fc_hidden = int(r.u32());
    net.spec_.classes = int(r.u32());
    net.spec_.pool_after.resize(r.u32());
    for (auto& p : net.spec_.pool_after) p = r.u8();
    net.spec_.validate();
    net.channels_.resize(r.u32());
    for (auto& c : net.channels_) c = int(r.u32());

    const std::uint32_t count = r.u32();
    if (count != kParamTensors)
        throw io::IoError(path.string() + ": unexpected parameter tensor count");
    net.params_.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        ParamTensor p;
        p.name = r.str();
        Shape4 s;
        s.n = int(r.u32());
        s.c = int(r.u32());
        s.h = int(r.u32());
        s.w = int(r.u32());
        if (!s.valid()) throw io::IoError(path.string() + ": bad tensor shape " + s.str());
        std::vector<double> vals(s.count());
        for (auto& v : vals) v = r.f64();
        p.value = Tensor4(s, std::move(vals));
        p.value.require_finite("checkpoint");
        p.frozen.resize(s.count());
        const std::size_t nbytes = (p.frozen.size() + 7) / 8;
        const std::uint8_t* bytes = r.take(nbytes);
        for (std::size_t i = 0; i < p.frozen.size(); ++i)
            p.frozen[i] = (bytes[i / 8] >> (i % 8)) & 1;
        net.params_.push_back(std::move(p));
    }
    if (!r.at_end()) throw io::IoError(path.string() + ": trailing bytes in checkpoint");

    // cross-check stored shapes against the architecture
    const auto& ch = net.channels_;
    if (int(ch.size()) != ArchitectureSpec::kConvLayers)
        throw io::IoError(path.string() + ": bad channel list");
    int in = net.spec_.input_channels;
    for (int l = 0; l < ArchitectureSpec::kConvLayers; ++l) {
        if (!(net.params_[2 * l].value.shape() == Shape4{ch[l], in, 3, 3}))
            throw io::IoError(path.string() + ": conv weight shape mismatch");
        in = ch[l];
    }
    if (!(net.params_[10].value.shape() ==
          Shape4{net.spec_.fc_hidden, net.spec_.fc_input_features(ch.back()), 1, 1}))
        throw io::IoError(path.string() + ": fc weight shape mismatch");
    return net;
}

std::string PlantableNetwork::fingerprint() const {
    const auto bytes = serialize();
    return io::fnv1a_hex(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace planter::model
