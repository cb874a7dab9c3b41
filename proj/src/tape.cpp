#include "planter/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "planter/kernels.hpp"
#include "planter/threading.hpp"

namespace planter::grad {

namespace {

// Fixed batch-chunk size for weight-gradient reductions. Partial sums are
// merged in chunk order, so results do not depend on the thread count.
constexpr int kGradChunk = 8;

int chunk_count(int n) { return (n + kGradChunk - 1) / kGradChunk; }

}  // namespace

ValueId GradTape::leaf(Tensor4 value) {
    value.require_finite("leaf");
    return record(std::move(value), nullptr, "leaf");
}

ValueId GradTape::record(Tensor4 value, BackpropFn backprop, const char* op) {
    Node n{std::move(value), Tensor4{}, std::move(backprop), op};
    n.grad = n.value.zeros_like();
    nodes_.push_back(std::move(n));
    return ValueId{int(nodes_.size()) - 1};
}

const GradTape::Node& GradTape::node(ValueId id) const {
    if (!id.valid() || id.v >= int(nodes_.size()))
        throw std::out_of_range("GradTape: bad node id");
    return nodes_[id.v];
}

GradTape::Node& GradTape::node_mut(ValueId id) {
    if (!id.valid() || id.v >= int(nodes_.size()))
        throw std::out_of_range("GradTape: bad node id");
    return nodes_[id.v];
}

void GradTape::backward(ValueId loss) {
    if (nodes_.empty()) throw std::runtime_error("backward: no recorded forward pass");
    Node& l = node_mut(loss);
    if (l.value.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + l.value.shape().str());
    l.grad[0] += 1.0;
    for (int idx = loss.v; idx >= 0; --idx)
        if (nodes_[idx].backprop) nodes_[idx].backprop(*this, idx);
}

void GradTape::zero_grads() {
    for (auto& n : nodes_) n.grad.fill(0.0);
}

// ---------------------------------------------------------------------------

ValueId conv2d(GradTape& t, ValueId input, ValueId weight, ValueId bias) {
    const Tensor4& in = t.value(input);
    const Tensor4& w = t.value(weight);
    const Tensor4& b = t.value(bias);
    if (w.shape().h != 3 || w.shape().w != 3)
        throw std::invalid_argument("conv2d: kernel must be 3x3, got " + w.shape().str());
    if (in.shape().c != w.shape().c)
        throw std::invalid_argument("conv2d: channel mismatch, input " + in.shape().str() +
                                    " vs kernel " + w.shape().str());
    if (!(b.shape() == Shape4{1, w.shape().n, 1, 1}))
        throw std::invalid_argument("conv2d: bias shape " + b.shape().str());

    const kernels::ConvDims d{in.shape().n, in.shape().c, w.shape().n, in.shape().h, in.shape().w};
    const auto& kt = kernels::active_table();

    Tensor4 out({d.n, d.c_out, d.h, d.w});
    threading::parallel_for(d.n, [&](int bi) {
        kt.conv3x3_forward(in.data(), w.data(), b.data(), out.data(), d, bi, bi + 1);
    });
    out.require_finite("conv2d");

    auto backprop = [input, weight, bias, d](GradTape& tape, int self) {
        const Tensor4& g = tape.grad_mut(self);
        const Tensor4& in_v = tape.value(input);
        const Tensor4& w_v = tape.value(weight);
        const auto& k = kernels::active_table();

        Tensor4& din = tape.grad_mut(input);
        threading::parallel_for(d.n, [&](int bi) {
            k.conv3x3_grad_data(g.data(), w_v.data(), din.data(), d, bi, bi + 1);
        });

        Tensor4& dw = tape.grad_mut(weight);
        Tensor4& db = tape.grad_mut(bias);
        const int chunks = chunk_count(d.n);
        if (chunks == 1) {
            k.conv3x3_grad_weights(g.data(), in_v.data(), dw.data(), db.data(), d, 0, d.n);
        } else {
            std::vector<Tensor4> pw(chunks, dw.zeros_like());
            std::vector<Tensor4> pb(chunks, db.zeros_like());
            threading::parallel_for(chunks, [&](int c) {
                const int b0 = c * kGradChunk;
                const int b1 = std::min(d.n, b0 + kGradChunk);
                k.conv3x3_grad_weights(g.data(), in_v.data(), pw[c].data(), pb[c].data(), d, b0, b1);
            });
            for (int c = 0; c < chunks; ++c) {  // merge in chunk order
                for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += pw[c][i];
                for (std::size_t i = 0; i < db.size(); ++i) db[i] += pb[c][i];
            }
        }
    };
    return t.record(std::move(out), backprop, "conv2d");
}

ValueId relu(GradTape& t, ValueId input) {
    const Tensor4& in = t.value(input);
    const auto& kt = kernels::active_table();
    Tensor4 out(in.shape());
    kt.relu_forward(in.data(), out.data(), in.size());
    auto backprop = [input](GradTape& tape, int self) {
        const Tensor4& g = tape.grad_mut(self);
        const Tensor4& in_v = tape.value(input);
        Tensor4& din = tape.grad_mut(input);
        kernels::active_table().relu_backward(in_v.data(), g.data(), din.data(), in_v.size());
    };
    return t.record(std::move(out), backprop, "relu");
}

ValueId maxpool2x2(GradTape& t, ValueId input) {
    const Tensor4& in = t.value(input);
    const Shape4 s = in.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0)
        throw std::invalid_argument("maxpool2x2: spatial dims must be even, got " + s.str());
    Tensor4 out({s.n, s.c, s.h / 2, s.w / 2});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    kernels::maxpool2x2_forward(in.data(), out.data(), s.n, s.c, s.h, s.w, argmax->data());
    auto backprop = [input, argmax](GradTape& tape, int self) {
        const Tensor4& g = tape.grad_mut(self);
        Tensor4& din = tape.grad_mut(input);
        kernels::maxpool2x2_backward(g.data(), din.data(), argmax->data(), g.size());
    };
    return t.record(std::move(out), backprop, "maxpool2x2");
}

ValueId flatten(GradTape& t, ValueId input) {
    const Tensor4& in = t.value(input);
    const Shape4 s = in.shape();
    Tensor4 out({s.n, s.c * s.h * s.w, 1, 1}, in.values());
    auto backprop = [input](GradTape& tape, int self) {
        const Tensor4& g = tape.grad_mut(self);
        Tensor4& din = tape.grad_mut(input);
        for (std::size_t i = 0; i < din.size(); ++i) din[i] += g[i];
    };
    return t.record(std::move(out), backprop, "flatten");
}

ValueId linear(GradTape& t, ValueId input, ValueId weight, ValueId bias) {
    const Tensor4& in = t.value(input);
    const Tensor4& w = t.value(weight);
    const Tensor4& b = t.value(bias);
    if (in.shape().h != 1 || in.shape().w != 1)
        throw std::invalid_argument("linear: input must be flattened, got " + in.shape().str());
    if (w.shape().h != 1 || w.shape().w != 1)
        throw std::invalid_argument("linear: weight must have k=1, got " + w.shape().str());
    if (in.shape().c != w.shape().c)
        throw std::invalid_argument("linear: length mismatch, input " + in.shape().str() +
                                    " vs weight " + w.shape().str());
    if (!(b.shape() == Shape4{1, w.shape().n, 1, 1}))
        throw std::invalid_argument("linear: bias shape " + b.shape().str());

    const kernels::LinearDims d{in.shape().n, in.shape().c, w.shape().n};
    Tensor4 out({d.n, d.out_features, 1, 1});
    kernels::linear_forward(in.data(), w.data(), b.data(), out.data(), d);
    out.require_finite("linear");

    auto backprop = [input, weight, bias, d](GradTape& tape, int self) {
        const Tensor4& g = tape.grad_mut(self);
        kernels::linear_grad_data(g.data(), tape.value(weight).data(), tape.grad_mut(input).data(),
                                  d);
        kernels::linear_grad_weights(g.data(), tape.value(input).data(),
                                     tape.grad_mut(weight).data(), tape.grad_mut(bias).data(), d);
    };
    return t.record(std::move(out), backprop, "linear");
}

ValueId softmax_cross_entropy(GradTape& t, ValueId logits, std::vector<int> targets) {
    const Tensor4& z = t.value(logits);
    const int n = z.shape().n, classes = z.shape().c;
    if (z.shape().h != 1 || z.shape().w != 1)
        throw std::invalid_argument("softmax_cross_entropy: logits must be (n,classes,1,1)");
    if (int(targets.size()) != n)
        throw std::invalid_argument("softmax_cross_entropy: batch/target count mismatch");
    for (int b = 0; b < n; ++b)
        if (targets[b] < 0 || targets[b] >= classes)
            throw std::invalid_argument("softmax_cross_entropy: target " +
                                        std::to_string(targets[b]) + " out of range [0," +
                                        std::to_string(classes) + ")");

    auto logp = std::make_shared<std::vector<double>>(std::size_t(n) * classes);
    double total = 0.0;
    for (int b = 0; b < n; ++b) {
        double* row = logp->data() + std::size_t(b) * classes;
        kernels::log_softmax_row(z.data() + std::size_t(b) * classes, row, classes);
        total -= row[targets[b]];
    }
    Tensor4 out = Tensor4::scalar(total / n);
    out.require_finite("softmax_cross_entropy");

    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    auto backprop = [logits, logp, tg, n, classes](GradTape& tape, int self) {
        const double up = tape.grad_mut(self)[0];
        if (up == 0.0) return;
        Tensor4& dz = tape.grad_mut(logits);
        const double scale = up / n;
        for (int b = 0; b < n; ++b) {
            const double* row = logp->data() + std::size_t(b) * classes;
            double* drow = dz.data() + std::size_t(b) * classes;
            for (int j = 0; j < classes; ++j) {
                const double p = std::exp(row[j]);
                drow[j] += scale * (p - (j == (*tg)[b] ? 1.0 : 0.0));
            }
        }
    };
    return t.record(std::move(out), backprop, "softmax_cross_entropy");
}

ValueId sum(GradTape& t, ValueId input) {
    const Tensor4& in = t.value(input);
    double total = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) total += in[i];
    Tensor4 out = Tensor4::scalar(total);
    out.require_finite("sum");
    auto backprop = [input](GradTape& tape, int self) {
        const double up = tape.grad_mut(self)[0];
        Tensor4& din = tape.grad_mut(input);
        for (std::size_t i = 0; i < din.size(); ++i) din[i] += up;
    };
    return t.record(std::move(out), backprop, "sum");
}

ValueId scale_add(GradTape& t, double a, ValueId x, double b, ValueId y) {
    const Tensor4& xv = t.value(x);
    const Tensor4& yv = t.value(y);
    if (!(xv.shape() == yv.shape()))
        throw std::invalid_argument("scale_add: shape mismatch " + xv.shape().str() + " vs " +
                                    yv.shape().str());
    Tensor4 out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * xv[i] + b * yv[i];
    out.require_finite("scale_add");
    auto backprop = [x, y, a, b](GradTape& tape, int self) {
        const Tensor4& g = tape.grad_mut(self);
        Tensor4& dx = tape.grad_mut(x);
        Tensor4& dy = tape.grad_mut(y);
        for (std::size_t i = 0; i < g.size(); ++i) {
            dx[i] += a * g[i];
            dy[i] += b * g[i];
        }
    };
    return t.record(std::move(out), backprop, "scale_add");
}

}  // namespace planter::grad
