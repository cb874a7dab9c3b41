// Acceptance suite: exercises the framework end to end and prints one
// PASS/FAIL/SKIP line per criterion. Long-running data-dependent criteria
// are skipped unless the dataset directories are supplied via environment
// variables (PLANTER_CIFAR10_DIR, PLANTER_STL10_DIR, PLANTER_ACCEPT_FULL).
// The exit code is the number of gating failures.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "planter/data.hpp"
#include "planter/distill.hpp"
#include "planter/experiment.hpp"
#include "planter/io.hpp"
#include "planter/kernels.hpp"
#include "planter/model.hpp"
#include "planter/rng.hpp"
#include "planter/search.hpp"
#include "planter/tape.hpp"
#include "planter/tensor.hpp"
#include "planter/threading.hpp"
#include "planter/trainer.hpp"

namespace fs = std::filesystem;
using namespace planter;

namespace {

struct Outcome {
    bool pass = false;
    bool skipped = false;
    bool gating = true;
    std::string detail;
};

Outcome pass(std::string detail) { return {true, false, true, std::move(detail)}; }
Outcome fail(std::string detail) { return {false, false, true, std::move(detail)}; }
Outcome skip(std::string detail) { return {false, true, true, std::move(detail)}; }

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

Tensor4 random_tensor(Shape4 s, std::uint64_t seed, double lo, double hi) {
    Tensor4 t(s);
    rng::Prng r(seed);
    for (auto& v : t.values()) v = r.uniform(lo, hi);
    return t;
}

fs::path work_dir(const char* name) {
    const fs::path d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::vector<int> uniform_widths(int w) { return std::vector<int>(5, w); }

// --- criterion 1: parameter-count fidelity ---------------------------------

Outcome criterion_params() {
    struct Cell {
        model::ArchitectureSpec spec;
        int width;
        const char* expect;  // rounded to 0.1K (or 0.1M for the last STL cell)
        bool millions;
    };
    const std::vector<Cell> cells = {
        {model::ArchitectureSpec::cifar(10), 8, "20.4", false},
        {model::ArchitectureSpec::cifar(10), 16, "43.9", false},
        {model::ArchitectureSpec::cifar(10), 32, "104.8", false},
        {model::ArchitectureSpec::cifar(10), 64, "282.0", false},
        {model::ArchitectureSpec::cifar(10), 128, "857.5", false},
        {model::ArchitectureSpec::cifar(100), 8, "32.0", false},
        {model::ArchitectureSpec::cifar(100), 16, "55.5", false},
        {model::ArchitectureSpec::cifar(100), 32, "116.5", false},
        {model::ArchitectureSpec::cifar(100), 64, "293.6", false},
        {model::ArchitectureSpec::cifar(100), 128, "869.1", false},
        {model::ArchitectureSpec::stl10(), 8, "40.8", false},
        {model::ArchitectureSpec::stl10(), 16, "84.9", false},
        {model::ArchitectureSpec::stl10(), 32, "186.8", false},
        {model::ArchitectureSpec::stl10(), 64, "445.8", false},
        {model::ArchitectureSpec::stl10(), 128, "1.2", true},
    };
    for (const auto& cell : cells) {
        const std::size_t p = model::param_count(cell.spec, uniform_widths(cell.width));
        const std::string got =
            fmt("%.1f", cell.millions ? double(p) / 1e6 : double(p) / 1e3);
        if (got != cell.expect)
            return fail("width " + std::to_string(cell.width) + " with " +
                        std::to_string(cell.spec.classes) + " classes gives " + got +
                        ", expected " + cell.expect);
    }

    // Mean parameter count over the three grown shapes reported for CIFAR-10.
    const std::vector<std::vector<int>> grown = {
        {12, 20, 16, 16, 12}, {12, 16, 16, 16, 16}, {12, 16, 16, 16, 16}};
    double mean = 0.0;
    for (const auto& v : grown)
        mean += double(model::param_count(model::ArchitectureSpec::cifar(10), v));
    mean /= double(grown.size());
    if (fmt("%.1f", mean / 1e3) != std::string("40.6"))
        return fail("grown-shape mean is " + fmt("%.1f", mean / 1e3) + "K, expected 40.6K");
    return pass("all 15 table cells and the 40.6K grown-shape mean match");
}

// --- criterion 2: gradient correctness vs central finite differences -------

Outcome criterion_gradients() {
    const auto spec = model::ArchitectureSpec::cifar(10);
    model::PlantableNetwork net(spec, uniform_widths(4), 31);
    const int batch = 2;
    const Tensor4 images = random_tensor({batch, 3, 32, 32}, 32, -1.0, 1.0);
    const std::vector<int> labels = {3, 8};
    const Tensor4 teacher_logits = random_tensor({batch, 10, 1, 1}, 33, -2.0, 2.0);
    distill::LossConfig kd;
    kd.lambda = 0.3;

    const double h = 1e-5;
    double worst = 0.0;
    std::size_t checked = 0;
    for (int use_kd = 0; use_kd <= 1; ++use_kd) {
        grad::GradTape tape;
        const auto bind = net.forward_on_tape(tape, images);
        const grad::ValueId loss =
            use_kd ? distill::combined_loss(tape, bind.logits, teacher_logits, labels, kd)
                   : grad::softmax_cross_entropy(tape, bind.logits, labels);
        tape.backward(loss);

        for (std::size_t p = 0; p < net.params().size(); ++p) {
            const Tensor4& analytic = tape.grad(bind.param_ids[p]);
            Tensor4& value = net.params()[p].value;
            for (std::size_t e = 0; e < value.size(); ++e) {
                const double saved = value[e];
                auto loss_at = [&](double v) {
                    value[e] = v;
                    const Tensor4 logits = net.forward(images);
                    return use_kd ? distill::combined_value(logits, teacher_logits, labels, kd)
                                  : distill::cross_entropy_value(logits, labels);
                };
                const double fd = (loss_at(saved + h) - loss_at(saved - h)) / (2.0 * h);
                value[e] = saved;
                const double a = analytic[e];
                const double rel =
                    std::fabs(fd - a) / std::max({std::fabs(fd), std::fabs(a), 1e-6});
                worst = std::max(worst, rel);
                ++checked;
                if (rel >= 1e-4)
                    return fail(std::string(use_kd ? "combined" : "cross-entropy") +
                                " loss, tensor " + net.params()[p].name + " element " +
                                std::to_string(e) + ": analytic " + fmt("%.3e", a) +
                                " vs finite difference " + fmt("%.3e", fd));
            }
        }
    }
    return pass(std::to_string(checked) + " element gradients within tolerance, worst rel err " +
                fmt("%.1e", worst));
}

// --- criterion 3: kernels vs independent naive oracles ---------------------

// Plain quadruple loops, accumulated in a different order than the kernels
// use, so agreement is numeric rather than structural.
Tensor4 naive_conv(const Tensor4& in, const Tensor4& w, const Tensor4& bias) {
    const auto s = in.shape();
    const int c_out = w.shape().n;
    Tensor4 out({s.n, c_out, s.h, s.w});
    for (int b = 0; b < s.n; ++b)
        for (int o = 0; o < c_out; ++o)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = 0.0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx)
                            for (int i = 0; i < s.c; ++i) {
                                const int yy = y + dy, xx = x + dx;
                                if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                                acc += in.values()[((std::size_t(b) * s.c + i) * s.h + yy) * s.w +
                                                   xx] *
                                       w.values()[((std::size_t(o) * s.c + i) * 3 + (dy + 1)) * 3 +
                                                  (dx + 1)];
                            }
                    out.values()[((std::size_t(b) * c_out + o) * s.h + y) * s.w + x] =
                        acc + bias.values()[o];
                }
    return out;
}

Tensor4 naive_pool(const Tensor4& in) {
    const auto s = in.shape();
    Tensor4 out({s.n, s.c, s.h / 2, s.w / 2});
    for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y + 1 < s.h; y += 2)
                for (int x = 0; x + 1 < s.w; x += 2) {
                    auto at = [&](int yy, int xx) {
                        return in.values()[((std::size_t(b) * s.c + c) * s.h + yy) * s.w + xx];
                    };
                    const double m = std::max(std::max(at(y, x), at(y, x + 1)),
                                              std::max(at(y + 1, x), at(y + 1, x + 1)));
                    out.values()[((std::size_t(b) * s.c + c) * (s.h / 2) + y / 2) * (s.w / 2) +
                                 x / 2] = m;
                }
    return out;
}

Tensor4 naive_linear(const Tensor4& in, const Tensor4& w, const Tensor4& bias) {
    const int n = in.shape().n;
    const int features = int(in.size()) / n;
    const int out_f = w.shape().n;
    Tensor4 out({n, out_f, 1, 1});
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < out_f; ++o) {
            double acc = bias.values()[o];
            for (int f = features - 1; f >= 0; --f)  // reverse order on purpose
                acc += in.values()[std::size_t(b) * features + f] *
                       w.values()[std::size_t(o) * features + f];
            out.values()[std::size_t(b) * out_f + o] = acc;
        }
    return out;
}

Outcome criterion_kernels() {
    rng::Prng r(77);
    double worst = 0.0;
    auto widen = [&](double d) { worst = std::max(worst, d); };
    int shapes = 0;

    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + int(r.next_u64() % 3);
        const int ci = 1 + int(r.next_u64() % 6);
        const int co = 1 + int(r.next_u64() % 6);
        const int hh = 1 + int(r.next_u64() % 9);
        const int ww = 1 + int(r.next_u64() % 9);

        {
            grad::GradTape t;
            const Tensor4 in = random_tensor({n, ci, hh, ww}, rng::derive(7, trial, 0), -1, 1);
            const Tensor4 w = random_tensor({co, ci, 3, 3}, rng::derive(7, trial, 1), -1, 1);
            const Tensor4 b = random_tensor({1, co, 1, 1}, rng::derive(7, trial, 2), -1, 1);
            const Tensor4 got =
                t.value(grad::conv2d(t, t.leaf(in), t.leaf(w), t.leaf(b)));
            const Tensor4 want = naive_conv(in, w, b);
            for (std::size_t i = 0; i < got.size(); ++i) {
                const double d = std::fabs(got[i] - want[i]);
                widen(d);
                if (d >= 1e-12) return fail("conv2d shape trial " + std::to_string(trial));
            }
        }
        {
            grad::GradTape t;
            const int eh = 2 * (1 + int(r.next_u64() % 5));
            const int ew = 2 * (1 + int(r.next_u64() % 5));
            const Tensor4 in = random_tensor({n, ci, eh, ew}, rng::derive(7, trial, 3), -1, 1);
            const Tensor4 got = t.value(grad::maxpool2x2(t, t.leaf(in)));
            const Tensor4 want = naive_pool(in);
            for (std::size_t i = 0; i < got.size(); ++i) {
                const double d = std::fabs(got[i] - want[i]);
                widen(d);
                if (d >= 1e-12) return fail("maxpool shape trial " + std::to_string(trial));
            }
        }
        {
            grad::GradTape t;
            const int fin = 1 + int(r.next_u64() % 40);
            const int fout = 1 + int(r.next_u64() % 13);
            const Tensor4 in = random_tensor({n, fin, 1, 1}, rng::derive(7, trial, 4), -1, 1);
            const Tensor4 w = random_tensor({fout, fin, 1, 1}, rng::derive(7, trial, 5), -1, 1);
            const Tensor4 b = random_tensor({1, fout, 1, 1}, rng::derive(7, trial, 6), -1, 1);
            const Tensor4 got = t.value(grad::linear(t, t.leaf(in), t.leaf(w), t.leaf(b)));
            const Tensor4 want = naive_linear(in, w, b);
            for (std::size_t i = 0; i < got.size(); ++i) {
                const double d = std::fabs(got[i] - want[i]);
                widen(d);
                if (d >= 1e-12) return fail("linear shape trial " + std::to_string(trial));
            }
        }
        shapes += 3;
    }
    return pass(std::to_string(shapes) + " random shapes agree, worst |diff| " +
                fmt("%.1e", worst));
}

// --- criterion 4: planting invariants ---------------------------------------

Outcome criterion_planting() {
    rng::Prng r(41);
    for (int trial = 0; trial < 12; ++trial) {
        const auto spec = trial % 2 == 0 ? model::ArchitectureSpec::synthetic(8, 3)
                                         : model::ArchitectureSpec::synthetic(12, 4);
        std::vector<int> widths(5), grown(5);
        bool grows = false;
        for (int l = 0; l < 5; ++l) {
            widths[l] = 1 + int(r.next_u64() % 4);
            grown[l] = widths[l] + int(r.next_u64() % 3);
            grows |= grown[l] > widths[l];
        }
        if (!grows) grown[int(r.next_u64() % 5)] += 2;

        model::PlantableNetwork net(spec, widths, rng::derive(90, trial));
        const Tensor4 probe =
            random_tensor({4, 3, spec.input_size, spec.input_size}, rng::derive(91, trial), -1, 1);
        const Tensor4 before = net.forward(probe);
        const std::size_t pc_old = net.param_count();

        net.plant(grown, rng::derive(92, trial));
        const Tensor4 after = net.forward(probe);
        if (before.values() != after.values())
            return fail("trial " + std::to_string(trial) + ": outputs changed at plant time");
        const std::size_t pc_new = net.param_count();
        if (net.trainable_count() != pc_new - pc_old)
            return fail("trial " + std::to_string(trial) + ": trainable count " +
                        std::to_string(net.trainable_count()) + " != " +
                        std::to_string(pc_new - pc_old) + " new parameters");

        // 100 optimizer steps on random data must leave every frozen element
        // bitwise untouched.
        std::vector<std::vector<double>> snapshot;
        for (const auto& p : net.params()) snapshot.push_back(p.value.values());
        trainer::Sgd opt(0.9, 1e-3);
        rng::Prng dr(rng::derive(93, trial));
        for (int step = 0; step < 100; ++step) {
            const Tensor4 batch = random_tensor({6, 3, spec.input_size, spec.input_size},
                                                rng::derive(94, trial, step), -1, 1);
            std::vector<int> labels(6);
            for (auto& l : labels) l = int(dr.next_u64() % std::uint64_t(spec.classes));
            grad::GradTape tape;
            const auto bind = net.forward_on_tape(tape, batch);
            tape.backward(grad::softmax_cross_entropy(tape, bind.logits, labels));
            std::vector<const Tensor4*> grads;
            for (auto id : bind.param_ids) grads.push_back(&tape.grad(id));
            opt.step(net.params(), grads, 0.02);
        }
        for (std::size_t p = 0; p < net.params().size(); ++p) {
            const auto& param = net.params()[p];
            for (std::size_t e = 0; e < param.value.size(); ++e)
                if (param.frozen[e] && param.value[e] != snapshot[p][e])
                    return fail("trial " + std::to_string(trial) + ": frozen element moved in " +
                                param.name);
        }
    }
    return pass("12 random networks: function preserved, freeze masks exact, "
                "frozen elements bitwise stable over 100 steps");
}

// --- criterion 5: distillation-loss identities ------------------------------

Outcome criterion_distill() {
    rng::Prng r(55);
    double min_kl = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + int(r.next_u64() % 5);
        const int k = 2 + int(r.next_u64() % 11);
        const Tensor4 a = random_tensor({n, k, 1, 1}, rng::derive(13, trial, 0), -4, 4);
        const Tensor4 b = random_tensor({n, k, 1, 1}, rng::derive(13, trial, 1), -4, 4);

        if (distill::kl_value(a, a) != 0.0)
            return fail("KL(p||p) != 0 on trial " + std::to_string(trial));
        const double kl = distill::kl_value(a, b);
        min_kl = std::min(min_kl, kl);
        if (kl < 0.0) return fail("negative KL on trial " + std::to_string(trial));

        std::vector<int> labels(n);
        for (auto& l : labels) l = int(r.next_u64() % std::uint64_t(k));
        const double ce = distill::cross_entropy_value(b, labels);
        distill::LossConfig cfg;
        for (double lambda : {0.0, 0.25, 0.5, 0.75, 1.0, r.next_double()}) {
            cfg.lambda = lambda;
            const double mixed = distill::combined_value(b, a, labels, cfg);
            const double want = lambda * ce + (1.0 - lambda) * kl;
            if (std::fabs(mixed - want) > 1e-12)
                return fail("combined loss is not affine in lambda at " + fmt("%.3f", lambda));
        }
        cfg.lambda = 1.0;
        if (distill::combined_value(b, a, labels, cfg) != ce)
            return fail("lambda=1 endpoint differs from pure cross-entropy");
        cfg.lambda = 0.0;
        if (distill::combined_value(b, a, labels, cfg) != kl)
            return fail("lambda=0 endpoint differs from pure divergence");
    }
    return pass("1000 logit pairs: KL(p||p)=0, KL >= 0, mixture affine, endpoints exact");
}

// --- criterion 6: the search loop end to end at desk scale ------------------

Outcome criterion_search() {
    const auto spec = model::ArchitectureSpec::synthetic(8, 4);
    const data::LabeledDataset train = data::make_synthetic(4, 30, 3, 8, 601, 0.5);
    const data::LabeledDataset val = data::make_synthetic(4, 25, 3, 8, 602, 0.5);

    trainer::TrainConfig phase;
    phase.learning_rate = 0.01;
    phase.momentum = 0.9;
    phase.batch_size = 16;

    model::PlantableNetwork teacher(spec, uniform_widths(16), 603);
    phase.epochs = 40;
    phase.seed = 604;
    if (trainer::train(teacher, nullptr, train, val, phase).diverged)
        return fail("teacher training diverged");

    model::PlantableNetwork initial(spec, uniform_widths(2), 605);
    phase.epochs = 20;
    phase.seed = 606;
    if (trainer::train(initial, nullptr, train, val, phase).diverged)
        return fail("initial training diverged");
    const double initial_acc = trainer::evaluate(initial, val, nullptr, nullptr).accuracy;

    search::SearchConfig sc;
    sc.groups = 5;
    sc.channels_per_plant = 2;
    sc.lambda_select = 1.0;
    sc.max_steps = 8;
    sc.seed = 607;
    sc.candidate_training = phase;
    sc.candidate_training.epochs = 5;
    sc.candidate_training.kd = distill::LossConfig{};  // lambda 0: distill only

    const search::SearchResult res = search::run_planting(initial, teacher, train, val, sc);

    double prev = res.initial_val_loss;
    int accepted = 0;
    for (const auto& step : res.steps) {
        if (!step.accepted) continue;
        if (!(step.val_loss < prev))
            return fail("accepted step " + std::to_string(step.step) +
                        " did not lower the validation loss");
        prev = step.val_loss;
        ++accepted;
    }
    const double final_acc = trainer::evaluate(res.network, val, nullptr, nullptr).accuracy;
    if (final_acc < initial_acc)
        return fail("final val accuracy " + fmt("%.3f", final_acc) + " below initial " +
                    fmt("%.3f", initial_acc));
    return pass("terminated after " + std::to_string(res.steps.size()) + " steps (" +
                std::to_string(accepted) + " accepted, losses strictly decreasing), val acc " +
                fmt("%.3f", initial_acc) + " -> " + fmt("%.3f", final_acc));
}

// --- criterion 7: reduced-scale trend on real CIFAR-10 ----------------------

cli::ExperimentConfig reduced_cifar(const std::string& dir, const fs::path& out,
                                    std::uint64_t seed) {
    cli::ExperimentConfig cfg = cli::preset("cifar10");
    cfg.dataset_dir = dir;
    cfg.output_dir = out;
    cfg.seed = seed;
    cfg.split_seed = seed;
    cfg.trials = 1;
    cfg.train_subset = 5000;
    cfg.val_subset = 1000;
    cfg.teacher_channels = uniform_widths(64);
    cfg.training.epochs = 30;
    cfg.training.schedule.milestones = {8, 16, 24};
    cfg.search.candidate_training.epochs = 30;
    cfg.search.candidate_training.schedule.milestones = {8, 16, 24};
    cfg.search.max_steps = 8;
    return cfg;
}

Outcome criterion_reduced_scale() {
    const char* dir = std::getenv("PLANTER_CIFAR10_DIR");
    if (!dir || !*dir) return skip("set PLANTER_CIFAR10_DIR to run (takes hours)");

    const std::size_t baseline32 =
        model::param_count(model::ArchitectureSpec::cifar(10), uniform_widths(32));
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const fs::path out = work_dir(("planter_accept7_s" + std::to_string(seed)).c_str());
        const cli::ExperimentConfig cfg = reduced_cifar(dir, out, seed);
        cli::cmd_train_teacher(cfg);
        cli::cmd_train_initial(cfg);
        cli::cmd_plant(cfg);

        const data::Splits splits = cli::load_experiment_data(cfg);
        const auto initial = model::PlantableNetwork::load(out / "initial_t0.bin");
        const auto planted = model::PlantableNetwork::load(out / "planted_t0.bin");
        const double init_acc =
            100.0 * trainer::evaluate(initial, splits.test, nullptr, nullptr).accuracy;
        const double plant_acc =
            100.0 * trainer::evaluate(planted, splits.test, nullptr, nullptr).accuracy;
        const bool win = plant_acc >= init_acc + 3.0 && planted.param_count() < baseline32;
        wins += win ? 1 : 0;
        detail += "seed " + std::to_string(seed) + ": " + fmt("%.2f", init_acc) + " -> " +
                  fmt("%.2f", plant_acc) + " (" + std::to_string(planted.param_count()) +
                  " params) ";
    }
    if (wins >= 2) return pass(detail + "- " + std::to_string(wins) + "/3 seeds");
    return fail(detail + "- only " + std::to_string(wins) + "/3 seeds");
}

// --- criterion 8: full-protocol reproduction (informational) ----------------

Outcome criterion_full() {
    const char* full = std::getenv("PLANTER_ACCEPT_FULL");
    if (!full || std::string(full) == "0")
        return {false, true, false, "set PLANTER_ACCEPT_FULL=1 plus dataset dirs (days of CPU)"};

    std::string detail;
    bool ok = true;
    if (const char* dir = std::getenv("PLANTER_CIFAR10_DIR"); dir && *dir) {
        cli::ExperimentConfig cfg = cli::preset("cifar10");
        cfg.dataset_dir = dir;
        cfg.output_dir = work_dir("planter_accept8_cifar10");
        cli::cmd_train_teacher(cfg);
        cli::cmd_train_initial(cfg);
        cli::cmd_plant(cfg);
        double acc = 0.0, params = 0.0;
        const data::Splits splits = cli::load_experiment_data(cfg);
        for (int t = 0; t < cfg.trials; ++t) {
            const auto net = model::PlantableNetwork::load(
                cfg.output_dir / ("planted_t" + std::to_string(t) + ".bin"));
            acc += 100.0 * trainer::evaluate(net, splits.test, nullptr, nullptr).accuracy;
            params += double(net.param_count());
        }
        acc /= cfg.trials;
        params /= cfg.trials;
        const bool hit = std::fabs(acc - 84.35) <= 2.0 && params >= 35e3 && params <= 50e3;
        ok = ok && hit;
        detail += "cifar10 " + fmt("%.2f", acc) + "%% at " + fmt("%.1f", params / 1e3) + "K; ";
    } else {
        detail += "cifar10 skipped (no PLANTER_CIFAR10_DIR); ";
    }
    if (const char* dir = std::getenv("PLANTER_STL10_DIR"); dir && *dir) {
        cli::ExperimentConfig cfg = cli::preset("stl10");
        cfg.dataset_dir = dir;
        cfg.output_dir = work_dir("planter_accept8_stl10");
        cli::cmd_train_teacher(cfg);
        cli::cmd_train_initial(cfg);
        cli::cmd_plant(cfg);
        double acc = 0.0, params = 0.0;
        const data::Splits splits = cli::load_experiment_data(cfg);
        for (int t = 0; t < cfg.trials; ++t) {
            const auto net = model::PlantableNetwork::load(
                cfg.output_dir / ("planted_t" + std::to_string(t) + ".bin"));
            acc += 100.0 * trainer::evaluate(net, splits.test, nullptr, nullptr).accuracy;
            params += double(net.param_count());
        }
        acc /= cfg.trials;
        params /= cfg.trials;
        const bool hit = std::fabs(acc - 67.12) <= 2.5 && std::fabs(params - 82.6e3) <= 20e3;
        ok = ok && hit;
        detail += "stl10 " + fmt("%.2f", acc) + "%% at " + fmt("%.1f", params / 1e3) + "K; ";
    } else {
        detail += "stl10 skipped (no PLANTER_STL10_DIR); ";
    }
    Outcome o = ok ? pass(detail) : fail(detail);
    o.gating = false;
    return o;
}

// --- criterion 9: bitwise determinism of every command ----------------------

cli::ExperimentConfig tiny_experiment(const fs::path& out) {
    cli::ExperimentConfig cfg = cli::preset("synthetic");
    cfg.output_dir = out;
    cfg.synthetic.train_per_class = 8;
    cfg.synthetic.val_per_class = 4;
    cfg.synthetic.test_per_class = 4;
    cfg.training.epochs = 3;
    cfg.training.batch_size = 4;
    cfg.search.candidate_training.epochs = 2;
    cfg.search.candidate_training.batch_size = 4;
    cfg.search.max_steps = 2;
    return cfg;
}

void run_all_commands(const cli::ExperimentConfig& cfg) {
    cli::cmd_train_teacher(cfg);
    cli::cmd_train_initial(cfg);
    cli::cmd_train_baseline(cfg, uniform_widths(4), cli::BaselineLoss::kd);
    cli::cmd_plant(cfg);
    cli::cmd_report(cfg.output_dir);
}

std::map<std::string, std::vector<std::uint8_t>> dir_contents(const fs::path& root) {
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            files[fs::relative(entry.path(), root).generic_string()] =
                io::read_file_bytes(entry.path());
    return files;
}

Outcome criterion_determinism() {
    const fs::path a = work_dir("planter_accept9_a");
    const fs::path b = work_dir("planter_accept9_b");
    run_all_commands(tiny_experiment(a));
    run_all_commands(tiny_experiment(b));

    const auto files_a = dir_contents(a);
    {
        const auto files_b = dir_contents(b);
        if (files_a.size() != files_b.size())
            return fail("runs produced different file sets");
        for (const auto& [rel, bytes] : files_a) {
            const auto it = files_b.find(rel);
            if (it == files_b.end()) return fail(rel + " missing from the second run");
            if (it->second != bytes) return fail(rel + " differs between fresh runs");
        }
    }

    // Rerunning over existing artifacts (including a resumed search) must
    // leave every byte alone.
    run_all_commands(tiny_experiment(a));
    for (const auto& [rel, bytes] : dir_contents(a)) {
        const auto it = files_a.find(rel);
        if (it == files_a.end() || it->second != bytes)
            return fail(rel + " changed when commands were rerun in place");
    }
    return pass(std::to_string(files_a.size()) +
                " artifacts bitwise identical across fresh runs and in-place reruns, "
                "2 worker threads");
}

}  // namespace

int main() {
    // Criteria run with two threads so candidate evaluation actually executes
    // in parallel; determinism must hold regardless.
    threading::set_thread_count(2);

    struct Criterion {
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria = {
        {"parameter-count fidelity", criterion_params},
        {"gradient correctness vs finite differences", criterion_gradients},
        {"kernel equivalence vs naive oracles", criterion_kernels},
        {"planting invariants", criterion_planting},
        {"distillation-loss identities", criterion_distill},
        {"search loop end to end at desk scale", criterion_search},
        {"reduced-scale trend on CIFAR-10", criterion_reduced_scale},
        {"full-protocol reproduction (informational)", criterion_full},
        {"bitwise determinism of every command", criterion_determinism},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].fn();
        } catch (const std::exception& e) {
            o = fail(std::string("unexpected error: ") + e.what());
        }
        const char* tag = o.skipped ? "SKIP" : (o.pass ? "PASS" : "FAIL");
        if (!o.pass && !o.skipped && o.gating) ++failures;
        std::printf("[%s] %zu. %s — %s\n", tag, i + 1, criteria[i].name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures;
}
