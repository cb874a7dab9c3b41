#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "planter/data.hpp"
#include "planter/distill.hpp"
#include "planter/model.hpp"
#include "planter/trainer.hpp"
#include "test_support.hpp"

using namespace planter;
using model::ArchitectureSpec;
using model::PlantableNetwork;
using testsup::close;
using trainer::TrainConfig;

namespace {

ArchitectureSpec tiny() { return ArchitectureSpec::synthetic(8, 2); }

data::LabeledDataset toy_data(std::uint64_t seed, int per_class = 10) {
    return data::make_synthetic(2, per_class, 3, 8, seed);
}

TrainConfig toy_config(int epochs, double lr = 0.005) {
    TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.batch_size = 8;
    cfg.epochs = epochs;
    cfg.seed = 11;
    return cfg;
}

model::ParamTensor scalar_param(double w, bool frozen = false) {
    model::ParamTensor p;
    p.name = "w";
    p.value = Tensor4::scalar(w);
    p.frozen = {std::uint8_t(frozen ? 1 : 0)};
    return p;
}

}  // namespace

TEST_CASE("lr schedule decays at each passed milestone") {
    TrainConfig cifar;
    cifar.learning_rate = 0.01;
    cifar.schedule = {{40, 80, 120}, 0.2};
    CHECK(trainer::lr_at_epoch(cifar, 0) == 0.01);
    CHECK(trainer::lr_at_epoch(cifar, 39) == 0.01);
    CHECK(close(trainer::lr_at_epoch(cifar, 40), 0.002, 1e-15));
    CHECK(close(trainer::lr_at_epoch(cifar, 80), 0.0004, 1e-15));
    CHECK(close(trainer::lr_at_epoch(cifar, 121), 8e-5, 1e-15));

    TrainConfig stl;  // 100 epochs, decays at floor(E/3) and 2*floor(E/3)
    stl.learning_rate = 0.01;
    stl.schedule = {{33, 66}, 0.1};
    CHECK(trainer::lr_at_epoch(stl, 32) == 0.01);
    CHECK(close(trainer::lr_at_epoch(stl, 34), 0.001, 1e-15));
    CHECK(close(trainer::lr_at_epoch(stl, 99), 0.0001, 1e-15));

    CHECK_THROWS_AS(trainer::lr_at_epoch(cifar, -1), std::invalid_argument);
}

TEST_CASE("config validation") {
    TrainConfig cfg = toy_config(1);
    CHECK_NOTHROW(cfg.validate());
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1);
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1);
    cfg.weight_decay = -1e-4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1);
    cfg.schedule = {{10, 10}, 0.2};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.schedule = {{10, 20}, 0.0};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(1);
    cfg.kd = distill::LossConfig{1.5, distill::KlVariant::standard};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("sgd two-step hand arithmetic") {
    std::vector<model::ParamTensor> params{scalar_param(1.0)};
    const Tensor4 g = Tensor4::scalar(1.0);

    trainer::Sgd plain(0.9, 0.0);
    plain.step(params, {&g}, 0.1);
    CHECK(params[0].value[0] == 0.9);  // v = 1, w = 1 - 0.1
    plain.step(params, {&g}, 0.1);
    CHECK(close(params[0].value[0], 0.71, 1e-15));  // v = 1.9

    params[0].value[0] = 1.0;
    trainer::Sgd decayed(0.9, 0.1);
    decayed.step(params, {&g}, 0.1);
    CHECK(close(params[0].value[0], 0.89, 1e-15));  // g' = 1.1
    decayed.step(params, {&g}, 0.1);
    CHECK(close(params[0].value[0], 0.6821, 1e-12));  // v = 0.99 + 1.089
}

TEST_CASE("sgd leaves frozen elements untouched and zero steps are no-ops") {
    std::vector<model::ParamTensor> params;
    model::ParamTensor p;
    p.name = "mixed";
    p.value = Tensor4({1, 2, 1, 1}, {3.5, -1.25});
    p.frozen = {1, 0};
    params.push_back(p);
    params.push_back(scalar_param(2.0, true));  // fully frozen tensor

    const Tensor4 g_mixed({1, 2, 1, 1}, {100.0, 1.0});
    const Tensor4 g_scalar = Tensor4::scalar(100.0);

    trainer::Sgd opt(0.9, 0.01);
    for (int i = 0; i < 100; ++i) opt.step(params, {&g_mixed, &g_scalar}, 0.05);
    CHECK(params[0].value[0] == 3.5);
    CHECK(params[0].value[1] != -1.25);
    CHECK(params[1].value[0] == 2.0);

    // zero gradient, zero decay: bitwise stationary
    std::vector<model::ParamTensor> still{scalar_param(0.75)};
    const Tensor4 zero = Tensor4::scalar(0.0);
    trainer::Sgd idle(0.9, 0.0);
    for (int i = 0; i < 10; ++i) idle.step(still, {&zero}, 0.1);
    CHECK(still[0].value[0] == 0.75);
}

TEST_CASE("weight decay alone follows the scalar recurrence") {
    std::vector<model::ParamTensor> params{scalar_param(1.0)};
    const Tensor4 zero = Tensor4::scalar(0.0);
    trainer::Sgd opt(0.9, 0.05);

    double w = 1.0, v = 0.0;
    for (int i = 0; i < 10; ++i) {
        opt.step(params, {&zero}, 0.1);
        v = 0.9 * v + 0.05 * w;
        w -= 0.1 * v;
        CHECK(params[0].value[0] == w);
    }
    CHECK(w < 1.0);
}

TEST_CASE("sgd rejects mismatched gradients") {
    std::vector<model::ParamTensor> params{scalar_param(1.0)};
    const Tensor4 bad({1, 2, 1, 1});
    trainer::Sgd opt(0.9, 0.0);
    CHECK_THROWS_AS(opt.step(params, {&bad}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(opt.step(params, {}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(trainer::Sgd(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("teacher cache rows match a fresh forward bitwise") {
    PlantableNetwork teacher(tiny(), {4, 4, 4, 4, 4}, 31);
    const Tensor4 images = testsup::random_tensor({7, 3, 8, 8}, 5, -1.0, 1.0);

    const trainer::TeacherCache cache(teacher, images, 3);  // uneven chunks
    CHECK(cache.all().shape() == Shape4{7, 2, 1, 1});

    const std::vector<int> pick{5, 0, 3};
    Tensor4 gathered({3, 3, 8, 8});
    for (int i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 3 * 8 * 8; ++k)
            gathered[std::size_t(i) * 192 + k] = images[std::size_t(pick[i]) * 192 + k];

    const Tensor4 direct = teacher.forward(gathered);
    const Tensor4 cached = cache.rows(pick);
    CHECK(testsup::bitwise_equal(direct.values(), cached.values()));
    CHECK_THROWS_AS(cache.rows({7}), std::out_of_range);
}

TEST_CASE("evaluate is batch-size independent and matches the value helpers") {
    PlantableNetwork net(tiny(), {2, 2, 2, 2, 2}, 3);
    PlantableNetwork teacher(tiny(), {4, 4, 4, 4, 4}, 4);
    const auto ds = toy_data(21, 4);  // 8 samples

    const trainer::TeacherCache cache(teacher, ds.images);
    const distill::LossConfig kd{0.25, distill::KlVariant::standard};

    const auto whole = trainer::evaluate(net, ds, &cache.all(), &kd, 64);
    const auto chunked = trainer::evaluate(net, ds, &cache.all(), &kd, 3);
    CHECK(close(whole.loss, chunked.loss, 1e-12));
    CHECK(close(whole.ce, chunked.ce, 1e-12));
    CHECK(close(whole.kl, chunked.kl, 1e-12));
    CHECK(whole.accuracy == chunked.accuracy);

    // one full batch reduces to the distill value helpers
    const Tensor4 logits = net.forward(ds.images);
    CHECK(whole.ce == distill::cross_entropy_value(logits, ds.labels));
    CHECK(whole.kl == distill::kl_value(cache.all(), logits));
    CHECK(close(whole.loss, 0.25 * whole.ce + 0.75 * whole.kl, 1e-15));
    CHECK(whole.accuracy == double(distill::correct_count(logits, ds.labels)) / 8.0);

    const auto plain = trainer::evaluate(net, ds, nullptr, nullptr);
    CHECK(plain.loss == plain.ce);
    CHECK(plain.kl == 0.0);

    CHECK_THROWS_AS(trainer::evaluate(net, ds, &cache.all(), nullptr), std::invalid_argument);
    const trainer::TeacherCache short_cache(teacher, testsup::random_tensor({2, 3, 8, 8}, 1));
    CHECK_THROWS_AS(trainer::evaluate(net, ds, &short_cache.all(), &kd), std::invalid_argument);
}

TEST_CASE("training reduces the loss on separable data") {
    PlantableNetwork net(tiny(), {2, 2, 2, 2, 2}, 7);
    const auto train_ds = toy_data(100);
    const auto val_ds = toy_data(101, 5);

    const auto before = trainer::evaluate(net, val_ds, nullptr, nullptr);
    const auto res = trainer::train(net, nullptr, train_ds, val_ds, toy_config(5));
    REQUIRE(!res.diverged);
    REQUIRE(res.log.size() == 5);
    CHECK(res.log.back().train_loss < res.log.front().train_loss);
    CHECK(res.final_val_loss() < before.loss);
    for (const auto& e : res.log) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.lr == 0.005);
    }

    const std::string csv = res.csv();
    CHECK(csv.rfind("epoch,lr,train_loss,train_acc,val_loss,val_acc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("distillation training runs and needs its teacher") {
    PlantableNetwork teacher(tiny(), {4, 4, 4, 4, 4}, 41);
    PlantableNetwork net(tiny(), {2, 2, 2, 2, 2}, 42);
    const auto train_ds = toy_data(200);
    const auto val_ds = toy_data(201, 5);

    TrainConfig cfg = toy_config(2);
    cfg.kd = distill::LossConfig{0.5, distill::KlVariant::standard};
    CHECK_THROWS_AS(trainer::train(net, nullptr, train_ds, val_ds, cfg), std::invalid_argument);

    const std::string teacher_before = teacher.fingerprint();
    const auto res = trainer::train(net, &teacher, train_ds, val_ds, cfg);
    CHECK(!res.diverged);
    CHECK(res.log.size() == 2);
    CHECK(std::isfinite(res.final_val_loss()));
    CHECK(teacher.fingerprint() == teacher_before);

    // a geometry-mismatched teacher is rejected up front
    PlantableNetwork wrong(ArchitectureSpec::synthetic(16, 2), {4, 4, 4, 4, 4}, 43);
    CHECK_THROWS_AS(trainer::train(net, &wrong, train_ds, val_ds, cfg), std::invalid_argument);
}

TEST_CASE("lambda = 1 distillation equals plain cross-entropy training") {
    const auto train_ds = toy_data(300);
    const auto val_ds = toy_data(301, 5);

    PlantableNetwork a(tiny(), {2, 2, 2, 2, 2}, 9);
    TrainConfig ce_cfg = toy_config(2);
    const auto ce_res = trainer::train(a, nullptr, train_ds, val_ds, ce_cfg);

    PlantableNetwork b(tiny(), {2, 2, 2, 2, 2}, 9);
    TrainConfig kd_cfg = toy_config(2);
    kd_cfg.kd = distill::LossConfig{1.0, distill::KlVariant::standard};
    const auto kd_res = trainer::train(b, nullptr, train_ds, val_ds, kd_cfg);

    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(ce_res.csv() == kd_res.csv());
}

TEST_CASE("frozen parameters survive a whole training run bitwise") {
    PlantableNetwork teacher(tiny(), {6, 6, 6, 6, 6}, 51);
    PlantableNetwork net(tiny(), {2, 2, 2, 2, 2}, 52);
    net.plant({2, 4, 4, 2, 2}, 53);  // freezes everything pre-existing

    std::vector<std::vector<double>> before;
    for (const auto& p : net.params()) before.push_back(p.value.values());

    TrainConfig cfg = toy_config(2);
    cfg.kd = distill::LossConfig{0.5, distill::KlVariant::standard};
    cfg.weight_decay = 1e-2;  // decay must not leak into frozen elements either
    const auto res = trainer::train(net, &teacher, toy_data(400), toy_data(401, 5), cfg);
    REQUIRE(!res.diverged);

    std::size_t frozen_checked = 0, trainable_changed = 0;
    for (std::size_t i = 0; i < net.params().size(); ++i) {
        const auto& p = net.params()[i];
        for (std::size_t e = 0; e < p.value.size(); ++e) {
            if (p.frozen[e]) {
                CHECK(p.value[e] == before[i][e]);
                ++frozen_checked;
            } else if (p.value[e] != before[i][e]) {
                ++trainable_changed;
            }
        }
    }
    CHECK(frozen_checked > 0);
    CHECK(trainable_changed > 0);
}

TEST_CASE("training is deterministic in seed and config") {
    const auto train_ds = toy_data(500);
    const auto val_ds = toy_data(501, 5);

    PlantableNetwork a(tiny(), {2, 2, 2, 2, 2}, 13);
    PlantableNetwork b(tiny(), {2, 2, 2, 2, 2}, 13);
    const auto ra = trainer::train(a, nullptr, train_ds, val_ds, toy_config(3));
    const auto rb = trainer::train(b, nullptr, train_ds, val_ds, toy_config(3));
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(ra.csv() == rb.csv());

    PlantableNetwork c(tiny(), {2, 2, 2, 2, 2}, 13);
    TrainConfig other = toy_config(3);
    other.seed = 12;  // different shuffles, different trajectory
    trainer::train(c, nullptr, train_ds, val_ds, other);
    CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("divergence is reported, not thrown") {
    PlantableNetwork net(tiny(), {2, 2, 2, 2, 2}, 77);
    net.params()[0].value[0] = 1e308;  // first forward overflows

    const auto res = trainer::train(net, nullptr, toy_data(600), toy_data(601, 5), toy_config(2));
    CHECK(res.diverged);
    CHECK(res.final_val_loss() == std::numeric_limits<double>::infinity());
}

TEST_CASE("huge learning rates diverge within a few epochs") {
    // one step at this rate puts weights near 1e97; the next forward pass
    // overflows partway down the conv stack
    PlantableNetwork net(tiny(), {2, 2, 2, 2, 2}, 78);
    const auto res =
        trainer::train(net, nullptr, toy_data(700), toy_data(701, 5), toy_config(10, 1e100));
    CHECK(res.diverged);
}
