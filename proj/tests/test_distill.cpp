#include <doctest.h>

#include <cmath>
#include <vector>

#include "planter/distill.hpp"
#include "test_support.hpp"

using namespace planter;
using namespace planter::distill;
using testsup::close;
using testsup::numeric_grad;
using testsup::random_tensor;

namespace {
const Tensor4 kTeacher({2, 3, 1, 1}, {0.2, -0.3, 0.5, 1.0, 0.0, -1.0});
const Tensor4 kStudent({2, 3, 1, 1}, {-0.1, 0.4, 0.0, 0.3, 0.3, -0.2});
const std::vector<int> kLabels{2, 0};
}  // namespace

TEST_CASE("kl_value matches independently computed references") {
    CHECK(close(kl_value(kTeacher, kStudent, KlVariant::standard), 0.14781153555792106, 1e-14));
    CHECK(close(kl_value(kTeacher, kStudent, KlVariant::as_printed), -1.0887949670442014, 1e-14));
    CHECK(close(cross_entropy_value(kStudent, kLabels), 1.0904066533363932, 1e-14));
}

TEST_CASE("standard KL is zero at equality and positive otherwise") {
    CHECK(close(kl_value(kTeacher, kTeacher), 0.0, 1e-14));
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_tensor({3, 7, 1, 1}, 100 + trial, -3.0, 3.0);
        const auto b = random_tensor({3, 7, 1, 1}, 200 + trial, -3.0, 3.0);
        CHECK(kl_value(a, b) > 0.0);
    }
}

TEST_CASE("the two variants differ exactly by the teacher entropy term") {
    // standard(a,b) = sum p^L log p^L - printed(a,b)
    const double std_v = kl_value(kTeacher, kStudent, KlVariant::standard);
    const double prn_v = kl_value(kTeacher, kStudent, KlVariant::as_printed);
    const double self = kl_value(kTeacher, kTeacher, KlVariant::as_printed);  // sum p log p
    CHECK(close(std_v, self - prn_v, 1e-13));
}

TEST_CASE("kl tape op value and gradient") {
    grad::GradTape t;
    auto z = t.leaf(kStudent);
    auto kl = kl_divergence(t, z, kTeacher, KlVariant::standard);
    CHECK(close(as_scalar(t.value(kl)), 0.14781153555792106, 1e-14));
    t.backward(kl);
    const std::vector<double> want{-0.03593012566626738, 0.11702194720092465,
                                   -0.08109182153465733, -0.14079461229213552,
                                   0.06946163006787655,  0.07133298222425911};
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(close(t.grad(z)[i], want[i], 1e-14));
}

TEST_CASE("kl gradients match finite differences for both variants") {
    const auto teacher = random_tensor({3, 5, 1, 1}, 31, -2.0, 2.0);
    const auto student0 = random_tensor({3, 5, 1, 1}, 32, -2.0, 2.0);
    for (KlVariant v : {KlVariant::standard, KlVariant::as_printed}) {
        std::vector<Tensor4> xs{student0};
        auto f = [&](const std::vector<Tensor4>& in) {
            grad::GradTape t;
            return as_scalar(t.value(kl_divergence(t, t.leaf(in[0]), teacher, v)));
        };
        grad::GradTape t;
        auto z = t.leaf(student0);
        t.backward(kl_divergence(t, z, teacher, v));
        const Tensor4 num = numeric_grad(f, xs, 0, 1e-6);
        for (std::size_t i = 0; i < num.size(); ++i) CHECK(close(t.grad(z)[i], num[i], 1e-7));
    }
}

TEST_CASE("printed-variant gradient is the negative of the standard one") {
    grad::GradTape t;
    auto z1 = t.leaf(kStudent);
    t.backward(kl_divergence(t, z1, kTeacher, KlVariant::standard));
    grad::GradTape t2;
    auto z2 = t2.leaf(kStudent);
    t2.backward(kl_divergence(t2, z2, kTeacher, KlVariant::as_printed));
    for (std::size_t i = 0; i < 6; ++i) CHECK(t.grad(z1)[i] == -t2.grad(z2)[i]);
}

TEST_CASE("combined loss interpolates between CE and KL") {
    LossConfig cfg;
    cfg.lambda = 0.25;
    CHECK(close(combined_value(kStudent, kTeacher, kLabels, cfg), 0.3834603150025391, 1e-14));

    grad::GradTape t;
    auto z = t.leaf(kStudent);
    auto loss = combined_loss(t, z, kTeacher, kLabels, cfg);
    CHECK(close(as_scalar(t.value(loss)), 0.3834603150025391, 1e-14));

    cfg.lambda = 1.0;
    CHECK(combined_value(kStudent, kTeacher, kLabels, cfg) ==
          cross_entropy_value(kStudent, kLabels));
    cfg.lambda = 0.0;
    CHECK(combined_value(kStudent, kTeacher, kLabels, cfg) == kl_value(kTeacher, kStudent));
}

TEST_CASE("combined loss gradient matches finite differences") {
    const auto teacher = random_tensor({2, 4, 1, 1}, 41, -2.0, 2.0);
    const auto student0 = random_tensor({2, 4, 1, 1}, 42, -2.0, 2.0);
    const std::vector<int> labels{3, 1};
    LossConfig cfg;
    cfg.lambda = 0.7;

    std::vector<Tensor4> xs{student0};
    auto f = [&](const std::vector<Tensor4>& in) {
        grad::GradTape t;
        return as_scalar(t.value(combined_loss(t, t.leaf(in[0]), teacher, labels, cfg)));
    };
    grad::GradTape t;
    auto z = t.leaf(student0);
    t.backward(combined_loss(t, z, teacher, labels, cfg));
    const Tensor4 num = numeric_grad(f, xs, 0, 1e-6);
    for (std::size_t i = 0; i < num.size(); ++i) CHECK(close(t.grad(z)[i], num[i], 1e-7));
}

TEST_CASE("lambda outside [0,1] is rejected") {
    LossConfig cfg;
    cfg.lambda = -0.1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.lambda = 1.1;
    CHECK_THROWS_AS(combined_value(kStudent, kTeacher, kLabels, cfg), std::invalid_argument);
    cfg.lambda = std::nan("");
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected") {
    CHECK_THROWS_AS(kl_value(kTeacher, random_tensor({2, 4, 1, 1}, 1)), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy_value(kStudent, {0}), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy_value(kStudent, {0, 9}), std::invalid_argument);
}

TEST_CASE("correct_count scores argmax hits") {
    const Tensor4 logits({3, 3, 1, 1}, {5, 1, 1,  /* -> 0 */
                                        0, 2, 9,  /* -> 2 */
                                        1, 1, 1}  /* tie -> 0 */);
    CHECK(correct_count(logits, {0, 2, 0}) == 3);
    CHECK(correct_count(logits, {1, 2, 0}) == 2);
    CHECK(correct_count(logits, {1, 0, 2}) == 0);
}
