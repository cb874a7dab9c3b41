#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <stdexcept>
#include <vector>

#include "planter/data.hpp"
#include "planter/io.hpp"
#include "planter/model.hpp"
#include "planter/search.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace planter;
using model::ArchitectureSpec;
using model::PlantableNetwork;
using search::SearchConfig;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ArchitectureSpec tiny() { return ArchitectureSpec::synthetic(8, 2); }

SearchConfig toy_search(int max_steps) {
    SearchConfig cfg;
    cfg.groups = 5;
    cfg.channels_per_plant = 2;
    cfg.lambda_select = 1.0;  // select on plain CE
    cfg.max_steps = max_steps;
    cfg.seed = 5;
    cfg.candidate_training.learning_rate = 0.01;
    cfg.candidate_training.batch_size = 10;
    cfg.candidate_training.epochs = 2;
    cfg.candidate_training.kd = distill::LossConfig{0.5, distill::KlVariant::standard};
    return cfg;
}

fs::path fresh_dir(const char* name) {
    const fs::path d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    return d;
}

}  // namespace

TEST_CASE("group_partition covers the layers contiguously") {
    CHECK(search::group_partition(5, 5) ==
          std::vector<std::vector<int>>{{1}, {2}, {3}, {4}, {5}});
    CHECK(search::group_partition(5, 1) == std::vector<std::vector<int>>{{1, 2, 3, 4, 5}});
    CHECK(search::group_partition(4, 2) == std::vector<std::vector<int>>{{1, 2}, {3, 4}});
    CHECK(search::group_partition(5, 2) == std::vector<std::vector<int>>{{1, 2, 3}, {4, 5}});
    CHECK(search::group_partition(5, 3) == std::vector<std::vector<int>>{{1, 2}, {3, 4}, {5}});

    for (int layers = 1; layers <= 8; ++layers)
        for (int groups = 1; groups <= layers; ++groups) {
            const auto part = search::group_partition(layers, groups);
            REQUIRE(int(part.size()) == groups);
            int next = 1;
            for (const auto& g : part) {
                CHECK(!g.empty());
                for (int l : g) CHECK(l == next++);
            }
            CHECK(next == layers + 1);
        }

    CHECK_THROWS_AS(search::group_partition(5, 0), std::invalid_argument);
    CHECK_THROWS_AS(search::group_partition(5, 6), std::invalid_argument);
}

TEST_CASE("select_candidates: all groups or a seeded subset") {
    CHECK(search::select_candidates(5, std::nullopt, 1, 0) == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(search::select_candidates(5, 5, 1, 0) == std::vector<int>{0, 1, 2, 3, 4});

    const auto two = search::select_candidates(5, 2, 9, 3);
    CHECK(two.size() == 2);
    CHECK(two[0] < two[1]);
    CHECK(search::select_candidates(5, 2, 9, 3) == two);
    CHECK(search::select_candidates(5, 2, 9, 4) != two);

    CHECK_THROWS_AS(search::select_candidates(5, 6, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(search::select_candidates(5, 0, 1, 0), std::invalid_argument);
}

TEST_CASE("config validation") {
    SearchConfig cfg = toy_search(1);
    CHECK_NOTHROW(cfg.validate(5));
    cfg.groups = 6;
    CHECK_THROWS_AS(cfg.validate(5), std::invalid_argument);
    cfg = toy_search(1);
    cfg.channels_per_plant = 0;
    CHECK_THROWS_AS(cfg.validate(5), std::invalid_argument);
    cfg = toy_search(1);
    cfg.lambda_select = std::numeric_limits<double>::quiet_NaN();  // the unset default
    CHECK_THROWS_AS(cfg.validate(5), std::invalid_argument);
    cfg = toy_search(1);
    cfg.candidate_training.kd.reset();
    CHECK_THROWS_AS(cfg.validate(5), std::invalid_argument);
    cfg = toy_search(1);
    cfg.random_candidates = 6;
    CHECK_THROWS_AS(cfg.validate(5), std::invalid_argument);
}

TEST_CASE("selection loss: zero for a self-distilled net, mean of per-sample losses") {
    PlantableNetwork net(tiny(), {3, 3, 3, 3, 3}, 17);
    const auto val = data::make_synthetic(2, 10, 3, 8, 900);

    const trainer::TeacherCache self_cache(net, val.images);
    const distill::LossConfig pure_kl{0.0, distill::KlVariant::standard};
    CHECK(search::selection_loss(net, self_cache.all(), val, pure_kl) == 0.0);

    PlantableNetwork teacher(tiny(), {5, 5, 5, 5, 5}, 18);
    const trainer::TeacherCache cache(teacher, val.images);
    const distill::LossConfig mixed{0.3, distill::KlVariant::standard};
    const double whole = search::selection_loss(net, cache.all(), val, mixed);

    double sum = 0.0;
    for (int i = 0; i < val.size(); ++i) {
        const auto one = data::gather(val, {i});
        const Tensor4 logits = net.forward(one.images);
        const double ce = distill::cross_entropy_value(logits, one.labels);
        const double kl = distill::kl_value(cache.rows({i}), logits);
        sum += 0.3 * ce + 0.7 * kl;
    }
    CHECK(testsup::close(whole, sum / val.size(), 1e-12));
}

TEST_CASE("planting search grows the network and improves validation loss") {
    PlantableNetwork initial(tiny(), {2, 2, 2, 2, 2}, 21);
    PlantableNetwork teacher(tiny(), {8, 8, 8, 8, 8}, 22);
    const auto train_ds = data::make_synthetic(2, 15, 3, 8, 910);
    const auto val_ds = data::make_synthetic(2, 5, 3, 8, 911);

    const std::string initial_fp = initial.fingerprint();
    const std::string teacher_fp = teacher.fingerprint();
    const SearchConfig cfg = toy_search(3);
    const auto res = search::run_planting(initial, teacher, train_ds, val_ds, cfg);

    REQUIRE(!res.steps.empty());
    CHECK(int(res.steps.size()) <= cfg.max_steps);
    CHECK(res.final_val_loss <= res.initial_val_loss);
    CHECK(!res.resumed);

    // inputs are never mutated
    CHECK(initial.fingerprint() == initial_fp);
    CHECK(teacher.fingerprint() == teacher_fp);

    double last = res.initial_val_loss;
    std::vector<int> channels = initial.channels();
    for (const auto& s : res.steps) {
        REQUIRE(s.candidates.size() == 5);
        if (s.accepted) {
            CHECK(s.val_loss < last);  // accepted losses strictly decrease
            last = s.val_loss;
            channels[s.chosen_group] += cfg.channels_per_plant;  // G=5: singleton groups
        }
        CHECK(s.channels == channels);
        CHECK(s.parameter_count == model::param_count(tiny(), channels));
    }
    CHECK(res.steps.front().accepted);  // training new capacity must beat an untrained start
    CHECK(res.network.channels() == channels);
    // the search stops by rejection or by budget, never silently
    if (int(res.steps.size()) < cfg.max_steps) CHECK(!res.steps.back().accepted);

    // identical inputs give an identical search, step for step
    const auto rerun = search::run_planting(initial, teacher, train_ds, val_ds, cfg);
    CHECK(rerun.network.fingerprint() == res.network.fingerprint());
    CHECK(search::step_log_csv(rerun.steps) == search::step_log_csv(res.steps));
}

TEST_CASE("max_steps = 0 returns the initial network untouched") {
    PlantableNetwork initial(tiny(), {2, 2, 2, 2, 2}, 31);
    PlantableNetwork teacher(tiny(), {4, 4, 4, 4, 4}, 32);
    const auto ds = data::make_synthetic(2, 5, 3, 8, 920);

    const auto res = search::run_planting(initial, teacher, ds, ds, toy_search(0));
    CHECK(res.steps.empty());
    CHECK(res.network.fingerprint() == initial.fingerprint());
    CHECK(res.final_val_loss == res.initial_val_loss);
}

TEST_CASE("diverged candidates are infinitely bad and stop the search") {
    PlantableNetwork initial(tiny(), {2, 2, 2, 2, 2}, 41);
    PlantableNetwork teacher(tiny(), {4, 4, 4, 4, 4}, 42);
    const auto ds = data::make_synthetic(2, 5, 3, 8, 930);

    SearchConfig cfg = toy_search(3);
    cfg.candidate_training.learning_rate = 1e200;  // every candidate blows up
    const fs::path dir = fresh_dir("planter_search_diverge");
    const auto res = search::run_planting(initial, teacher, ds, ds, cfg, dir);

    REQUIRE(res.steps.size() == 1);
    CHECK(!res.steps[0].accepted);
    for (const auto& c : res.steps[0].candidates) {
        CHECK(c.diverged);
        CHECK(c.val_loss == kInf);
    }
    CHECK(res.network.fingerprint() == initial.fingerprint());

    // the exported logs carry the divergence markers
    const std::string csv = io::read_file_text(dir / "step_log.csv");
    CHECK(csv.find("inf") != std::string::npos);
    const auto json = nlohmann::json::parse(io::read_file_text(dir / "step_log.json"));
    CHECK(json[0]["candidates"][0]["diverged"] == true);
    CHECK(json[0]["candidates"][0]["val_loss"].is_null());

    // a finished no-improvement state resumes to the same answer without work
    const auto resumed = search::run_planting(initial, teacher, ds, ds, cfg, dir);
    CHECK(resumed.resumed);
    CHECK(resumed.steps.size() == 1);
    CHECK(resumed.network.fingerprint() == initial.fingerprint());
    CHECK(resumed.final_val_loss == res.final_val_loss);
}

TEST_CASE("a checkpointed search continues to the same result as a fresh one") {
    PlantableNetwork initial(tiny(), {2, 2, 2, 2, 2}, 51);
    PlantableNetwork teacher(tiny(), {6, 6, 6, 6, 6}, 52);
    const auto train_ds = data::make_synthetic(2, 10, 3, 8, 940);
    const auto val_ds = data::make_synthetic(2, 5, 3, 8, 941);

    // reference: a straight two-step run
    SearchConfig cfg = toy_search(2);
    const auto whole = search::run_planting(initial, teacher, train_ds, val_ds, cfg);

    // same run split across two invocations via the state directory
    const fs::path dir = fresh_dir("planter_search_resume");
    SearchConfig first = cfg;
    first.max_steps = 1;
    const auto part1 = search::run_planting(initial, teacher, train_ds, val_ds, first, dir);
    CHECK(!part1.resumed);
    CHECK(part1.steps.size() == 1);

    const auto part2 = search::run_planting(initial, teacher, train_ds, val_ds, cfg, dir);
    CHECK(part2.resumed);
    CHECK(part2.steps.size() == whole.steps.size());
    CHECK(search::step_log_csv(part2.steps) == search::step_log_csv(whole.steps));
    CHECK(part2.network.fingerprint() == whole.network.fingerprint());
    CHECK(part2.final_val_loss == whole.final_val_loss);

    // a state directory from a different run is refused
    SearchConfig other = cfg;
    other.seed = 99;
    CHECK_THROWS_AS(search::run_planting(initial, teacher, train_ds, val_ds, other, dir),
                    io::IoError);
}

TEST_CASE("step logs serialize to csv and json") {
    std::vector<search::StepLog> steps(2);
    steps[0] = {0, {{0, 0.5, false}, {1, kInf, true}}, 0, true, {4, 2, 2, 2, 2}, 1234, 0.5};
    steps[1] = {1, {{0, 0.7, false}, {1, 0.6, false}}, 1, false, {4, 2, 2, 2, 2}, 1234, 0.5};

    CHECK(search::step_log_csv(steps) ==
          "step,evaluated_groups,group_val_losses,chosen_group,accepted,channels,param_count,"
          "val_loss\n"
          "0,0;1,0.5;inf,0,1,4;2;2;2;2,1234,0.5\n"
          "1,0;1,0.7;0.6,1,0,4;2;2;2;2,1234,0.5\n");

    const auto json = nlohmann::json::parse(search::step_log_json(steps));
    REQUIRE(json.size() == 2);
    CHECK(json[0]["step"] == 0);
    CHECK(json[0]["accepted"] == true);
    CHECK(json[0]["chosen_group"] == 0);
    CHECK(json[0]["channels"] == nlohmann::json({4, 2, 2, 2, 2}));
    CHECK(json[0]["param_count"] == 1234);
    CHECK(json[0]["candidates"][1]["val_loss"].is_null());
    CHECK(json[1]["accepted"] == false);
    CHECK(json[1]["candidates"][1]["val_loss"] == 0.6);
}
