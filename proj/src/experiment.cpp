#include "planter/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "planter/io.hpp"
#include "planter/rng.hpp"

namespace planter::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed-derivation tags so every phase and trial gets an independent stream.
constexpr std::uint64_t kTeacherTag = 1;
constexpr std::uint64_t kInitialTag = 2;
constexpr std::uint64_t kBaselineTag = 3;
constexpr std::uint64_t kPlantTag = 4;
constexpr std::uint64_t kSubsetTag = 5;

std::string join_ints(const std::vector<int>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(v[i]);
    }
    return out;
}

// "teacher-128" when the width is uniform, "planted-12.20.16.16.12" otherwise.
std::string label_for(const std::string& prefix, const std::vector<int>& channels) {
    bool uniform = std::all_of(channels.begin(), channels.end(),
                               [&](int c) { return c == channels.front(); });
    if (uniform) return prefix + "-" + std::to_string(channels.front());
    return prefix + "-" + join_ints(channels, '.');
}

std::string two_digits(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string four_digits(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

json schedule_to_json(const trainer::LrSchedule& s) {
    return json{{"milestones", s.milestones}, {"factor", s.factor}};
}

trainer::LrSchedule schedule_from_json(const json& j) {
    trainer::LrSchedule s;
    s.milestones = j.at("milestones").get<std::vector<int>>();
    s.factor = j.at("factor").get<double>();
    return s;
}

json training_to_json(const trainer::TrainConfig& t, bool with_kd) {
    json j{{"learning_rate", t.learning_rate}, {"momentum", t.momentum},
           {"weight_decay", t.weight_decay},  {"batch_size", t.batch_size},
           {"epochs", t.epochs},              {"schedule", schedule_to_json(t.schedule)}};
    if (with_kd) {
        const auto& kd = t.kd.value();
        j["lambda_train"] = kd.lambda;
        j["kl_variant"] = kd.kl == distill::KlVariant::as_printed ? "as_printed" : "standard";
    }
    return j;
}

trainer::TrainConfig training_from_json(const json& j, bool with_kd) {
    trainer::TrainConfig t;
    t.learning_rate = j.at("learning_rate").get<double>();
    t.momentum = j.at("momentum").get<double>();
    t.weight_decay = j.at("weight_decay").get<double>();
    t.batch_size = j.at("batch_size").get<int>();
    t.epochs = j.at("epochs").get<int>();
    t.schedule = schedule_from_json(j.at("schedule"));
    if (with_kd) {
        distill::LossConfig kd;
        kd.lambda = j.at("lambda_train").get<double>();
        const std::string variant = j.at("kl_variant").get<std::string>();
        if (variant == "standard") {
            kd.kl = distill::KlVariant::standard;
        } else if (variant == "as_printed") {
            kd.kl = distill::KlVariant::as_printed;
        } else {
            throw std::invalid_argument("unknown kl_variant: " + variant);
        }
        t.kd = kd;
    }
    return t;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

fs::path results_dir(const fs::path& out) { return out / "results"; }

// Identifies the recipe, not where it ran: the same experiment written into
// two different directories produces byte-identical result rows.
std::string recipe_digest(const ExperimentConfig& cfg) {
    ExperimentConfig canon = cfg;
    canon.output_dir.clear();
    canon.dataset_dir.clear();
    return io::fnv1a_hex(config_to_json(canon));
}

std::string row_file_name(const ResultRow& row) {
    return row.label + "_" + row.loss_func + "_t" + std::to_string(row.trial) + ".json";
}

struct PhaseData {
    data::Splits splits;
    std::string digest;
};

PhaseData prepare_data(const ExperimentConfig& cfg) {
    PhaseData d;
    d.splits = load_experiment_data(cfg);
    d.digest = dataset_digest(cfg, d.splits);
    return d;
}

// Shared tail of every training command: fit, refuse divergence, persist.
fs::path train_and_record(const ExperimentConfig& cfg, const PhaseData& data,
                          const std::string& prefix, const std::vector<int>& channels,
                          std::uint64_t tag, int trial,
                          const trainer::TrainConfig& phase_cfg,
                          const model::PlantableNetwork* teacher) {
    const std::string label = label_for(prefix, channels);
    model::PlantableNetwork net(architecture(cfg), channels,
                                rng::derive(cfg.seed, tag, std::uint64_t(trial), 0), label);
    trainer::TrainConfig tc = phase_cfg;
    tc.seed = rng::derive(cfg.seed, tag, std::uint64_t(trial), 1);
    const trainer::TrainResult res =
        trainer::train(net, teacher, data.splits.train, data.splits.val, tc);
    if (res.diverged)
        throw std::runtime_error(label + " trial " + std::to_string(trial) +
                                 " diverged; nothing written");

    const std::string stem = prefix + (prefix == "teacher" || prefix == "initial"
                                           ? ""
                                           : "_" + join_ints(channels, '.')) +
                             (teacher ? "_kd" : "") + "_t" + std::to_string(trial);
    const fs::path ckpt = cfg.output_dir / (stem + ".bin");
    fs::create_directories(cfg.output_dir);
    net.save(ckpt);
    io::atomic_write_file(cfg.output_dir / (stem + "_log.csv"), res.csv());

    const trainer::EvalResult ev =
        trainer::evaluate(net, data.splits.test, nullptr, nullptr);
    ResultRow row;
    row.label = label;
    row.loss_func = teacher ? "KLLoss" : "CELoss";
    row.trial = trial;
    row.channels = net.channels();
    row.params = net.param_count();
    row.test_loss = ev.loss;
    row.test_acc = 100.0 * ev.accuracy;
    row.checkpoint = fs::relative(ckpt, cfg.output_dir).string();
    row.data_digest = data.digest;
    row.config_digest = recipe_digest(cfg);
    write_result_row(cfg.output_dir, row);
    return ckpt;
}

fs::path teacher_checkpoint(const ExperimentConfig& cfg, int trial) {
    return cfg.output_dir / ("teacher_t" + std::to_string(trial) + ".bin");
}

fs::path initial_checkpoint(const ExperimentConfig& cfg, int trial) {
    return cfg.output_dir / ("initial_t" + std::to_string(trial) + ".bin");
}

model::PlantableNetwork load_checkpoint(const fs::path& path, const std::string& role) {
    if (!fs::exists(path))
        throw std::invalid_argument(role + " checkpoint missing: " + path.string() +
                                    " (run the earlier phase first)");
    return model::PlantableNetwork::load(path);
}

}  // namespace

std::string dataset_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::cifar10: return "cifar10";
        case DatasetKind::cifar100: return "cifar100";
        case DatasetKind::stl10: return "stl10";
        case DatasetKind::synthetic: return "synthetic";
    }
    throw std::invalid_argument("unknown dataset kind");
}

DatasetKind dataset_from_name(const std::string& name) {
    if (name == "cifar10") return DatasetKind::cifar10;
    if (name == "cifar100") return DatasetKind::cifar100;
    if (name == "stl10") return DatasetKind::stl10;
    if (name == "synthetic") return DatasetKind::synthetic;
    throw std::invalid_argument("unknown dataset: " + name);
}

void ExperimentConfig::validate() const {
    const int L = model::ArchitectureSpec::kConvLayers;
    require(trials >= 1, "trials must be >= 1");
    require(int(teacher_channels.size()) == L, "teacher_channels needs one width per conv layer");
    require(int(initial_channels.size()) == L, "initial_channels needs one width per conv layer");
    for (const auto& b : baseline_channels)
        require(int(b.size()) == L, "baseline_channels entries need one width per conv layer");
    auto positive = [](const std::vector<int>& v) {
        return std::all_of(v.begin(), v.end(), [](int c) { return c >= 1; });
    };
    require(positive(teacher_channels) && positive(initial_channels),
            "channel widths must be >= 1");
    for (const auto& b : baseline_channels) require(positive(b), "channel widths must be >= 1");
    require(dataset == DatasetKind::synthetic || !dataset_dir.empty(),
            "dataset_dir required for " + dataset_name(dataset));
    require(train_subset >= 0 && val_subset >= 0, "subset caps must be >= 0");
    if (dataset == DatasetKind::synthetic) {
        require(synthetic.classes >= 2, "synthetic.classes must be >= 2");
        require(synthetic.image_size >= 8, "synthetic.image_size must be >= 8");
        require(synthetic.train_per_class >= 1 && synthetic.val_per_class >= 1 &&
                    synthetic.test_per_class >= 1,
                "synthetic per-class counts must be >= 1");
    }
    training.validate();
    search.validate(L);
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig cfg;
    cfg.name = name;

    auto uniform = [](int width) {
        return std::vector<int>(model::ArchitectureSpec::kConvLayers, width);
    };
    auto cifar_schedule = [] {
        trainer::LrSchedule s;
        s.milestones = {40, 80, 120};
        s.factor = 0.2;
        return s;
    };
    auto stl_schedule = [](int epochs) {
        trainer::LrSchedule s;
        s.milestones = {epochs / 3, 2 * (epochs / 3)};
        s.factor = 0.1;
        return s;
    };
    auto base_training = [] {
        trainer::TrainConfig t;
        t.learning_rate = 0.01;
        t.momentum = 0.9;
        t.weight_decay = 5e-4;
        t.batch_size = 128;
        return t;
    };

    if (name == "cifar10" || name == "cifar100") {
        cfg.dataset = name == "cifar10" ? DatasetKind::cifar10 : DatasetKind::cifar100;
        cfg.trials = 3;
        cfg.teacher_channels = uniform(128);
        cfg.initial_channels = uniform(name == "cifar10" ? 8 : 16);
        cfg.baseline_channels = {uniform(16), uniform(32), uniform(64)};
        cfg.training = base_training();
        cfg.training.epochs = 150;
        cfg.training.schedule = cifar_schedule();
        cfg.search.groups = 5;
        cfg.search.channels_per_plant = 4;
        cfg.search.lambda_select = name == "cifar10" ? 1.0 : 0.0;
        cfg.search.max_steps = 16;
        cfg.search.candidate_training = cfg.training;
        cfg.search.candidate_training.weight_decay = 5e-5;
        cfg.search.candidate_training.kd = distill::LossConfig{};  // pure distillation
        return cfg;
    }
    if (name == "stl10") {
        cfg.dataset = DatasetKind::stl10;
        cfg.trials = 3;
        cfg.teacher_channels = uniform(64);
        cfg.initial_channels = uniform(8);
        cfg.baseline_channels = {uniform(16), uniform(32)};
        cfg.training = base_training();
        cfg.training.epochs = 100;
        cfg.training.schedule = stl_schedule(100);
        cfg.search.groups = 5;
        cfg.search.channels_per_plant = 4;
        cfg.search.lambda_select = 0.0;
        cfg.search.max_steps = 16;
        cfg.search.candidate_training = cfg.training;
        cfg.search.candidate_training.kd = distill::LossConfig{};
        return cfg;
    }
    if (name == "synthetic") {
        cfg.dataset = DatasetKind::synthetic;
        cfg.trials = 1;
        cfg.teacher_channels = uniform(16);
        cfg.initial_channels = uniform(2);
        cfg.baseline_channels = {uniform(4), uniform(8)};
        cfg.training = base_training();
        cfg.training.weight_decay = 0.0;
        cfg.training.batch_size = 10;
        cfg.training.epochs = 10;
        cfg.search.groups = 5;
        cfg.search.channels_per_plant = 2;
        cfg.search.lambda_select = 1.0;
        cfg.search.max_steps = 6;
        cfg.search.candidate_training = cfg.training;
        cfg.search.candidate_training.epochs = 5;
        cfg.search.candidate_training.kd = distill::LossConfig{};
        return cfg;
    }
    throw std::invalid_argument("unknown preset: " + name);
}

std::vector<std::string> preset_names() { return {"cifar10", "cifar100", "stl10", "synthetic"}; }

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["dataset"] = dataset_name(cfg.dataset);
    j["dataset_dir"] = cfg.dataset_dir.string();
    j["output_dir"] = cfg.output_dir.string();
    j["split_seed"] = cfg.split_seed;
    j["seed"] = cfg.seed;
    j["trials"] = cfg.trials;
    j["train_subset"] = cfg.train_subset;
    j["val_subset"] = cfg.val_subset;
    if (cfg.dataset == DatasetKind::synthetic) {
        j["synthetic"] = json{{"classes", cfg.synthetic.classes},
                              {"image_size", cfg.synthetic.image_size},
                              {"train_per_class", cfg.synthetic.train_per_class},
                              {"val_per_class", cfg.synthetic.val_per_class},
                              {"test_per_class", cfg.synthetic.test_per_class}};
    }
    j["teacher_channels"] = cfg.teacher_channels;
    j["initial_channels"] = cfg.initial_channels;
    j["baseline_channels"] = cfg.baseline_channels;
    j["training"] = training_to_json(cfg.training, false);
    json s;
    s["groups"] = cfg.search.groups;
    s["channels_per_plant"] = cfg.search.channels_per_plant;
    if (cfg.search.random_candidates)
        s["random_candidates"] = *cfg.search.random_candidates;
    else
        s["random_candidates"] = nullptr;
    s["lambda_select"] = cfg.search.lambda_select;
    s["max_steps"] = cfg.search.max_steps;
    s["candidate_training"] = training_to_json(cfg.search.candidate_training, true);
    j["search"] = s;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        ExperimentConfig cfg;
        cfg.name = j.at("name").get<std::string>();
        cfg.dataset = dataset_from_name(j.at("dataset").get<std::string>());
        cfg.dataset_dir = j.at("dataset_dir").get<std::string>();
        cfg.output_dir = j.at("output_dir").get<std::string>();
        cfg.split_seed = j.at("split_seed").get<std::uint64_t>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.trials = j.at("trials").get<int>();
        cfg.train_subset = j.at("train_subset").get<int>();
        cfg.val_subset = j.at("val_subset").get<int>();
        if (j.contains("synthetic")) {
            const json& s = j.at("synthetic");
            cfg.synthetic.classes = s.at("classes").get<int>();
            cfg.synthetic.image_size = s.at("image_size").get<int>();
            cfg.synthetic.train_per_class = s.at("train_per_class").get<int>();
            cfg.synthetic.val_per_class = s.at("val_per_class").get<int>();
            cfg.synthetic.test_per_class = s.at("test_per_class").get<int>();
        }
        cfg.teacher_channels = j.at("teacher_channels").get<std::vector<int>>();
        cfg.initial_channels = j.at("initial_channels").get<std::vector<int>>();
        cfg.baseline_channels = j.at("baseline_channels").get<std::vector<std::vector<int>>>();
        cfg.training = training_from_json(j.at("training"), false);
        const json& s = j.at("search");
        cfg.search.groups = s.at("groups").get<int>();
        cfg.search.channels_per_plant = s.at("channels_per_plant").get<int>();
        if (s.at("random_candidates").is_null())
            cfg.search.random_candidates.reset();
        else
            cfg.search.random_candidates = s.at("random_candidates").get<int>();
        cfg.search.lambda_select = s.at("lambda_select").get<double>();
        cfg.search.max_steps = s.at("max_steps").get<int>();
        cfg.search.candidate_training = training_from_json(s.at("candidate_training"), true);
        return cfg;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config field missing or mistyped: ") + e.what());
    }
}

void apply_scale(ExperimentConfig& cfg, double scale) {
    require(scale > 0.0 && scale <= 1.0, "--scale must be in (0, 1]");
    if (scale == 1.0) return;

    auto scale_epochs = [&](trainer::TrainConfig& t) {
        t.epochs = std::max(1, int(std::lround(t.epochs * scale)));
        std::vector<int> ms;
        for (int m : t.schedule.milestones) {
            const int sm = std::max(1, int(std::lround(m * scale)));
            if (sm < t.epochs && (ms.empty() || sm > ms.back())) ms.push_back(sm);
        }
        t.schedule.milestones = std::move(ms);
    };
    scale_epochs(cfg.training);
    scale_epochs(cfg.search.candidate_training);

    // Subset caps shrink from their current value, or from the full split
    // size when uncapped.
    int full_train = 0, full_val = 0;
    switch (cfg.dataset) {
        case DatasetKind::cifar10:
        case DatasetKind::cifar100: full_train = 45000, full_val = 5000; break;
        case DatasetKind::stl10: full_train = 5000, full_val = 1000; break;
        case DatasetKind::synthetic:
            full_train = cfg.synthetic.classes * cfg.synthetic.train_per_class;
            full_val = cfg.synthetic.classes * cfg.synthetic.val_per_class;
            break;
    }
    const int base_train = cfg.train_subset > 0 ? cfg.train_subset : full_train;
    const int base_val = cfg.val_subset > 0 ? cfg.val_subset : full_val;
    cfg.train_subset = std::max(2, int(std::lround(base_train * scale)));
    cfg.val_subset = std::max(2, int(std::lround(base_val * scale)));
}

model::ArchitectureSpec architecture(const ExperimentConfig& cfg) {
    switch (cfg.dataset) {
        case DatasetKind::cifar10: return model::ArchitectureSpec::cifar(10);
        case DatasetKind::cifar100: return model::ArchitectureSpec::cifar(100);
        case DatasetKind::stl10: return model::ArchitectureSpec::stl10();
        case DatasetKind::synthetic:
            return model::ArchitectureSpec::synthetic(cfg.synthetic.image_size,
                                                      cfg.synthetic.classes);
    }
    throw std::invalid_argument("unknown dataset kind");
}

data::Splits load_experiment_data(const ExperimentConfig& cfg) {
    data::Splits s;
    switch (cfg.dataset) {
        case DatasetKind::cifar10: s = data::load_cifar10(cfg.dataset_dir, cfg.split_seed); break;
        case DatasetKind::cifar100: s = data::load_cifar100(cfg.dataset_dir, cfg.split_seed); break;
        case DatasetKind::stl10: s = data::load_stl10(cfg.dataset_dir, cfg.split_seed); break;
        case DatasetKind::synthetic: {
            const auto& sp = cfg.synthetic;
            s.train = data::make_synthetic(sp.classes, sp.train_per_class, 3, sp.image_size,
                                           rng::derive(cfg.split_seed, 1));
            s.val = data::make_synthetic(sp.classes, sp.val_per_class, 3, sp.image_size,
                                         rng::derive(cfg.split_seed, 2));
            s.test = data::make_synthetic(sp.classes, sp.test_per_class, 3, sp.image_size,
                                          rng::derive(cfg.split_seed, 3));
            s.train.name = "synthetic-train";
            s.val.name = "synthetic-val";
            s.test.name = "synthetic-test";
            break;
        }
    }
    if (cfg.train_subset > 0 && cfg.train_subset < s.train.size())
        s.train = data::subset(s.train, cfg.train_subset, rng::derive(cfg.split_seed, kSubsetTag, 0));
    if (cfg.val_subset > 0 && cfg.val_subset < s.val.size())
        s.val = data::subset(s.val, cfg.val_subset, rng::derive(cfg.split_seed, kSubsetTag, 1));
    return s;
}

std::string dataset_digest(const ExperimentConfig& cfg, const data::Splits& splits) {
    std::ostringstream os;
    os << dataset_name(cfg.dataset) << '|' << cfg.split_seed << '|' << splits.train.size() << '|'
       << splits.val.size() << '|' << splits.test.size();
    for (int c = 0; c < 3; ++c)
        os << '|' << io::format_double(splits.norm.mean[c]) << '|'
           << io::format_double(splits.norm.stddev[c]);
    return io::fnv1a_hex(os.str());
}

void write_result_row(const fs::path& output_dir, const ResultRow& row) {
    json j;
    j["label"] = row.label;
    j["loss_func"] = row.loss_func;
    j["trial"] = row.trial;
    j["channels"] = row.channels;
    j["params"] = row.params;
    j["test_loss"] = row.test_loss;
    j["test_acc"] = row.test_acc;
    j["checkpoint"] = row.checkpoint;
    j["data_digest"] = row.data_digest;
    j["config_digest"] = row.config_digest;
    fs::create_directories(results_dir(output_dir));
    io::atomic_write_file(results_dir(output_dir) / row_file_name(row), j.dump(2) + "\n");
}

std::vector<fs::path> cmd_train_teacher(const ExperimentConfig& cfg) {
    cfg.validate();
    const PhaseData data = prepare_data(cfg);
    std::vector<fs::path> out;
    for (int t = 0; t < cfg.trials; ++t)
        out.push_back(train_and_record(cfg, data, "teacher", cfg.teacher_channels, kTeacherTag, t,
                                       cfg.training, nullptr));
    return out;
}

std::vector<fs::path> cmd_train_initial(const ExperimentConfig& cfg) {
    cfg.validate();
    const PhaseData data = prepare_data(cfg);
    std::vector<fs::path> out;
    for (int t = 0; t < cfg.trials; ++t)
        out.push_back(train_and_record(cfg, data, "initial", cfg.initial_channels, kInitialTag, t,
                                       cfg.training, nullptr));
    return out;
}

std::vector<fs::path> cmd_train_baseline(const ExperimentConfig& cfg,
                                         const std::vector<int>& channels, BaselineLoss loss) {
    cfg.validate();
    require(int(channels.size()) == model::ArchitectureSpec::kConvLayers,
            "baseline channels need one width per conv layer");
    const PhaseData data = prepare_data(cfg);
    std::vector<fs::path> out;
    for (int t = 0; t < cfg.trials; ++t) {
        trainer::TrainConfig tc = cfg.training;
        if (loss == BaselineLoss::kd) {
            distill::LossConfig kd;
            kd.lambda = 0.0;  // distill only; the hard labels stay out of it
            tc.kd = kd;
            const model::PlantableNetwork teacher =
                load_checkpoint(teacher_checkpoint(cfg, t), "teacher");
            out.push_back(train_and_record(cfg, data, "baseline", channels, kBaselineTag, t, tc,
                                           &teacher));
        } else {
            out.push_back(train_and_record(cfg, data, "baseline", channels, kBaselineTag, t, tc,
                                           nullptr));
        }
    }
    return out;
}

std::vector<fs::path> cmd_plant(const ExperimentConfig& cfg) {
    cfg.validate();
    const PhaseData data = prepare_data(cfg);
    std::vector<fs::path> out;
    for (int t = 0; t < cfg.trials; ++t) {
        const model::PlantableNetwork teacher =
            load_checkpoint(teacher_checkpoint(cfg, t), "teacher");
        const model::PlantableNetwork initial =
            load_checkpoint(initial_checkpoint(cfg, t), "initial");
        search::SearchConfig sc = cfg.search;
        sc.seed = rng::derive(cfg.seed, kPlantTag, std::uint64_t(t), 0);
        const fs::path state_dir = cfg.output_dir / ("plant_t" + std::to_string(t));
        search::SearchResult res =
            search::run_planting(initial, teacher, data.splits.train, data.splits.val, sc,
                                 state_dir);

        const fs::path ckpt = cfg.output_dir / ("planted_t" + std::to_string(t) + ".bin");
        res.network.set_label("planted");
        res.network.save(ckpt);

        const trainer::EvalResult ev =
            trainer::evaluate(res.network, data.splits.test, nullptr, nullptr);
        ResultRow row;
        row.label = "planted";
        row.loss_func = "KLLoss";
        row.trial = t;
        row.channels = res.network.channels();
        row.params = res.network.param_count();
        row.test_loss = ev.loss;
        row.test_acc = 100.0 * ev.accuracy;
        row.checkpoint = fs::relative(ckpt, cfg.output_dir).string();
        row.data_digest = data.digest;
        row.config_digest = recipe_digest(cfg);
        write_result_row(cfg.output_dir, row);
        out.push_back(ckpt);
    }
    return out;
}

std::string pretty_params(double params) {
    char buf[64];
    if (params >= 999950.0)
        std::snprintf(buf, sizeof buf, "%.1fM", params / 1e6);
    else
        std::snprintf(buf, sizeof buf, "%.1fK", params / 1e3);
    return buf;
}

std::string cmd_report(const fs::path& output_dir) {
    const fs::path dir = results_dir(output_dir);
    if (!fs::is_directory(dir))
        throw std::invalid_argument("no results under " + output_dir.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::invalid_argument("no result rows under " + dir.string());

    struct Agg {
        int count = 0;
        double params = 0, loss = 0, acc = 0;
    };
    std::map<std::pair<std::string, std::string>, Agg> groups;
    std::string digest;
    for (const auto& file : files) {
        json j;
        try {
            j = json::parse(io::read_file_text(file));
            const std::string row_digest = j.at("data_digest").get<std::string>();
            if (digest.empty()) digest = row_digest;
            if (row_digest != digest)
                throw std::invalid_argument(file.filename().string() +
                                            " was measured on different data than the other rows; "
                                            "refusing to average");
            if (j.at("test_acc").is_null() || j.at("test_loss").is_null())
                throw std::invalid_argument(file.filename().string() + " has empty metrics");
            Agg& a = groups[{j.at("label").get<std::string>(),
                             j.at("loss_func").get<std::string>()}];
            a.count += 1;
            a.params += j.at("params").get<double>();
            a.loss += j.at("test_loss").get<double>();
            a.acc += j.at("test_acc").get<double>();
        } catch (const json::exception& e) {
            throw std::invalid_argument(file.filename().string() + ": bad result row: " + e.what());
        }
    }

    struct Line {
        std::string label, loss_func;
        int trials;
        double params, loss, acc;
    };
    std::vector<Line> lines;
    for (const auto& [key, a] : groups)
        lines.push_back({key.first, key.second, a.count, a.params / a.count, a.loss / a.count,
                         a.acc / a.count});
    std::sort(lines.begin(), lines.end(), [](const Line& x, const Line& y) {
        if (x.params != y.params) return x.params < y.params;
        if (x.label != y.label) return x.label < y.label;
        return x.loss_func < y.loss_func;
    });

    std::string csv = "network,loss_func,trials,params,test_loss,test_acc\n";
    for (const auto& l : lines)
        csv += l.label + "," + l.loss_func + "," + std::to_string(l.trials) + "," +
               io::format_double(l.params) + "," + four_digits(l.loss) + "," +
               two_digits(l.acc) + "\n";

    std::vector<std::array<std::string, 6>> cells;
    cells.push_back({"Network", "Loss", "Trials", "Params", "Test loss", "Test acc (%)"});
    for (const auto& l : lines)
        cells.push_back({l.label, l.loss_func, std::to_string(l.trials), pretty_params(l.params),
                         four_digits(l.loss), two_digits(l.acc)});
    std::array<std::size_t, 6> width{};
    for (const auto& row : cells)
        for (int c = 0; c < 6; ++c) width[c] = std::max(width[c], row[c].size());
    std::string text;
    for (const auto& row : cells) {
        for (int c = 0; c < 6; ++c) {
            text += row[c];
            if (c + 1 < 6) text += std::string(width[c] - row[c].size() + 2, ' ');
        }
        text += "\n";
    }

    io::atomic_write_file(output_dir / "report.csv", csv);
    io::atomic_write_file(output_dir / "report.txt", text);
    return text;
}

}  // namespace planter::cli
