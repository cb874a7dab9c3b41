// Command-line front end: train the networks of an experiment, run the
// planting search, and aggregate the result tables.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "planter/experiment.hpp"
#include "planter/io.hpp"
#include "planter/threading.hpp"

namespace cli = planter::cli;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string dataset_dir;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int trials = 0;
    double scale = 1.0;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "Experiment config JSON file");
    cmd->add_option("--preset", a.preset, "Built-in experiment: cifar10, cifar100, stl10, synthetic");
    cmd->add_option("--dataset-dir", a.dataset_dir, "Directory with the dataset's binary files");
    cmd->add_option("--out", a.out_dir, "Output directory for checkpoints, logs, and rows");
    cmd->add_option("--seed", a.seed, "Master seed (phases and trials derive from it)")
        ->each([&a](const std::string&) { a.seed_set = true; });
    cmd->add_option("--trials", a.trials, "Number of trials to run")->check(CLI::PositiveNumber);
    cmd->add_option("--scale", a.scale, "Shrink epochs and train/val sizes by this factor")
        ->check(CLI::Range(1e-6, 1.0));
    cmd->add_option("--threads", a.threads, "Worker threads (default: all cores)")
        ->check(CLI::PositiveNumber);
}

cli::ExperimentConfig resolve_config(const CommonArgs& a) {
    if (a.config_path.empty() == a.preset.empty())
        throw CLI::ValidationError("pass exactly one of --config or --preset");
    cli::ExperimentConfig cfg =
        a.preset.empty() ? cli::config_from_json(planter::io::read_file_text(a.config_path))
                         : cli::preset(a.preset);
    if (!a.dataset_dir.empty()) cfg.dataset_dir = a.dataset_dir;
    if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
    if (a.seed_set) cfg.seed = a.seed;
    if (a.trials > 0) cfg.trials = a.trials;
    cli::apply_scale(cfg, a.scale);
    if (a.threads > 0) planter::threading::set_thread_count(a.threads);
    return cfg;
}

std::vector<int> parse_channels(const std::string& text) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        out.push_back(std::stoi(text.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

void print_paths(const std::vector<std::filesystem::path>& paths) {
    for (const auto& p : paths) std::cout << "wrote " << p.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Channel-planting experiments for small CNNs"};
    app.require_subcommand(1);

    CommonArgs teacher_args, initial_args, baseline_args, plant_args;
    std::string baseline_channels, baseline_loss = "ce";
    std::string report_dir;
    std::string config_preset, config_out;

    CLI::App* teacher = app.add_subcommand("train-teacher", "Train the wide teacher network");
    add_common(teacher, teacher_args);

    CLI::App* initial = app.add_subcommand("train-initial", "Train the narrow starting network");
    add_common(initial, initial_args);

    CLI::App* baseline =
        app.add_subcommand("train-baseline", "Train a fixed-width comparison network");
    add_common(baseline, baseline_args);
    baseline->add_option("--channels", baseline_channels,
                         "Comma-separated conv widths, e.g. 16,16,16,16,16")
        ->required();
    baseline->add_option("--loss", baseline_loss, "ce (labels) or kd (distill from the teacher)")
        ->check(CLI::IsMember({"ce", "kd"}));

    CLI::App* plant = app.add_subcommand("plant", "Grow the initial network by channel planting");
    add_common(plant, plant_args);

    CLI::App* report = app.add_subcommand("report", "Average result rows into a table");
    report->add_option("--out", report_dir, "Output directory holding results/")->required();

    CLI::App* make_config =
        app.add_subcommand("make-config", "Write a preset's config JSON for editing");
    make_config->add_option("--preset", config_preset, "Preset name")->required();
    make_config->add_option("--out", config_out, "Path for the JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (teacher->parsed()) {
            print_paths(cli::cmd_train_teacher(resolve_config(teacher_args)));
        } else if (initial->parsed()) {
            print_paths(cli::cmd_train_initial(resolve_config(initial_args)));
        } else if (baseline->parsed()) {
            const auto loss =
                baseline_loss == "kd" ? cli::BaselineLoss::kd : cli::BaselineLoss::ce;
            print_paths(cli::cmd_train_baseline(resolve_config(baseline_args),
                                                parse_channels(baseline_channels), loss));
        } else if (plant->parsed()) {
            print_paths(cli::cmd_plant(resolve_config(plant_args)));
        } else if (report->parsed()) {
            std::cout << cli::cmd_report(report_dir);
        } else if (make_config->parsed()) {
            planter::io::atomic_write_file(config_out,
                                           cli::config_to_json(cli::preset(config_preset)));
            std::cout << "wrote " << config_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
