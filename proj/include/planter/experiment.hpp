#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "planter/data.hpp"
#include "planter/model.hpp"
#include "planter/search.hpp"
#include "planter/trainer.hpp"

namespace planter::cli {

enum class DatasetKind { cifar10, cifar100, stl10, synthetic };

std::string dataset_name(DatasetKind kind);
DatasetKind dataset_from_name(const std::string& name);

/// Geometry of the generated dataset when dataset == synthetic.
struct SyntheticSpec {
    int classes = 2;
    int image_size = 8;
    int train_per_class = 15;
    int val_per_class = 5;
    int test_per_class = 5;
};

/// One experiment: a dataset, the network widths, and the training recipes
/// for every phase. Loaded from / saved to a JSON file; the presets encode
/// the full protocols.
struct ExperimentConfig {
    std::string name = "custom";
    DatasetKind dataset = DatasetKind::synthetic;
    std::filesystem::path dataset_dir;
    std::filesystem::path output_dir = "out";
    std::uint64_t split_seed = 1;
    std::uint64_t seed = 1;
    int trials = 1;
    /// Cap on the train/val split sizes (0 = use everything); applied by
    /// seeded subsampling, for reduced-scale runs.
    int train_subset = 0;
    int val_subset = 0;
    SyntheticSpec synthetic;

    std::vector<int> teacher_channels;
    std::vector<int> initial_channels;
    std::vector<std::vector<int>> baseline_channels;

    /// Teacher, initial, and baseline phases (cross-entropy; baselines can
    /// also run distilled). Per-phase seeds are derived, so `seed` inside is
    /// ignored.
    trainer::TrainConfig training;
    /// The planting loop, including its per-candidate training run.
    search::SearchConfig search;

    void validate() const;
};

/// Built-in experiment definitions: cifar10, cifar100, stl10, synthetic.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

/// Shrinks every phase's epochs (and milestones) and the train/val subset
/// caps by the given factor in (0, 1]; full runs take hours, scaled ones
/// minutes.
void apply_scale(ExperimentConfig& cfg, double scale);

model::ArchitectureSpec architecture(const ExperimentConfig& cfg);

/// Loads (or generates) the dataset and applies the subset caps.
data::Splits load_experiment_data(const ExperimentConfig& cfg);

/// Identity of the evaluation data: dataset, split seed, sizes, and
/// normalization constants. Reports refuse to average rows across digests.
std::string dataset_digest(const ExperimentConfig& cfg, const data::Splits& splits);

/// One trained network's entry in the final report.
struct ResultRow {
    std::string label;
    std::string loss_func;  // "CELoss" or "KLLoss" (the training objective)
    int trial = 0;
    std::vector<int> channels;
    std::size_t params = 0;
    double test_loss = 0.0;
    double test_acc = 0.0;  // percent
    std::string checkpoint;
    std::string data_digest;
    std::string config_digest;
};

void write_result_row(const std::filesystem::path& output_dir, const ResultRow& row);

enum class BaselineLoss { ce, kd };

// The run modes. Each trains `trials` networks with derived seeds, writes
// checkpoints, per-epoch CSV logs, and result rows under output_dir, and
// returns the checkpoint paths. All of them are deterministic: rerunning
// with the same config rewrites identical artifacts.
std::vector<std::filesystem::path> cmd_train_teacher(const ExperimentConfig& cfg);
std::vector<std::filesystem::path> cmd_train_initial(const ExperimentConfig& cfg);
/// `loss` = ce trains with plain cross-entropy; kd distills from the
/// matching teacher checkpoint (which must exist already).
std::vector<std::filesystem::path> cmd_train_baseline(const ExperimentConfig& cfg,
                                                      const std::vector<int>& channels,
                                                      BaselineLoss loss);
/// Runs the planting search per trial, resuming from the per-trial state
/// directory when one exists. Needs the teacher and initial checkpoints.
std::vector<std::filesystem::path> cmd_plant(const ExperimentConfig& cfg);

/// Aggregates all result rows (mean over trials per label), writes
/// report.csv and report.txt into output_dir, and returns the text table.
std::string cmd_report(const std::filesystem::path& output_dir);

/// "857.5K" / "1.2M" style formatting used by the report.
std::string pretty_params(double params);

}  // namespace planter::cli
