#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "planter/data.hpp"
#include "planter/distill.hpp"
#include "planter/model.hpp"
#include "planter/trainer.hpp"

namespace planter::search {

struct SearchConfig {
    int groups = 5;              // G: contiguous conv-layer groups
    int channels_per_plant = 4;  // n: channels added to every layer of the chosen group
    /// Evaluate only k seeded-random groups per step; empty evaluates all G.
    std::optional<int> random_candidates;
    /// Weight on the hard-label term of the selection loss. Deliberately NaN
    /// until set: experiments must choose it explicitly.
    double lambda_select = std::numeric_limits<double>::quiet_NaN();
    /// Per-candidate training run; its kd field carries the training lambda
    /// and must be set (candidates are trained by distillation).
    trainer::TrainConfig candidate_training;
    int max_steps = 0;
    std::uint64_t seed = 0;

    void validate(int conv_layers) const;
};

/// Contiguous cover of conv layers 1..L by G groups: group g holds the
/// layers l with g*L <= (l-1)*G < (g+1)*L. Every group is non-empty.
std::vector<std::vector<int>> group_partition(int conv_layers, int groups);

/// Groups evaluated at one step: 0..G-1, or a seeded k-subset (ascending).
std::vector<int> select_candidates(int groups, const std::optional<int>& random_k,
                                   std::uint64_t seed, int step);

/// Mean combined loss on the validation split at the selection lambda;
/// teacher_val_logits rows align with val.
double selection_loss(const model::PlantableNetwork& net, const Tensor4& teacher_val_logits,
                      const data::LabeledDataset& val, const distill::LossConfig& cfg);

struct StepCandidate {
    int group = -1;
    double val_loss = std::numeric_limits<double>::infinity();  // +inf when diverged
    bool diverged = false;
};

struct StepLog {
    int step = 0;
    std::vector<StepCandidate> candidates;  // every group evaluated this step
    int chosen_group = -1;                  // arg-min candidate (ties: lowest group)
    bool accepted = false;                  // false on the step that stopped the search
    std::vector<int> channels;              // channel vector after the step
    std::size_t parameter_count = 0;
    double val_loss = 0.0;  // selection loss of the network after the step
};

struct SearchResult {
    model::PlantableNetwork network;
    std::vector<StepLog> steps;
    double initial_val_loss = 0.0;
    double final_val_loss = 0.0;
    bool resumed = false;  // true when a prior checkpointed state was continued
};

/// Algorithm: per step, plant every candidate group in its own copy of the
/// current network, train it against the teacher, and score it on the
/// validation split; adopt the best candidate, or stop when even the best
/// fails to improve. Diverged candidates score +inf. Candidate work is
/// parallelized; per-candidate seeds keep the outcome independent of the
/// execution order.
///
/// With a state_dir, progress is checkpointed after every step (state file,
/// network files, and CSV/JSON step logs) and a matching interrupted run is
/// picked up where it left off. A state_dir holding a different
/// configuration's state is an error.
SearchResult run_planting(const model::PlantableNetwork& initial,
                          const model::PlantableNetwork& teacher,
                          const data::LabeledDataset& train_split,
                          const data::LabeledDataset& val_split, const SearchConfig& cfg,
                          const std::filesystem::path& state_dir = {});

/// The step-log serializations written next to the state file.
std::string step_log_csv(const std::vector<StepLog>& steps);
std::string step_log_json(const std::vector<StepLog>& steps);

}  // namespace planter::search
