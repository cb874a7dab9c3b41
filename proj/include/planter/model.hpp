#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "planter/tape.hpp"
#include "planter/tensor.hpp"

namespace planter::model {

/// Fixed network skeleton: five 3x3 conv layers (stride 1, zero padding 1,
/// each followed by relu and optionally a 2x2 max pool), then a hidden fully
/// connected layer with relu and a classifier layer. Only the per-layer
/// channel counts vary at runtime; everything else is part of the spec.
struct ArchitectureSpec {
    int input_channels = 3;
    int input_size = 32;              // square inputs
    std::vector<std::uint8_t> pool_after;  // size kConvLayers; 1 = pool follows that conv
    int fc_hidden = 128;
    int classes = 10;

    static constexpr int kConvLayers = 5;

    /// 32x32 inputs, pools after conv 1, 2 and 5.
    static ArchitectureSpec cifar(int classes);
    /// 96x96 inputs, pools after conv 1, 2, 3 and 5.
    static ArchitectureSpec stl10();
    /// Tiny square inputs for synthetic-data runs; pools after conv 1 and 5.
    static ArchitectureSpec synthetic(int input_size, int classes);

    int pool_count() const;
    /// Spatial side length of the conv stack's output.
    int final_spatial() const;
    /// Flattened feature count feeding the hidden fc layer.
    int fc_input_features(int last_conv_channels) const;
    void validate() const;
    bool operator==(const ArchitectureSpec&) const = default;
};

/// One parameter tensor plus its elementwise freeze mask (1 = frozen).
struct ParamTensor {
    std::string name;
    Tensor4 value;
    std::vector<std::uint8_t> frozen;  // same element count as value

    std::size_t trainable_count() const;
    bool any_trainable() const { return trainable_count() > 0; }
};

/// Closed-form parameter count for a channel configuration; matches
/// PlantableNetwork::param_count for the same inputs.
std::size_t param_count(const ArchitectureSpec& spec, const std::vector<int>& channels);

/// A Table-1 style CNN whose conv widths can grow in place. Growing freezes
/// every pre-existing parameter element; newly added elements stay trainable.
/// New output filters are He-uniform initialized, slices that read the new
/// channels in successor layers start at zero, so the planted network maps
/// every input to bitwise the same logits as before the plant.
class PlantableNetwork {
public:
    PlantableNetwork(ArchitectureSpec spec, std::vector<int> channels, std::uint64_t seed,
                     std::string label = "");

    const ArchitectureSpec& spec() const { return spec_; }
    const std::vector<int>& channels() const { return channels_; }
    const std::string& label() const { return label_; }
    void set_label(std::string label) { label_ = std::move(label); }

    /// conv1.weight, conv1.bias, ..., conv5.bias, fc1.weight, fc1.bias,
    /// fc2.weight, fc2.bias — order is fixed and load-bearing for
    /// checkpoints and optimizer state.
    std::vector<ParamTensor>& params() { return params_; }
    const std::vector<ParamTensor>& params() const { return params_; }

    std::size_t param_count() const;
    std::size_t trainable_count() const;

    /// Inference logits, no tape. Batched images (n, input_channels, s, s).
    Tensor4 forward(const Tensor4& images) const;

    struct TapeBinding {
        grad::ValueId logits;
        std::vector<grad::ValueId> param_ids;  // parallel to params()
    };
    /// Records the forward pass on a tape; params become leaves whose
    /// gradients the trainer reads after backward.
    TapeBinding forward_on_tape(grad::GradTape& tape, const Tensor4& images) const;

    /// Grows conv layers to new_channels (elementwise >= current, same conv
    /// count). Freezes all pre-existing elements, He-initializes new output
    /// filters from `seed`, zero-initializes every slice that consumes the
    /// new channels (including the hidden fc columns when conv5 grows).
    void plant(const std::vector<int>& new_channels, std::uint64_t seed);

    /// Versioned binary checkpoint; load() round-trips bitwise.
    void save(const std::filesystem::path& path) const;
    static PlantableNetwork load(const std::filesystem::path& path);

    /// Hash of the serialized network; equal iff the checkpoint bytes are.
    std::string fingerprint() const;

private:
    PlantableNetwork() = default;
    std::vector<std::uint8_t> serialize() const;
    void check_input(const Tensor4& images) const;

    ArchitectureSpec spec_;
    std::vector<int> channels_;
    std::string label_;
    std::vector<ParamTensor> params_;
};

}  // namespace planter::model
