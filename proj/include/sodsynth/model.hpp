#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sodsynth/autodiff.hpp"
#include "sodsynth/image.hpp"

namespace sodsynth {

/// Small resolution-preserving saliency detector:
/// conv 3->16 / relu / conv 16->16 / relu / conv 16->16 / relu / conv 16->1
/// / sigmoid, all 3x3 stride 1 pad 1. Kernels initialized uniformly in
/// [-sqrt(1/fan_in), +sqrt(1/fan_in)].
class ToyModel {
public:
    ToyModel(); // uninitialized parameters (all zero); use init or load
    explicit ToyModel(std::uint64_t seed);

    /// Forward pass: [3,H,W] image -> [H,W] saliency map in (0,1).
    ad::Variable forward(const ad::Variable& image) const;

    /// Prediction as a plain image (no graph kept).
    GrayImage predict(const RgbImage& image) const;

    std::vector<ad::Variable>& parameters() { return params_; }
    const std::vector<ad::Variable>& parameters() const { return params_; }

    /// Deep copy with fresh leaf Variables holding the same values. Batch
    /// elements each run on a fork so their graphs share no nodes and can
    /// be differentiated concurrently.
    ToyModel fork() const;

    /// FNV-1a over the raw parameter bytes; used to assert weight sharing.
    std::uint64_t parameter_checksum() const;

    static ad::Tensor image_to_tensor(const RgbImage& image);

private:
    std::vector<ad::Variable> params_; // one kernel per conv layer
};

} // namespace sodsynth
