#pragma once

#include <array>
#include <vector>

#include "gendx/dataset.hpp"
#include "gendx/rng.hpp"

namespace gendx {

/// Class-balanced frame sampler for training minibatches.
///
/// Each batch holds batch_frames/2 frames per class, drawn with replacement
/// by a two-level scheme: pick a subject uniformly within the class, then a
/// frame uniformly within that subject.  Every subject therefore contributes
/// equally in expectation regardless of recording length, and the class mix
/// is exactly even even for imbalanced cohorts.
class BalancedSampler {
public:
    struct Draw {
        std::size_t subject_index;
        std::size_t frame_index;
        ClassLabel label;
    };

    /// Requires a fully labeled dataset containing both classes.  The sampler
    /// keeps its own stream; it does not own the dataset.
    BalancedSampler(const Dataset& dataset, RngStream rng);

    /// batch_frames must be even and >= 2.
    std::vector<Draw> draw_batch(std::size_t batch_frames);

private:
    const Dataset* dataset_;
    std::array<std::vector<std::size_t>, 2> by_class_;
    RngStream rng_;
};

}  // namespace gendx
