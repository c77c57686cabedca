#include "gendx/sampler.hpp"

#include <stdexcept>

namespace gendx {

BalancedSampler::BalancedSampler(const Dataset& dataset, RngStream rng)
    : dataset_(&dataset), rng_(rng) {
    if (!dataset.all_labeled()) {
        throw std::invalid_argument("BalancedSampler: dataset has unlabeled subjects");
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        by_class_[static_cast<std::size_t>(dataset.subject(i).label->value())].push_back(i);
    }
    if (by_class_[0].empty() || by_class_[1].empty()) {
        throw std::invalid_argument("BalancedSampler: dataset must contain both classes");
    }
}

std::vector<BalancedSampler::Draw> BalancedSampler::draw_batch(std::size_t batch_frames) {
    if (batch_frames < 2 || batch_frames % 2 != 0) {
        throw std::invalid_argument("BalancedSampler: batch_frames must be even and >= 2");
    }
    std::vector<Draw> batch;
    batch.reserve(batch_frames);
    const std::size_t per_class = batch_frames / 2;
    for (int cls = 0; cls < 2; ++cls) {
        const std::vector<std::size_t>& pool = by_class_[static_cast<std::size_t>(cls)];
        for (std::size_t i = 0; i < per_class; ++i) {
            const std::size_t subject =
                pool[static_cast<std::size_t>(rng_.uniform() * static_cast<double>(pool.size()))];
            const std::size_t frames = dataset_->subject(subject).frames.rows();
            const std::size_t frame =
                static_cast<std::size_t>(rng_.uniform() * static_cast<double>(frames));
            batch.push_back({subject, frame, ClassLabel::from_int(cls)});
        }
    }
    return batch;
}

}  // namespace gendx
