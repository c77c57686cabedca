#pragma once

#include "gendx/dataset.hpp"

namespace gendx {

/// Generates a two-class cohort with known discriminative regions.
///
/// Each frame is x = A_y z + mu_y + noise_scale * eps with z ~ N(0, I).  The
/// classes share the mixing matrix and mean except on the configured
/// discriminative regions, where the means differ by effect_size and (when
/// class_specific_mixing is set) the mixing rows are redrawn per class.
/// Finally every region is z-normalized against the pooled cohort so no
/// single region dominates by scale; the class difference survives because
/// pooling mixes both classes.
///
/// Subjects are "con-NNN" then "pat-NNN"; labels 0/1.  The returned dataset's
/// provenance carries the full config as ground truth.  Deterministic in the
/// config seed, with per-subject sub-streams.
Dataset synth_generate(const SynthConfig& config);

}  // namespace gendx
