#pragma once

#include "json.hpp"

#include "gendx/dataset.hpp"

namespace gendx::detail {

nlohmann::json synth_to_json(const SynthConfig& cfg);
SynthConfig synth_from_json(const nlohmann::json& j);
nlohmann::json provenance_to_json(const Provenance& p);
Provenance provenance_from_json(const nlohmann::json& j);

}  // namespace gendx::detail
