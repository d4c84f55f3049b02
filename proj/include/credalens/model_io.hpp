#pragma once

#include "credalens/learners.hpp"
#include "json.hpp"

namespace credalens::learners {

// One JSON document per model: family, id, hyperparams, seed, width and the
// payload arrays. Reals are written in shortest round-trip form, so a reload
// reproduces predictions bit for bit.
nlohmann::json hyperparams_to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(ModelFamily family, const nlohmann::json& j);

nlohmann::json model_to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& j);

nlohmann::json glm_to_json(const GlmModel& m);
GlmModel glm_from_json(const nlohmann::json& j);

}  // namespace credalens::learners
