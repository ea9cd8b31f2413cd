// SPDX-License-Identifier: Apache-2.0
//
// JSON mapping for the configuration types. Field names mirror the structs;
// unknown keys are rejected.

#pragma once

#include "envsem/channel.hpp"
#include "envsem/scene.hpp"
#include "envsem/semantics.hpp"

#include <json.hpp>

namespace envsem {

using Json = nlohmann::ordered_json;

Json to_json(const SceneConfig& c);
SceneConfig scene_config_from_json(const Json& j);

Json to_json(const RayTraceConfig& c);
RayTraceConfig ray_config_from_json(const Json& j);

Json to_json(Resolution r);
Resolution resolution_from_json(const Json& j);

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void require_known_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where);

} // namespace envsem
