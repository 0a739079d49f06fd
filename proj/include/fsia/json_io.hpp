/* Copyright 2026 The fsia Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// JSON conversions shared by the checkpoint header, manifests and run
// directories.

#pragma once

#include "json.hpp"

#include "fsia/imaging.hpp"
#include "fsia/model.hpp"

namespace fsia {

void to_json(nlohmann::json& j, const ConvLayerConfig& c);
void from_json(const nlohmann::json& j, ConvLayerConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Boxes serialize as [x_min, y_min, x_max, y_max].
void to_json(nlohmann::json& j, const Box& b);
void from_json(const nlohmann::json& j, Box& b);

}  // namespace fsia
