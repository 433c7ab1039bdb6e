// Copyright 2026 The RoadWatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <string>

#include <spdlog/spdlog.h>

namespace roadwatch {

// Routes the default logger to stderr. Level comes from `level`, else the
// ROADWATCH_LOG environment variable, else "warn".
void init_logging(const std::optional<std::string>& level = std::nullopt);

}  // namespace roadwatch
