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

#include "roadwatch/log.h"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>

#include "roadwatch/errors.h"

namespace roadwatch {

void init_logging(const std::optional<std::string>& level) {
    std::string name = "warn";
    if (level) {
        name = *level;
    } else if (const char* env = std::getenv("ROADWATCH_LOG"); env != nullptr && *env != '\0') {
        name = env;
    }
    const auto lvl = spdlog::level::from_str(name);
    if (lvl == spdlog::level::off && name != "off") {
        throw ArgumentError("unknown log level '" + name + "'");
    }
    auto logger = spdlog::get("roadwatch");
    if (!logger) {
        logger = spdlog::stderr_color_mt("roadwatch");
    }
    logger->set_level(lvl);
    logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_default_logger(std::move(logger));
}

}  // namespace roadwatch
