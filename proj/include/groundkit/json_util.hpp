// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "groundkit/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace groundkit::json_util {

/// Fail-closed key check for configuration objects.
inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                                std::string_view context)
{
    if (!j.is_object()) {
        throw ConfigError(std::string(context) + ": expected a JSON object");
    }
    for (const auto& item : j.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
            throw ConfigError(std::string(context) + ": unknown key '" + item.key() + "'");
        }
    }
}

/// Reads `key` into `out` when present; type mismatches become ConfigError.
template <typename T>
void read_optional(const nlohmann::json& j, std::string_view key, T& out, std::string_view context)
{
    const auto it = j.find(std::string(key));
    if (it == j.end()) {
        return;
    }
    try {
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            // Values built in code are signed even when non-negative.
            const bool ok = it->is_number_unsigned()
                || (it->is_number_integer() && it->template get<std::int64_t>() >= 0);
            if (!ok) {
                throw ConfigError(std::string(context) + ": '" + std::string(key)
                                  + "' must be a non-negative integer");
            }
        }
        out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(context) + ": '" + std::string(key) + "': " + e.what());
    }
}

} // namespace groundkit::json_util
