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

#include <cstdint>
#include <iosfwd>
#include <optional>

namespace groundkit {

enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_data = 2,
    exit_divergence = 3,
};

/// Entry point of the `groundkit` tool.
auto cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) -> int;

/// Seed precedence: flag, then GROUNDKIT_SEED, then `fallback`.
auto resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) -> std::uint64_t;

} // namespace groundkit
