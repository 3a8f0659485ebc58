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

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace groundkit {

struct LabeledText {
    std::size_t label = 0;
    std::string text;
    /// Line of the file where the record starts (header is line 1).
    std::size_t line = 0;
};

/// Parses "label,text" CSV with RFC 4180 quoting. `source` only decorates
/// error messages.
auto parse_dataset_csv(std::string_view content, std::string_view source = "dataset")
    -> std::vector<LabeledText>;
auto format_dataset_csv(std::span<const LabeledText> rows) -> std::string;

auto load_dataset(const std::filesystem::path& path) -> std::vector<LabeledText>;
void write_dataset(const std::filesystem::path& path, std::span<const LabeledText> rows);

} // namespace groundkit
