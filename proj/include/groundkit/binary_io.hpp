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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace groundkit::binary {

inline void append_f64le(std::string& out, double value)
{
    auto bits = std::bit_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>(bits & 0xFFU));
        bits >>= 8U;
    }
}

inline void append_f64le(std::string& out, std::span<const double> values)
{
    out.reserve(out.size() + 8 * values.size());
    for (double v : values) {
        append_f64le(out, v);
    }
}

inline auto read_f64le(std::string_view bytes, std::size_t offset) -> double
{
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) {
        bits = (bits << 8U) | static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]);
    }
    return std::bit_cast<double>(bits);
}

/// Whole file as bytes; throws DataError when unreadable.
auto read_file(const std::filesystem::path& path) -> std::string;
/// Replaces the file's contents; throws DataError on failure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

} // namespace groundkit::binary
