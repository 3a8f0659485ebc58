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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace groundkit {

/// Greedy longest-match WordPiece over a fixed vocabulary.
class Tokenizer {
public:
    static constexpr std::size_t default_max_len = 64;
    static constexpr std::size_t max_word_chars = 100;

    Tokenizer(std::span<const std::string> vocab, std::string_view unk = "[UNK]",
              std::size_t max_len = default_max_len);

    [[nodiscard]] auto tokenize(std::string_view text) const -> std::vector<std::size_t>;

    [[nodiscard]] auto vocab_size() const noexcept -> std::size_t { return tokens_.size(); }
    [[nodiscard]] auto unk_index() const noexcept -> std::size_t { return unk_; }
    [[nodiscard]] auto max_len() const noexcept -> std::size_t { return max_len_; }
    [[nodiscard]] auto index_of(std::string_view token) const -> std::optional<std::size_t>;
    [[nodiscard]] auto token(std::size_t index) const -> const std::string&
    {
        return tokens_.at(index);
    }

private:
    void wordpiece(std::string_view word, std::vector<std::size_t>& out) const;

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t unk_ = 0;
    std::size_t max_len_;
};

/// Lowercases ASCII and splits on whitespace, isolating ASCII punctuation.
auto basic_split(std::string_view text) -> std::vector<std::string>;

} // namespace groundkit
