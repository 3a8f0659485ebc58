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

#include "groundkit/tokenizer.hpp"

#include "groundkit/error.hpp"

#include <cctype>

namespace groundkit {

namespace {

auto is_space(unsigned char c) -> bool
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

auto is_punct(unsigned char c) -> bool
{
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96)
        || (c >= 123 && c <= 126);
}

auto code_points(std::string_view word) -> std::size_t
{
    std::size_t n = 0;
    for (unsigned char c : word) {
        if ((c & 0xC0U) != 0x80U) {
            ++n;
        }
    }
    return n;
}

} // namespace

Tokenizer::Tokenizer(std::span<const std::string> vocab, std::string_view unk, std::size_t max_len)
    : tokens_(vocab.begin(), vocab.end())
    , max_len_(max_len)
{
    if (max_len_ == 0) {
        throw ConfigError("tokenizer: max_len must be positive");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        // First occurrence wins on duplicates.
        index_.emplace(tokens_[i], i);
    }
    const auto it = index_.find(std::string(unk));
    if (it == index_.end()) {
        throw ConfigError("tokenizer: unknown-token marker '" + std::string(unk)
                          + "' is not in the vocabulary");
    }
    unk_ = it->second;
}

auto Tokenizer::index_of(std::string_view token) const -> std::optional<std::size_t>
{
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void Tokenizer::wordpiece(std::string_view word, std::vector<std::size_t>& out) const
{
    if (code_points(word) > max_word_chars) {
        out.push_back(unk_);
        return;
    }
    std::vector<std::size_t> pieces;
    std::size_t start = 0;
    std::string candidate;
    while (start < word.size()) {
        std::size_t end = word.size();
        std::optional<std::size_t> found;
        while (end > start) {
            candidate.assign(start > 0 ? "##" : "");
            candidate.append(word.substr(start, end - start));
            if (const auto it = index_.find(candidate); it != index_.end()) {
                found = it->second;
                break;
            }
            // Step back one whole code point.
            --end;
            while (end > start && (static_cast<unsigned char>(word[end]) & 0xC0U) == 0x80U) {
                --end;
            }
        }
        if (!found) {
            out.push_back(unk_);
            return;
        }
        pieces.push_back(*found);
        start = end;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
}

auto Tokenizer::tokenize(std::string_view text) const -> std::vector<std::size_t>
{
    std::vector<std::size_t> out;
    for (const auto& word : basic_split(text)) {
        wordpiece(word, out);
        if (out.size() >= max_len_) {
            out.resize(max_len_);
            break;
        }
    }
    return out;
}

auto basic_split(std::string_view text) -> std::vector<std::string>
{
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            current.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    flush();
    return words;
}

} // namespace groundkit
