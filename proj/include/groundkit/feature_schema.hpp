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

#include "groundkit/matrix.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace groundkit {

struct CategoricalFeature {
    std::string name;
    std::vector<std::string> values;
};

/// Ordered list of categorical features. Encodings concatenate one
/// one-hot block per feature, in schema order.
class FeatureSchema {
public:
    explicit FeatureSchema(std::vector<CategoricalFeature> features);

    /// The eight lexical grounding features (k = 39).
    static auto grounding() -> const FeatureSchema&;

    [[nodiscard]] auto features() const noexcept -> std::span<const CategoricalFeature>
    {
        return features_;
    }
    [[nodiscard]] auto width() const noexcept -> std::size_t { return width_; }
    [[nodiscard]] auto block_offset(std::size_t feature) const -> std::size_t
    {
        return offsets_.at(feature);
    }
    /// Position of `value` within feature `feature`'s one-hot block.
    [[nodiscard]] auto value_index(std::string_view feature, std::string_view value) const
        -> std::size_t;

private:
    std::vector<CategoricalFeature> features_;
    std::vector<std::size_t> offsets_;
    std::size_t width_ = 0;
};

struct FeatureRecord {
    std::string token;
    std::size_t index = 0;
    std::map<std::string, std::string> features;
};

/// Concatenated one-hot encoding of `record`; exactly one 1 per block.
auto encode_features(const FeatureRecord& record, const FeatureSchema& schema)
    -> std::vector<double>;

enum class ExclusionReason { special, single_char };

auto to_string(ExclusionReason reason) -> std::string_view;

struct VocabEntry {
    std::size_t index = 0;
    std::string token;
};

struct ExcludedToken {
    std::size_t index = 0;
    std::string token;
    ExclusionReason reason = ExclusionReason::special;
};

struct FilteredVocab {
    std::size_t vocab_size = 0;
    std::vector<VocabEntry> tokens;
    std::vector<ExcludedToken> excluded;

    /// mask[t] is true for kept token t.
    [[nodiscard]] auto kept_mask() const -> std::vector<bool>;
};

/// [CLS], [SEP], [PAD], [UNK], [MASK] and [unused*].
auto default_special_patterns() -> std::vector<std::string>;

/// Glob match supporting '*' as "any run of characters".
auto matches_pattern(std::string_view text, std::string_view pattern) -> bool;

/// Drops special tokens and tokens whose visible text (after a leading
/// "##") is a single code point.
auto filter_vocabulary(std::span<const std::string> vocab,
                       std::span<const std::string> special_patterns)
    -> FilteredVocab;
auto filter_vocabulary(std::span<const std::string> vocab) -> FilteredVocab;

struct FeatureMatrix {
    Matrix x;
    std::vector<std::size_t> kept_indices;
    /// Records dropped because their token was filtered out.
    std::vector<std::size_t> ignored_records;
};

auto build_feature_matrix(std::span<const FeatureRecord> records, const FilteredVocab& filtered,
                          const FeatureSchema& schema) -> FeatureMatrix;

// Vocab file: one token per line, index = zero-based line number.
auto read_vocab(const std::filesystem::path& path) -> std::vector<std::string>;
void write_vocab(const std::filesystem::path& path, std::span<const std::string> vocab);

// Feature file: JSON Lines of {"token", "index", "features"}.
auto parse_feature_record(std::string_view line, std::size_t line_number) -> FeatureRecord;
auto format_feature_record(const FeatureRecord& record, const FeatureSchema& schema)
    -> std::string;
auto read_feature_records(const std::filesystem::path& path) -> std::vector<FeatureRecord>;
void write_feature_records(const std::filesystem::path& path,
                           std::span<const FeatureRecord> records, const FeatureSchema& schema);

} // namespace groundkit
