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

#include "groundkit/dataset.hpp"
#include "groundkit/feature_schema.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace groundkit {

/// Topic-structured toy corpus: vocabulary, lexical features and labelled
/// documents.
struct SyntheticSpec {
    /// Groundable pseudo-words; specials, letters and "." come on top.
    std::size_t words = 64;
    std::size_t classes = 4;
    std::size_t examples_per_class = 50;
    std::size_t test_examples_per_class = 20;
    /// Probability that a word copies its topic's value for a feature.
    double coherence = 0.9;
    /// When non-zero, a second task of the same total size with labels
    /// class % coarse_classes.
    std::size_t coarse_classes = 0;
    std::size_t min_doc_len = 6;
    std::size_t max_doc_len = 14;
    /// Probability that a document token comes from its own topic.
    double topic_rate = 0.8;
    std::uint64_t seed = 42;

    void validate() const;
};

auto to_json(const SyntheticSpec& spec) -> nlohmann::ordered_json;
auto synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {}) -> SyntheticSpec;

struct SyntheticData {
    std::vector<std::string> vocab;
    std::vector<FeatureRecord> records;
    /// Topic of every record, parallel to `records`.
    std::vector<std::size_t> topics;
    std::vector<LabeledText> train;
    std::vector<LabeledText> test;
    std::vector<LabeledText> coarse_train;
    std::vector<LabeledText> coarse_test;
};

auto generate_synthetic(const SyntheticSpec& spec) -> SyntheticData;

/// Writes vocab.txt, features.jsonl, train.csv, test.csv and, with a
/// coarse task, coarse_train.csv and coarse_test.csv. Returns the paths.
auto write_synthetic(const SyntheticData& data, const std::filesystem::path& dir)
    -> std::vector<std::filesystem::path>;

} // namespace groundkit
