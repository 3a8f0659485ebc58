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

#include "groundkit/feature_schema.hpp"

#include "groundkit/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace groundkit {

FeatureSchema::FeatureSchema(std::vector<CategoricalFeature> features)
    : features_(std::move(features))
{
    std::set<std::string> seen;
    for (const auto& f : features_) {
        if (f.values.empty()) {
            throw ConfigError("FeatureSchema: feature '" + f.name + "' has no values");
        }
        if (!seen.insert(f.name).second) {
            throw ConfigError("FeatureSchema: feature '" + f.name + "' listed twice");
        }
        offsets_.push_back(width_);
        width_ += f.values.size();
    }
}

auto FeatureSchema::grounding() -> const FeatureSchema&
{
    static const FeatureSchema schema({
        { "part_of_speech",
          { "noun", "verb", "adjective", "adverb", "preposition", "conjunction", "interjection",
            "pronoun", "numeral", "article", "particle", "modal_verb", "auxiliary_verb",
            "determiner", "none" } },
        { "part_of_word", { "prefix", "root", "suffix", "infix", "postfix", "circumfix", "none" } },
        { "person", { "first", "second", "third", "none" } },
        { "connotation", { "positive", "neutral", "negative" } },
        { "physical_object_or_action", { "true", "false" } },
        { "usage_frequency", { "s", "m", "l", "xl" } },
        { "has_many_meanings", { "true", "false" } },
        { "can_be_used_meaningfully_on_its_own", { "true", "false" } },
    });
    return schema;
}

auto FeatureSchema::value_index(std::string_view feature, std::string_view value) const
    -> std::size_t
{
    for (const auto& f : features_) {
        if (f.name != feature) {
            continue;
        }
        auto it = std::find(f.values.begin(), f.values.end(), value);
        if (it == f.values.end()) {
            throw SchemaError("feature '" + f.name + "' has no value '" + std::string(value) + "'");
        }
        return static_cast<std::size_t>(it - f.values.begin());
    }
    throw SchemaError("unknown feature '" + std::string(feature) + "'");
}

auto encode_features(const FeatureRecord& record, const FeatureSchema& schema)
    -> std::vector<double>
{
    for (const auto& [name, value] : record.features) {
        const auto fs = schema.features();
        if (std::none_of(fs.begin(), fs.end(), [&](const auto& f) { return f.name == name; })) {
            throw SchemaError("token '" + record.token + "': unknown feature '" + name + "'");
        }
    }
    std::vector<double> out(schema.width(), 0.0);
    const auto fs = schema.features();
    for (std::size_t b = 0; b < fs.size(); ++b) {
        auto it = record.features.find(fs[b].name);
        if (it == record.features.end()) {
            throw SchemaError("token '" + record.token + "': missing feature '" + fs[b].name + "'");
        }
        try {
            out[schema.block_offset(b) + schema.value_index(fs[b].name, it->second)] = 1.0;
        } catch (const SchemaError& e) {
            throw SchemaError("token '" + record.token + "': " + e.what());
        }
    }
    return out;
}

auto to_string(ExclusionReason reason) -> std::string_view
{
    switch (reason) {
    case ExclusionReason::special:
        return "special";
    case ExclusionReason::single_char:
        return "single-char";
    }
    return "unknown";
}

auto FilteredVocab::kept_mask() const -> std::vector<bool>
{
    std::vector<bool> mask(vocab_size, false);
    for (const auto& t : tokens) {
        mask[t.index] = true;
    }
    return mask;
}

auto default_special_patterns() -> std::vector<std::string>
{
    return { "[CLS]", "[SEP]", "[PAD]", "[UNK]", "[MASK]", "[unused*]" };
}

auto matches_pattern(std::string_view text, std::string_view pattern) -> bool
{
    // Iterative glob with single-star backtracking.
    std::size_t t = 0;
    std::size_t p = 0;
    std::size_t star = std::string_view::npos;
    std::size_t resume = 0;
    while (t < text.size()) {
        if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            resume = t;
        } else if (p < pattern.size() && pattern[p] == text[t]) {
            ++p;
            ++t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++resume;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') {
        ++p;
    }
    return p == pattern.size();
}

namespace {

auto code_points(std::string_view s) -> std::size_t
{
    // UTF-8 continuation bytes are 10xxxxxx.
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0U) != 0x80U;
    }));
}

} // namespace

auto filter_vocabulary(std::span<const std::string> vocab,
                       std::span<const std::string> special_patterns) -> FilteredVocab
{
    FilteredVocab out;
    out.vocab_size = vocab.size();
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const std::string& token = vocab[i];
        const bool special = std::any_of(special_patterns.begin(), special_patterns.end(),
                                         [&](const std::string& p) { return matches_pattern(token, p); });
        if (special) {
            out.excluded.push_back({ i, token, ExclusionReason::special });
            continue;
        }
        std::string_view visible = token;
        if (visible.starts_with("##")) {
            visible.remove_prefix(2);
        }
        if (code_points(visible) <= 1) {
            out.excluded.push_back({ i, token, ExclusionReason::single_char });
            continue;
        }
        out.tokens.push_back({ i, token });
    }
    return out;
}

auto filter_vocabulary(std::span<const std::string> vocab) -> FilteredVocab
{
    const auto patterns = default_special_patterns();
    return filter_vocabulary(vocab, patterns);
}

auto build_feature_matrix(std::span<const FeatureRecord> records, const FilteredVocab& filtered,
                          const FeatureSchema& schema) -> FeatureMatrix
{
    const std::vector<bool> kept = filtered.kept_mask();
    std::vector<const FeatureRecord*> by_index(filtered.vocab_size, nullptr);
    FeatureMatrix out;
    std::vector<std::string> duplicates;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const FeatureRecord& rec = records[r];
        if (rec.index >= filtered.vocab_size) {
            throw DataError("feature record " + std::to_string(r) + " ('" + rec.token
                            + "') has index " + std::to_string(rec.index)
                            + " outside a vocabulary of " + std::to_string(filtered.vocab_size));
        }
        if (!kept[rec.index]) {
            out.ignored_records.push_back(r);
            continue;
        }
        if (by_index[rec.index] != nullptr) {
            duplicates.push_back(rec.token + "@" + std::to_string(rec.index));
            continue;
        }
        by_index[rec.index] = &rec;
    }
    if (!duplicates.empty()) {
        std::string list;
        for (const auto& d : duplicates) {
            list += (list.empty() ? "" : ", ") + d;
        }
        throw DataError("duplicate feature records for: " + list);
    }

    std::string missing;
    for (const auto& entry : filtered.tokens) {
        const FeatureRecord* rec = by_index[entry.index];
        if (rec == nullptr) {
            missing += (missing.empty() ? "" : ", ") + entry.token;
        } else if (rec->token != entry.token) {
            throw DataError("feature record at index " + std::to_string(entry.index) + " names '"
                            + rec->token + "' but the vocabulary has '" + entry.token + "'");
        }
    }
    if (!missing.empty()) {
        throw DataError("missing feature records for kept tokens: " + missing);
    }

    out.x = Matrix(filtered.tokens.size(), schema.width());
    for (std::size_t i = 0; i < filtered.tokens.size(); ++i) {
        const std::size_t t = filtered.tokens[i].index;
        const auto encoded = encode_features(*by_index[t], schema);
        std::copy(encoded.begin(), encoded.end(), out.x.row(i).begin());
        out.kept_indices.push_back(t);
    }
    return out;
}

auto read_vocab(const std::filesystem::path& path) -> std::vector<std::string>
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open vocab file " + path.string());
    }
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        vocab.push_back(line);
    }
    return vocab;
}

void write_vocab(const std::filesystem::path& path, std::span<const std::string> vocab)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write vocab file " + path.string());
    }
    for (const auto& t : vocab) {
        out << t << '\n';
    }
}

auto parse_feature_record(std::string_view line, std::size_t line_number) -> FeatureRecord
{
    const auto where = "feature file line " + std::to_string(line_number) + ": ";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(where + e.what());
    }
    if (!j.is_object() || !j.contains("token") || !j.contains("index") || !j.contains("features")) {
        throw DataError(where + "expected an object with token, index and features");
    }
    FeatureRecord rec;
    try {
        rec.token = j.at("token").get<std::string>();
        const auto idx = j.at("index");
        if (!idx.is_number_unsigned()) {
            throw DataError(where + "index must be a non-negative integer");
        }
        rec.index = idx.get<std::size_t>();
        for (const auto& [name, value] : j.at("features").items()) {
            rec.features[name] = value.get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(where + e.what());
    }
    return rec;
}

auto format_feature_record(const FeatureRecord& record, const FeatureSchema& schema) -> std::string
{
    nlohmann::ordered_json j;
    j["token"] = record.token;
    j["index"] = record.index;
    nlohmann::ordered_json feats = nlohmann::ordered_json::object();
    for (const auto& f : schema.features()) {
        auto it = record.features.find(f.name);
        if (it != record.features.end()) {
            feats[f.name] = it->second;
        }
    }
    // Keys the schema does not know keep their (sorted) order at the end.
    for (const auto& [name, value] : record.features) {
        if (!feats.contains(name)) {
            feats[name] = value;
        }
    }
    j["features"] = std::move(feats);
    return j.dump();
}

auto read_feature_records(const std::filesystem::path& path) -> std::vector<FeatureRecord>
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open feature file " + path.string());
    }
    std::vector<FeatureRecord> records;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        records.push_back(parse_feature_record(line, number));
    }
    return records;
}

void write_feature_records(const std::filesystem::path& path,
                           std::span<const FeatureRecord> records, const FeatureSchema& schema)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write feature file " + path.string());
    }
    for (const auto& r : records) {
        out << format_feature_record(r, schema) << '\n';
    }
}

} // namespace groundkit
