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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "groundkit/binary_io.hpp"
#include "groundkit/error.hpp"
#include "groundkit/feature_schema.hpp"
#include "groundkit/random.hpp"

#include <filesystem>
#include <set>

using namespace groundkit;

namespace {

auto first_values_record(std::string token, std::size_t index) -> FeatureRecord
{
    FeatureRecord r { std::move(token), index, {} };
    for (const auto& f : FeatureSchema::grounding().features()) {
        r.features[f.name] = f.values.front();
    }
    return r;
}

auto random_record(Rng& rng, std::string token, std::size_t index) -> FeatureRecord
{
    FeatureRecord r { std::move(token), index, {} };
    for (const auto& f : FeatureSchema::grounding().features()) {
        r.features[f.name] = f.values[rng.below(f.values.size())];
    }
    return r;
}

auto temp_path(const std::string& name) -> std::filesystem::path
{
    return std::filesystem::temp_directory_path() / ("groundkit_fs_" + name);
}

} // namespace

TEST_CASE("grounding schema layout")
{
    const auto& schema = FeatureSchema::grounding();
    CHECK(schema.width() == 39);
    REQUIRE(schema.features().size() == 8);
    const std::size_t offsets[] = { 0, 15, 22, 26, 29, 31, 35, 37 };
    const std::size_t sizes[] = { 15, 7, 4, 3, 2, 4, 2, 2 };
    for (std::size_t b = 0; b < 8; ++b) {
        CHECK(schema.block_offset(b) == offsets[b]);
        CHECK(schema.features()[b].values.size() == sizes[b]);
    }
    CHECK(schema.features()[0].name == "part_of_speech");
    CHECK(schema.features()[0].values.back() == "none");
    CHECK(schema.features()[7].name == "can_be_used_meaningfully_on_its_own");
}

TEST_CASE("encode_features examples")
{
    const auto& schema = FeatureSchema::grounding();
    const auto v = encode_features(first_values_record("cat", 0), schema);
    REQUIRE(v.size() == 39);
    CHECK(v[0] == 1.0);
    std::set<std::size_t> ones;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] == 1.0) {
            ones.insert(i);
        }
    }
    CHECK(ones == std::set<std::size_t> { 0, 15, 22, 26, 29, 31, 35, 37 });

    FeatureRecord missing = first_values_record("cat", 0);
    missing.features.erase("person");
    CHECK_THROWS_WITH_AS(encode_features(missing, schema), doctest::Contains("person"), SchemaError);

    FeatureRecord bad_value = first_values_record("cat", 0);
    bad_value.features["connotation"] = "sarcastic";
    CHECK_THROWS_WITH_AS(encode_features(bad_value, schema), doctest::Contains("sarcastic"),
                         SchemaError);

    FeatureRecord extra = first_values_record("cat", 0);
    extra.features["colour"] = "red";
    CHECK_THROWS_WITH_AS(encode_features(extra, schema), doctest::Contains("colour"), SchemaError);
}

TEST_CASE("encodings always have L1 norm 8 with 0/1 entries")
{
    Rng rng(3);
    const auto& schema = FeatureSchema::grounding();
    for (int n = 0; n < 200; ++n) {
        const auto v = encode_features(random_record(rng, "w", 0), schema);
        double l1 = 0.0;
        for (double x : v) {
            CHECK((x == 0.0 || x == 1.0));
            l1 += x;
        }
        CHECK(l1 == 8.0);
    }
}

TEST_CASE("filter_vocabulary examples")
{
    const std::vector<std::string> vocab { "[PAD]", "the", "a", "##s", "cat" };
    const auto out = filter_vocabulary(vocab);
    REQUIRE(out.tokens.size() == 2);
    CHECK(out.tokens[0].token == "the");
    CHECK(out.tokens[0].index == 1);
    CHECK(out.tokens[1].token == "cat");
    CHECK(out.tokens[1].index == 4);
    REQUIRE(out.excluded.size() == 3);
    CHECK(out.excluded[0].token == "[PAD]");
    CHECK(out.excluded[0].reason == ExclusionReason::special);
    CHECK(out.excluded[1].token == "a");
    CHECK(out.excluded[1].reason == ExclusionReason::single_char);
    CHECK(out.excluded[2].token == "##s");
    CHECK(out.excluded[2].reason == ExclusionReason::single_char);

    const std::vector<std::string> specials { "[CLS]", "[SEP]", "[unused0]", "[unused17]", "[MASK]" };
    CHECK(filter_vocabulary(specials).tokens.empty());

    const std::vector<std::string> cont { "##ing" };
    CHECK(filter_vocabulary(cont).tokens.size() == 1);

    // Multi-byte single code point.
    const std::vector<std::string> accented { "\xc3\xa9", "\xc3\xa9t\xc3\xa9" };
    const auto acc = filter_vocabulary(accented);
    REQUIRE(acc.tokens.size() == 1);
    CHECK(acc.tokens[0].index == 1);
}

TEST_CASE("filter_vocabulary partitions the vocabulary and is idempotent")
{
    Rng rng(5);
    const std::string alphabet = "ab#[]CLSunused";
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> vocab;
        const std::size_t n = 1 + rng.below(30);
        for (std::size_t i = 0; i < n; ++i) {
            std::string t;
            const std::size_t len = rng.below(6);
            for (std::size_t c = 0; c < len; ++c) {
                t.push_back(alphabet[rng.below(alphabet.size())]);
            }
            vocab.push_back(t);
        }
        const auto out = filter_vocabulary(vocab);
        CHECK(out.tokens.size() + out.excluded.size() == vocab.size());
        std::set<std::size_t> seen;
        for (const auto& t : out.tokens) {
            CHECK(seen.insert(t.index).second);
            CHECK(vocab[t.index] == t.token);
        }
        for (const auto& t : out.excluded) {
            CHECK(seen.insert(t.index).second);
        }
        std::vector<std::string> kept;
        for (const auto& t : out.tokens) {
            kept.push_back(t.token);
        }
        const auto again = filter_vocabulary(kept);
        CHECK(again.excluded.empty());
        CHECK(again.tokens.size() == kept.size());
    }
}

TEST_CASE("matches_pattern globbing")
{
    CHECK(matches_pattern("[unused42]", "[unused*]"));
    CHECK(matches_pattern("[unused]", "[unused*]"));
    CHECK_FALSE(matches_pattern("unused", "[unused*]"));
    CHECK(matches_pattern("abc", "a*c"));
    CHECK(matches_pattern("abcbc", "a*bc"));
    CHECK_FALSE(matches_pattern("abcd", "a*c"));
}

TEST_CASE("build_feature_matrix")
{
    const auto& schema = FeatureSchema::grounding();
    const std::vector<std::string> vocab { "[PAD]", "the", "a", "cat" };
    const auto filtered = filter_vocabulary(vocab);
    Rng rng(7);

    SUBCASE("two kept tokens, excluded record ignored")
    {
        const std::vector<FeatureRecord> records { random_record(rng, "cat", 3),
                                                   random_record(rng, "a", 2),
                                                   random_record(rng, "the", 1) };
        const auto fm = build_feature_matrix(records, filtered, schema);
        CHECK(fm.x.rows() == 2);
        CHECK(fm.x.cols() == 39);
        CHECK(fm.kept_indices == std::vector<std::size_t> { 1, 3 });
        CHECK(fm.ignored_records == std::vector<std::size_t> { 1 });
        for (std::size_t r = 0; r < 2; ++r) {
            double total = 0.0;
            for (std::size_t b = 0; b < 8; ++b) {
                const std::size_t begin = schema.block_offset(b);
                const std::size_t end = begin + schema.features()[b].values.size();
                double block = 0.0;
                for (std::size_t c = begin; c < end; ++c) {
                    block += fm.x(r, c);
                }
                CHECK(block == 1.0);
                total += block;
            }
            CHECK(total == 8.0);
        }
        const auto expected = encode_features(records[2], schema);
        for (std::size_t c = 0; c < 39; ++c) {
            CHECK(fm.x(0, c) == expected[c]);
        }
    }
    SUBCASE("empty kept set")
    {
        const std::vector<std::string> only_special { "[PAD]", "[CLS]" };
        const auto fm = build_feature_matrix({}, filter_vocabulary(only_special), schema);
        CHECK(fm.x.rows() == 0);
        CHECK(fm.x.cols() == 39);
    }
    SUBCASE("missing records are listed")
    {
        const std::vector<FeatureRecord> records { random_record(rng, "the", 1) };
        CHECK_THROWS_WITH_AS(build_feature_matrix(records, filtered, schema),
                             doctest::Contains("cat"), DataError);
    }
    SUBCASE("duplicates are rejected")
    {
        const std::vector<FeatureRecord> records { random_record(rng, "the", 1),
                                                   random_record(rng, "cat", 3),
                                                   random_record(rng, "cat", 3) };
        CHECK_THROWS_WITH_AS(build_feature_matrix(records, filtered, schema),
                             doctest::Contains("duplicate"), DataError);
    }
}

TEST_CASE("feature JSONL and vocab files round trip")
{
    const auto& schema = FeatureSchema::grounding();
    Rng rng(9);
    std::vector<FeatureRecord> records;
    for (std::size_t i = 0; i < 20; ++i) {
        records.push_back(random_record(rng, "w\"ord" + std::to_string(i), i));
    }
    const auto path = temp_path("features.jsonl");
    write_feature_records(path, records, schema);
    const auto back = read_feature_records(path);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].token == records[i].token);
        CHECK(back[i].index == records[i].index);
        CHECK(back[i].features == records[i].features);
    }
    const auto path2 = temp_path("features2.jsonl");
    write_feature_records(path2, back, schema);
    CHECK(binary::read_file(path) == binary::read_file(path2));

    const std::vector<std::string> vocab { "[PAD]", "hello", "##ing" };
    const auto vpath = temp_path("vocab.txt");
    write_vocab(vpath, vocab);
    CHECK(read_vocab(vpath) == vocab);
}

TEST_CASE("malformed feature lines carry the line number")
{
    CHECK_THROWS_WITH_AS(parse_feature_record("{\"token\": 1}", 7), doctest::Contains("line 7"),
                         DataError);
    CHECK_THROWS_WITH_AS(parse_feature_record("not json", 3), doctest::Contains("line 3"),
                         DataError);
    CHECK_THROWS_AS(parse_feature_record(R"({"token":"x","index":-1,"features":{}})", 1), DataError);
}
