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

#include "groundkit/synthetic.hpp"

#include "groundkit/error.hpp"
#include "groundkit/json_util.hpp"
#include "groundkit/random.hpp"

namespace groundkit {

namespace {

constexpr const char* syllables[] = { "ba", "ko", "ri", "mu", "te", "sa", "lo", "ni", "pe", "du",
                                      "fa", "gi", "ho", "ju", "ke", "ma", "no", "pu", "ve", "zo" };
constexpr std::size_t n_syllables = std::size(syllables);

auto pseudo_word(std::size_t k) -> std::string
{
    std::string w;
    std::size_t n = k;
    for (int digit = 0; digit < 3 || n > 0; ++digit) {
        w += syllables[n % n_syllables];
        n /= n_syllables;
    }
    return w;
}

auto documents(const SyntheticSpec& spec, std::size_t per_class, std::size_t n_labels,
               std::size_t label_stream, bool coarse) -> std::vector<LabeledText>
{
    Rng rng(derive_seed(spec.seed, { label_stream }));
    // Noise draws from every pseudo-word and letter.
    const std::size_t noise_pool = spec.words + 26;
    std::vector<LabeledText> out;
    std::size_t line = 2;
    for (std::size_t i = 0; i < per_class * n_labels; ++i) {
        const std::size_t label = i % n_labels;
        std::size_t topic = label;
        if (coarse) {
            // Fine topics t with t % n_labels == label.
            const std::size_t choices = (spec.classes - label + n_labels - 1) / n_labels;
            topic = label + n_labels * rng.below(choices);
        }
        const std::size_t group = (spec.words - topic + spec.classes - 1) / spec.classes;
        const std::size_t len = spec.min_doc_len + rng.below(spec.max_doc_len - spec.min_doc_len + 1);
        std::string text;
        for (std::size_t t = 0; t < len; ++t) {
            std::string tok;
            if (rng.bernoulli(spec.topic_rate)) {
                tok = pseudo_word(topic + spec.classes * rng.below(group));
            } else {
                const std::size_t n = rng.below(noise_pool);
                tok = n < spec.words ? pseudo_word(n) : std::string(1, static_cast<char>('a' + (n - spec.words)));
            }
            text += (t == 0 ? "" : " ") + tok;
        }
        text += ".";
        out.push_back({ label, std::move(text), line++ });
    }
    return out;
}

} // namespace

void SyntheticSpec::validate() const
{
    if (words == 0 || classes == 0 || examples_per_class == 0 || test_examples_per_class == 0) {
        throw ConfigError("synthetic: counts must be at least 1");
    }
    if (classes < 2) {
        throw ConfigError("synthetic: need at least 2 classes");
    }
    if (words < classes) {
        throw ConfigError("synthetic: need at least one word per class (" + std::to_string(words)
                          + " words, " + std::to_string(classes) + " classes)");
    }
    if (!(coherence >= 0.0 && coherence <= 1.0) || !(topic_rate >= 0.0 && topic_rate <= 1.0)) {
        throw ConfigError("synthetic: coherence and topic_rate must lie in [0, 1]");
    }
    if (min_doc_len == 0 || min_doc_len > max_doc_len) {
        throw ConfigError("synthetic: need 1 <= min_doc_len <= max_doc_len");
    }
    if (coarse_classes != 0 && (coarse_classes < 2 || coarse_classes > classes)) {
        throw ConfigError("synthetic: coarse_classes must be 0 or in [2, classes]");
    }
}

auto to_json(const SyntheticSpec& spec) -> nlohmann::ordered_json
{
    nlohmann::ordered_json j;
    j["words"] = spec.words;
    j["classes"] = spec.classes;
    j["examples_per_class"] = spec.examples_per_class;
    j["test_examples_per_class"] = spec.test_examples_per_class;
    j["coherence"] = spec.coherence;
    j["coarse_classes"] = spec.coarse_classes;
    j["min_doc_len"] = spec.min_doc_len;
    j["max_doc_len"] = spec.max_doc_len;
    j["topic_rate"] = spec.topic_rate;
    j["seed"] = spec.seed;
    return j;
}

auto synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base) -> SyntheticSpec
{
    constexpr std::string_view ctx = "synthetic spec";
    json_util::reject_unknown_keys(j,
                                   { "words", "classes", "examples_per_class",
                                     "test_examples_per_class", "coherence", "coarse_classes",
                                     "min_doc_len", "max_doc_len", "topic_rate", "seed" },
                                   ctx);
    json_util::read_optional(j, "words", base.words, ctx);
    json_util::read_optional(j, "classes", base.classes, ctx);
    json_util::read_optional(j, "examples_per_class", base.examples_per_class, ctx);
    json_util::read_optional(j, "test_examples_per_class", base.test_examples_per_class, ctx);
    json_util::read_optional(j, "coherence", base.coherence, ctx);
    json_util::read_optional(j, "coarse_classes", base.coarse_classes, ctx);
    json_util::read_optional(j, "min_doc_len", base.min_doc_len, ctx);
    json_util::read_optional(j, "max_doc_len", base.max_doc_len, ctx);
    json_util::read_optional(j, "topic_rate", base.topic_rate, ctx);
    json_util::read_optional(j, "seed", base.seed, ctx);
    base.validate();
    return base;
}

auto generate_synthetic(const SyntheticSpec& spec) -> SyntheticData
{
    spec.validate();
    SyntheticData data;
    data.vocab = { "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]" };
    for (char c = 'a'; c <= 'z'; ++c) {
        data.vocab.emplace_back(1, c);
    }
    data.vocab.emplace_back(".");
    const std::size_t first_word = data.vocab.size();
    for (std::size_t k = 0; k < spec.words; ++k) {
        data.vocab.push_back(pseudo_word(k));
    }

    const auto& schema = FeatureSchema::grounding();
    std::vector<std::vector<std::size_t>> prototypes;
    for (std::size_t topic = 0; topic < spec.classes; ++topic) {
        Rng rng(derive_seed(spec.seed, { 40, topic }));
        std::vector<std::size_t> proto;
        for (const auto& f : schema.features()) {
            proto.push_back(rng.below(f.values.size()));
        }
        prototypes.push_back(std::move(proto));
    }
    Rng rng(derive_seed(spec.seed, { 41 }));
    for (std::size_t k = 0; k < spec.words; ++k) {
        const std::size_t topic = k % spec.classes;
        FeatureRecord r { data.vocab[first_word + k], first_word + k, {} };
        for (std::size_t b = 0; b < schema.features().size(); ++b) {
            const auto& f = schema.features()[b];
            const bool keep = rng.bernoulli(spec.coherence);
            const std::size_t value = keep ? prototypes[topic][b] : rng.below(f.values.size());
            r.features[f.name] = f.values[value];
        }
        data.records.push_back(std::move(r));
        data.topics.push_back(topic);
    }

    data.train = documents(spec, spec.examples_per_class, spec.classes, 42, false);
    data.test = documents(spec, spec.test_examples_per_class, spec.classes, 43, false);
    if (spec.coarse_classes != 0) {
        // Same total size as the fine task.
        auto per_coarse = [&](std::size_t per_fine) {
            return (per_fine * spec.classes + spec.coarse_classes - 1) / spec.coarse_classes;
        };
        data.coarse_train = documents(spec, per_coarse(spec.examples_per_class), spec.coarse_classes, 44, true);
        data.coarse_test =
            documents(spec, per_coarse(spec.test_examples_per_class), spec.coarse_classes, 45, true);
    }
    return data;
}

auto write_synthetic(const SyntheticData& data, const std::filesystem::path& dir)
    -> std::vector<std::filesystem::path>
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create " + dir.string() + ": " + ec.message());
    }
    std::vector<std::filesystem::path> written;
    written.push_back(dir / "vocab.txt");
    write_vocab(written.back(), data.vocab);
    written.push_back(dir / "features.jsonl");
    write_feature_records(written.back(), data.records, FeatureSchema::grounding());
    written.push_back(dir / "train.csv");
    write_dataset(written.back(), data.train);
    written.push_back(dir / "test.csv");
    write_dataset(written.back(), data.test);
    if (!data.coarse_train.empty()) {
        written.push_back(dir / "coarse_train.csv");
        write_dataset(written.back(), data.coarse_train);
        written.push_back(dir / "coarse_test.csv");
        write_dataset(written.back(), data.coarse_test);
    }
    return written;
}

} // namespace groundkit
