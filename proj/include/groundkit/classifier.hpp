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
#include "groundkit/grounding.hpp"
#include "groundkit/matrix.hpp"
#include "groundkit/tape.hpp"
#include "groundkit/tokenizer.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace groundkit {

struct ClassifierConfig {
    std::size_t dim = 64;
    std::size_t n_blocks = 1;
    std::size_t ffn_mult = 4;
    std::size_t n_classes = 2;
    std::size_t max_len = Tokenizer::default_max_len;
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    bool freeze_embedding = false;

    void validate() const;
};

auto to_json(const ClassifierConfig& cfg) -> nlohmann::ordered_json;
auto classifier_config_from_json(const nlohmann::json& j, ClassifierConfig base = {})
    -> ClassifierConfig;

struct Example {
    std::size_t label = 0;
    std::vector<std::size_t> tokens;
    std::size_t line = 0;
};

auto encode_examples(std::span<const LabeledText> rows, const Tokenizer& tok)
    -> std::vector<Example>;

/// Fixed sin/cos table, max_len × d.
auto sinusoidal_table(std::size_t max_len, std::size_t d) -> Matrix;

class TinyClassifier {
public:
    /// All blocks zero-filled at their final shapes; see init_classifier.
    TinyClassifier(ClassifierConfig cfg, std::size_t vocab_size);

    [[nodiscard]] auto config() const noexcept -> const ClassifierConfig& { return config_; }
    [[nodiscard]] auto vocab_size() const noexcept -> std::size_t { return vocab_size_; }
    [[nodiscard]] auto block_names() const -> std::vector<std::string>;
    [[nodiscard]] auto has_block(std::string_view name) const -> bool;
    /// Throws LookupError listing the valid names.
    [[nodiscard]] auto block(std::string_view name) const -> const Matrix&;
    [[nodiscard]] auto block(std::string_view name) -> Matrix&;
    [[nodiscard]] auto blocks() const noexcept -> std::span<const std::pair<std::string, Matrix>>
    {
        return blocks_;
    }
    [[nodiscard]] auto positional() const noexcept -> const Matrix& { return positional_; }

    /// Bitwise comparison of every block.
    friend auto operator==(const TinyClassifier& a, const TinyClassifier& b) -> bool;

private:
    ClassifierConfig config_;
    std::size_t vocab_size_;
    std::vector<std::pair<std::string, Matrix>> blocks_;
    Matrix positional_;
};

auto init_classifier(const ClassifierConfig& cfg, std::size_t vocab_size) -> TinyClassifier;

/// Tape handles of every block, registered as parameters in block order.
struct ModelVars {
    std::vector<ad::Var> blocks;
};

auto register_parameters(ad::Tape& tape, const TinyClassifier& model) -> ModelVars;

/// Logits (B × C) for unpadded token sequences.
auto record_logits(ad::Tape& tape, const ModelVars& vars, const TinyClassifier& model,
                   std::span<const std::span<const std::size_t>> sequences) -> ad::Var;

/// Logits for a padded index matrix; entries at positions >= lengths[b]
/// are never read.
auto forward(const TinyClassifier& model, const std::vector<std::vector<std::size_t>>& padded,
             std::span<const std::size_t> lengths) -> Matrix;

auto logits(const TinyClassifier& model, std::span<const Example> examples) -> Matrix;

struct ClassifierGradients {
    double loss = 0.0;
    std::vector<ad::NamedGradient> gradients;
};

auto classifier_loss_and_gradients(const TinyClassifier& model, std::span<const Example> batch)
    -> ClassifierGradients;

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::size_t n_examples = 0;
    /// Examples per true class.
    std::vector<std::size_t> class_counts;
    /// Correct predictions per true class.
    std::vector<std::size_t> class_correct;
};

auto evaluate(const TinyClassifier& model, std::span<const Example> dataset) -> EvalResult;

struct ClassifierEpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    bool has_validation = false;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

void write_classifier_metrics_header(std::ostream& out);
void write_classifier_metrics_row(std::ostream& out, const ClassifierEpochMetrics& m);

struct TrainResult {
    TinyClassifier model;
    std::vector<ClassifierEpochMetrics> metrics;
};

using ClassifierEpochCallback = std::function<void(const ClassifierEpochMetrics&)>;

/// `embedding` may be null for a fresh initialization.
auto train_classifier(const ClassifierConfig& cfg, std::span<const Example> train,
                      std::size_t vocab_size, const GroundedEmbedding* embedding,
                      std::span<const Example> validation = {},
                      const ClassifierEpochCallback& on_epoch = {}) -> TrainResult;

auto serialize_checkpoint(const TinyClassifier& model) -> std::string;
auto deserialize_checkpoint(std::string_view bytes) -> TinyClassifier;
void save_checkpoint(const TinyClassifier& model, const std::filesystem::path& path);
auto load_checkpoint(const std::filesystem::path& path) -> TinyClassifier;

} // namespace groundkit
