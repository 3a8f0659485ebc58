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

#include "groundkit/adam.hpp"
#include "groundkit/feature_schema.hpp"
#include "groundkit/matrix.hpp"
#include "groundkit/saturation.hpp"
#include "groundkit/tape.hpp"

#include "json.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace groundkit {

struct GroundingConfig {
    std::size_t dim = 64;
    std::size_t feature_dim = 39;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t epochs = 100;
    std::size_t batch_tokens = 256;
    double margin = 1.0;
    double sim_threshold = 0.8;
    double d_min = 0.05;
    double d_max = 10.0;
    double lambda_contrastive = 1.0;
    double lambda_min = 1.0;
    double lambda_max = 1.0;
    /// 0 means 4 × batch_tokens.
    std::size_t pairs_per_batch = 0;
    double projector_lower = 0.55;
    double projector_upper = 0.45;
    std::uint64_t seed = 42;

    [[nodiscard]] auto effective_pairs_per_batch() const noexcept -> std::size_t
    {
        return pairs_per_batch == 0 ? 4 * batch_tokens : pairs_per_batch;
    }
    void validate() const;
};

auto to_json(const GroundingConfig& cfg) -> nlohmann::ordered_json;
/// Unknown keys are rejected; absent keys keep `base`'s values.
auto grounding_config_from_json(const nlohmann::json& j, GroundingConfig base = {})
    -> GroundingConfig;

/// Uniform on [-1/sqrt(d), 1/sqrt(d)], row-major draw order.
auto init_embedding(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) -> Matrix;

/// Mean squared error between row-wise projections of `embeddings` and
/// `targets`.
auto reconstruction_loss(const Matrix& embeddings, std::span<const SaturationOperator> ops,
                         const Matrix& targets) -> double;

auto cosine_similarity(std::span<const double> a, std::span<const double> b) -> double;

/// True when the feature cosine reaches `threshold`.
auto pair_label(std::span<const double> fi, std::span<const double> fj, double threshold) -> bool;

/// A contrastive pair over vocabulary indices (rows of E).
struct TokenPair {
    std::size_t i = 0;
    std::size_t j = 0;
    bool similar = false;
};

/// Mean over pairs of
///   y D^2 + (1-y) max(0, m-D)^2 + l_min max(0, d_min-D)^2 + l_max max(0, D-d_max)^2
/// with D the Euclidean distance between raw embeddings. Pairs must only
/// reference tokens set in `kept`.
auto contrastive_loss(const Matrix& embeddings, std::span<const TokenPair> pairs,
                      const GroundingConfig& cfg, const std::vector<bool>& kept) -> double;

struct LossBreakdown {
    double total = 0.0;
    double recon = 0.0;
    double contrastive = 0.0;
};

/// Vars of the recorded grounding loss.
struct LossGraph {
    ad::Var total;
    ad::Var recon;
    ad::Var contrastive;
};

/// Records L = L_recon + lambda_c · L_contrastive on `tape`.
/// `token_rows` index rows of `features.x`; the matching vocabulary
/// index comes from `features.kept_indices`.
auto record_grounding_loss(ad::Tape& tape, ad::Var embeddings, std::span<const std::size_t> token_rows,
                           std::span<const TokenPair> pairs, const FeatureMatrix& features,
                           const SaturationBank& bank, const GroundingConfig& cfg) -> LossGraph;

/// Loss and dL/dE for a full embedding matrix.
struct LossAndGradient {
    LossBreakdown loss;
    Matrix gradient;
};

auto grounding_loss_and_gradient(const Matrix& embeddings, std::span<const std::size_t> token_rows,
                                 std::span<const TokenPair> pairs, const FeatureMatrix& features,
                                 const SaturationBank& bank, const GroundingConfig& cfg)
    -> LossAndGradient;

struct GroundingState {
    Matrix embeddings;
    std::vector<bool> kept;
    AdamState optimizer;
    std::size_t epoch = 0;
    std::size_t batch = 0;
};

/// One optimizer step on a token batch and a pair batch. Rows of
/// excluded tokens are never written. Throws DivergenceError when the
/// loss or the updated weights are not finite.
auto grounding_step(GroundingState& state, std::span<const std::size_t> token_rows,
                    std::span<const TokenPair> pairs, const FeatureMatrix& features,
                    const SaturationBank& bank, const GroundingConfig& cfg) -> LossBreakdown;

/// Uniform pairs of distinct kept tokens, labelled from feature cosine.
/// The stream depends only on (seed, epoch, batch).
auto sample_pairs(const FeatureMatrix& features, const GroundingConfig& cfg, std::size_t epoch,
                  std::size_t batch) -> std::vector<TokenPair>;

inline constexpr std::size_t histogram_bins = 64;
inline constexpr double histogram_low = -3.0;
inline constexpr double histogram_high = 3.0;

struct WeightHistogram {
    std::array<std::uint64_t, histogram_bins> bins {};
    std::uint64_t underflow = 0;
    std::uint64_t overflow = 0;

    [[nodiscard]] auto total() const noexcept -> std::uint64_t;
};

/// Bins are half-open [lo, hi); values below -3 underflow, values at or
/// above 3 overflow.
auto weight_histogram(const Matrix& weights) -> WeightHistogram;

struct EpochMetrics {
    std::size_t epoch = 0;
    LossBreakdown loss;
    WeightHistogram histogram;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

struct GroundedEmbedding {
    Matrix embeddings;
    std::size_t feature_dim = 0;
    std::string schema_sha256;
    GroundingConfig config;

    [[nodiscard]] auto vocab_size() const noexcept -> std::size_t { return embeddings.rows(); }
    [[nodiscard]] auto dim() const noexcept -> std::size_t { return embeddings.cols(); }
};

struct GroundingResult {
    GroundedEmbedding embedding;
    std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Runs cfg.epochs epochs. Each epoch shuffles the kept tokens with a
/// stream seeded by (seed, epoch), cuts batches of cfg.batch_tokens, and
/// samples pairs per (epoch, batch). Losses reported for an epoch are
/// batch means taken before each update; the histogram is taken after
/// the epoch's last update.
auto train_grounding(const GroundingConfig& cfg, const FeatureMatrix& features,
                     const FilteredVocab& vocab, std::string schema_sha256,
                     const EpochCallback& on_epoch = {}) -> GroundingResult;

// FGE1 embedding file: one JSON header line, then T×d little-endian f64.
void export_embedding(const GroundedEmbedding& ge, const std::filesystem::path& path);
auto import_embedding(const std::filesystem::path& path) -> GroundedEmbedding;
auto serialize_embedding(const GroundedEmbedding& ge) -> std::string;
auto deserialize_embedding(std::string_view bytes) -> GroundedEmbedding;

/// Warning text when `features_path` does not hash to the embedding's
/// recorded fingerprint; nullopt when it matches.
auto check_fingerprint(const GroundedEmbedding& ge, const std::filesystem::path& features_path)
    -> std::optional<std::string>;

} // namespace groundkit
