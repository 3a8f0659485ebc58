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

#include "groundkit/grounding.hpp"

#include "groundkit/binary_io.hpp"
#include "groundkit/digest.hpp"
#include "groundkit/error.hpp"
#include "groundkit/json_util.hpp"
#include "groundkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace groundkit {

void GroundingConfig::validate() const
{
    if (dim == 0 || feature_dim == 0) {
        throw ConfigError("grounding: dim and feature_dim must be positive");
    }
    if (batch_tokens == 0) {
        throw ConfigError("grounding: batch_tokens must be positive");
    }
    if (!(d_min > 0.0 && d_min < d_max)) {
        throw ConfigError("grounding: need 0 < d_min < d_max");
    }
    if (!(margin > 0.0)) {
        throw ConfigError("grounding: margin must be positive");
    }
    if (!(sim_threshold >= 0.0 && sim_threshold <= 1.0)) {
        throw ConfigError("grounding: sim_threshold must lie in [0, 1]");
    }
    if (lr < 0.0 || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)
        || !(adam_epsilon > 0.0)) {
        throw ConfigError("grounding: invalid optimizer settings");
    }
    if (lambda_contrastive < 0.0 || lambda_min < 0.0 || lambda_max < 0.0) {
        throw ConfigError("grounding: loss weights must be non-negative");
    }
}

auto to_json(const GroundingConfig& cfg) -> nlohmann::ordered_json
{
    nlohmann::ordered_json j;
    j["dim"] = cfg.dim;
    j["feature_dim"] = cfg.feature_dim;
    j["lr"] = cfg.lr;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["adam_epsilon"] = cfg.adam_epsilon;
    j["epochs"] = cfg.epochs;
    j["batch_tokens"] = cfg.batch_tokens;
    j["margin"] = cfg.margin;
    j["sim_threshold"] = cfg.sim_threshold;
    j["d_min"] = cfg.d_min;
    j["d_max"] = cfg.d_max;
    j["lambda_contrastive"] = cfg.lambda_contrastive;
    j["lambda_min"] = cfg.lambda_min;
    j["lambda_max"] = cfg.lambda_max;
    j["pairs_per_batch"] = cfg.pairs_per_batch;
    j["projector_lower"] = cfg.projector_lower;
    j["projector_upper"] = cfg.projector_upper;
    j["seed"] = cfg.seed;
    return j;
}

auto grounding_config_from_json(const nlohmann::json& j, GroundingConfig base) -> GroundingConfig
{
    using json_util::read_optional;
    constexpr std::string_view ctx = "grounding config";
    json_util::reject_unknown_keys(
        j,
        { "dim", "feature_dim", "lr", "beta1", "beta2", "adam_epsilon", "epochs", "batch_tokens",
          "margin", "sim_threshold", "d_min", "d_max", "lambda_contrastive", "lambda_min",
          "lambda_max", "pairs_per_batch", "projector_lower", "projector_upper", "seed" },
        ctx);
    read_optional(j, "dim", base.dim, ctx);
    read_optional(j, "feature_dim", base.feature_dim, ctx);
    read_optional(j, "lr", base.lr, ctx);
    read_optional(j, "beta1", base.beta1, ctx);
    read_optional(j, "beta2", base.beta2, ctx);
    read_optional(j, "adam_epsilon", base.adam_epsilon, ctx);
    read_optional(j, "epochs", base.epochs, ctx);
    read_optional(j, "batch_tokens", base.batch_tokens, ctx);
    read_optional(j, "margin", base.margin, ctx);
    read_optional(j, "sim_threshold", base.sim_threshold, ctx);
    read_optional(j, "d_min", base.d_min, ctx);
    read_optional(j, "d_max", base.d_max, ctx);
    read_optional(j, "lambda_contrastive", base.lambda_contrastive, ctx);
    read_optional(j, "lambda_min", base.lambda_min, ctx);
    read_optional(j, "lambda_max", base.lambda_max, ctx);
    read_optional(j, "pairs_per_batch", base.pairs_per_batch, ctx);
    read_optional(j, "projector_lower", base.projector_lower, ctx);
    read_optional(j, "projector_upper", base.projector_upper, ctx);
    read_optional(j, "seed", base.seed, ctx);
    base.validate();
    return base;
}

auto init_embedding(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) -> Matrix
{
    if (vocab_size == 0 || dim == 0) {
        throw ConfigError("init_embedding: vocabulary size and dimension must be positive");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    Rng rng(derive_seed(seed, { 0 }));
    Matrix e(vocab_size, dim);
    for (double& x : e.data()) {
        x = rng.uniform(-bound, bound);
    }
    return e;
}

auto reconstruction_loss(const Matrix& embeddings, std::span<const SaturationOperator> ops,
                         const Matrix& targets) -> double
{
    const Matrix projected = project_rows(embeddings, ops);
    if (!projected.same_shape(targets)) {
        throw DimensionError("reconstruction_loss: projections " + projected.shape_string()
                             + " vs targets " + targets.shape_string());
    }
    if (targets.empty()) {
        return 0.0;
    }
    double total = 0.0;
    const auto p = projected.data();
    const auto t = targets.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = p[i] - t[i];
        total += r * r;
    }
    return total / static_cast<double>(p.size());
}

auto cosine_similarity(std::span<const double> a, std::span<const double> b) -> double
{
    if (a.size() != b.size()) {
        throw DimensionError("cosine_similarity: lengths " + std::to_string(a.size()) + " and "
                             + std::to_string(b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw ContractError("cosine_similarity: zero vector");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

auto pair_label(std::span<const double> fi, std::span<const double> fj, double threshold) -> bool
{
    return cosine_similarity(fi, fj) >= threshold;
}

namespace {

void check_pairs(std::span<const TokenPair> pairs, const std::vector<bool>& kept)
{
    for (const auto& p : pairs) {
        for (std::size_t t : { p.i, p.j }) {
            if (t >= kept.size() || !kept[t]) {
                throw ContractError("contrastive pair (" + std::to_string(p.i) + ", "
                                    + std::to_string(p.j) + ") references excluded token "
                                    + std::to_string(t));
            }
        }
    }
}

auto hinge_sq(double x) -> double
{
    return x > 0.0 ? x * x : 0.0;
}

} // namespace

auto contrastive_loss(const Matrix& embeddings, std::span<const TokenPair> pairs,
                      const GroundingConfig& cfg, const std::vector<bool>& kept) -> double
{
    check_pairs(pairs, kept);
    if (pairs.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& p : pairs) {
        const auto ei = embeddings.row(p.i);
        const auto ej = embeddings.row(p.j);
        double sq = 0.0;
        for (std::size_t c = 0; c < ei.size(); ++c) {
            sq += (ei[c] - ej[c]) * (ei[c] - ej[c]);
        }
        const double dist = std::sqrt(sq);
        const double y = p.similar ? 1.0 : 0.0;
        total += y * dist * dist + (1.0 - y) * hinge_sq(cfg.margin - dist)
            + cfg.lambda_min * hinge_sq(cfg.d_min - dist)
            + cfg.lambda_max * hinge_sq(dist - cfg.d_max);
    }
    return total / static_cast<double>(pairs.size());
}

namespace {

auto kept_mask_of(const FeatureMatrix& features, std::size_t vocab_size) -> std::vector<bool>
{
    std::vector<bool> kept(vocab_size, false);
    for (std::size_t t : features.kept_indices) {
        if (t >= vocab_size) {
            throw IndexError("kept token " + std::to_string(t) + " outside a vocabulary of "
                             + std::to_string(vocab_size));
        }
        kept[t] = true;
    }
    return kept;
}

auto record_projection(ad::Tape& tape, ad::Var rows, std::vector<std::size_t> tokens,
                       const SaturationBank& bank) -> ad::Var
{
    const Matrix& e = tape.value(rows);
    Matrix out(e.rows(), bank.feature_dim());
    for (std::size_t r = 0; r < e.rows(); ++r) {
        bank.project(tokens[r], e.row(r), out.row(r));
    }
    return tape.custom({ rows }, std::move(out),
                       [&bank, tokens = std::move(tokens)](const Matrix& up,
                                                            std::span<Matrix* const> grads) {
                           if (grads[0] == nullptr) {
                               return;
                           }
                           for (std::size_t r = 0; r < tokens.size(); ++r) {
                               bank.accumulate_adjoint(tokens[r], up.row(r), grads[0]->row(r));
                           }
                       });
}

} // namespace

auto record_grounding_loss(ad::Tape& tape, ad::Var embeddings, std::span<const std::size_t> token_rows,
                           std::span<const TokenPair> pairs, const FeatureMatrix& features,
                           const SaturationBank& bank, const GroundingConfig& cfg) -> LossGraph
{
    const Matrix& e = tape.value(embeddings);
    if (e.rows() != bank.vocab_size() || e.cols() != bank.embedding_dim()) {
        throw DimensionError("grounding loss: embeddings " + e.shape_string()
                             + " do not match the operator bank");
    }
    if (features.x.cols() != bank.feature_dim()) {
        throw DimensionError("grounding loss: feature width " + std::to_string(features.x.cols())
                             + " differs from projector width "
                             + std::to_string(bank.feature_dim()));
    }
    check_pairs(pairs, kept_mask_of(features, bank.vocab_size()));

    ad::Var recon;
    if (token_rows.empty()) {
        recon = tape.constant(Matrix(1, 1));
    } else {
        std::vector<std::size_t> vocab_idx;
        Matrix targets(token_rows.size(), features.x.cols());
        for (std::size_t r = 0; r < token_rows.size(); ++r) {
            if (token_rows[r] >= features.x.rows()) {
                throw IndexError("grounding loss: feature row " + std::to_string(token_rows[r])
                                 + " out of range");
            }
            vocab_idx.push_back(features.kept_indices[token_rows[r]]);
            const auto src = features.x.row(token_rows[r]);
            std::copy(src.begin(), src.end(), targets.row(r).begin());
        }
        const ad::Var rows = tape.gather_rows(embeddings, vocab_idx);
        const ad::Var projected = record_projection(tape, rows, std::move(vocab_idx), bank);
        const ad::Var residual = tape.sub(projected, tape.constant(std::move(targets)));
        recon = tape.mean(tape.square(residual));
    }

    ad::Var contrastive;
    if (pairs.empty()) {
        contrastive = tape.constant(Matrix(1, 1));
    } else {
        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        Matrix similar(pairs.size(), 1);
        Matrix dissimilar(pairs.size(), 1);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            left.push_back(pairs[p].i);
            right.push_back(pairs[p].j);
            similar(p, 0) = pairs[p].similar ? 1.0 : 0.0;
            dissimilar(p, 0) = pairs[p].similar ? 0.0 : 1.0;
        }
        const ad::Var diff = tape.sub(tape.gather_rows(embeddings, std::move(left)),
                                      tape.gather_rows(embeddings, std::move(right)));
        const ad::Var dist = tape.row_norm(diff);
        const ad::Var neg_dist = tape.scale(dist, -1.0);

        const ad::Var pull = tape.hadamard(tape.constant(std::move(similar)), tape.square(dist));
        const ad::Var push = tape.hadamard(tape.constant(std::move(dissimilar)),
                                           tape.square(tape.relu(tape.add_scalar(neg_dist, cfg.margin))));
        const ad::Var too_close =
            tape.scale(tape.square(tape.relu(tape.add_scalar(neg_dist, cfg.d_min))), cfg.lambda_min);
        const ad::Var too_far =
            tape.scale(tape.square(tape.relu(tape.add_scalar(dist, -cfg.d_max))), cfg.lambda_max);
        contrastive = tape.mean(tape.add(tape.add(pull, push), tape.add(too_close, too_far)));
    }

    const ad::Var total = tape.add(recon, tape.scale(contrastive, cfg.lambda_contrastive));
    return { total, recon, contrastive };
}

auto grounding_loss_and_gradient(const Matrix& embeddings, std::span<const std::size_t> token_rows,
                                 std::span<const TokenPair> pairs, const FeatureMatrix& features,
                                 const SaturationBank& bank, const GroundingConfig& cfg)
    -> LossAndGradient
{
    ad::Tape tape;
    const ad::Var e = tape.parameter("embedding", embeddings);
    const LossGraph g = record_grounding_loss(tape, e, token_rows, pairs, features, bank, cfg);
    tape.backward(g.total);
    return { { tape.scalar(g.total), tape.scalar(g.recon), tape.scalar(g.contrastive) },
             tape.gradient(e) };
}

auto grounding_step(GroundingState& state, std::span<const std::size_t> token_rows,
                    std::span<const TokenPair> pairs, const FeatureMatrix& features,
                    const SaturationBank& bank, const GroundingConfig& cfg) -> LossBreakdown
{
    auto [loss, grad] =
        grounding_loss_and_gradient(state.embeddings, token_rows, pairs, features, bank, cfg);
    const std::string where =
        " at epoch " + std::to_string(state.epoch) + ", batch " + std::to_string(state.batch);
    if (!std::isfinite(loss.total) || !std::isfinite(loss.recon) || !std::isfinite(loss.contrastive)) {
        throw DivergenceError("grounding loss is not finite" + where);
    }
    for (std::size_t t = 0; t < state.kept.size(); ++t) {
        if (!state.kept[t]) {
            for (double& g : grad.row(t)) {
                g = 0.0;
            }
        }
    }
    // Excluded rows carry zero gradient and zero moments, so the Adam
    // update leaves their bits untouched.
    adam_step(state.optimizer, state.embeddings, grad);
    if (!state.embeddings.all_finite()) {
        throw DivergenceError("embedding weights are not finite" + where);
    }
    ++state.batch;
    return loss;
}

auto sample_pairs(const FeatureMatrix& features, const GroundingConfig& cfg, std::size_t epoch,
                  std::size_t batch) -> std::vector<TokenPair>
{
    const std::size_t kept = features.kept_indices.size();
    std::vector<TokenPair> pairs;
    if (kept < 2) {
        return pairs;
    }
    Rng rng(derive_seed(cfg.seed, { 2, epoch, batch }));
    const std::size_t count = cfg.effective_pairs_per_batch();
    pairs.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t a = rng.below(kept);
        std::size_t b = rng.below(kept - 1);
        if (b >= a) {
            ++b;
        }
        pairs.push_back({ features.kept_indices[a], features.kept_indices[b],
                          pair_label(features.x.row(a), features.x.row(b), cfg.sim_threshold) });
    }
    return pairs;
}

auto WeightHistogram::total() const noexcept -> std::uint64_t
{
    return std::accumulate(bins.begin(), bins.end(), underflow + overflow);
}

auto weight_histogram(const Matrix& weights) -> WeightHistogram
{
    WeightHistogram h;
    const double width = (histogram_high - histogram_low) / static_cast<double>(histogram_bins);
    for (double x : weights.data()) {
        if (x < histogram_low) {
            ++h.underflow;
        } else if (x >= histogram_high) {
            ++h.overflow;
        } else {
            auto bin = static_cast<std::size_t>((x - histogram_low) / width);
            bin = std::min(bin, histogram_bins - 1);
            ++h.bins[bin];
        }
    }
    return h;
}

void write_metrics_header(std::ostream& out)
{
    out << "epoch,l_total,l_recon,l_contrastive";
    for (std::size_t b = 0; b < histogram_bins; ++b) {
        out << ",hist_bin_" << b;
    }
    out << ",underflow,overflow\n";
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m)
{
    char buf[64];
    out << m.epoch;
    for (double v : { m.loss.total, m.loss.recon, m.loss.contrastive }) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
    }
    for (auto c : m.histogram.bins) {
        out << ',' << c;
    }
    out << ',' << m.histogram.underflow << ',' << m.histogram.overflow << '\n';
}

auto train_grounding(const GroundingConfig& cfg, const FeatureMatrix& features,
                     const FilteredVocab& vocab, std::string schema_sha256,
                     const EpochCallback& on_epoch) -> GroundingResult
{
    cfg.validate();
    if (vocab.tokens.empty()) {
        throw ConfigError("train_grounding: no kept tokens to ground");
    }
    if (features.x.rows() != vocab.tokens.size()
        || features.kept_indices.size() != vocab.tokens.size()) {
        throw DimensionError("train_grounding: " + std::to_string(features.x.rows())
                             + " feature rows for " + std::to_string(vocab.tokens.size())
                             + " kept tokens");
    }
    if (features.x.cols() != cfg.feature_dim) {
        throw ConfigError("train_grounding: feature width " + std::to_string(features.x.cols())
                          + " but feature_dim is " + std::to_string(cfg.feature_dim));
    }

    const SaturationBank bank(
        base_projector(cfg.dim, cfg.feature_dim, cfg.projector_lower, cfg.projector_upper),
        vocab.vocab_size);

    GroundingState state;
    state.embeddings = init_embedding(vocab.vocab_size, cfg.dim, cfg.seed);
    state.kept = vocab.kept_mask();
    state.optimizer = AdamState({ cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon });

    GroundingResult result;
    const std::size_t kept = features.kept_indices.size();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        state.epoch = epoch;
        state.batch = 0;
        std::vector<std::size_t> order(kept);
        std::iota(order.begin(), order.end(), std::size_t { 0 });
        Rng(derive_seed(cfg.seed, { 1, epoch })).shuffle(order);

        EpochMetrics m;
        m.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < kept; start += cfg.batch_tokens) {
            const std::size_t end = std::min(kept, start + cfg.batch_tokens);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            const auto pairs = sample_pairs(features, cfg, epoch, batches);
            const LossBreakdown loss = grounding_step(state, rows, pairs, features, bank, cfg);
            m.loss.total += loss.total;
            m.loss.recon += loss.recon;
            m.loss.contrastive += loss.contrastive;
            ++batches;
        }
        const double inv = 1.0 / static_cast<double>(batches);
        m.loss.total *= inv;
        m.loss.recon *= inv;
        m.loss.contrastive *= inv;
        m.histogram = weight_histogram(state.embeddings);
        if (on_epoch) {
            on_epoch(m);
        }
        result.metrics.push_back(m);
    }

    result.embedding.embeddings = std::move(state.embeddings);
    result.embedding.feature_dim = cfg.feature_dim;
    result.embedding.schema_sha256 = std::move(schema_sha256);
    result.embedding.config = cfg;
    return result;
}

namespace {

constexpr std::string_view embedding_magic = "FGE1";

} // namespace

auto serialize_embedding(const GroundedEmbedding& ge) -> std::string
{
    nlohmann::ordered_json header;
    header["magic"] = embedding_magic;
    header["vocab_size"] = ge.vocab_size();
    header["dim"] = ge.dim();
    header["feature_dim"] = ge.feature_dim;
    header["schema_sha256"] = ge.schema_sha256;
    header["dtype"] = "f64le";
    header["config"] = to_json(ge.config);
    std::string out = header.dump();
    out.push_back('\n');
    binary::append_f64le(out, ge.embeddings.data());
    return out;
}

auto deserialize_embedding(std::string_view bytes) -> GroundedEmbedding
{
    const std::size_t newline = bytes.find('\n');
    if (newline == std::string_view::npos) {
        throw FormatError("embedding file: header line is not terminated", bytes.size());
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, newline));
    } catch (const nlohmann::json::parse_error&) {
        throw FormatError("embedding file: bad magic (header is not JSON)", 0);
    }
    if (!header.is_object() || !header.contains("magic") || header["magic"] != embedding_magic) {
        throw FormatError("embedding file: bad magic, expected FGE1", 0);
    }
    GroundedEmbedding ge;
    std::size_t vocab = 0;
    std::size_t dim = 0;
    try {
        vocab = header.at("vocab_size").get<std::size_t>();
        dim = header.at("dim").get<std::size_t>();
        ge.feature_dim = header.at("feature_dim").get<std::size_t>();
        ge.schema_sha256 = header.at("schema_sha256").get<std::string>();
        if (header.at("dtype") != "f64le") {
            throw FormatError("embedding file: unsupported dtype " + header.at("dtype").dump(), 0);
        }
        if (header.contains("config")) {
            ge.config = grounding_config_from_json(header.at("config"));
        } else {
            ge.config.dim = dim;
            ge.config.feature_dim = ge.feature_dim;
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("embedding file: malformed header: ") + e.what(), 0);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("embedding file: malformed config echo: ") + e.what(), 0);
    }
    if (vocab == 0 || dim == 0) {
        throw FormatError("embedding file: empty shape in header", 0);
    }
    if (ge.config.dim != dim || ge.config.feature_dim != ge.feature_dim) {
        throw FormatError("embedding file: dim mismatch between header and config echo", 0);
    }
    const std::size_t payload_start = newline + 1;
    const std::size_t expected = vocab * dim * 8;
    const std::size_t available = bytes.size() - payload_start;
    if (available < expected) {
        throw FormatError("embedding file: truncated payload, expected " + std::to_string(expected)
                              + " bytes but found " + std::to_string(available),
                          bytes.size());
    }
    if (available > expected) {
        throw FormatError("embedding file: trailing bytes after payload", payload_start + expected);
    }
    ge.embeddings = Matrix(vocab, dim);
    auto data = ge.embeddings.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = binary::read_f64le(bytes, payload_start + 8 * i);
    }
    return ge;
}

void export_embedding(const GroundedEmbedding& ge, const std::filesystem::path& path)
{
    binary::write_file(path, serialize_embedding(ge));
}

auto import_embedding(const std::filesystem::path& path) -> GroundedEmbedding
{
    return deserialize_embedding(binary::read_file(path));
}

auto check_fingerprint(const GroundedEmbedding& ge, const std::filesystem::path& features_path)
    -> std::optional<std::string>
{
    const std::string actual = sha256_file(features_path);
    if (actual == ge.schema_sha256) {
        return std::nullopt;
    }
    return "feature file " + features_path.string() + " hashes to " + actual
        + " but the embedding was grounded against " + ge.schema_sha256;
}

} // namespace groundkit
