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

#include "groundkit/classifier.hpp"

#include "groundkit/adam.hpp"
#include "groundkit/binary_io.hpp"
#include "groundkit/error.hpp"
#include "groundkit/json_util.hpp"
#include "groundkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <tuple>

namespace groundkit {

namespace {

constexpr std::string_view checkpoint_magic = "TKC1";
constexpr int checkpoint_version = 1;
constexpr std::size_t blocks_per_layer = 8;
constexpr const char* layer_parts[blocks_per_layer] = { "wq",   "wk",   "wv",  "wo",
                                                        "ffn1", "ffn2", "ln1", "ln2" };
constexpr std::size_t eval_chunk = 64;

auto layer_block(std::size_t layer, std::size_t part) -> std::string
{
    return "encoder." + std::to_string(layer) + "." + layer_parts[part];
}

struct Shapes {
    std::size_t d;
    std::size_t hidden;
    std::size_t classes;
};

auto block_shape(const Shapes& s, std::size_t part) -> std::pair<std::size_t, std::size_t>
{
    switch (part) {
    case 4:
        return { s.d + 1, s.hidden };
    case 5:
        return { s.hidden + 1, s.d };
    case 6:
    case 7:
        return { 2, s.d };
    default:
        return { s.d, s.d };
    }
}

// Per-batch handles: weight and bias slices of the affine blocks are
// recorded once and shared by every example.
struct Layer {
    ad::Var wq, wk, wv, wo;
    ad::Var ffn1_w, ffn1_b, ffn2_w, ffn2_b;
    ad::Var ln1, ln2;
};

struct Graph {
    ad::Var embedding;
    std::vector<Layer> layers;
    ad::Var head_w, head_b;
    ad::Var positional;
};

auto build_graph(ad::Tape& tape, const ModelVars& vars, const TinyClassifier& model) -> Graph
{
    const auto& cfg = model.config();
    const std::size_t d = cfg.dim;
    const std::size_t hidden = d * cfg.ffn_mult;
    Graph g;
    g.embedding = vars.blocks.at(0);
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        const std::size_t base = 1 + blocks_per_layer * l;
        Layer layer;
        layer.wq = vars.blocks[base + 0];
        layer.wk = vars.blocks[base + 1];
        layer.wv = vars.blocks[base + 2];
        layer.wo = vars.blocks[base + 3];
        layer.ffn1_w = tape.slice_rows(vars.blocks[base + 4], 0, d);
        layer.ffn1_b = tape.slice_rows(vars.blocks[base + 4], d, d + 1);
        layer.ffn2_w = tape.slice_rows(vars.blocks[base + 5], 0, hidden);
        layer.ffn2_b = tape.slice_rows(vars.blocks[base + 5], hidden, hidden + 1);
        layer.ln1 = vars.blocks[base + 6];
        layer.ln2 = vars.blocks[base + 7];
        g.layers.push_back(layer);
    }
    const ad::Var head = vars.blocks.back();
    g.head_w = tape.slice_rows(head, 0, d);
    g.head_b = tape.slice_rows(head, d, d + 1);
    g.positional = tape.constant(model.positional());
    return g;
}

auto encode_sequence(ad::Tape& tape, const Graph& g, const TinyClassifier& model,
                     std::span<const std::size_t> ids) -> ad::Var
{
    const std::size_t d = model.config().dim;
    if (ids.empty()) {
        return tape.constant(Matrix(1, d));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    ad::Var x = tape.add(tape.gather_rows(g.embedding, { ids.begin(), ids.end() }),
                         tape.slice_rows(g.positional, 0, ids.size()));
    for (const Layer& layer : g.layers) {
        const ad::Var q = tape.matmul(x, layer.wq);
        const ad::Var k = tape.matmul(x, layer.wk);
        const ad::Var v = tape.matmul(x, layer.wv);
        const ad::Var attn = tape.softmax_rows(tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_d));
        const ad::Var mixed = tape.matmul(tape.matmul(attn, v), layer.wo);
        x = tape.layer_norm_rows(tape.add(x, mixed), layer.ln1);
        const ad::Var h = tape.relu(tape.add_row_broadcast(tape.matmul(x, layer.ffn1_w), layer.ffn1_b));
        const ad::Var f = tape.add_row_broadcast(tape.matmul(h, layer.ffn2_w), layer.ffn2_b);
        x = tape.layer_norm_rows(tape.add(x, f), layer.ln2);
    }
    return tape.mean_rows(x);
}

auto example_spans(std::span<const Example> examples) -> std::vector<std::span<const std::size_t>>
{
    std::vector<std::span<const std::size_t>> out;
    out.reserve(examples.size());
    for (const auto& e : examples) {
        out.emplace_back(e.tokens);
    }
    return out;
}

auto check_labels(std::span<const Example> examples, std::size_t n_classes, std::string_view what)
{
    for (const auto& e : examples) {
        if (e.label >= n_classes) {
            throw DataError(std::string(what) + ": line " + std::to_string(e.line) + ": label "
                            + std::to_string(e.label) + " outside [0, "
                            + std::to_string(n_classes) + ")");
        }
    }
}

/// Softmax cross-entropy of one logit row, by log-sum-exp.
auto row_cross_entropy(std::span<const double> z, std::size_t label) -> double
{
    const double top = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) {
        s += std::exp(v - top);
    }
    return std::log(s) + top - z[label];
}

auto argmax(std::span<const double> z) -> std::size_t
{
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

auto format_double(double v) -> std::string
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void ClassifierConfig::validate() const
{
    if (dim == 0 || dim % 2 != 0) {
        throw ConfigError("classifier: dim must be positive and even, got " + std::to_string(dim));
    }
    if (n_classes < 2) {
        throw ConfigError("classifier: n_classes must be at least 2");
    }
    if (ffn_mult == 0 || max_len == 0 || batch_size == 0) {
        throw ConfigError("classifier: ffn_mult, max_len and batch_size must be positive");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw ConfigError("classifier: lr must be finite and non-negative");
    }
}

auto to_json(const ClassifierConfig& cfg) -> nlohmann::ordered_json
{
    nlohmann::ordered_json j;
    j["dim"] = cfg.dim;
    j["n_blocks"] = cfg.n_blocks;
    j["ffn_mult"] = cfg.ffn_mult;
    j["n_classes"] = cfg.n_classes;
    j["max_len"] = cfg.max_len;
    j["lr"] = cfg.lr;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["freeze_embedding"] = cfg.freeze_embedding;
    return j;
}

auto classifier_config_from_json(const nlohmann::json& j, ClassifierConfig base) -> ClassifierConfig
{
    constexpr std::string_view ctx = "classifier config";
    json_util::reject_unknown_keys(j,
                                   { "dim", "n_blocks", "ffn_mult", "n_classes", "max_len", "lr",
                                     "epochs", "batch_size", "seed", "freeze_embedding" },
                                   ctx);
    json_util::read_optional(j, "dim", base.dim, ctx);
    json_util::read_optional(j, "n_blocks", base.n_blocks, ctx);
    json_util::read_optional(j, "ffn_mult", base.ffn_mult, ctx);
    json_util::read_optional(j, "n_classes", base.n_classes, ctx);
    json_util::read_optional(j, "max_len", base.max_len, ctx);
    json_util::read_optional(j, "lr", base.lr, ctx);
    json_util::read_optional(j, "epochs", base.epochs, ctx);
    json_util::read_optional(j, "batch_size", base.batch_size, ctx);
    json_util::read_optional(j, "seed", base.seed, ctx);
    json_util::read_optional(j, "freeze_embedding", base.freeze_embedding, ctx);
    base.validate();
    return base;
}

auto encode_examples(std::span<const LabeledText> rows, const Tokenizer& tok) -> std::vector<Example>
{
    std::vector<Example> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.push_back({ r.label, tok.tokenize(r.text), r.line });
    }
    return out;
}

auto sinusoidal_table(std::size_t max_len, std::size_t d) -> Matrix
{
    Matrix pe(max_len, d);
    for (std::size_t pos = 0; pos < max_len; ++pos) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            const double angle = static_cast<double>(pos) * freq;
            pe(pos, i) = std::sin(angle);
            if (i + 1 < d) {
                pe(pos, i + 1) = std::cos(angle);
            }
        }
    }
    return pe;
}

TinyClassifier::TinyClassifier(ClassifierConfig cfg, std::size_t vocab_size)
    : config_(cfg)
    , vocab_size_(vocab_size)
{
    config_.validate();
    if (vocab_size_ == 0) {
        throw ConfigError("classifier: vocabulary is empty");
    }
    const Shapes s { cfg.dim, cfg.dim * cfg.ffn_mult, cfg.n_classes };
    blocks_.emplace_back("embedding", Matrix(vocab_size, cfg.dim));
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        for (std::size_t p = 0; p < blocks_per_layer; ++p) {
            const auto [r, c] = block_shape(s, p);
            blocks_.emplace_back(layer_block(l, p), Matrix(r, c));
        }
    }
    blocks_.emplace_back("head", Matrix(cfg.dim + 1, cfg.n_classes));
    positional_ = sinusoidal_table(cfg.max_len, cfg.dim);
}

auto TinyClassifier::block_names() const -> std::vector<std::string>
{
    std::vector<std::string> names;
    names.reserve(blocks_.size());
    for (const auto& [name, m] : blocks_) {
        names.push_back(name);
    }
    return names;
}

auto TinyClassifier::has_block(std::string_view name) const -> bool
{
    return std::any_of(blocks_.begin(), blocks_.end(), [&](const auto& b) { return b.first == name; });
}

auto TinyClassifier::block(std::string_view name) const -> const Matrix&
{
    for (const auto& [n, m] : blocks_) {
        if (n == name) {
            return m;
        }
    }
    std::string valid;
    for (const auto& [n, m] : blocks_) {
        valid += (valid.empty() ? "" : ", ") + n;
    }
    throw LookupError("unknown block '" + std::string(name) + "'; valid blocks: " + valid);
}

auto TinyClassifier::block(std::string_view name) -> Matrix&
{
    return const_cast<Matrix&>(std::as_const(*this).block(name));
}

auto operator==(const TinyClassifier& a, const TinyClassifier& b) -> bool
{
    if (a.vocab_size_ != b.vocab_size_ || a.blocks_.size() != b.blocks_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
        if (a.blocks_[i].first != b.blocks_[i].first || !(a.blocks_[i].second == b.blocks_[i].second)) {
            return false;
        }
    }
    return to_json(a.config_) == to_json(b.config_);
}

auto init_classifier(const ClassifierConfig& cfg, std::size_t vocab_size) -> TinyClassifier
{
    TinyClassifier model(cfg, vocab_size);
    model.block("embedding") = init_embedding(vocab_size, cfg.dim, derive_seed(cfg.seed, { 20 }));
    const Shapes s { cfg.dim, cfg.dim * cfg.ffn_mult, cfg.n_classes };

    // Glorot-uniform weights, zero biases, unit layer-norm gains.
    auto glorot = [](Matrix& w, std::size_t fan_in, std::size_t fan_out, std::size_t rows,
                     std::uint64_t seed) {
        Rng rng(seed);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (std::size_t r = 0; r < rows; ++r) {
            for (double& x : w.row(r)) {
                x = rng.uniform(-bound, bound);
            }
        }
    };
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        for (std::size_t p = 0; p < blocks_per_layer; ++p) {
            Matrix& w = model.block(layer_block(l, p));
            const std::uint64_t seed = derive_seed(cfg.seed, { 21, l, p });
            if (p >= 6) {
                for (double& x : w.row(0)) {
                    x = 1.0;
                }
            } else if (p == 4) {
                glorot(w, s.d, s.hidden, s.d, seed);
            } else if (p == 5) {
                glorot(w, s.hidden, s.d, s.hidden, seed);
            } else {
                glorot(w, s.d, s.d, s.d, seed);
            }
        }
    }
    glorot(model.block("head"), s.d, s.classes, s.d, derive_seed(cfg.seed, { 22 }));
    return model;
}

auto register_parameters(ad::Tape& tape, const TinyClassifier& model) -> ModelVars
{
    ModelVars vars;
    for (const auto& [name, m] : model.blocks()) {
        vars.blocks.push_back(tape.parameter(name, m));
    }
    return vars;
}

auto record_logits(ad::Tape& tape, const ModelVars& vars, const TinyClassifier& model,
                   std::span<const std::span<const std::size_t>> sequences) -> ad::Var
{
    if (sequences.empty()) {
        throw ContractError("classifier forward: empty batch");
    }
    for (const auto& seq : sequences) {
        if (seq.size() > model.config().max_len) {
            throw ContractError("classifier forward: sequence of length " + std::to_string(seq.size())
                                + " exceeds max_len " + std::to_string(model.config().max_len));
        }
        for (std::size_t id : seq) {
            if (id >= model.vocab_size()) {
                throw ContractError("classifier forward: token index " + std::to_string(id)
                                    + " outside a vocabulary of " + std::to_string(model.vocab_size()));
            }
        }
    }
    const Graph g = build_graph(tape, vars, model);
    std::vector<ad::Var> pooled;
    pooled.reserve(sequences.size());
    for (const auto& seq : sequences) {
        pooled.push_back(encode_sequence(tape, g, model, seq));
    }
    const ad::Var features = tape.concat_rows(pooled);
    return tape.add_row_broadcast(tape.matmul(features, g.head_w), g.head_b);
}

auto forward(const TinyClassifier& model, const std::vector<std::vector<std::size_t>>& padded,
             std::span<const std::size_t> lengths) -> Matrix
{
    if (padded.size() != lengths.size()) {
        throw DimensionError("classifier forward: " + std::to_string(lengths.size())
                             + " lengths for " + std::to_string(padded.size()) + " rows");
    }
    std::vector<std::span<const std::size_t>> seqs;
    for (std::size_t b = 0; b < padded.size(); ++b) {
        if (lengths[b] > padded[b].size()) {
            throw ContractError("classifier forward: length exceeds the padded row");
        }
        seqs.emplace_back(padded[b].data(), lengths[b]);
    }
    ad::Tape tape;
    const ModelVars vars = register_parameters(tape, model);
    return tape.value(record_logits(tape, vars, model, seqs));
}

auto logits(const TinyClassifier& model, std::span<const Example> examples) -> Matrix
{
    ad::Tape tape;
    const ModelVars vars = register_parameters(tape, model);
    const auto seqs = example_spans(examples);
    return tape.value(record_logits(tape, vars, model, seqs));
}

auto classifier_loss_and_gradients(const TinyClassifier& model, std::span<const Example> batch)
    -> ClassifierGradients
{
    check_labels(batch, model.config().n_classes, "classifier batch");
    ad::Tape tape;
    const ModelVars vars = register_parameters(tape, model);
    const auto seqs = example_spans(batch);
    std::vector<std::size_t> labels;
    for (const auto& e : batch) {
        labels.push_back(e.label);
    }
    const ad::Var loss = tape.cross_entropy(record_logits(tape, vars, model, seqs), labels);
    tape.backward(loss);
    return { tape.scalar(loss), tape.parameter_gradients() };
}

auto evaluate(const TinyClassifier& model, std::span<const Example> dataset) -> EvalResult
{
    if (dataset.empty()) {
        throw DataError("evaluate: dataset is empty");
    }
    const std::size_t classes = model.config().n_classes;
    check_labels(dataset, classes, "evaluate");
    EvalResult r;
    r.n_examples = dataset.size();
    r.class_counts.assign(classes, 0);
    r.class_correct.assign(classes, 0);
    std::vector<double> losses;
    losses.reserve(dataset.size());
    std::size_t correct = 0;
    for (std::size_t start = 0; start < dataset.size(); start += eval_chunk) {
        const auto chunk = dataset.subspan(start, std::min(eval_chunk, dataset.size() - start));
        const Matrix z = logits(model, chunk);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const std::size_t y = chunk[i].label;
            losses.push_back(row_cross_entropy(z.row(i), y));
            ++r.class_counts[y];
            if (argmax(z.row(i)) == y) {
                ++r.class_correct[y];
                ++correct;
            }
        }
    }
    // Summing in sorted order makes the mean independent of example order.
    std::sort(losses.begin(), losses.end());
    r.mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    return r;
}

void write_classifier_metrics_header(std::ostream& out)
{
    out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
}

void write_classifier_metrics_row(std::ostream& out, const ClassifierEpochMetrics& m)
{
    out << m.epoch << ',' << format_double(m.train_loss) << ',' << format_double(m.train_accuracy)
        << ',';
    if (m.has_validation) {
        out << format_double(m.val_loss) << ',' << format_double(m.val_accuracy);
    } else {
        out << ',';
    }
    out << '\n';
}

auto train_classifier(const ClassifierConfig& cfg, std::span<const Example> train,
                      std::size_t vocab_size, const GroundedEmbedding* embedding,
                      std::span<const Example> validation, const ClassifierEpochCallback& on_epoch)
    -> TrainResult
{
    cfg.validate();
    check_labels(train, cfg.n_classes, "training set");
    check_labels(validation, cfg.n_classes, "validation set");
    TrainResult result { init_classifier(cfg, vocab_size), {} };
    TinyClassifier& model = result.model;
    if (embedding != nullptr) {
        if (embedding->dim() != cfg.dim) {
            throw ConfigError("embedding file has dim " + std::to_string(embedding->dim())
                              + " but the classifier expects " + std::to_string(cfg.dim));
        }
        if (embedding->vocab_size() != vocab_size) {
            throw ConfigError("embedding file covers " + std::to_string(embedding->vocab_size())
                              + " tokens but the vocabulary has " + std::to_string(vocab_size));
        }
        model.block("embedding") = embedding->embeddings;
    }
    if (cfg.epochs > 0 && train.empty()) {
        throw DataError("training set is empty");
    }

    AdamState optimizer(AdamConfig { cfg.lr });
    std::vector<std::size_t> order(train.size());
    std::vector<Example> batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t { 0 });
        Rng(derive_seed(cfg.seed, { 23, epoch })).shuffle(order);
        ClassifierEpochMetrics m;
        m.epoch = epoch;
        std::size_t correct = 0;
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train[order[i]]);
            }
            ad::Tape tape;
            const ModelVars vars = register_parameters(tape, model);
            const auto seqs = example_spans(batch);
            std::vector<std::size_t> labels;
            for (const auto& e : batch) {
                labels.push_back(e.label);
            }
            const ad::Var z = record_logits(tape, vars, model, seqs);
            const ad::Var loss = tape.cross_entropy(z, labels);
            const double value = tape.scalar(loss);
            if (!std::isfinite(value)) {
                throw DivergenceError("classifier loss is not finite at epoch " + std::to_string(epoch)
                                      + ", batch " + std::to_string(batches));
            }
            const Matrix& zv = tape.value(z);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                correct += argmax(zv.row(i)) == batch[i].label ? 1 : 0;
            }
            tape.backward(loss);

            std::vector<Matrix> grads;
            grads.reserve(vars.blocks.size());
            for (ad::Var v : vars.blocks) {
                grads.push_back(tape.gradient(v));
            }
            std::vector<ParamUpdate> updates;
            std::size_t i = 0;
            for (const auto& name : model.block_names()) {
                if (!(cfg.freeze_embedding && name == "embedding")) {
                    updates.push_back({ name, &model.block(name), &grads[i] });
                }
                ++i;
            }
            optimizer.step(updates);
            for (const auto& [name, w] : model.blocks()) {
                if (!w.all_finite()) {
                    throw DivergenceError("block " + name + " is not finite at epoch "
                                          + std::to_string(epoch) + ", batch " + std::to_string(batches));
                }
            }
            loss_sum += value;
            ++batches;
        }
        m.train_loss = loss_sum / static_cast<double>(batches);
        m.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
        if (!validation.empty()) {
            const EvalResult v = evaluate(model, validation);
            m.has_validation = true;
            m.val_loss = v.mean_loss;
            m.val_accuracy = v.accuracy;
        }
        if (on_epoch) {
            on_epoch(m);
        }
        result.metrics.push_back(m);
    }
    return result;
}

auto serialize_checkpoint(const TinyClassifier& model) -> std::string
{
    nlohmann::ordered_json manifest;
    manifest["magic"] = checkpoint_magic;
    manifest["format_version"] = checkpoint_version;
    manifest["vocab_size"] = model.vocab_size();
    manifest["config"] = to_json(model.config());
    auto blocks = nlohmann::ordered_json::array();
    for (const auto& [name, m] : model.blocks()) {
        nlohmann::ordered_json b;
        b["name"] = name;
        b["rows"] = m.rows();
        b["cols"] = m.cols();
        blocks.push_back(b);
    }
    manifest["blocks"] = blocks;
    manifest["dtype"] = "f64le";
    std::string out = manifest.dump();
    out.push_back('\n');
    for (const auto& [name, m] : model.blocks()) {
        binary::append_f64le(out, m.data());
    }
    return out;
}

auto deserialize_checkpoint(std::string_view bytes) -> TinyClassifier
{
    const std::size_t newline = bytes.find('\n');
    if (newline == std::string_view::npos) {
        throw FormatError("checkpoint: manifest line is not terminated", bytes.size());
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(0, newline));
    } catch (const nlohmann::json::parse_error&) {
        throw FormatError("checkpoint: bad magic (manifest is not JSON)", 0);
    }
    if (!manifest.is_object() || !manifest.contains("magic") || manifest["magic"] != checkpoint_magic) {
        throw FormatError("checkpoint: bad magic, expected TKC1", 0);
    }
    std::optional<TinyClassifier> model;
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> listed;
    try {
        if (manifest.at("format_version") != checkpoint_version) {
            throw FormatError("checkpoint: unsupported format_version "
                                  + manifest.at("format_version").dump(),
                              0);
        }
        if (manifest.at("dtype") != "f64le") {
            throw FormatError("checkpoint: unsupported dtype " + manifest.at("dtype").dump(), 0);
        }
        model.emplace(classifier_config_from_json(manifest.at("config")),
                      manifest.at("vocab_size").get<std::size_t>());
        for (const auto& b : manifest.at("blocks")) {
            listed.emplace_back(b.at("name").get<std::string>(), b.at("rows").get<std::size_t>(),
                                b.at("cols").get<std::size_t>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what(), 0);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: malformed config: ") + e.what(), 0);
    }
    const auto expected = model->blocks();
    if (listed.size() != expected.size()) {
        throw FormatError("checkpoint: manifest lists " + std::to_string(listed.size())
                              + " blocks but the config implies " + std::to_string(expected.size()),
                          0);
    }
    std::size_t payload = 0;
    for (std::size_t i = 0; i < listed.size(); ++i) {
        const auto& [name, rows, cols] = listed[i];
        if (name != expected[i].first || rows != expected[i].second.rows()
            || cols != expected[i].second.cols()) {
            throw FormatError("checkpoint: block " + std::to_string(i) + " ('" + name
                                  + "') does not match the config layout",
                              0);
        }
        payload += rows * cols * 8;
    }
    std::size_t offset = newline + 1;
    const std::size_t available = bytes.size() - offset;
    if (available < payload) {
        throw FormatError("checkpoint: truncated payload, expected " + std::to_string(payload)
                              + " bytes but found " + std::to_string(available),
                          bytes.size());
    }
    if (available > payload) {
        throw FormatError("checkpoint: trailing bytes after payload", offset + payload);
    }
    for (const auto& [name, rows, cols] : listed) {
        for (double& x : model->block(name).data()) {
            x = binary::read_f64le(bytes, offset);
            offset += 8;
        }
    }
    return std::move(*model);
}

void save_checkpoint(const TinyClassifier& model, const std::filesystem::path& path)
{
    binary::write_file(path, serialize_checkpoint(model));
}

auto load_checkpoint(const std::filesystem::path& path) -> TinyClassifier
{
    return deserialize_checkpoint(binary::read_file(path));
}

} // namespace groundkit
