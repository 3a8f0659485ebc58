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

#include "groundkit/cli.hpp"

#include "groundkit/binary_io.hpp"
#include "groundkit/classifier.hpp"
#include "groundkit/digest.hpp"
#include "groundkit/error.hpp"
#include "groundkit/grad_check.hpp"
#include "groundkit/grounding.hpp"
#include "groundkit/random.hpp"
#include "groundkit/swap.hpp"
#include "groundkit/synthetic.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <iostream>
#include <sstream>

namespace groundkit {

namespace {

auto read_json_file(const std::string& path) -> nlohmann::json
{
    try {
        return nlohmann::json::parse(binary::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

auto open_output(const std::string& path) -> std::ofstream
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw DataError("cannot write " + path);
    }
    return f;
}

auto max_label(std::span<const Example> examples) -> std::size_t
{
    std::size_t m = 0;
    for (const auto& e : examples) {
        m = std::max(m, e.label);
    }
    return m;
}

struct SynthArgs {
    std::string out;
    std::string config;
    std::optional<std::size_t> words, classes, per_class, test_per_class, coarse;
    std::optional<double> coherence;
    std::optional<std::uint64_t> seed;
};

auto run_synth(const SynthArgs& a, std::ostream& out) -> int
{
    SyntheticSpec spec;
    if (!a.config.empty()) {
        spec = synthetic_spec_from_json(read_json_file(a.config));
    }
    if (a.words) spec.words = *a.words;
    if (a.classes) spec.classes = *a.classes;
    if (a.per_class) spec.examples_per_class = *a.per_class;
    if (a.test_per_class) spec.test_examples_per_class = *a.test_per_class;
    if (a.coarse) spec.coarse_classes = *a.coarse;
    if (a.coherence) spec.coherence = *a.coherence;
    spec.seed = resolve_seed(a.seed, spec.seed);
    spec.validate();
    for (const auto& p : write_synthetic(generate_synthetic(spec), a.out)) {
        out << p.string() << '\n';
    }
    return exit_ok;
}

struct GroundArgs {
    std::string vocab, features, out, config, metrics;
    std::optional<std::size_t> epochs, dim, batch_tokens;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
};

auto run_ground(const GroundArgs& a, std::ostream& out, std::ostream& err) -> int
{
    GroundingConfig cfg;
    if (!a.config.empty()) {
        cfg = grounding_config_from_json(read_json_file(a.config));
    }
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.dim) cfg.dim = *a.dim;
    if (a.batch_tokens) cfg.batch_tokens = *a.batch_tokens;
    if (a.lr) cfg.lr = *a.lr;
    cfg.seed = resolve_seed(a.seed, cfg.seed);
    cfg.validate();

    const auto& schema = FeatureSchema::grounding();
    const auto vocab = read_vocab(a.vocab);
    const auto filtered = filter_vocabulary(vocab);
    const auto records = read_feature_records(a.features);
    const auto fm = build_feature_matrix(records, filtered, schema);
    err << "vocabulary: " << vocab.size() << " tokens, " << filtered.tokens.size() << " kept, "
        << filtered.excluded.size() << " excluded, " << fm.ignored_records.size()
        << " feature records ignored\n";

    std::ofstream metrics;
    if (!a.metrics.empty()) {
        metrics = open_output(a.metrics);
        write_metrics_header(metrics);
    }
    const auto result = train_grounding(cfg, fm, filtered, sha256_file(a.features),
                                        [&](const EpochMetrics& m) {
                                            if (metrics.is_open()) {
                                                write_metrics_row(metrics, m);
                                            }
                                        });
    export_embedding(result.embedding, a.out);
    if (!result.metrics.empty()) {
        const auto& first = result.metrics.front().loss;
        const auto& last = result.metrics.back().loss;
        out << "epochs " << result.metrics.size() << ": l_recon " << first.recon << " -> "
            << last.recon << ", l_contrastive " << first.contrastive << " -> " << last.contrastive
            << '\n';
    }
    out << "wrote " << a.out << '\n';
    return exit_ok;
}

struct TrainArgs {
    std::string vocab, train, test, embedding, features, out, config, metrics;
    std::optional<std::size_t> epochs, dim, classes, batch_size;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    bool freeze = false;
};

auto run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) -> int
{
    ClassifierConfig cfg;
    bool classes_given = a.classes.has_value();
    if (!a.config.empty()) {
        const auto j = read_json_file(a.config);
        classes_given = classes_given || j.contains("n_classes");
        auto patched = j;
        if (!j.contains("n_classes")) {
            patched["n_classes"] = 2; // replaced from the data below
        }
        cfg = classifier_config_from_json(patched);
    }
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.dim) cfg.dim = *a.dim;
    if (a.classes) cfg.n_classes = *a.classes;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    if (a.lr) cfg.lr = *a.lr;
    if (a.freeze) cfg.freeze_embedding = true;
    cfg.seed = resolve_seed(a.seed, cfg.seed);

    const auto vocab = read_vocab(a.vocab);
    const Tokenizer tok(vocab, "[UNK]", cfg.max_len);
    const auto train = encode_examples(load_dataset(a.train), tok);
    std::vector<Example> test;
    if (!a.test.empty()) {
        test = encode_examples(load_dataset(a.test), tok);
    }
    if (!classes_given) {
        cfg.n_classes = std::max<std::size_t>(2, std::max(max_label(train), max_label(test)) + 1);
    }
    cfg.validate();

    std::optional<GroundedEmbedding> ge;
    if (!a.embedding.empty()) {
        ge = import_embedding(a.embedding);
        if (!a.features.empty()) {
            if (const auto warning = check_fingerprint(*ge, a.features)) {
                err << "warning: " << *warning << '\n';
            }
        }
    }
    std::ofstream metrics;
    if (!a.metrics.empty()) {
        metrics = open_output(a.metrics);
        write_classifier_metrics_header(metrics);
    }
    const auto result = train_classifier(cfg, train, vocab.size(), ge ? &*ge : nullptr, test,
                                         [&](const ClassifierEpochMetrics& m) {
                                             if (metrics.is_open()) {
                                                 write_classifier_metrics_row(metrics, m);
                                             }
                                         });
    save_checkpoint(result.model, a.out);
    if (!result.metrics.empty()) {
        const auto& m = result.metrics.back();
        out << "epoch " << m.epoch << ": train_loss " << m.train_loss << ", train_accuracy "
            << m.train_accuracy;
        if (m.has_validation) {
            out << ", val_loss " << m.val_loss << ", val_accuracy " << m.val_accuracy;
        }
        out << '\n';
    }
    out << "wrote " << a.out << '\n';
    return exit_ok;
}

struct EvalArgs {
    std::string model, vocab, data;
};

auto run_eval(const EvalArgs& a, std::ostream& out) -> int
{
    const auto model = load_checkpoint(a.model);
    const auto vocab = read_vocab(a.vocab);
    if (vocab.size() != model.vocab_size()) {
        throw ConfigError("vocabulary has " + std::to_string(vocab.size())
                          + " tokens but the model was trained on "
                          + std::to_string(model.vocab_size()));
    }
    const Tokenizer tok(vocab, "[UNK]", model.config().max_len);
    const auto r = evaluate(model, encode_examples(load_dataset(a.data), tok));
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["mean_loss"] = r.mean_loss;
    j["n_examples"] = r.n_examples;
    j["class_counts"] = r.class_counts;
    j["class_correct"] = r.class_correct;
    out << j.dump() << '\n';
    return exit_ok;
}

struct SwapArgs {
    std::string plan, out;
    std::optional<std::uint64_t> seed;
};

auto run_swap(const SwapArgs& a, std::ostream& out, std::ostream& err) -> int
{
    ExperimentPlan plan = load_plan(a.plan);
    if (a.seed || std::getenv("GROUNDKIT_SEED") != nullptr) {
        plan.seeds = { resolve_seed(a.seed, 0) };
    }
    const auto report = run_swap_experiment(plan, [&](const std::string& s) { err << s << '\n'; });
    emit_report(report, a.out);
    for (const auto& s : summarize_deltas(report)) {
        if (s.swapped_module == no_swap) {
            continue;
        }
        out << s.variant << ' ' << s.model_dataset << " on " << s.eval_dataset << ", swap "
            << s.swapped_module << ": " << s.baseline_accuracy << " -> " << s.swapped_accuracy
            << " (delta " << s.delta_accuracy << ")\n";
    }
    out << "wrote " << (std::filesystem::path(a.out) / "report.json").string() << '\n';
    return exit_ok;
}

struct GradArgs {
    std::string model = "grounding";
    std::size_t tokens = 16;
    std::size_t dim = 8;
    std::size_t features = 6;
    double epsilon = 1e-6;
    std::optional<std::uint64_t> seed;
};

auto grounding_gradcheck(const GradArgs& a, std::uint64_t seed) -> GradCheckResult
{
    Rng rng(derive_seed(seed, { 50 }));
    FeatureMatrix fm { Matrix(a.tokens, a.features), {}, {} };
    for (std::size_t t = 0; t < a.tokens; ++t) {
        fm.kept_indices.push_back(t);
        fm.x(t, rng.below(a.features)) = 1.0;
        for (std::size_t c = 0; c < a.features; ++c) {
            if (rng.bernoulli(0.3)) {
                fm.x(t, c) = 1.0;
            }
        }
    }
    GroundingConfig cfg;
    cfg.dim = a.dim;
    cfg.feature_dim = a.features;
    cfg.seed = seed;
    cfg.batch_tokens = a.tokens;
    cfg.pairs_per_batch = 2 * a.tokens;
    const SaturationBank bank(base_projector(a.dim, a.features), a.tokens);
    const Matrix e = init_embedding(a.tokens, a.dim, seed);
    std::vector<std::size_t> rows(a.tokens);
    std::iota(rows.begin(), rows.end(), std::size_t { 0 });
    const auto pairs = sample_pairs(fm, cfg, 0, 0);
    const auto lg = grounding_loss_and_gradient(e, rows, pairs, fm, bank, cfg);
    GradCheckOptions opts;
    opts.epsilon = a.epsilon;
    return grad_check(
        [&](const Matrix& p) {
            return grounding_loss_and_gradient(p, rows, pairs, fm, bank, cfg).loss.total;
        },
        e, lg.gradient, opts);
}

auto classifier_gradcheck(const GradArgs& a, std::uint64_t seed) -> GradCheckResult
{
    ClassifierConfig cfg;
    cfg.dim = a.dim;
    cfg.n_classes = 3;
    cfg.ffn_mult = 2;
    cfg.max_len = 16;
    cfg.seed = seed;
    TinyClassifier model = init_classifier(cfg, a.tokens);
    Rng rng(derive_seed(seed, { 51 }));
    for (const auto& name : model.block_names()) {
        for (double& x : model.block(name).data()) {
            x += rng.uniform(-0.1, 0.1);
        }
    }
    std::vector<Example> batch(2);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        batch[i].label = rng.below(cfg.n_classes);
        const std::size_t len = 2 + rng.below(4);
        for (std::size_t t = 0; t < len; ++t) {
            batch[i].tokens.push_back(rng.below(a.tokens));
        }
    }
    const auto analytic = classifier_loss_and_gradients(model, batch);
    std::vector<Matrix*> blocks;
    std::vector<Matrix> grads;
    for (const auto& g : analytic.gradients) {
        blocks.push_back(&model.block(g.name));
        grads.push_back(g.gradient);
    }
    GradCheckOptions opts;
    opts.epsilon = a.epsilon;
    return grad_check([&] { return classifier_loss_and_gradients(model, batch).loss; }, blocks,
                      grads, opts);
}

auto run_gradcheck(const GradArgs& a, std::ostream& out) -> int
{
    const std::uint64_t seed = resolve_seed(a.seed, 42);
    const bool grounding = a.model == "grounding";
    if (!grounding && a.model != "classifier") {
        throw ConfigError("gradcheck: --model must be grounding or classifier");
    }
    if (!grounding && a.dim % 2 != 0) {
        throw ConfigError("gradcheck: the classifier needs an even --dim");
    }
    const auto r = grounding ? grounding_gradcheck(a, seed) : classifier_gradcheck(a, seed);
    const double tolerance = grounding ? 1e-4 : 1e-3;
    const bool pass = r.max_rel_error < tolerance && std::isfinite(r.max_rel_error);
    out << a.model << " gradient check (seed " << seed << "): max relative error "
        << r.max_rel_error << " over " << r.coords_checked << " coordinates, tolerance "
        << tolerance << ": " << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? exit_ok : exit_divergence;
}

struct InspectArgs {
    std::string embedding, model, operators_out;
    bool operators = false;
    std::size_t dim = 8;
    std::size_t features = 39;
    std::size_t vocab_size = 16;
    std::vector<std::size_t> tokens;
};

void print_stats(std::ostream& out, const std::string& label, const Matrix& m)
{
    double mean = 0.0;
    double lo = m.size() ? m.data()[0] : 0.0;
    double hi = lo;
    for (double x : m.data()) {
        mean += x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    mean /= m.size() ? static_cast<double>(m.size()) : 1.0;
    out << label << ' ' << m.shape_string() << " mean " << mean << " min " << lo << " max " << hi
        << " frobenius " << frobenius_norm(m) << '\n';
}

auto run_inspect(const InspectArgs& a, std::ostream& out) -> int
{
    if (a.embedding.empty() && a.model.empty() && !a.operators) {
        throw ConfigError("inspect: give --embedding, --model or --operators");
    }
    if (!a.embedding.empty()) {
        const auto ge = import_embedding(a.embedding);
        out << "embedding " << a.embedding << ": vocab_size " << ge.vocab_size() << ", dim "
            << ge.dim() << ", feature_dim " << ge.feature_dim << ", schema_sha256 "
            << ge.schema_sha256 << '\n';
        print_stats(out, "weights", ge.embeddings);
        const auto h = weight_histogram(ge.embeddings);
        out << "histogram underflow " << h.underflow << " overflow " << h.overflow << '\n';
    }
    if (!a.model.empty()) {
        const auto model = load_checkpoint(a.model);
        out << "model " << a.model << ": " << to_json(model.config()).dump() << '\n';
        for (const auto& [name, m] : model.blocks()) {
            print_stats(out, name, m);
        }
    }
    if (a.operators) {
        std::vector<std::size_t> tokens = a.tokens;
        if (tokens.empty()) {
            tokens.resize(a.vocab_size);
            std::iota(tokens.begin(), tokens.end(), std::size_t { 0 });
        }
        const auto base = base_projector(a.dim, a.features);
        if (a.operators_out.empty()) {
            write_operator_csv(out, base, tokens, a.vocab_size);
        } else {
            auto f = open_output(a.operators_out);
            write_operator_csv(f, base, tokens, a.vocab_size);
        }
    }
    return exit_ok;
}

} // namespace

auto resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) -> std::uint64_t
{
    if (flag) {
        return *flag;
    }
    if (const char* env = std::getenv("GROUNDKIT_SEED"); env != nullptr) {
        const std::string_view s(env);
        std::uint64_t value = 0;
        const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (s.empty() || ec != std::errc {} || end != s.data() + s.size()) {
            throw ConfigError("GROUNDKIT_SEED must be an unsigned integer, got '" + std::string(s) + "'");
        }
        return value;
    }
    return fallback;
}

auto cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) -> int
{
    CLI::App app { "Feature-grounded embeddings and module-swap experiments", "groundkit" };
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic vocabulary, features and datasets");
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--config", synth.config, "JSON synthetic spec");
    s->add_option("--vocab,--words", synth.words, "Number of groundable words");
    s->add_option("--classes", synth.classes, "Number of topic classes");
    s->add_option("--examples-per-class", synth.per_class, "Training documents per class");
    s->add_option("--test-per-class", synth.test_per_class, "Test documents per class");
    s->add_option("--coarse-classes", synth.coarse, "Also emit a coarse task with this many labels");
    s->add_option("--coherence", synth.coherence, "Feature coherence within a topic");
    s->add_option("--seed", synth.seed, "Seed (overrides GROUNDKIT_SEED)");

    GroundArgs ground;
    auto* g = app.add_subcommand("ground", "Train a feature-grounded embedding");
    g->add_option("--vocab", ground.vocab, "Vocabulary file")->required();
    g->add_option("--features", ground.features, "Feature JSONL file")->required();
    g->add_option("--out", ground.out, "Embedding file to write")->required();
    g->add_option("--config", ground.config, "JSON grounding config");
    g->add_option("--metrics", ground.metrics, "Per-epoch metrics CSV");
    g->add_option("--epochs", ground.epochs);
    g->add_option("--dim", ground.dim);
    g->add_option("--batch-tokens", ground.batch_tokens);
    g->add_option("--lr", ground.lr);
    g->add_option("--seed", ground.seed, "Seed (overrides GROUNDKIT_SEED)");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train the classifier");
    t->add_option("--vocab", train.vocab, "Vocabulary file")->required();
    t->add_option("--train", train.train, "Training CSV")->required();
    t->add_option("--out", train.out, "Checkpoint to write")->required();
    t->add_option("--test", train.test, "Validation CSV scored every epoch");
    t->add_option("--embedding", train.embedding, "Grounded embedding to initialize from");
    t->add_option("--features", train.features, "Feature file to check the embedding fingerprint against");
    t->add_option("--config", train.config, "JSON classifier config");
    t->add_option("--metrics", train.metrics, "Per-epoch metrics CSV");
    t->add_option("--epochs", train.epochs);
    t->add_option("--dim", train.dim);
    t->add_option("--classes", train.classes);
    t->add_option("--batch-size", train.batch_size);
    t->add_option("--lr", train.lr);
    t->add_flag("--freeze-embedding", train.freeze);
    t->add_option("--seed", train.seed, "Seed (overrides GROUNDKIT_SEED)");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    e->add_option("--model", eval.model, "Checkpoint")->required();
    e->add_option("--vocab", eval.vocab, "Vocabulary file")->required();
    e->add_option("--data", eval.data, "Dataset CSV")->required();

    SwapArgs swap;
    auto* w = app.add_subcommand("swap", "Run a module-swap experiment plan");
    w->add_option("--plan", swap.plan, "JSON experiment plan")->required();
    w->add_option("--out", swap.out, "Report directory")->required();
    w->add_option("--seed", swap.seed, "Run a single seed (overrides GROUNDKIT_SEED)");

    GradArgs grad;
    auto* c = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    c->add_option("--model", grad.model, "grounding or classifier")->capture_default_str();
    c->add_option("--tokens", grad.tokens)->capture_default_str();
    c->add_option("--dim", grad.dim)->capture_default_str();
    c->add_option("--features", grad.features)->capture_default_str();
    c->add_option("--epsilon", grad.epsilon)->capture_default_str();
    c->add_option("--seed", grad.seed, "Seed (overrides GROUNDKIT_SEED)");

    InspectArgs inspect;
    auto* i = app.add_subcommand("inspect", "Print embedding, checkpoint or operator details");
    i->add_option("--embedding", inspect.embedding, "Embedding file");
    i->add_option("--model", inspect.model, "Checkpoint");
    i->add_flag("--operators", inspect.operators, "Dump saturation operators as CSV");
    i->add_option("--dim", inspect.dim)->capture_default_str();
    i->add_option("--features", inspect.features)->capture_default_str();
    i->add_option("--vocab-size", inspect.vocab_size)->capture_default_str();
    i->add_option("--tokens", inspect.tokens, "Token indices (default: all)");
    i->add_option("--operators-out", inspect.operators_out, "Write the operator CSV here");

    if (argc <= 1) {
        err << app.help();
        return exit_usage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex, out, err);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex, out, err);
        return exit_usage;
    }

    try {
        if (s->parsed()) {
            return run_synth(synth, out);
        }
        if (g->parsed()) {
            return run_ground(ground, out, err);
        }
        if (t->parsed()) {
            return run_train(train, out, err);
        }
        if (e->parsed()) {
            return run_eval(eval, out);
        }
        if (w->parsed()) {
            return run_swap(swap, out, err);
        }
        if (c->parsed()) {
            return run_gradcheck(grad, out);
        }
        return run_inspect(inspect, out);
    } catch (const DivergenceError& ex) {
        err << "error: " << ex.what() << '\n';
        return exit_divergence;
    } catch (const ConfigError& ex) {
        err << "error: " << ex.what() << '\n';
        return exit_usage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return exit_data;
    }
}

} // namespace groundkit
