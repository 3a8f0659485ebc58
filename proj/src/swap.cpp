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

#include "groundkit/swap.hpp"

#include "groundkit/binary_io.hpp"
#include "groundkit/error.hpp"
#include "groundkit/feature_schema.hpp"
#include "groundkit/json_util.hpp"
#include "groundkit/random.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <map>
#include <set>

namespace groundkit {

namespace {

auto format_double(double v) -> std::string
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

auto utc_now() -> std::string
{
    const std::time_t now = std::time(nullptr);
    std::tm tm {};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

auto resolve(const std::filesystem::path& base, const std::string& p) -> std::filesystem::path
{
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

// Rethrows `e` with `where` prefixed, keeping the exit-code class.
[[noreturn]] void rethrow_at(const std::string& where)
{
    try {
        throw;
    } catch (const DivergenceError& e) {
        throw DivergenceError(where + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
    } catch (const DimensionError& e) {
        throw DimensionError(where + e.what());
    } catch (const LookupError& e) {
        throw LookupError(where + e.what());
    } catch (const Error& e) {
        throw DataError(where + e.what());
    }
}

struct LoadedDataset {
    std::string name;
    ClassifierConfig cfg;
    std::vector<Example> train;
    std::vector<Example> test;
    std::size_t max_label = 0;
};

auto max_label_of(std::span<const Example> examples) -> std::size_t
{
    std::size_t m = 0;
    for (const auto& e : examples) {
        m = std::max(m, e.label);
    }
    return m;
}

auto majority_rate(std::span<const Example> examples) -> double
{
    std::map<std::size_t, std::size_t> counts;
    std::size_t best = 0;
    for (const auto& e : examples) {
        best = std::max(best, ++counts[e.label]);
    }
    return examples.empty() ? 0.0 : static_cast<double>(best) / static_cast<double>(examples.size());
}

auto row_key(const SwapRow& r) -> std::tuple<std::string, std::uint64_t, std::string, std::string>
{
    return { r.variant, r.seed, r.model_dataset, r.eval_dataset };
}

} // namespace

auto swap_module(const TinyClassifier& a, const TinyClassifier& b, std::string_view name)
    -> std::pair<TinyClassifier, TinyClassifier>
{
    const Matrix& from_a = a.block(name);
    const Matrix& from_b = b.block(name);
    if (!from_a.same_shape(from_b)) {
        throw DimensionError("swap_module: block '" + std::string(name) + "' is "
                             + from_a.shape_string() + " in the first model but "
                             + from_b.shape_string() + " in the second");
    }
    std::pair<TinyClassifier, TinyClassifier> out { a, b };
    out.first.block(name) = from_b;
    out.second.block(name) = from_a;
    return out;
}

auto ExperimentPlan::epochs() const -> std::size_t
{
    if (budget == "base") {
        return base_epochs;
    }
    if (budget == "long") {
        return long_epochs;
    }
    throw ConfigError("plan: budget must be \"base\" or \"long\", got \"" + budget + "\"");
}

void ExperimentPlan::validate() const
{
    (void)epochs();
    if (datasets.size() != 2) {
        throw ConfigError("plan: exactly two datasets are required, got "
                          + std::to_string(datasets.size()));
    }
    if (datasets[0].name == datasets[1].name || datasets[0].name.empty()) {
        throw ConfigError("plan: dataset names must be distinct and non-empty");
    }
    if (variants.empty() || seeds.empty()) {
        throw ConfigError("plan: variants and seeds must be non-empty");
    }
    for (const auto& v : variants) {
        if (v != variant_grounded && v != variant_standard) {
            throw ConfigError("plan: unknown variant \"" + v + "\"");
        }
        if (v == variant_grounded && embedding.empty()) {
            throw ConfigError("plan: the grounded variant needs an embedding file");
        }
    }
    if (!eval_dataset.empty() && eval_dataset != datasets[0].name && eval_dataset != datasets[1].name) {
        throw ConfigError("plan: eval_dataset \"" + eval_dataset + "\" is not one of the datasets");
    }
    if (max_train == 0 || max_test == 0) {
        throw ConfigError("plan: dataset caps must be positive");
    }
    for (const auto& m : swap) {
        if (m == no_swap) {
            throw ConfigError("plan: \"none\" is reserved for baseline rows");
        }
    }
}

auto plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) -> ExperimentPlan
{
    constexpr std::string_view ctx = "plan";
    json_util::reject_unknown_keys(j,
                                   { "vocab", "embedding", "datasets", "variants", "budgets",
                                     "budget", "swap", "seeds", "eval_dataset", "max_train",
                                     "max_test" },
                                   ctx);
    ExperimentPlan plan;
    try {
        plan.vocab = resolve(base_dir, j.at("vocab").get<std::string>());
        if (j.contains("embedding")) {
            plan.embedding = resolve(base_dir, j.at("embedding").get<std::string>());
        }
        for (const auto& d : j.at("datasets")) {
            json_util::reject_unknown_keys(d, { "name", "train", "test", "classifier" },
                                           "plan dataset");
            DatasetSpec spec;
            spec.name = d.at("name").get<std::string>();
            spec.train = resolve(base_dir, d.at("train").get<std::string>());
            spec.test = resolve(base_dir, d.at("test").get<std::string>());
            nlohmann::json cls = d.value("classifier", nlohmann::json::object());
            spec.infer_classes = !cls.contains("n_classes");
            if (spec.infer_classes) {
                cls["n_classes"] = 2; // placeholder until the data is read
            }
            spec.classifier = classifier_config_from_json(cls);
            plan.datasets.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("plan: ") + e.what());
    }
    json_util::read_optional(j, "variants", plan.variants, ctx);
    if (j.contains("budgets")) {
        const auto& b = j.at("budgets");
        json_util::reject_unknown_keys(b, { "base", "long" }, "plan budgets");
        json_util::read_optional(b, "base", plan.base_epochs, "plan budgets");
        json_util::read_optional(b, "long", plan.long_epochs, "plan budgets");
    }
    json_util::read_optional(j, "budget", plan.budget, ctx);
    json_util::read_optional(j, "swap", plan.swap, ctx);
    json_util::read_optional(j, "seeds", plan.seeds, ctx);
    json_util::read_optional(j, "eval_dataset", plan.eval_dataset, ctx);
    json_util::read_optional(j, "max_train", plan.max_train, ctx);
    json_util::read_optional(j, "max_test", plan.max_test, ctx);
    plan.validate();
    return plan;
}

auto plan_to_json(const ExperimentPlan& plan) -> nlohmann::ordered_json
{
    nlohmann::ordered_json j;
    j["vocab"] = plan.vocab.string();
    if (!plan.embedding.empty()) {
        j["embedding"] = plan.embedding.string();
    }
    auto datasets = nlohmann::ordered_json::array();
    for (const auto& d : plan.datasets) {
        nlohmann::ordered_json dj;
        dj["name"] = d.name;
        dj["train"] = d.train.string();
        dj["test"] = d.test.string();
        auto cls = to_json(d.classifier);
        if (d.infer_classes) {
            cls.erase("n_classes");
        }
        dj["classifier"] = cls;
        datasets.push_back(dj);
    }
    j["datasets"] = datasets;
    j["variants"] = plan.variants;
    j["budgets"] = { { "base", plan.base_epochs }, { "long", plan.long_epochs } };
    j["budget"] = plan.budget;
    j["swap"] = plan.swap;
    j["seeds"] = plan.seeds;
    j["eval_dataset"] = plan.eval_dataset;
    j["max_train"] = plan.max_train;
    j["max_test"] = plan.max_test;
    return j;
}

auto load_plan(const std::filesystem::path& path) -> ExperimentPlan
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(binary::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return plan_from_json(j, path.parent_path());
}

auto stratified_subset(std::span<const Example> examples, std::size_t cap, std::uint64_t seed)
    -> std::vector<Example>
{
    if (examples.size() <= cap) {
        return { examples.begin(), examples.end() };
    }
    std::map<std::size_t, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        by_label[examples[i].label].push_back(i);
    }
    Rng rng(seed);
    for (auto& [label, idx] : by_label) {
        rng.shuffle(idx);
    }
    std::vector<std::size_t> chosen;
    for (std::size_t round = 0; chosen.size() < cap; ++round) {
        for (auto& [label, idx] : by_label) {
            if (round < idx.size() && chosen.size() < cap) {
                chosen.push_back(idx[round]);
            }
        }
    }
    // Keep file order so the subset reads like the source.
    std::sort(chosen.begin(), chosen.end());
    std::vector<Example> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) {
        out.push_back(examples[i]);
    }
    return out;
}

auto run_swap_experiment(const ExperimentPlan& plan, const SwapProgress& progress) -> SwapReport
{
    plan.validate();
    const auto vocab = read_vocab(plan.vocab);
    std::optional<GroundedEmbedding> grounded;
    if (std::find(plan.variants.begin(), plan.variants.end(), variant_grounded) != plan.variants.end()) {
        grounded = import_embedding(plan.embedding);
    }

    std::vector<LoadedDataset> data;
    for (std::size_t d = 0; d < plan.datasets.size(); ++d) {
        const auto& spec = plan.datasets[d];
        try {
            LoadedDataset ld;
            ld.name = spec.name;
            ld.cfg = spec.classifier;
            ld.cfg.epochs = plan.epochs();
            const Tokenizer tok(vocab, "[UNK]", ld.cfg.max_len);
            ld.train = stratified_subset(encode_examples(load_dataset(spec.train), tok), plan.max_train,
                                         derive_seed(0, { 30, d }));
            ld.test = stratified_subset(encode_examples(load_dataset(spec.test), tok), plan.max_test,
                                        derive_seed(0, { 31, d }));
            if (ld.train.empty() || ld.test.empty()) {
                throw DataError("train and test sets must be non-empty");
            }
            ld.max_label = std::max(max_label_of(ld.train), max_label_of(ld.test));
            if (spec.infer_classes) {
                ld.cfg.n_classes = std::max<std::size_t>(2, ld.max_label + 1);
            }
            data.push_back(std::move(ld));
        } catch (...) {
            rethrow_at("dataset " + spec.name + ": ");
        }
    }

    SwapReport report;
    report.created_utc = utc_now();
    report.plan = plan_to_json(plan);
    for (const auto& ld : data) {
        report.chance_accuracy.emplace_back(ld.name, majority_rate(ld.test));
    }

    const LoadedDataset* fixed = nullptr;
    for (const auto& ld : data) {
        if (ld.name == plan.eval_dataset) {
            fixed = &ld;
        }
    }
    auto score = [&](const std::string& variant, std::uint64_t seed, const TinyClassifier& model,
                     std::size_t m, const std::string& module) {
        std::vector<const LoadedDataset*> targets { &data[m] };
        if (fixed != nullptr && fixed != &data[m] && fixed->max_label < model.config().n_classes) {
            targets.push_back(fixed);
        }
        for (const LoadedDataset* t : targets) {
            const EvalResult r = evaluate(model, t->test);
            report.rows.push_back({ variant, seed, data[m].name, t->name, module, r.accuracy, r.mean_loss });
        }
    };

    for (const auto& variant : plan.variants) {
        for (std::uint64_t seed : plan.seeds) {
            const std::string where =
                "variant " + variant + ", seed " + std::to_string(seed) + ": ";
            try {
                std::vector<TinyClassifier> models;
                for (std::size_t m = 0; m < data.size(); ++m) {
                    ClassifierConfig cfg = data[m].cfg;
                    cfg.seed = derive_seed(seed, { 32, m });
                    if (progress) {
                        progress(where + "training on " + data[m].name);
                    }
                    const GroundedEmbedding* init =
                        variant == variant_grounded ? &*grounded : nullptr;
                    models.push_back(
                        train_classifier(cfg, data[m].train, vocab.size(), init).model);
                }
                for (std::size_t m = 0; m < models.size(); ++m) {
                    score(variant, seed, models[m], m, std::string(no_swap));
                }
                for (const auto& module : plan.swap) {
                    if (progress) {
                        progress(where + "swapping " + module);
                    }
                    const auto [a, b] = swap_module(models[0], models[1], module);
                    score(variant, seed, a, 0, module);
                    score(variant, seed, b, 1, module);
                }
            } catch (...) {
                rethrow_at(where);
            }
        }
    }
    return report;
}

auto missing_baselines(const SwapReport& report) -> std::vector<std::string>
{
    std::set<std::tuple<std::string, std::uint64_t, std::string, std::string>> baselines;
    for (const auto& r : report.rows) {
        if (r.swapped_module == no_swap) {
            baselines.insert(row_key(r));
        }
    }
    std::vector<std::string> missing;
    for (const auto& r : report.rows) {
        if (r.swapped_module != no_swap && baselines.count(row_key(r)) == 0) {
            missing.push_back(r.variant + "/" + std::to_string(r.seed) + "/" + r.model_dataset + "/"
                              + r.eval_dataset + "/" + r.swapped_module);
        }
    }
    return missing;
}

auto summarize_deltas(const SwapReport& report) -> std::vector<DeltaSummary>
{
    std::map<std::tuple<std::string, std::uint64_t, std::string, std::string>, double> baseline;
    for (const auto& r : report.rows) {
        if (r.swapped_module == no_swap) {
            baseline[row_key(r)] = r.accuracy;
        }
    }
    // First-appearance order keeps the output in plan order.
    std::vector<DeltaSummary> out;
    std::map<std::tuple<std::string, std::string, std::string, std::string>, std::size_t> slot;
    for (const auto& r : report.rows) {
        const auto it = baseline.find(row_key(r));
        if (r.swapped_module == no_swap || it == baseline.end()) {
            continue;
        }
        const auto key = std::make_tuple(r.variant, r.model_dataset, r.eval_dataset, r.swapped_module);
        auto [pos, inserted] = slot.emplace(key, out.size());
        if (inserted) {
            out.push_back({ r.variant, r.model_dataset, r.eval_dataset, r.swapped_module, 0, 0.0, 0.0, 0.0 });
        }
        DeltaSummary& s = out[pos->second];
        ++s.n_seeds;
        s.baseline_accuracy += it->second;
        s.swapped_accuracy += r.accuracy;
        s.delta_accuracy += it->second - r.accuracy;
    }
    for (auto& s : out) {
        const double n = static_cast<double>(s.n_seeds);
        s.baseline_accuracy /= n;
        s.swapped_accuracy /= n;
        s.delta_accuracy /= n;
    }
    return out;
}

auto mean_delta(const SwapReport& report, std::string_view variant, std::string_view module)
    -> std::optional<double>
{
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : summarize_deltas(report)) {
        if (s.variant == variant && s.swapped_module == module) {
            total += s.delta_accuracy;
            ++n;
        }
    }
    if (n == 0) {
        return std::nullopt;
    }
    return total / static_cast<double>(n);
}

auto report_to_json(const SwapReport& report) -> nlohmann::ordered_json
{
    nlohmann::ordered_json j;
    j["format_version"] = report.format_version;
    j["created_utc"] = report.created_utc;
    j["plan"] = report.plan;
    auto chance = nlohmann::ordered_json::object();
    for (const auto& [name, rate] : report.chance_accuracy) {
        chance[name] = rate;
    }
    j["chance_accuracy"] = chance;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
        nlohmann::ordered_json row;
        row["variant"] = r.variant;
        row["seed"] = r.seed;
        row["model_dataset"] = r.model_dataset;
        row["eval_dataset"] = r.eval_dataset;
        row["swapped_module"] = r.swapped_module;
        row["accuracy"] = r.accuracy;
        row["mean_loss"] = r.mean_loss;
        rows.push_back(row);
    }
    j["rows"] = rows;
    return j;
}

auto report_from_json(const nlohmann::ordered_json& j) -> SwapReport
{
    SwapReport report;
    try {
        report.format_version = j.at("format_version").get<int>();
        if (report.format_version != 1) {
            throw FormatError("report: unsupported format_version "
                                  + std::to_string(report.format_version),
                              0);
        }
        report.created_utc = j.at("created_utc").get<std::string>();
        report.plan = j.at("plan");
        for (const auto& [name, rate] : j.at("chance_accuracy").items()) {
            report.chance_accuracy.emplace_back(name, rate.get<double>());
        }
        for (const auto& row : j.at("rows")) {
            report.rows.push_back({ row.at("variant").get<std::string>(),
                                    row.at("seed").get<std::uint64_t>(),
                                    row.at("model_dataset").get<std::string>(),
                                    row.at("eval_dataset").get<std::string>(),
                                    row.at("swapped_module").get<std::string>(),
                                    row.at("accuracy").get<double>(),
                                    row.at("mean_loss").get<double>() });
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report: malformed JSON: ") + e.what(), 0);
    }
    return report;
}

auto report_rows_csv(const SwapReport& report) -> std::string
{
    std::string out = "variant,seed,model_dataset,eval_dataset,swapped_module,accuracy,mean_loss\n";
    for (const auto& r : report.rows) {
        out += r.variant + ',' + std::to_string(r.seed) + ',' + r.model_dataset + ','
            + r.eval_dataset + ',' + r.swapped_module + ',' + format_double(r.accuracy) + ','
            + format_double(r.mean_loss) + '\n';
    }
    return out;
}

auto report_plot_csv(const SwapReport& report) -> std::string
{
    std::string out = "variant,model_dataset,eval_dataset,swapped_module,n_seeds,baseline_accuracy,"
                      "swapped_accuracy,delta_accuracy\n";
    for (const auto& s : summarize_deltas(report)) {
        if (s.swapped_module == no_swap) {
            continue;
        }
        out += s.variant + ',' + s.model_dataset + ',' + s.eval_dataset + ',' + s.swapped_module
            + ',' + std::to_string(s.n_seeds) + ',' + format_double(s.baseline_accuracy) + ','
            + format_double(s.swapped_accuracy) + ',' + format_double(s.delta_accuracy) + '\n';
    }
    return out;
}

void emit_report(const SwapReport& report, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create " + dir.string() + ": " + ec.message());
    }
    binary::write_file(dir / "report.json", report_to_json(report).dump(2) + "\n");
    binary::write_file(dir / "report.csv", report_rows_csv(report));
    binary::write_file(dir / "plot.csv", report_plot_csv(report));
}

auto read_report(const std::filesystem::path& path) -> SwapReport
{
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(binary::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": report is not JSON", e.byte);
    }
    return report_from_json(j);
}

} // namespace groundkit
