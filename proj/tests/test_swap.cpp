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
#include "groundkit/grounding.hpp"
#include "groundkit/swap.hpp"
#include "groundkit/synthetic.hpp"

#include <algorithm>
#include <filesystem>

using namespace groundkit;
namespace fs = std::filesystem;

namespace {

auto temp_dir(const std::string& name) -> fs::path
{
    const fs::path dir = fs::temp_directory_path() / ("groundkit_swap_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

auto small_model(std::uint64_t seed, std::size_t classes = 3) -> TinyClassifier
{
    ClassifierConfig cfg;
    cfg.dim = 8;
    cfg.n_classes = classes;
    cfg.max_len = 16;
    cfg.seed = seed;
    return init_classifier(cfg, 40);
}

// Bytes of a checkpoint that belong to one block.
auto block_bytes(const TinyClassifier& m, const std::string& name) -> std::string
{
    std::string out;
    binary::append_f64le(out, m.block(name).data());
    return out;
}

// Small but complete experiment: synthetic 6-class and 2-class tasks.
auto write_small_plan(const fs::path& dir, const nlohmann::ordered_json& swap) -> fs::path
{
    SyntheticSpec spec;
    spec.words = 40;
    spec.classes = 6;
    spec.coarse_classes = 2;
    spec.examples_per_class = 8;
    spec.test_examples_per_class = 4;
    write_synthetic(generate_synthetic(spec), dir / "data");

    const auto data = generate_synthetic(spec);
    const auto filtered = filter_vocabulary(data.vocab);
    const auto fm = build_feature_matrix(data.records, filtered, FeatureSchema::grounding());
    GroundingConfig gcfg;
    gcfg.dim = 8;
    gcfg.epochs = 5;
    export_embedding(train_grounding(gcfg, fm, filtered, "test").embedding, dir / "emb.fge");

    nlohmann::ordered_json cls { { "dim", 8 }, { "max_len", 16 } };
    nlohmann::ordered_json plan;
    plan["vocab"] = "data/vocab.txt";
    plan["embedding"] = "emb.fge";
    plan["datasets"] = nlohmann::ordered_json::array(
        { { { "name", "fine" }, { "train", "data/train.csv" }, { "test", "data/test.csv" }, { "classifier", cls } },
          { { "name", "coarse" },
            { "train", "data/coarse_train.csv" },
            { "test", "data/coarse_test.csv" },
            { "classifier", cls } } });
    plan["budgets"] = { { "base", 2 }, { "long", 4 } };
    plan["swap"] = swap;
    plan["seeds"] = { 1, 2 };
    plan["eval_dataset"] = "fine";
    binary::write_file(dir / "plan.json", plan.dump(2));
    return dir / "plan.json";
}

} // namespace

TEST_CASE("swap_module exchanges exactly one block")
{
    const auto a = small_model(1);
    const auto b = small_model(2);
    const auto [a2, b2] = swap_module(a, b, "embedding");
    CHECK(a2.block("embedding") == b.block("embedding"));
    CHECK(b2.block("embedding") == a.block("embedding"));
    for (const auto& name : a.block_names()) {
        if (name != "embedding") {
            CHECK(block_bytes(a2, name) == block_bytes(a, name));
            CHECK(block_bytes(b2, name) == block_bytes(b, name));
        }
    }
    // Checkpoint bytes differ only inside the swapped block.
    CHECK(serialize_checkpoint(a2).size() == serialize_checkpoint(a).size());
    CHECK_FALSE(serialize_checkpoint(a2) == serialize_checkpoint(a));
}

TEST_CASE("swap_module is an involution and a no-op between identical models")
{
    const auto a = small_model(3);
    const auto b = small_model(4);
    for (const auto& name : a.block_names()) {
        const auto [a1, b1] = swap_module(a, b, name);
        const auto [a2, b2] = swap_module(a1, b1, name);
        CHECK(a2 == a);
        CHECK(b2 == b);
        const auto [s1, s2] = swap_module(a, a, name);
        CHECK(s1 == a);
        CHECK(s2 == a);
    }
}

TEST_CASE("swap_module errors")
{
    const auto a = small_model(1, 3);
    const auto b = small_model(2, 5);
    CHECK_THROWS_WITH_AS(swap_module(a, b, "decoder"), doctest::Contains("embedding"), LookupError);
    CHECK_THROWS_AS(swap_module(a, b, "head"), DimensionError);
    CHECK_NOTHROW(swap_module(a, b, "encoder.0.wq"));
}

TEST_CASE("plan JSON is strict and round trips")
{
    const nlohmann::json good = nlohmann::json::parse(R"({
        "vocab": "v.txt",
        "embedding": "e.fge",
        "datasets": [
            {"name": "a", "train": "a.csv", "test": "at.csv"},
            {"name": "b", "train": "b.csv", "test": "bt.csv", "classifier": {"dim": 8, "n_classes": 3}}
        ],
        "swap": ["embedding", "head"]
    })");
    const auto plan = plan_from_json(good, "/base");
    CHECK(plan.vocab == fs::path("/base/v.txt"));
    CHECK(plan.datasets[0].infer_classes);
    CHECK_FALSE(plan.datasets[1].infer_classes);
    CHECK(plan.datasets[1].classifier.n_classes == 3);
    CHECK(plan.epochs() == 10);
    CHECK(plan.seeds == std::vector<std::uint64_t> { 1, 2, 3 });

    const auto again = plan_from_json(plan_to_json(plan));
    CHECK(plan_to_json(again).dump() == plan_to_json(plan).dump());

    auto unknown = good;
    unknown["colour"] = 1;
    CHECK_THROWS_AS(plan_from_json(unknown), ConfigError);
    auto one_dataset = good;
    one_dataset["datasets"].erase(1);
    CHECK_THROWS_AS(plan_from_json(one_dataset), ConfigError);
    auto bad_budget = good;
    bad_budget["budget"] = "huge";
    CHECK_THROWS_AS(plan_from_json(bad_budget), ConfigError);
    auto bad_variant = good;
    bad_variant["variants"] = { "grounded", "other" };
    CHECK_THROWS_AS(plan_from_json(bad_variant), ConfigError);
}

TEST_CASE("swap experiment with an empty swap list yields baseline rows only")
{
    const auto dir = temp_dir("empty");
    const auto report = run_swap_experiment(load_plan(write_small_plan(dir, nlohmann::ordered_json::array())));
    REQUIRE_FALSE(report.rows.empty());
    for (const auto& r : report.rows) {
        CHECK(r.swapped_module == no_swap);
    }
    CHECK(missing_baselines(report).empty());
    CHECK(summarize_deltas(report).empty());
    CHECK_FALSE(mean_delta(report, variant_grounded, "embedding").has_value());

    emit_report(report, dir / "out");
    const std::string plot = binary::read_file(dir / "out" / "plot.csv");
    CHECK(plot.find('\n') == plot.size() - 1);
}

TEST_CASE("swap experiment rows, determinism and report files")
{
    const auto dir = temp_dir("full");
    const auto plan = load_plan(write_small_plan(dir, { "embedding", "encoder.0.ffn1" }));
    const auto report = run_swap_experiment(plan);
    CHECK(missing_baselines(report).empty());
    REQUIRE(report.chance_accuracy.size() == 2);
    CHECK(report.chance_accuracy[0].first == "fine");

    // 2 variants × 2 seeds × 2 models. A 2-class model cannot cover the
    // fine labels, so the coarse model is scored on its own test set only.
    std::size_t baselines = 0;
    for (const auto& r : report.rows) {
        CHECK(r.accuracy >= 0.0);
        CHECK(r.accuracy <= 1.0);
        baselines += r.swapped_module == no_swap ? 1 : 0;
        if (r.model_dataset == "coarse") {
            CHECK(r.eval_dataset == "coarse");
        }
    }
    CHECK(baselines == 8);
    CHECK(report.rows.size() == 3 * baselines);

    const auto again = run_swap_experiment(plan);
    REQUIRE(again.rows.size() == report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        CHECK(again.rows[i].accuracy == report.rows[i].accuracy);
        CHECK(again.rows[i].mean_loss == report.rows[i].mean_loss);
    }

    emit_report(report, dir / "out");
    const auto back = read_report(dir / "out" / "report.json");
    CHECK(report_to_json(back).dump() == report_to_json(report).dump());
    const std::string csv = binary::read_file(dir / "out" / "report.csv");
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == report.rows.size() + 1);
    CHECK(binary::read_file(dir / "out" / "plot.csv") == report_plot_csv(report));
}

TEST_CASE("swapping a block whose shapes differ names the plan coordinate")
{
    const auto dir = temp_dir("head");
    const auto plan = load_plan(write_small_plan(dir, { "head" }));
    CHECK_THROWS_WITH_AS(run_swap_experiment(plan), doctest::Contains("seed 1"), DimensionError);
}

TEST_CASE("report JSON rejects unknown versions")
{
    SwapReport r;
    auto j = report_to_json(r);
    j["format_version"] = 2;
    CHECK_THROWS_AS(report_from_json(j), FormatError);
}
