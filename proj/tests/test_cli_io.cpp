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
#include "groundkit/classifier.hpp"
#include "groundkit/cli.hpp"
#include "groundkit/dataset.hpp"
#include "groundkit/error.hpp"
#include "groundkit/grounding.hpp"
#include "groundkit/swap.hpp"
#include "groundkit/synthetic.hpp"
#include "groundkit/tokenizer.hpp"

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace groundkit;
namespace fs = std::filesystem;

namespace {

auto temp_dir(const std::string& name) -> fs::path
{
    const fs::path dir = fs::temp_directory_path() / ("groundkit_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

auto run(std::vector<std::string> args) -> CliRun
{
    args.insert(args.begin(), "groundkit");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return { code, out.str(), err.str() };
}

auto s(const fs::path& p) -> std::string { return p.string(); }

} // namespace

TEST_CASE("dataset CSV parsing")
{
    SUBCASE("header only")
    {
        CHECK(parse_dataset_csv("label,text\n").empty());
    }
    SUBCASE("quoted comma, quote and newline")
    {
        const auto rows = parse_dataset_csv("label,text\n1,\"a, \"\"b\"\"\nc\"\n0,plain\n");
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].label == 1);
        CHECK(rows[0].text == "a, \"b\"\nc");
        CHECK(rows[0].line == 2);
        CHECK(rows[1].line == 4);
    }
    SUBCASE("errors carry the line")
    {
        CHECK_THROWS_WITH_AS(parse_dataset_csv("label,text\n0,ok\n-1,bad\n", "d.csv"),
                             doctest::Contains("d.csv: line 3"), DataError);
        CHECK_THROWS_AS(parse_dataset_csv("lbl,text\n"), DataError);
        CHECK_THROWS_AS(parse_dataset_csv("label,text\n1,\"open\n"), DataError);
        CHECK_THROWS_AS(parse_dataset_csv("label,text\nx,word\n"), DataError);
    }
    SUBCASE("file round trip")
    {
        const auto dir = temp_dir("csv");
        const std::vector<LabeledText> rows { { 0, "plain", 0 }, { 3, "with, comma", 0 },
                                              { 1, "\"quoted\"", 0 }, { 2, "", 0 } };
        write_dataset(dir / "d.csv", rows);
        const auto back = load_dataset(dir / "d.csv");
        REQUIRE(back.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(back[i].label == rows[i].label);
            CHECK(back[i].text == rows[i].text);
        }
        CHECK_THROWS_AS(load_dataset(dir / "missing.csv"), DataError);
    }
}

TEST_CASE("synthetic corpus: coherence 1 gives identical same-topic features")
{
    SyntheticSpec spec;
    spec.coherence = 1.0;
    spec.words = 24;
    const auto data = generate_synthetic(spec);
    const auto& schema = FeatureSchema::grounding();
    for (std::size_t a = 0; a < data.records.size(); ++a) {
        for (std::size_t b = a + 1; b < data.records.size(); ++b) {
            if (data.topics[a] == data.topics[b]) {
                const auto fa = encode_features(data.records[a], schema);
                const auto fb = encode_features(data.records[b], schema);
                CHECK(cosine_similarity(fa, fb) == doctest::Approx(1.0).epsilon(1e-15));
            }
        }
    }
}

TEST_CASE("synthetic corpus is deterministic and re-ingestible")
{
    SyntheticSpec spec;
    spec.words = 30;
    spec.coarse_classes = 2;
    const auto a = temp_dir("synth_a");
    const auto b = temp_dir("synth_b");
    const auto files = write_synthetic(generate_synthetic(spec), a);
    write_synthetic(generate_synthetic(spec), b);
    CHECK(files.size() == 6);
    for (const auto& f : files) {
        CHECK(binary::read_file(f) == binary::read_file(b / f.filename()));
    }
    const auto vocab = read_vocab(a / "vocab.txt");
    const auto filtered = filter_vocabulary(vocab);
    CHECK(filtered.tokens.size() == 30);
    const auto fm =
        build_feature_matrix(read_feature_records(a / "features.jsonl"), filtered, FeatureSchema::grounding());
    CHECK(fm.x.rows() == 30);
    const auto train = load_dataset(a / "train.csv");
    CHECK(train.size() == spec.classes * spec.examples_per_class);
    CHECK(load_dataset(a / "coarse_train.csv").size() == train.size());
    for (const auto& row : load_dataset(a / "coarse_test.csv")) {
        CHECK(row.label < 2);
    }
    const Tokenizer tok(vocab);
    for (const auto& ex : encode_examples(train, tok)) {
        for (std::size_t t : ex.tokens) {
            CHECK(t != tok.unk_index());
        }
    }

    SyntheticSpec other = spec;
    other.seed = 43;
    CHECK(generate_synthetic(other).train[0].text != generate_synthetic(spec).train[0].text);
}

TEST_CASE("synthetic task is learnable at coherence 1")
{
    SyntheticSpec spec;
    spec.coherence = 1.0;
    spec.topic_rate = 1.0;
    const auto data = generate_synthetic(spec);
    const Tokenizer tok(data.vocab);
    ClassifierConfig cfg;
    cfg.dim = 16;
    cfg.n_classes = spec.classes;
    cfg.epochs = 8;
    cfg.lr = 5e-3;
    const auto train = encode_examples(data.train, tok);
    const auto test = encode_examples(data.test, tok);
    const auto model = train_classifier(cfg, train, data.vocab.size(), nullptr, {}).model;
    CHECK(evaluate(model, test).accuracy > 0.9);
}

TEST_CASE("synthetic spec validation")
{
    SyntheticSpec spec;
    spec.classes = 1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = {};
    spec.coherence = 1.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    CHECK_THROWS_AS(synthetic_spec_from_json(nlohmann::json { { "wrods", 3 } }), ConfigError);
}

TEST_CASE("seed precedence")
{
    ::unsetenv("GROUNDKIT_SEED");
    CHECK(resolve_seed(std::nullopt, 42) == 42);
    CHECK(resolve_seed(7, 42) == 7);
    ::setenv("GROUNDKIT_SEED", "99", 1);
    CHECK(resolve_seed(std::nullopt, 42) == 99);
    CHECK(resolve_seed(7, 42) == 7);
    ::setenv("GROUNDKIT_SEED", "abc", 1);
    CHECK_THROWS_AS(resolve_seed(std::nullopt, 42), ConfigError);
    ::unsetenv("GROUNDKIT_SEED");
}

TEST_CASE("CLI exit codes")
{
    CHECK(run({}).code == exit_usage);
    CHECK(run({ "frobnicate" }).code == exit_usage);
    CHECK(run({ "--help" }).code == exit_ok);

    const auto grad = run({ "gradcheck", "--model", "grounding" });
    CHECK(grad.code == exit_ok);
    CHECK(grad.out.find("PASS") != std::string::npos);
    CHECK(run({ "gradcheck", "--model", "classifier" }).code == exit_ok);

    const auto dir = temp_dir("codes");
    REQUIRE(run({ "synth", "--out", s(dir / "d"), "--vocab", "20", "--seed", "3" }).code == exit_ok);
    binary::write_file(dir / "bad.csv", "label,text\n0,fine\nminus,broken\n");
    const auto bad_data = run({ "train", "--vocab", s(dir / "d" / "vocab.txt"), "--train",
                                s(dir / "bad.csv"), "--out", s(dir / "m.ckpt"), "--epochs", "1" });
    CHECK(bad_data.code == exit_data);
    CHECK(bad_data.err.find("line 3") != std::string::npos);

    binary::write_file(dir / "cfg.json", R"({"dim": 16, "learning_rate": 0.1})");
    const auto bad_cfg = run({ "ground", "--vocab", s(dir / "d" / "vocab.txt"), "--features",
                               s(dir / "d" / "features.jsonl"), "--out", s(dir / "e.fge"), "--config",
                               s(dir / "cfg.json") });
    CHECK(bad_cfg.code == exit_usage);
    CHECK(bad_cfg.err.find("learning_rate") != std::string::npos);

    const auto diverge = run({ "ground", "--vocab", s(dir / "d" / "vocab.txt"), "--features",
                               s(dir / "d" / "features.jsonl"), "--out", s(dir / "e.fge"), "--lr",
                               "1e300", "--epochs", "5" });
    CHECK(diverge.code == exit_divergence);
    CHECK_FALSE(fs::exists(dir / "e.fge"));
}

TEST_CASE("CLI seed flag beats the environment")
{
    const auto dir = temp_dir("seed");
    REQUIRE(run({ "synth", "--out", s(dir / "d"), "--vocab", "20" }).code == exit_ok);
    auto ground = [&](const std::string& out, std::vector<std::string> extra) {
        std::vector<std::string> args { "ground", "--vocab", s(dir / "d" / "vocab.txt"), "--features",
                                        s(dir / "d" / "features.jsonl"), "--out", s(dir / out),
                                        "--dim", "8", "--epochs", "3" };
        args.insert(args.end(), extra.begin(), extra.end());
        REQUIRE(run(args).code == exit_ok);
        return binary::read_file(dir / out);
    };
    ::setenv("GROUNDKIT_SEED", "5", 1);
    const auto env5 = ground("env5.fge", {});
    const auto flag9 = ground("flag9.fge", { "--seed", "9" });
    ::unsetenv("GROUNDKIT_SEED");
    CHECK(env5 == ground("plain5.fge", { "--seed", "5" }));
    CHECK(flag9 == ground("plain9.fge", { "--seed", "9" }));
    CHECK(env5 != flag9);
}

TEST_CASE("CLI end to end: synth, ground, train, eval, swap, inspect")
{
    const auto dir = temp_dir("e2e");
    const auto d = dir / "d";
    REQUIRE(run({ "synth", "--out", s(d), "--vocab", "30", "--classes", "4", "--coarse-classes", "2",
                  "--examples-per-class", "10", "--test-per-class", "4" })
                .code
            == exit_ok);
    REQUIRE(run({ "ground", "--vocab", s(d / "vocab.txt"), "--features", s(d / "features.jsonl"), "--out",
                  s(dir / "e.fge"), "--dim", "8", "--epochs", "5", "--metrics", s(dir / "g.csv") })
                .code
            == exit_ok);
    const auto train = run({ "train", "--vocab", s(d / "vocab.txt"), "--train", s(d / "train.csv"), "--test",
                             s(d / "test.csv"), "--embedding", s(dir / "e.fge"), "--features",
                             s(d / "features.jsonl"), "--dim", "8", "--epochs", "2", "--out",
                             s(dir / "m.ckpt"), "--metrics", s(dir / "t.csv") });
    REQUIRE(train.code == exit_ok);
    CHECK(train.err.find("fingerprint") == std::string::npos);
    CHECK(load_checkpoint(dir / "m.ckpt").config().n_classes == 4);

    const auto eval = run({ "eval", "--model", s(dir / "m.ckpt"), "--vocab", s(d / "vocab.txt"), "--data",
                            s(d / "test.csv") });
    REQUIRE(eval.code == exit_ok);
    const auto j = nlohmann::json::parse(eval.out);
    CHECK(j.at("n_examples").get<std::size_t>() == 16);

    nlohmann::ordered_json cls { { "dim", 8 } };
    nlohmann::ordered_json plan { { "vocab", "d/vocab.txt" },
                                  { "embedding", "e.fge" },
                                  { "datasets",
                                    { { { "name", "fine" }, { "train", "d/train.csv" }, { "test", "d/test.csv" },
                                        { "classifier", cls } },
                                      { { "name", "coarse" }, { "train", "d/coarse_train.csv" },
                                        { "test", "d/coarse_test.csv" }, { "classifier", cls } } } },
                                  { "budgets", { { "base", 1 }, { "long", 2 } } } };
    binary::write_file(dir / "plan.json", plan.dump(2));
    REQUIRE(run({ "swap", "--plan", s(dir / "plan.json"), "--out", s(dir / "report"), "--seed", "4" }).code
            == exit_ok);
    const auto report = read_report(dir / "report" / "report.json");
    for (const auto& r : report.rows) {
        CHECK(r.seed == 4);
    }
    CHECK(fs::exists(dir / "report" / "plot.csv"));

    CHECK(run({ "inspect", "--embedding", s(dir / "e.fge") }).code == exit_ok);
    CHECK(run({ "inspect", "--model", s(dir / "m.ckpt") }).code == exit_ok);
    CHECK(run({ "inspect", "--operators", "--dim", "4", "--features", "3", "--vocab-size", "5",
                "--operators-out", s(dir / "ops.csv") })
              .code
          == exit_ok);
    CHECK(fs::exists(dir / "ops.csv"));
}
