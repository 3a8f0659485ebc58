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

#include "groundkit/classifier.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace groundkit {

/// Returns copies of `a` and `b` with block `name` exchanged.
auto swap_module(const TinyClassifier& a, const TinyClassifier& b, std::string_view name)
    -> std::pair<TinyClassifier, TinyClassifier>;

struct DatasetSpec {
    std::string name;
    std::filesystem::path train;
    std::filesystem::path test;
    ClassifierConfig classifier;
    /// n_classes was not given and is taken from the data.
    bool infer_classes = true;
};

inline constexpr std::string_view variant_grounded = "grounded";
inline constexpr std::string_view variant_standard = "standard";

struct ExperimentPlan {
    std::filesystem::path vocab;
    /// FGE1 file shared by both models of a grounded pair.
    std::filesystem::path embedding;
    /// Exactly two: the model pair is trained one per dataset.
    std::vector<DatasetSpec> datasets;
    std::vector<std::string> variants { std::string(variant_grounded),
                                        std::string(variant_standard) };
    std::size_t base_epochs = 10;
    std::size_t long_epochs = 30;
    std::string budget = "base";
    std::vector<std::string> swap { "embedding" };
    std::vector<std::uint64_t> seeds { 1, 2, 3 };
    /// Every model is also scored here when its label space covers the
    /// dataset's labels. Empty disables the fixed-dataset protocol.
    std::string eval_dataset;
    std::size_t max_train = 2000;
    std::size_t max_test = 500;

    [[nodiscard]] auto epochs() const -> std::size_t;
    void validate() const;
};

/// Relative paths resolve against `base_dir`.
auto plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {})
    -> ExperimentPlan;
auto plan_to_json(const ExperimentPlan& plan) -> nlohmann::ordered_json;
auto load_plan(const std::filesystem::path& path) -> ExperimentPlan;

inline constexpr std::string_view no_swap = "none";

struct SwapRow {
    std::string variant;
    std::uint64_t seed = 0;
    std::string model_dataset;
    std::string eval_dataset;
    std::string swapped_module;
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

struct SwapReport {
    int format_version = 1;
    std::string created_utc;
    nlohmann::ordered_json plan;
    /// Majority-class accuracy of each evaluation set, in plan order.
    std::vector<std::pair<std::string, double>> chance_accuracy;
    std::vector<SwapRow> rows;
};

/// Keeps at most `cap` examples, drawing labels round-robin so class
/// proportions stay as even as the data allows.
auto stratified_subset(std::span<const Example> examples, std::size_t cap, std::uint64_t seed)
    -> std::vector<Example>;

using SwapProgress = std::function<void(const std::string&)>;

auto run_swap_experiment(const ExperimentPlan& plan, const SwapProgress& progress = {})
    -> SwapReport;

/// Swapped rows lacking a matching "none" row, formatted for messages.
auto missing_baselines(const SwapReport& report) -> std::vector<std::string>;

struct DeltaSummary {
    std::string variant;
    std::string model_dataset;
    std::string eval_dataset;
    std::string swapped_module;
    std::size_t n_seeds = 0;
    double baseline_accuracy = 0.0;
    double swapped_accuracy = 0.0;
    /// baseline minus swapped, averaged over seeds.
    double delta_accuracy = 0.0;
};

auto summarize_deltas(const SwapReport& report) -> std::vector<DeltaSummary>;

/// Mean of the per-seed deltas over every (model, eval) cell of a module.
auto mean_delta(const SwapReport& report, std::string_view variant, std::string_view module)
    -> std::optional<double>;

auto report_to_json(const SwapReport& report) -> nlohmann::ordered_json;
auto report_from_json(const nlohmann::ordered_json& j) -> SwapReport;
auto report_rows_csv(const SwapReport& report) -> std::string;
auto report_plot_csv(const SwapReport& report) -> std::string;

/// Writes report.json, report.csv and plot.csv into `dir`.
void emit_report(const SwapReport& report, const std::filesystem::path& dir);
auto read_report(const std::filesystem::path& path) -> SwapReport;

} // namespace groundkit
