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

// Experiment harness for the flexdup library: dataset generation, training,
// evaluation against the solver baselines, timing benchmarks, and the
// mixed-size generalization study.  Every subcommand prints a one-line
// effective configuration (all defaults echoed) from which the run can be
// reproduced exactly.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flexdup/channel.hpp"
#include "flexdup/flexnet.hpp"
#include "flexdup/graph.hpp"
#include "flexdup/parallel.hpp"
#include "flexdup/rng.hpp"
#include "flexdup/solvers.hpp"

namespace {

using nlohmann::json;

/// Command-line mistakes discovered after CLI11 parsing (config-file values,
/// cross-option constraints).  Mapped to exit code 2 like parse errors.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

auto fmt(double value) -> std::string
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

/// Applies config-file values to every option the user did not set on the
/// command line ("merged under explicit flags").  Keys are the long option
/// names with '-' replaced by '_'.
class ConfigMerge {
  public:
    template <typename T>
    auto track(CLI::Option* opt, T& field, std::string key) -> void
    {
        keys_.insert(key);
        appliers_.push_back([opt, &field, key = std::move(key)](const json& j) {
            if (opt->count() == 0 && j.contains(key)) {
                try {
                    field = j.at(key).get<T>();
                } catch (const json::exception& e) {
                    throw UsageError("config key '" + key + "': " + e.what());
                }
            }
        });
    }

    auto apply(const std::string& path) const -> void
    {
        if (path.empty()) {
            return;
        }
        std::ifstream in(path);
        if (!in) {
            throw UsageError("cannot open config file: " + path);
        }
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw UsageError("config file " + path + ": " + e.what());
        }
        if (!j.is_object()) {
            throw UsageError("config file " + path + ": top level must be a JSON object");
        }
        for (const auto& [key, value] : j.items()) {
            if (!keys_.contains(key)) {
                throw UsageError("config file " + path + ": unknown key '" + key + "'");
            }
        }
        for (const auto& apply_one : appliers_) {
            apply_one(j);
        }
    }

  private:
    std::vector<std::function<void(const json&)>> appliers_;
    std::set<std::string> keys_;
};

auto echo_config(const std::string& command, const json& values) -> void
{
    json j = values;
    j["command"] = command;
    std::cout << "effective-config " << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    int pairs = 4;
    std::int64_t count = 1000;
    std::uint64_t seed = 1;
    std::string out;
    double area_side = 4000.0;
    double min_distance = 100.0;
    double frequency = 5e9;
    double shadow_sigma = 9.5;
    double p_max = 1.0;
    double noise = 1e-13;
    std::string config_path;
};

auto add_channel_options(CLI::App& sub, ConfigMerge& merge, double& area_side,
                         double& min_distance, double& frequency, double& shadow_sigma,
                         double& p_max, double& noise) -> void
{
    merge.track(sub.add_option("--area-side", area_side, "Square deployment area side, meters")
                    ->check(CLI::PositiveNumber),
                area_side, "area_side");
    merge.track(sub.add_option("--min-distance", min_distance, "Minimum node spacing, meters")
                    ->check(CLI::PositiveNumber),
                min_distance, "min_distance");
    merge.track(
        sub.add_option("--frequency", frequency, "Carrier frequency, Hz")->check(CLI::PositiveNumber),
        frequency, "frequency");
    merge.track(sub.add_option("--shadow-sigma", shadow_sigma, "Log-normal shadowing std dev, dB")
                    ->check(CLI::NonNegativeNumber),
                shadow_sigma, "shadow_sigma");
    merge.track(
        sub.add_option("--p-max", p_max, "Per-node power budget, watts")->check(CLI::PositiveNumber),
        p_max, "p_max");
    merge.track(sub.add_option("--noise", noise, "Noise power, watts")->check(CLI::PositiveNumber),
                noise, "noise");
}

auto channel_config(const GenerateArgs& a) -> flexdup::ChannelConfig
{
    flexdup::ChannelConfig cc;
    cc.area_side_m = a.area_side;
    cc.min_distance_m = a.min_distance;
    cc.frequency_hz = a.frequency;
    cc.shadow_sigma_db = a.shadow_sigma;
    cc.n_pairs = a.pairs;
    cc.p_max_w = a.p_max;
    cc.noise_w = a.noise;
    return cc;
}

auto channel_json(const GenerateArgs& a) -> json
{
    return {{"area_side", a.area_side}, {"min_distance", a.min_distance},
            {"frequency", a.frequency}, {"shadow_sigma", a.shadow_sigma},
            {"p_max", a.p_max},         {"noise", a.noise}};
}

auto run_generate(const GenerateArgs& a) -> void
{
    if (a.pairs <= 0) {
        throw UsageError("--pairs must be positive");
    }
    if (a.count <= 0) {
        throw UsageError("--count must be positive");
    }
    if (a.out.empty()) {
        throw UsageError("--out is required (flag or config file)");
    }
    json j = channel_json(a);
    j["pairs"] = a.pairs;
    j["count"] = a.count;
    j["seed"] = a.seed;
    j["out"] = a.out;
    echo_config("generate", j);

    const auto dataset = flexdup::generate_dataset(channel_config(a), a.count, a.seed);
    flexdup::save_dataset(dataset, a.out);
    std::cout << "wrote " << a.out << ": " << dataset.header.sample_count << " samples, "
              << dataset.header.n_nodes << " nodes, seed " << dataset.header.seed << '\n';
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::string out = "model.json";
    std::string history = "history.csv";
    int layers = 3;
    int hidden = 64;
    int batch = 64;
    double lr = 0.002;
    int epochs = 50;
    double t_p = 0.1;
    double t_d = 0.1;
    std::string pooling = "sum";
    std::uint64_t seed = 0;
    int threads = 1;
    std::string config_path;
};

auto train_config(const TrainArgs& a) -> flexdup::TrainConfig
{
    flexdup::TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.epochs = a.epochs;
    cfg.seed = a.seed;
    cfg.layers = a.layers;
    cfg.hidden = a.hidden;
    cfg.t_p = a.t_p;
    cfg.t_d = a.t_d;
    cfg.pooling = flexdup::pooling_from_string(a.pooling);
    cfg.n_threads = a.threads;
    return cfg;
}

auto write_history_csv(const std::string& path, const std::vector<double>& history) -> void
{
    std::ofstream out(path);
    if (!out) {
        throw flexdup::InvalidArgument("cannot open history file for writing: " + path);
    }
    out << "epoch,mean_loss\n";
    for (std::size_t epoch = 0; epoch < history.size(); ++epoch) {
        out << epoch << ',' << fmt(history[epoch]) << '\n';
    }
    if (!out) {
        throw flexdup::InvalidArgument("failed while writing history file: " + path);
    }
}

auto run_train(const TrainArgs& a) -> void
{
    if (a.data.empty()) {
        throw UsageError("--data is required (flag or config file)");
    }
    if (a.layers <= 0 || a.hidden <= 0 || a.batch <= 0 || a.epochs <= 0) {
        throw UsageError("--layers, --hidden, --batch and --epochs must be positive");
    }
    if (a.lr <= 0 || a.t_p <= 0 || a.t_d <= 0) {
        throw UsageError("--lr, --t-p and --t-d must be positive");
    }
    if (a.pooling != "sum" && a.pooling != "max") {
        throw UsageError("--pooling must be 'sum' or 'max'");
    }
    echo_config("train", {{"data", a.data},
                          {"out", a.out},
                          {"history", a.history},
                          {"layers", a.layers},
                          {"hidden", a.hidden},
                          {"batch", a.batch},
                          {"lr", a.lr},
                          {"epochs", a.epochs},
                          {"t_p", a.t_p},
                          {"t_d", a.t_d},
                          {"pooling", a.pooling},
                          {"seed", a.seed},
                          {"threads", a.threads}});

    const auto dataset = flexdup::load_dataset(a.data);
    const auto result = flexdup::train(dataset, train_config(a));
    flexdup::save_model(result.params, a.out);
    write_history_csv(a.history, result.history);
    std::cout << "trained " << result.history.size() << " epochs on " << dataset.samples.size()
              << " samples; best epoch " << result.best_epoch << " (mean loss "
              << fmt(result.history[static_cast<std::size_t>(result.best_epoch)]) << ")\n";
    std::cout << "wrote " << a.out << " and " << a.history << '\n';
}

// ---------------------------------------------------------------------------
// evaluate

const std::set<std::string> kAllMethods = {"flexnet", "exhaustive", "heuristic", "maxpower",
                                           "maxpower_silent"};

struct MethodStats {
    double rate_sum = 0.0;
    double time_sum = 0.0;
};

/// Runs one method on one instance; returns (rate bits, solver seconds).
/// The flexnet graph is built outside the timed region.
auto run_method(const std::string& method, const flexdup::GainMatrix& G,
                const flexdup::ModelParams* params, std::uint64_t heuristic_seed)
    -> std::pair<double, double>
{
    using clock = std::chrono::steady_clock;
    if (method == "flexnet") {
        const auto graph = flexdup::build_graph(G);
        const auto start = clock::now();
        const auto result = flexdup::infer(G, graph, *params);
        return {result.achieved_rate, std::chrono::duration<double>(clock::now() - start).count()};
    }
    const auto start = clock::now();
    flexdup::SolverResult result;
    if (method == "exhaustive") {
        result = flexdup::exhaustive_search(G);
    } else if (method == "heuristic") {
        result = flexdup::heuristic_search(G, flexdup::kHeuristicEps, 0, heuristic_seed);
    } else if (method == "maxpower") {
        result = flexdup::max_power_baseline(G);
    } else {
        result = flexdup::max_power_silent_baseline(G);
    }
    return {result.achieved_rate, std::chrono::duration<double>(clock::now() - start).count()};
}

struct EvaluateArgs {
    std::string data;
    std::string model;
    std::vector<std::string> methods = {"flexnet", "exhaustive", "heuristic", "maxpower",
                                        "maxpower_silent"};
    std::string out = "evaluate.csv";
    std::uint64_t seed = 0;
    int threads = 1;
    std::string config_path;
};

auto run_evaluate(const EvaluateArgs& a) -> void
{
    if (a.data.empty()) {
        throw UsageError("--data is required (flag or config file)");
    }
    if (a.methods.empty()) {
        throw UsageError("--methods must not be empty");
    }
    for (const auto& m : a.methods) {
        if (!kAllMethods.contains(m)) {
            throw UsageError("unknown method '" + m + "'");
        }
    }
    const bool wants_flexnet =
        std::find(a.methods.begin(), a.methods.end(), "flexnet") != a.methods.end();
    const bool wants_exhaustive =
        std::find(a.methods.begin(), a.methods.end(), "exhaustive") != a.methods.end();
    if (wants_flexnet && a.model.empty()) {
        throw UsageError("--model is required when 'flexnet' is among the methods");
    }
    echo_config("evaluate", {{"data", a.data},
                             {"model", a.model},
                             {"methods", a.methods},
                             {"out", a.out},
                             {"seed", a.seed},
                             {"threads", a.threads}});

    const auto dataset = flexdup::load_dataset(a.data);
    const int n_pairs = dataset.header.n_nodes / 2;
    if (wants_exhaustive && n_pairs > flexdup::kExhaustiveMaxPairs) {
        throw flexdup::TooManyPairs("exhaustive search refused: " + std::to_string(n_pairs) +
                                    " pairs exceeds the " +
                                    std::to_string(flexdup::kExhaustiveMaxPairs) + "-pair limit");
    }
    flexdup::ModelParams params;
    if (wants_flexnet) {
        params = flexdup::load_model(a.model);
    }

    const std::size_t n = dataset.samples.size();
    // Per-sample slots keep the aggregation deterministic under threading.
    std::vector<std::vector<std::pair<double, double>>> per_method(a.methods.size());
    for (auto& v : per_method) {
        v.resize(n);
    }
    flexdup::parallel_for(n, a.threads, [&](std::size_t i) {
        const auto& G = dataset.samples[i];
        const auto sample_seed = flexdup::derive_seed(a.seed, static_cast<std::uint64_t>(i));
        for (std::size_t m = 0; m < a.methods.size(); ++m) {
            per_method[m][i] = run_method(a.methods[m], G, &params, sample_seed);
        }
    });

    std::vector<MethodStats> stats(a.methods.size());
    for (std::size_t m = 0; m < a.methods.size(); ++m) {
        for (const auto& [rate, time] : per_method[m]) {
            stats[m].rate_sum += rate;
            stats[m].time_sum += time;
        }
    }
    double exhaustive_mean = 0.0;
    if (wants_exhaustive) {
        for (std::size_t m = 0; m < a.methods.size(); ++m) {
            if (a.methods[m] == "exhaustive") {
                exhaustive_mean = stats[m].rate_sum / static_cast<double>(n);
            }
        }
    }

    std::ofstream csv(a.out);
    if (!csv) {
        throw flexdup::InvalidArgument("cannot open output file for writing: " + a.out);
    }
    csv << "method,n_pairs,mean_rate_bits,rate_ratio,mean_seconds,sample_count,seed\n";
    for (std::size_t m = 0; m < a.methods.size(); ++m) {
        const double mean_rate = stats[m].rate_sum / static_cast<double>(n);
        const double mean_time = stats[m].time_sum / static_cast<double>(n);
        std::string ratio;
        if (wants_exhaustive && exhaustive_mean > 0) {
            ratio = fmt(mean_rate / exhaustive_mean);
        }
        csv << a.methods[m] << ',' << n_pairs << ',' << fmt(mean_rate) << ',' << ratio << ','
            << fmt(mean_time) << ',' << n << ',' << a.seed << '\n';
        std::cout << a.methods[m] << ": mean rate " << fmt(mean_rate) << " bits"
                  << (ratio.empty() ? "" : ", ratio " + ratio) << '\n';
    }
    if (!csv) {
        throw flexdup::InvalidArgument("failed while writing output file: " + a.out);
    }
    std::cout << "wrote " << a.out << '\n';
}

// ---------------------------------------------------------------------------
// bench-time

struct BenchArgs {
    std::vector<int> sizes = {2, 4, 8};
    std::int64_t count = 100;
    std::uint64_t seed = 1;
    std::vector<std::string> methods = {"flexnet", "heuristic", "exhaustive"};
    std::string model;
    int layers = 3;
    int hidden = 64;
    std::string out = "timings.csv";
    double area_side = 4000.0;
    double min_distance = 100.0;
    double frequency = 5e9;
    double shadow_sigma = 9.5;
    double p_max = 1.0;
    double noise = 1e-13;
    std::string config_path;
};

auto run_bench_time(const BenchArgs& a) -> void
{
    for (const auto& m : a.methods) {
        if (!kAllMethods.contains(m)) {
            throw UsageError("unknown method '" + m + "'");
        }
    }
    if (a.sizes.empty()) {
        throw UsageError("--sizes must not be empty");
    }
    for (const int s : a.sizes) {
        if (s <= 0) {
            throw UsageError("--sizes entries must be positive");
        }
    }
    if (a.count <= 0) {
        throw UsageError("--count must be positive");
    }
    const bool wants_flexnet =
        std::find(a.methods.begin(), a.methods.end(), "flexnet") != a.methods.end();
    const bool wants_exhaustive =
        std::find(a.methods.begin(), a.methods.end(), "exhaustive") != a.methods.end();
    if (wants_exhaustive) {
        for (const int s : a.sizes) {
            if (s > flexdup::kExhaustiveMaxPairs) {
                throw flexdup::TooManyPairs(
                    "exhaustive search refused: " + std::to_string(s) + " pairs exceeds the " +
                    std::to_string(flexdup::kExhaustiveMaxPairs) + "-pair limit");
            }
        }
    }
    json j = {{"sizes", a.sizes},   {"count", a.count},   {"seed", a.seed},
              {"methods", a.methods}, {"model", a.model}, {"layers", a.layers},
              {"hidden", a.hidden}, {"out", a.out}};
    j.update(json{{"area_side", a.area_side},
                  {"min_distance", a.min_distance},
                  {"frequency", a.frequency},
                  {"shadow_sigma", a.shadow_sigma},
                  {"p_max", a.p_max},
                  {"noise", a.noise}});
    echo_config("bench-time", j);

    flexdup::ModelParams params;
    if (wants_flexnet) {
        if (a.model.empty()) {
            // Inference cost does not depend on weight values, so a fresh
            // deterministic initialization is a fair stand-in.
            flexdup::TrainConfig cfg;
            cfg.layers = a.layers;
            cfg.hidden = a.hidden;
            params = flexdup::init_params(cfg, a.seed);
            params.norm_p_max = a.p_max;
            params.norm_noise = a.noise;
        } else {
            params = flexdup::load_model(a.model);
        }
    }

    std::ofstream csv(a.out);
    if (!csv) {
        throw flexdup::InvalidArgument("cannot open output file for writing: " + a.out);
    }
    csv << "# per-sample wall time, single-threaded; excludes dataset load and graph "
           "construction\n";
    csv << "method,n_pairs,mean_seconds\n";
    flexdup::ChannelConfig cc;
    cc.area_side_m = a.area_side;
    cc.min_distance_m = a.min_distance;
    cc.frequency_hz = a.frequency;
    cc.shadow_sigma_db = a.shadow_sigma;
    cc.p_max_w = a.p_max;
    cc.noise_w = a.noise;
    for (const int size : a.sizes) {
        cc.n_pairs = size;
        const auto dataset = flexdup::generate_dataset(
            cc, a.count, flexdup::derive_seed(a.seed, static_cast<std::uint64_t>(size)));
        for (const auto& method : a.methods) {
            double total = 0.0;
            for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
                const auto heuristic_seed =
                    flexdup::derive_seed(a.seed, static_cast<std::uint64_t>(i));
                total +=
                    run_method(method, dataset.samples[i], &params, heuristic_seed).second;
            }
            const double mean_seconds = total / static_cast<double>(dataset.samples.size());
            csv << method << ',' << size << ',' << fmt(mean_seconds) << '\n';
            std::cout << method << " @ " << size << " pairs: " << fmt(mean_seconds) << " s/sample\n";
        }
    }
    if (!csv) {
        throw flexdup::InvalidArgument("failed while writing output file: " + a.out);
    }
    std::cout << "wrote " << a.out << '\n';
}

// ---------------------------------------------------------------------------
// generalize

struct GeneralizeArgs {
    std::vector<int> sizes = {2, 4, 8};
    std::int64_t train_count = 2000;
    std::int64_t test_count = 200;
    int epochs = 20;
    int batch = 64;
    double lr = 0.002;
    int layers = 3;
    int hidden = 64;
    double t_p = 0.1;
    double t_d = 0.1;
    std::string pooling = "sum";
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out = "generalize.csv";
    double area_side = 4000.0;
    double min_distance = 100.0;
    double frequency = 5e9;
    double shadow_sigma = 9.5;
    double p_max = 1.0;
    double noise = 1e-13;
    std::string config_path;
};

auto run_generalize(const GeneralizeArgs& a) -> void
{
    if (a.sizes.empty()) {
        throw UsageError("--sizes must not be empty");
    }
    for (const int s : a.sizes) {
        if (s <= 0) {
            throw UsageError("--sizes entries must be positive");
        }
        if (s > flexdup::kExhaustiveMaxPairs) {
            throw flexdup::TooManyPairs("exhaustive reference refused: " + std::to_string(s) +
                                        " pairs exceeds the " +
                                        std::to_string(flexdup::kExhaustiveMaxPairs) +
                                        "-pair limit");
        }
    }
    if (a.train_count <= 0 || a.test_count <= 0 || a.epochs <= 0) {
        throw UsageError("--train-count, --test-count and --epochs must be positive");
    }
    if (a.pooling != "sum" && a.pooling != "max") {
        throw UsageError("--pooling must be 'sum' or 'max'");
    }
    json j = {{"sizes", a.sizes},     {"train_count", a.train_count},
              {"test_count", a.test_count}, {"epochs", a.epochs},
              {"batch", a.batch},     {"lr", a.lr},
              {"layers", a.layers},   {"hidden", a.hidden},
              {"t_p", a.t_p},         {"t_d", a.t_d},
              {"pooling", a.pooling}, {"seed", a.seed},
              {"threads", a.threads}, {"out", a.out}};
    j.update(json{{"area_side", a.area_side},
                  {"min_distance", a.min_distance},
                  {"frequency", a.frequency},
                  {"shadow_sigma", a.shadow_sigma},
                  {"p_max", a.p_max},
                  {"noise", a.noise}});
    echo_config("generalize", j);

    flexdup::ChannelConfig cc;
    cc.area_side_m = a.area_side;
    cc.min_distance_m = a.min_distance;
    cc.frequency_hz = a.frequency;
    cc.shadow_sigma_db = a.shadow_sigma;
    cc.p_max_w = a.p_max;
    cc.noise_w = a.noise;

    flexdup::TrainConfig tcfg;
    tcfg.learning_rate = a.lr;
    tcfg.batch_size = a.batch;
    tcfg.epochs = a.epochs;
    tcfg.seed = a.seed;
    tcfg.layers = a.layers;
    tcfg.hidden = a.hidden;
    tcfg.t_p = a.t_p;
    tcfg.t_d = a.t_d;
    tcfg.pooling = flexdup::pooling_from_string(a.pooling);
    tcfg.n_threads = a.threads;

    // Per-size train/test sets; the mixed set is their concatenation, so the
    // single model sees every size at equal share.
    std::vector<flexdup::Dataset> train_sets;
    std::vector<flexdup::Dataset> test_sets;
    for (std::size_t idx = 0; idx < a.sizes.size(); ++idx) {
        cc.n_pairs = a.sizes[idx];
        train_sets.push_back(flexdup::generate_dataset(
            cc, a.train_count, flexdup::derive_seed(a.seed, 2 * idx + 1)));
        test_sets.push_back(flexdup::generate_dataset(
            cc, a.test_count, flexdup::derive_seed(a.seed, 2 * idx + 2)));
    }
    flexdup::Dataset mixed;
    mixed.header = train_sets.front().header;
    for (const auto& ts : train_sets) {
        mixed.samples.insert(mixed.samples.end(), ts.samples.begin(), ts.samples.end());
    }
    mixed.header.sample_count = static_cast<std::int64_t>(mixed.samples.size());

    std::cout << "training mixed-size model on " << mixed.samples.size() << " samples\n";
    const auto mixed_model = flexdup::train(mixed, tcfg).params;
    std::vector<flexdup::ModelParams> size_models;
    for (std::size_t idx = 0; idx < a.sizes.size(); ++idx) {
        std::cout << "training " << a.sizes[idx] << "-pair model on "
                  << train_sets[idx].samples.size() << " samples\n";
        size_models.push_back(flexdup::train(train_sets[idx], tcfg).params);
    }

    std::ofstream csv(a.out);
    if (!csv) {
        throw flexdup::InvalidArgument("cannot open output file for writing: " + a.out);
    }
    csv << "model_kind,n_pairs,mean_rate_bits,rate_ratio,sample_count\n";
    for (std::size_t idx = 0; idx < a.sizes.size(); ++idx) {
        const auto& tests = test_sets[idx].samples;
        double exhaustive_sum = 0.0;
        std::vector<double> ex_rates(tests.size());
        flexdup::parallel_for(tests.size(), a.threads, [&](std::size_t i) {
            ex_rates[i] = flexdup::exhaustive_search(tests[i]).achieved_rate;
        });
        for (const double r : ex_rates) {
            exhaustive_sum += r;
        }
        const double ex_mean = exhaustive_sum / static_cast<double>(tests.size());
        const auto report = [&](const std::string& kind, const flexdup::ModelParams& model) {
            double sum = 0.0;
            for (const auto& G : tests) {
                sum += flexdup::infer(G, model).achieved_rate;
            }
            const double mean = sum / static_cast<double>(tests.size());
            const double ratio = ex_mean > 0 ? mean / ex_mean : 0.0;
            csv << kind << ',' << a.sizes[idx] << ',' << fmt(mean) << ',' << fmt(ratio) << ','
                << tests.size() << '\n';
            std::cout << kind << " @ " << a.sizes[idx] << " pairs: ratio " << fmt(ratio) << '\n';
        };
        report("mixed", mixed_model);
        report("per_size", size_models[idx]);
    }
    if (!csv) {
        throw flexdup::InvalidArgument("failed while writing output file: " + a.out);
    }
    std::cout << "wrote " << a.out << '\n';
}

} // namespace

auto main(int argc, char** argv) -> int
{
    CLI::App app{"Flexible-duplex resource allocation experiment harness"};
    app.require_subcommand(1);

    GenerateArgs gen;
    ConfigMerge gen_merge;
    auto* gen_cmd = app.add_subcommand("generate", "Generate a channel dataset");
    gen_merge.track(gen_cmd->add_option("--pairs", gen.pairs, "Number of node pairs")
                        ->check(CLI::PositiveNumber),
                    gen.pairs, "pairs");
    gen_merge.track(gen_cmd->add_option("--count", gen.count, "Number of samples")
                        ->check(CLI::PositiveNumber),
                    gen.count, "count");
    gen_merge.track(gen_cmd->add_option("--seed", gen.seed, "Dataset seed"), gen.seed, "seed");
    gen_merge.track(gen_cmd->add_option("--out", gen.out, "Output dataset path"), gen.out, "out");
    add_channel_options(*gen_cmd, gen_merge, gen.area_side, gen.min_distance, gen.frequency,
                        gen.shadow_sigma, gen.p_max, gen.noise);
    gen_cmd->add_option("--config", gen.config_path, "JSON config merged under explicit flags");

    TrainArgs tr;
    ConfigMerge tr_merge;
    auto* tr_cmd = app.add_subcommand("train", "Train a Flex-Net model on a dataset");
    tr_merge.track(tr_cmd->add_option("--data", tr.data, "Training dataset path"), tr.data,
                   "data");
    tr_merge.track(tr_cmd->add_option("--out", tr.out, "Checkpoint output path"), tr.out, "out");
    tr_merge.track(tr_cmd->add_option("--history", tr.history, "Loss-history CSV path"), tr.history,
                   "history");
    tr_merge.track(tr_cmd->add_option("--layers", tr.layers, "Message-passing layers")
                       ->check(CLI::PositiveNumber),
                   tr.layers, "layers");
    tr_merge.track(
        tr_cmd->add_option("--hidden", tr.hidden, "Hidden width")->check(CLI::PositiveNumber),
        tr.hidden, "hidden");
    tr_merge.track(
        tr_cmd->add_option("--batch", tr.batch, "Mini-batch size")->check(CLI::PositiveNumber),
        tr.batch, "batch");
    tr_merge.track(
        tr_cmd->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber), tr.lr,
        "lr");
    tr_merge.track(
        tr_cmd->add_option("--epochs", tr.epochs, "Training epochs")->check(CLI::PositiveNumber),
        tr.epochs, "epochs");
    tr_merge.track(tr_cmd->add_option("--t-p", tr.t_p, "Power-head temperature")
                       ->check(CLI::PositiveNumber),
                   tr.t_p, "t_p");
    tr_merge.track(tr_cmd->add_option("--t-d", tr.t_d, "Direction-head temperature")
                       ->check(CLI::PositiveNumber),
                   tr.t_d, "t_d");
    tr_merge.track(tr_cmd->add_option("--pooling", tr.pooling, "Aggregation: sum or max")
                       ->check(CLI::IsMember({"sum", "max"})),
                   tr.pooling, "pooling");
    tr_merge.track(tr_cmd->add_option("--seed", tr.seed, "Training seed"), tr.seed, "seed");
    tr_merge.track(tr_cmd->add_option("--threads", tr.threads, "Batch worker threads")
                       ->check(CLI::PositiveNumber),
                   tr.threads, "threads");
    tr_cmd->add_option("--config", tr.config_path, "JSON config merged under explicit flags");

    EvaluateArgs ev;
    ConfigMerge ev_merge;
    auto* ev_cmd = app.add_subcommand("evaluate", "Evaluate methods on a test dataset");
    ev_merge.track(ev_cmd->add_option("--data", ev.data, "Test dataset path"), ev.data, "data");
    ev_merge.track(ev_cmd->add_option("--model", ev.model, "Flex-Net checkpoint path"), ev.model,
                   "model");
    ev_merge.track(ev_cmd->add_option("--methods", ev.methods, "Methods to run")
                       ->delimiter(',')
                       ->check(CLI::IsMember(kAllMethods)),
                   ev.methods, "methods");
    ev_merge.track(ev_cmd->add_option("--out", ev.out, "Results CSV path"), ev.out, "out");
    ev_merge.track(ev_cmd->add_option("--seed", ev.seed, "Heuristic restart seed"), ev.seed,
                   "seed");
    ev_merge.track(ev_cmd->add_option("--threads", ev.threads, "Evaluation worker threads")
                       ->check(CLI::PositiveNumber),
                   ev.threads, "threads");
    ev_cmd->add_option("--config", ev.config_path, "JSON config merged under explicit flags");

    BenchArgs bt;
    ConfigMerge bt_merge;
    auto* bt_cmd = app.add_subcommand("bench-time", "Per-sample wall-time benchmark");
    bt_merge.track(bt_cmd->add_option("--sizes", bt.sizes, "Pair counts to benchmark")
                       ->delimiter(','),
                   bt.sizes, "sizes");
    bt_merge.track(bt_cmd->add_option("--count", bt.count, "Samples per size")
                       ->check(CLI::PositiveNumber),
                   bt.count, "count");
    bt_merge.track(bt_cmd->add_option("--seed", bt.seed, "Generation seed"), bt.seed, "seed");
    bt_merge.track(bt_cmd->add_option("--methods", bt.methods, "Methods to time")
                       ->delimiter(',')
                       ->check(CLI::IsMember(kAllMethods)),
                   bt.methods, "methods");
    bt_merge.track(bt_cmd->add_option("--model", bt.model, "Optional checkpoint (default: fresh init)"),
                   bt.model, "model");
    bt_merge.track(bt_cmd->add_option("--layers", bt.layers, "Layers for fresh init")
                       ->check(CLI::PositiveNumber),
                   bt.layers, "layers");
    bt_merge.track(bt_cmd->add_option("--hidden", bt.hidden, "Hidden width for fresh init")
                       ->check(CLI::PositiveNumber),
                   bt.hidden, "hidden");
    bt_merge.track(bt_cmd->add_option("--out", bt.out, "Timing CSV path"), bt.out, "out");
    add_channel_options(*bt_cmd, bt_merge, bt.area_side, bt.min_distance, bt.frequency,
                        bt.shadow_sigma, bt.p_max, bt.noise);
    bt_cmd->add_option("--config", bt.config_path, "JSON config merged under explicit flags");

    GeneralizeArgs gz;
    ConfigMerge gz_merge;
    auto* gz_cmd = app.add_subcommand("generalize", "Mixed-size vs size-specific training study");
    gz_merge.track(gz_cmd->add_option("--sizes", gz.sizes, "Pair counts in the study")
                       ->delimiter(','),
                   gz.sizes, "sizes");
    gz_merge.track(gz_cmd->add_option("--train-count", gz.train_count, "Training samples per size")
                       ->check(CLI::PositiveNumber),
                   gz.train_count, "train_count");
    gz_merge.track(gz_cmd->add_option("--test-count", gz.test_count, "Test samples per size")
                       ->check(CLI::PositiveNumber),
                   gz.test_count, "test_count");
    gz_merge.track(
        gz_cmd->add_option("--epochs", gz.epochs, "Training epochs")->check(CLI::PositiveNumber),
        gz.epochs, "epochs");
    gz_merge.track(
        gz_cmd->add_option("--batch", gz.batch, "Mini-batch size")->check(CLI::PositiveNumber),
        gz.batch, "batch");
    gz_merge.track(
        gz_cmd->add_option("--lr", gz.lr, "Adam learning rate")->check(CLI::PositiveNumber), gz.lr,
        "lr");
    gz_merge.track(gz_cmd->add_option("--layers", gz.layers, "Message-passing layers")
                       ->check(CLI::PositiveNumber),
                   gz.layers, "layers");
    gz_merge.track(
        gz_cmd->add_option("--hidden", gz.hidden, "Hidden width")->check(CLI::PositiveNumber),
        gz.hidden, "hidden");
    gz_merge.track(gz_cmd->add_option("--t-p", gz.t_p, "Power-head temperature")
                       ->check(CLI::PositiveNumber),
                   gz.t_p, "t_p");
    gz_merge.track(gz_cmd->add_option("--t-d", gz.t_d, "Direction-head temperature")
                       ->check(CLI::PositiveNumber),
                   gz.t_d, "t_d");
    gz_merge.track(gz_cmd->add_option("--pooling", gz.pooling, "Aggregation: sum or max")
                       ->check(CLI::IsMember({"sum", "max"})),
                   gz.pooling, "pooling");
    gz_merge.track(gz_cmd->add_option("--seed", gz.seed, "Experiment seed"), gz.seed, "seed");
    gz_merge.track(gz_cmd->add_option("--threads", gz.threads, "Worker threads")
                       ->check(CLI::PositiveNumber),
                   gz.threads, "threads");
    gz_merge.track(gz_cmd->add_option("--out", gz.out, "Comparison CSV path"), gz.out, "out");
    add_channel_options(*gz_cmd, gz_merge, gz.area_side, gz.min_distance, gz.frequency,
                        gz.shadow_sigma, gz.p_max, gz.noise);
    gz_cmd->add_option("--config", gz.config_path, "JSON config merged under explicit flags");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(gen_cmd)) {
            gen_merge.apply(gen.config_path);
            run_generate(gen);
        } else if (app.got_subcommand(tr_cmd)) {
            tr_merge.apply(tr.config_path);
            run_train(tr);
        } else if (app.got_subcommand(ev_cmd)) {
            ev_merge.apply(ev.config_path);
            run_evaluate(ev);
        } else if (app.got_subcommand(bt_cmd)) {
            bt_merge.apply(bt.config_path);
            run_bench_time(bt);
        } else if (app.got_subcommand(gz_cmd)) {
            gz_merge.apply(gz.config_path);
            run_generalize(gz);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
