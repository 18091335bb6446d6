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

#include "flexdup/channel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "flexdup/rng.hpp"

namespace flexdup {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'E', 'X', 'D', 'U', 'P', '1'};
constexpr double kSpeedOfLight = 299792458.0; // m/s

using nlohmann::json;

json config_to_json(const ChannelConfig& c) {
    return json{{"area_side_m", c.area_side_m},   {"min_distance_m", c.min_distance_m},
                {"frequency_hz", c.frequency_hz}, {"shadow_sigma_db", c.shadow_sigma_db},
                {"n_pairs", c.n_pairs},           {"p_max_w", c.p_max_w},
                {"noise_w", c.noise_w}};
}

ChannelConfig config_from_json(const json& j) {
    ChannelConfig c;
    c.area_side_m = j.at("area_side_m").get<double>();
    c.min_distance_m = j.at("min_distance_m").get<double>();
    c.frequency_hz = j.at("frequency_hz").get<double>();
    c.shadow_sigma_db = j.at("shadow_sigma_db").get<double>();
    c.n_pairs = j.at("n_pairs").get<int>();
    c.p_max_w = j.at("p_max_w").get<double>();
    c.noise_w = j.at("noise_w").get<double>();
    return c;
}

} // namespace

double path_loss_db(double distance_m, double frequency_hz) {
    if (distance_m <= 0.0 || frequency_hz <= 0.0) {
        throw NonPositiveInput("path_loss_db: distance and frequency must be > 0");
    }
    return 20.0 * std::log10(distance_m) + 20.0 * std::log10(frequency_hz) +
           20.0 * std::log10(4.0 * M_PI / kSpeedOfLight);
}

Matrix large_scale_gain(const NetworkTopology& topology,
                        double frequency_hz,
                        double shadow_sigma_db,
                        std::uint64_t seed) {
    const int n = topology.n_nodes();
    if (n < 2) {
        throw InvalidArgument("large_scale_gain: topology has fewer than 2 nodes");
    }
    if (shadow_sigma_db < 0.0) {
        throw InvalidArgument("large_scale_gain: shadow_sigma_db must be >= 0");
    }
    Rng rng(seed);
    Matrix gain = Matrix::Zero(n, n);
    // Shadowing draws are row-major over ordered (n, k) so the stream is
    // independent of how the matrix is stored.
    for (int row = 0; row < n; ++row) {
        for (int col = 0; col < n; ++col) {
            if (row == col) {
                continue;
            }
            const double d = distance(topology.positions[static_cast<std::size_t>(row)],
                                      topology.positions[static_cast<std::size_t>(col)]);
            const double shadow_db = shadow_sigma_db * rng.normal();
            gain(row, col) = std::pow(10.0, -(path_loss_db(d, frequency_hz) + shadow_db) / 10.0);
        }
    }
    return gain;
}

Matrix sample_rayleigh(const Matrix& mean_gain, std::uint64_t seed) {
    if (mean_gain.rows() != mean_gain.cols()) {
        throw InvalidArgument("sample_rayleigh: matrix must be square");
    }
    if ((mean_gain.array() < 0.0).any()) {
        throw InvalidArgument("sample_rayleigh: mean gains must be >= 0");
    }
    Rng rng(seed);
    const int n = static_cast<int>(mean_gain.rows());
    Matrix gain = Matrix::Zero(n, n);
    for (int row = 0; row < n; ++row) {
        for (int col = 0; col < n; ++col) {
            if (row == col) {
                continue;
            }
            gain(row, col) = mean_gain(row, col) * rng.exponential();
        }
    }
    return gain;
}

GainMatrix generate_sample(const ChannelConfig& config, std::uint64_t seed) {
    const NetworkTopology topo =
        make_topology(config.area_side_m, config.min_distance_m, config.n_pairs, derive_seed(seed, 0));
    const Matrix mean = large_scale_gain(topo, config.frequency_hz, config.shadow_sigma_db, derive_seed(seed, 1));
    GainMatrix sample;
    sample.n_nodes = topo.n_nodes();
    sample.g = sample_rayleigh(mean, derive_seed(seed, 2));
    sample.noise = config.noise_w;
    sample.p_max = config.p_max_w;
    return sample;
}

Dataset generate_dataset(const ChannelConfig& config, std::int64_t sample_count, std::uint64_t seed) {
    if (sample_count < 1) {
        throw InvalidArgument("generate_dataset: sample_count must be >= 1");
    }
    if (config.noise_w <= 0.0 || config.p_max_w <= 0.0) {
        throw NonPositiveInput("generate_dataset: noise_w and p_max_w must be > 0");
    }
    Dataset ds;
    ds.header.version = 1;
    ds.header.n_nodes = 2 * config.n_pairs;
    ds.header.sample_count = sample_count;
    ds.header.p_max = config.p_max_w;
    ds.header.noise = config.noise_w;
    ds.header.seed = seed;
    ds.header.config = config;
    ds.samples.reserve(static_cast<std::size_t>(sample_count));
    for (std::int64_t i = 0; i < sample_count; ++i) {
        ds.samples.push_back(generate_sample(config, derive_seed(seed, static_cast<std::uint64_t>(i))));
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    json header{{"version", dataset.header.version},
                {"n_nodes", dataset.header.n_nodes},
                {"sample_count", dataset.header.sample_count},
                {"p_max", dataset.header.p_max},
                {"noise", dataset.header.noise},
                {"seed", dataset.header.seed},
                {"config", config_to_json(dataset.header.config)}};
    const std::string header_bytes = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("save_dataset: cannot open " + path);
    }
    out.write(kMagic, sizeof(kMagic));
    const auto len = static_cast<std::uint32_t>(header_bytes.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));

    const int n = dataset.header.n_nodes;
    std::vector<double> block(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (const GainMatrix& s : dataset.samples) {
        for (int row = 0; row < n; ++row) {
            for (int col = 0; col < n; ++col) {
                block[static_cast<std::size_t>(row) * static_cast<std::size_t>(n) + static_cast<std::size_t>(col)] =
                    s.g(row, col);
            }
        }
        out.write(reinterpret_cast<const char*>(block.data()),
                  static_cast<std::streamsize>(block.size() * sizeof(double)));
    }
    if (!out) {
        throw Error("save_dataset: write failed for " + path);
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("load_dataset: cannot open " + path);
    }
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw CorruptHeader("load_dataset: bad magic in " + path);
    }
    std::uint32_t len = 0;
    if (!in.read(reinterpret_cast<char*>(&len), sizeof(len))) {
        throw CorruptHeader("load_dataset: missing header length in " + path);
    }
    std::string header_bytes(len, '\0');
    if (!in.read(header_bytes.data(), len)) {
        throw CorruptHeader("load_dataset: header shorter than declared in " + path);
    }
    json header;
    try {
        header = json::parse(header_bytes);
    } catch (const json::exception&) {
        throw CorruptHeader("load_dataset: header is not valid JSON in " + path);
    }

    Dataset ds;
    try {
        ds.header.version = header.at("version").get<int>();
        if (ds.header.version != 1) {
            throw UnsupportedVersion("load_dataset: version " + std::to_string(ds.header.version) +
                                     " not supported");
        }
        ds.header.n_nodes = header.at("n_nodes").get<int>();
        ds.header.sample_count = header.at("sample_count").get<std::int64_t>();
        ds.header.p_max = header.at("p_max").get<double>();
        ds.header.noise = header.at("noise").get<double>();
        ds.header.seed = header.at("seed").get<std::uint64_t>();
        ds.header.config = config_from_json(header.at("config"));
    } catch (const json::exception&) {
        throw CorruptHeader("load_dataset: header missing required fields in " + path);
    }
    const int n = ds.header.n_nodes;
    if (n < 2 || n % 2 != 0 || ds.header.sample_count < 0) {
        throw CorruptHeader("load_dataset: implausible header values in " + path);
    }

    const std::size_t block_elems = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    std::vector<double> block(block_elems);
    ds.samples.reserve(static_cast<std::size_t>(ds.header.sample_count));
    for (std::int64_t i = 0; i < ds.header.sample_count; ++i) {
        if (!in.read(reinterpret_cast<char*>(block.data()),
                     static_cast<std::streamsize>(block_elems * sizeof(double)))) {
            throw TruncatedPayload("load_dataset: payload ends inside sample " + std::to_string(i) + " of " +
                                   std::to_string(ds.header.sample_count) + " in " + path);
        }
        GainMatrix s;
        s.n_nodes = n;
        s.noise = ds.header.noise;
        s.p_max = ds.header.p_max;
        s.g.resize(n, n);
        for (int row = 0; row < n; ++row) {
            for (int col = 0; col < n; ++col) {
                s.g(row, col) =
                    block[static_cast<std::size_t>(row) * static_cast<std::size_t>(n) + static_cast<std::size_t>(col)];
            }
        }
        ds.samples.push_back(std::move(s));
    }
    if (in.peek() != std::ifstream::traits_type::eof()) {
        throw CorruptHeader("load_dataset: trailing bytes after declared payload in " + path);
    }
    return ds;
}

} // namespace flexdup
