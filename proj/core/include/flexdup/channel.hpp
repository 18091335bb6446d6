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

#ifndef FLEXDUP_CHANNEL_HPP
#define FLEXDUP_CHANNEL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "flexdup/errors.hpp"
#include "flexdup/topology.hpp"

namespace flexdup {

struct CorruptHeader : Error {
    using Error::Error;
};
struct TruncatedPayload : Error {
    using Error::Error;
};
struct UnsupportedVersion : Error {
    using Error::Error;
};

using Matrix = Eigen::MatrixXd;

/// Squared channel magnitudes for a 2N-node network. g(n, k) is the linear
/// power gain from transmitter k to receiver n; entries are independent per
/// ordered pair (the channel is not reciprocal). The diagonal is unused and
/// stored as zero.
struct GainMatrix {
    int n_nodes = 0;
    Matrix g;
    double noise = 0.0; // per-node noise power, watts
    double p_max = 0.0; // power budget, watts

    int n_pairs() const { return n_nodes / 2; }
};

/// Generation parameters; accepted on the wire as a JSON document with the
/// same field names.
struct ChannelConfig {
    double area_side_m = 4000.0;
    double min_distance_m = 100.0;
    double frequency_hz = 5e9;
    double shadow_sigma_db = 9.5;
    int n_pairs = 4;
    double p_max_w = 1.0;     // 30 dBm
    double noise_w = 1e-13;   // -100 dBm
};

struct DatasetHeader {
    int version = 1;
    int n_nodes = 0;
    std::int64_t sample_count = 0;
    double p_max = 0.0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    ChannelConfig config;
};

/// A persisted collection of gain matrices. On disk: 8-byte magic
/// "FLEXDUP1", a u32 little-endian length, that many bytes of UTF-8 JSON
/// header, then sample_count row-major blocks of (2N)^2 little-endian
/// IEEE-754 doubles.
struct Dataset {
    DatasetHeader header;
    std::vector<GainMatrix> samples;
};

/// Free-space path loss in dB: 20 log10(d) + 20 log10(f) + 20 log10(4 pi / c).
double path_loss_db(double distance_m, double frequency_hz);

/// Mean (large-scale) gain matrix: free-space path loss plus log-normal
/// shadowing drawn independently per ordered node pair. Diagonal is zero.
Matrix large_scale_gain(const NetworkTopology& topology,
                        double frequency_hz,
                        double shadow_sigma_db,
                        std::uint64_t seed);

/// Applies Rayleigh fading: each entry scaled by an independent
/// exponential(mean 1) draw (Rayleigh amplitude, exponential power).
Matrix sample_rayleigh(const Matrix& mean_gain, std::uint64_t seed);

/// One complete channel realization from a fresh topology.
GainMatrix generate_sample(const ChannelConfig& config, std::uint64_t seed);

/// sample_count independent realizations, reproducible from (config, seed).
Dataset generate_dataset(const ChannelConfig& config, std::int64_t sample_count, std::uint64_t seed);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

} // namespace flexdup

#endif // FLEXDUP_CHANNEL_HPP
