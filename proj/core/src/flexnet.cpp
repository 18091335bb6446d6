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

#include "flexdup/flexnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <utility>

#include <nlohmann/json.hpp>

#include "flexdup/objective.hpp"
#include "flexdup/parallel.hpp"
#include "flexdup/rng.hpp"

namespace flexdup {

namespace {

using nlohmann::json;

/// Visits every weight matrix in the canonical (flatten/checkpoint) order.
template <typename Params, typename Fn>
void for_each_weight(Params& params, Fn&& fn) {
    for (std::size_t l = 0; l < params.layer.size(); ++l) {
        auto& lw = params.layer[l];
        const std::string base = "layer" + std::to_string(l) + ".";
        fn(base + "wu_intf", lw.wu_intf);
        fn(base + "wv_intf", lw.wv_intf);
        fn(base + "we_intf", lw.we_intf);
        fn(base + "wu_dsr", lw.wu_dsr);
        fn(base + "wv_dsr", lw.wv_dsr);
    }
    auto visit_mlp = [&](const std::string& base, auto& m) {
        fn(base + ".w1", m.w1);
        fn(base + ".b1", m.b1);
        fn(base + ".w2", m.w2);
        fn(base + ".b2", m.b2);
        fn(base + ".w3", m.w3);
        fn(base + ".b3", m.b3);
    };
    visit_mlp("power_head", params.power_head);
    visit_mlp("direction_head", params.direction_head);
}

/// Sizes every matrix from (layers, hidden) without touching values.
void resize_params(ModelParams& p) {
    const int H = p.hidden;
    p.layer.resize(static_cast<std::size_t>(p.layers));
    int in = 1;
    for (auto& lw : p.layer) {
        lw.wu_intf.resize(H, in);
        lw.wv_intf.resize(H, in);
        lw.we_intf.resize(H, 1);
        lw.wu_dsr.resize(H, 1 + H);
        lw.wv_dsr.resize(H, 1 + H);
        in = 1 + H;
    }
    auto resize_mlp = [&](Mlp& m, int in_dim) {
        m.w1.resize(H, in_dim);
        m.b1.resize(H, 1);
        m.w2.resize(H, H);
        m.b2.resize(H, 1);
        m.w3.resize(1, H);
        m.b3.resize(1, 1);
    };
    resize_mlp(p.power_head, 1 + H);
    resize_mlp(p.direction_head, 2 * (1 + H));
}

void check_config(const TrainConfig& c) {
    if (c.hidden < 1 || c.layers < 1) {
        throw InvalidArgument("flexnet: layers and hidden width must be >= 1");
    }
    if (!(c.t_p > 0.0) || !(c.t_d > 0.0)) {
        throw InvalidArgument("flexnet: temperatures must be > 0");
    }
    if (!(c.learning_rate > 0.0) || c.batch_size < 1 || c.epochs < 1) {
        throw InvalidArgument("flexnet: learning rate, batch size and epochs must be positive");
    }
}

/// Shape audit before a forward pass; catches hand-edited checkpoints.
void check_params(const ModelParams& p) {
    if (p.hidden < 1 || p.layers < 1 || static_cast<int>(p.layer.size()) != p.layers) {
        throw DimensionMismatch("flexnet: params layer count inconsistent with layers field");
    }
    if (!(p.t_p > 0.0) || !(p.t_d > 0.0)) {
        throw DimensionMismatch("flexnet: temperatures must be > 0");
    }
    ModelParams shell;
    shell.layers = p.layers;
    shell.hidden = p.hidden;
    resize_params(shell);
    const LayerWeights* expect = shell.layer.data();
    for (std::size_t l = 0; l < p.layer.size(); ++l) {
        const LayerWeights& got = p.layer[l];
        const LayerWeights& want = expect[l];
        auto same = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
            return a.rows() == b.rows() && a.cols() == b.cols();
        };
        if (!same(got.wu_intf, want.wu_intf) || !same(got.wv_intf, want.wv_intf) ||
            !same(got.we_intf, want.we_intf) || !same(got.wu_dsr, want.wu_dsr) ||
            !same(got.wv_dsr, want.wv_dsr)) {
            throw DimensionMismatch("flexnet: layer " + std::to_string(l) + " weight shapes inconsistent");
        }
    }
    auto check_mlp = [&](const Mlp& got, const Mlp& want, const char* name) {
        auto same = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
            return a.rows() == b.rows() && a.cols() == b.cols();
        };
        if (!same(got.w1, want.w1) || !same(got.b1, want.b1) || !same(got.w2, want.w2) ||
            !same(got.b2, want.b2) || !same(got.w3, want.w3) || !same(got.b3, want.b3)) {
            throw DimensionMismatch(std::string("flexnet: ") + name + " shapes inconsistent");
        }
    };
    check_mlp(p.power_head, shell.power_head, "power head");
    check_mlp(p.direction_head, shell.direction_head, "direction head");
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void matrix_from_json(const json& j, Eigen::MatrixXd& m, const std::string& name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != m.rows()) {
        throw SchemaMismatch("load_model: weight '" + name + "' has wrong row count");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols()) {
            throw SchemaMismatch("load_model: weight '" + name + "' has wrong column count");
        }
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const json& cell = row[static_cast<std::size_t>(c)];
            if (!cell.is_number()) {
                throw SchemaMismatch("load_model: weight '" + name + "' holds a non-numeric entry");
            }
            m(r, c) = cell.get<double>();
        }
    }
}

} // namespace

std::string to_string(Pooling pooling) {
    return pooling == Pooling::sum ? "sum" : "max";
}

Pooling pooling_from_string(const std::string& name) {
    if (name == "sum") {
        return Pooling::sum;
    }
    if (name == "max") {
        return Pooling::max;
    }
    throw InvalidArgument("pooling must be 'sum' or 'max', got '" + name + "'");
}

ModelParams init_params(const TrainConfig& config, std::uint64_t seed) {
    check_config(config);
    ModelParams p;
    p.layers = config.layers;
    p.hidden = config.hidden;
    p.t_p = config.t_p;
    p.t_d = config.t_d;
    p.pooling = config.pooling;
    resize_params(p);

    Rng rng(seed);
    // Sum pooling adds one message per interference edge, so embedding
    // magnitudes grow with the vertex degree and compound across layers.
    // A plain +-1/sqrt(fan_in) draw leaves both sigmoid heads saturated at
    // birth once the sharpening temperatures divide the pre-activations;
    // damping the aggregation and power-head bounds keeps power outputs in
    // the sigmoid's linear region for every size this toolkit targets. The
    // direction head keeps the full bound on purpose: its relaxed optimum
    // sits at the 0.5 split, where the objective is blind to the forward /
    // reverse gain asymmetry, so directions must start mildly polarized to
    // escape that region and learn a useful binary preference.
    // XXX-TEMP-KNOBS: environment overrides for init-scale sweeps; strip
    // this block (and restore constexpr) before release.
    auto knob = [](const char* name, double fallback) {
        const char* s = std::getenv(name);
        return s != nullptr ? std::atof(s) : fallback;
    };
    const double kBodyInitScale = knob("FLEXDUP_K_BODY", 0.25);
    const double kEdgeInitScale = knob("FLEXDUP_K_EDGE", 0.01);
    const double kPowerHiddenInitScale = knob("FLEXDUP_K_PHID", 0.25);
    const double kPowerOutInitScale = knob("FLEXDUP_K_POUT", 0.25);
    const double kDirectionHiddenInitScale = knob("FLEXDUP_K_DHID", 0.25);
    const double kDirectionOutInitScale = knob("FLEXDUP_K_DOUT", 0.25);
    const double kWuIntf = knob("FLEXDUP_K_WU_INTF", kBodyInitScale);
    const double kWvIntf = knob("FLEXDUP_K_WV_INTF", kBodyInitScale);
    const double kWuDsr = knob("FLEXDUP_K_WU_DSR", kBodyInitScale);
    const double kWvDsr = knob("FLEXDUP_K_WV_DSR", kBodyInitScale);
    auto fill = [&](Eigen::MatrixXd& m, int fan_in, double scale) {
        const double bound = scale / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m(i) = rng.uniform(-bound, bound);
        }
    };
    int in = 1;
    for (auto& lw : p.layer) {
        fill(lw.wu_intf, in, kWuIntf);
        fill(lw.wv_intf, in, kWvIntf);
        fill(lw.we_intf, 1, kEdgeInitScale);
        fill(lw.wu_dsr, 1 + p.hidden, kWuDsr);
        fill(lw.wv_dsr, 1 + p.hidden, kWvDsr);
        in = 1 + p.hidden;
    }
    auto fill_mlp = [&](Mlp& m, int in_dim, double hidden_scale, double out_scale) {
        fill(m.w1, in_dim, hidden_scale);
        fill(m.b1, in_dim, hidden_scale);
        fill(m.w2, p.hidden, hidden_scale);
        fill(m.b2, p.hidden, hidden_scale);
        fill(m.w3, p.hidden, out_scale);
        fill(m.b3, p.hidden, out_scale);
    };
    fill_mlp(p.power_head, 1 + p.hidden, kPowerHiddenInitScale, kPowerOutInitScale);
    fill_mlp(p.direction_head, 2 * (1 + p.hidden), kDirectionHiddenInitScale, kDirectionOutInitScale);
    return p;
}

TapeForward run_forward(ad::Tape& tape, const FlexGraph& graph, const ModelParams& params) {
    check_params(params);
    const int n = graph.n_vertices;
    if (n < 2 || n % 2 != 0 || static_cast<int>(graph.vertex_feature.size()) != n) {
        throw DimensionMismatch("run_forward: graph must have an even number (>= 2) of featured vertices");
    }
    const int H = params.hidden;
    const int L = params.layers;

    TapeForward out;
    for_each_weight(params, [&](const std::string&, const Eigen::MatrixXd& m) {
        out.weight_leaves.push_back(tape.leaf(m));
    });
    // Leaf index map: layer l occupies [5l, 5l+5), heads follow at 5L.
    const auto leaf = [&](int i) { return out.weight_leaves[static_cast<std::size_t>(i)]; };

    std::vector<ad::Var> x1(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        x1[static_cast<std::size_t>(v)] = tape.scalar_leaf(graph.vertex_feature[static_cast<std::size_t>(v)]);
    }

    std::vector<ad::Var> x = x1;
    std::vector<ad::Var> au(static_cast<std::size_t>(n)), av(static_cast<std::size_t>(n));
    std::vector<ad::Var> alpha(static_cast<std::size_t>(n)), c(static_cast<std::size_t>(n));
    std::vector<ad::Var> msgs;
    std::vector<ad::Var> pair_buf(2);

    for (int l = 0; l < L; ++l) {
        const ad::Var wu = leaf(5 * l);
        const ad::Var wv = leaf(5 * l + 1);
        const ad::Var we = leaf(5 * l + 2);
        const ad::Var wud = leaf(5 * l + 3);
        const ad::Var wvd = leaf(5 * l + 4);

        // Per-vertex projections are shared across every incident edge.
        for (int v = 0; v < n; ++v) {
            au[static_cast<std::size_t>(v)] = tape.matmul(wu, x[static_cast<std::size_t>(v)]);
            av[static_cast<std::size_t>(v)] = tape.matmul(wv, x[static_cast<std::size_t>(v)]);
        }
        for (int v = 0; v < n; ++v) {
            msgs.clear();
            const int begin = graph.intf_offsets[static_cast<std::size_t>(v)];
            const int end = graph.intf_offsets[static_cast<std::size_t>(v) + 1];
            for (int e = begin; e < end; ++e) {
                const IntfEdge& edge = graph.intf_edges[static_cast<std::size_t>(e)];
                const ad::Var pre = tape.add(tape.add(au[static_cast<std::size_t>(edge.src)],
                                                      av[static_cast<std::size_t>(v)]),
                                             tape.scale(we, edge.feature));
                msgs.push_back(tape.relu(pre));
            }
            if (msgs.empty()) {
                // No interferers (single-pair network): pooled message is zero.
                alpha[static_cast<std::size_t>(v)] = tape.leaf(H, 1);
            } else if (params.pooling == Pooling::sum) {
                alpha[static_cast<std::size_t>(v)] = tape.sum_pool(msgs);
            } else {
                alpha[static_cast<std::size_t>(v)] = tape.max_pool(msgs);
            }
        }
        for (int v = 0; v < n; ++v) {
            pair_buf[0] = x1[static_cast<std::size_t>(v)];
            pair_buf[1] = alpha[static_cast<std::size_t>(v)];
            c[static_cast<std::size_t>(v)] = tape.concat(pair_buf);
        }
        for (int v = 0; v < n; ++v) {
            // The desired neighborhood is the singleton {partner(v)}, so the
            // pooled aggregate equals the lone message for sum and max alike.
            const ad::Var msg = tape.relu(tape.add(tape.matmul(wud, c[static_cast<std::size_t>(v ^ 1)]),
                                                   tape.matmul(wvd, c[static_cast<std::size_t>(v)])));
            pair_buf[0] = x1[static_cast<std::size_t>(v)];
            pair_buf[1] = msg;
            x[static_cast<std::size_t>(v)] = tape.concat(pair_buf);
        }
    }

    auto mlp_apply = [&](int base, ad::Var input) {
        const ad::Var h1 = tape.relu(tape.add(tape.matmul(leaf(base), input), leaf(base + 1)));
        const ad::Var h2 = tape.relu(tape.add(tape.matmul(leaf(base + 2), h1), leaf(base + 3)));
        return tape.add(tape.matmul(leaf(base + 4), h2), leaf(base + 5));
    };

    out.q.resize(static_cast<std::size_t>(n));
    out.d.resize(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        out.q[static_cast<std::size_t>(v)] =
            tape.sigmoid(tape.scale(mlp_apply(5 * L, x[static_cast<std::size_t>(v)]), 1.0 / params.t_p));
    }
    const ad::Var one = tape.scalar_leaf(1.0);
    for (int k = 0; k < n / 2; ++k) {
        pair_buf[0] = x[static_cast<std::size_t>(2 * k)];
        pair_buf[1] = x[static_cast<std::size_t>(2 * k + 1)];
        const ad::Var z = mlp_apply(5 * L + 6, tape.concat(pair_buf));
        const ad::Var d_lo = tape.sigmoid(tape.scale(z, 1.0 / params.t_d));
        out.d[static_cast<std::size_t>(2 * k)] = d_lo;
        out.d[static_cast<std::size_t>(2 * k + 1)] = tape.sub(one, d_lo);
    }
    return out;
}

ad::Var attach_loss(ad::Tape& tape, const GainMatrix& G, const TapeForward& fwd) {
    const int n = G.n_nodes;
    if (static_cast<int>(fwd.q.size()) != n || static_cast<int>(fwd.d.size()) != n) {
        throw DimensionMismatch("attach_loss: forward outputs sized for a different network");
    }
    // Work in the scaled domain g * p_max / noise with q = p / p_max, which
    // turns the SINR denominator into 1 + sum(...) and keeps every log2_1p
    // argument non-negative -- no catastrophic cancellation near the noise
    // floor.
    const double s = G.p_max / G.noise;

    std::vector<ad::Var> pd(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        pd[static_cast<std::size_t>(v)] =
            tape.mul(fwd.q[static_cast<std::size_t>(v)], fwd.d[static_cast<std::size_t>(v)]);
    }
    const ad::Var pd_vec = tape.concat(pd);

    std::vector<ad::Var> rates(static_cast<std::size_t>(n));
    Eigen::MatrixXd row(1, n);
    for (int v = 0; v < n; ++v) {
        const int m = v ^ 1;
        row.setZero();
        for (int k = 0; k < n; ++k) {
            if (k != v && k != m) {
                row(0, k) = G.g(v, k) * s;
            }
        }
        const ad::Var interference = tape.matmul(tape.leaf(row), pd_vec);
        const ad::Var signal = tape.scale(pd[static_cast<std::size_t>(m)], G.g(v, m) * s);
        rates[static_cast<std::size_t>(v)] =
            tape.sub(tape.log2_1p(tape.add(interference, signal)), tape.log2_1p(interference));
    }
    return tape.scale(tape.sum_pool(rates), -1.0);
}

namespace {

/// Tape-free forward pass with all vertices batched as matrix columns; same
/// math as run_forward but an order of magnitude faster, which is what makes
/// inference cheaper than the search heuristics.  Aggregation adds edge
/// messages in the same (ascending source) order as the tape path.
struct FastOutputs {
    Eigen::VectorXd q; // per node
    Eigen::VectorXd d; // per node
};

FastOutputs fast_forward(const FlexGraph& graph, const ModelParams& params) {
    check_params(params);
    const int n = graph.n_vertices;
    if (n < 2 || n % 2 != 0 || static_cast<int>(graph.vertex_feature.size()) != n) {
        throw DimensionMismatch("forward: graph must have an even number (>= 2) of featured vertices");
    }
    const int H = params.hidden;

    Eigen::RowVectorXd x1(n);
    for (int v = 0; v < n; ++v) {
        x1(v) = graph.vertex_feature[static_cast<std::size_t>(v)];
    }

    Eigen::MatrixXd x = x1; // in_l x n, starts 1 x n
    Eigen::MatrixXd au(H, n), av(H, n), alpha(H, n), c(1 + H, n), cp(1 + H, n), t(H, n);
    Eigen::VectorXd msg(H);
    for (const LayerWeights& lw : params.layer) {
        au.noalias() = lw.wu_intf * x;
        av.noalias() = lw.wv_intf * x;
        alpha.setZero();
        for (int v = 0; v < n; ++v) {
            const int begin = graph.intf_offsets[static_cast<std::size_t>(v)];
            const int end = graph.intf_offsets[static_cast<std::size_t>(v) + 1];
            for (int e = begin; e < end; ++e) {
                const IntfEdge& edge = graph.intf_edges[static_cast<std::size_t>(e)];
                msg = (au.col(edge.src) + av.col(v) + edge.feature * lw.we_intf).cwiseMax(0.0);
                if (params.pooling == Pooling::sum) {
                    alpha.col(v) += msg;
                } else if (e == begin) {
                    alpha.col(v) = msg;
                } else {
                    alpha.col(v) = alpha.col(v).cwiseMax(msg);
                }
            }
        }
        c.row(0) = x1;
        c.bottomRows(H) = alpha;
        for (int v = 0; v < n; ++v) {
            cp.col(v) = c.col(v ^ 1);
        }
        t.noalias() = lw.wu_dsr * cp;
        t.noalias() += lw.wv_dsr * c;
        t = t.cwiseMax(0.0);
        x.resize(1 + H, n);
        x.row(0) = x1;
        x.bottomRows(H) = t;
    }

    auto mlp_batch = [&](const Mlp& m, const Eigen::MatrixXd& input) {
        Eigen::MatrixXd h1 = ((m.w1 * input).colwise() + m.b1.col(0)).cwiseMax(0.0);
        Eigen::MatrixXd h2 = ((m.w2 * h1).colwise() + m.b2.col(0)).cwiseMax(0.0);
        return Eigen::MatrixXd(((m.w3 * h2).colwise() + m.b3.col(0)));
    };

    FastOutputs out;
    const Eigen::MatrixXd zp = mlp_batch(params.power_head, x);
    out.q = (zp.row(0) / params.t_p).unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });

    Eigen::MatrixXd pair_in(2 * (1 + H), n / 2);
    for (int k = 0; k < n / 2; ++k) {
        pair_in.col(k).head(1 + H) = x.col(2 * k);
        pair_in.col(k).tail(1 + H) = x.col(2 * k + 1);
    }
    const Eigen::MatrixXd zd = mlp_batch(params.direction_head, pair_in);
    out.d.resize(n);
    for (int k = 0; k < n / 2; ++k) {
        const double d_lo = 1.0 / (1.0 + std::exp(-zd(0, k) / params.t_d));
        out.d(2 * k) = d_lo;
        out.d(2 * k + 1) = 1.0 - d_lo;
    }
    return out;
}

} // namespace

ForwardOutput forward(const FlexGraph& graph, const ModelParams& params) {
    const FastOutputs fast = fast_forward(graph, params);
    ForwardOutput out;
    out.p_relaxed.resize(static_cast<std::size_t>(fast.q.size()));
    out.d_relaxed.resize(static_cast<std::size_t>(fast.d.size()));
    for (Eigen::Index v = 0; v < fast.q.size(); ++v) {
        out.p_relaxed[static_cast<std::size_t>(v)] = params.norm_p_max * fast.q(v);
        out.d_relaxed[static_cast<std::size_t>(v)] = fast.d(v);
    }
    return out;
}

double loss(const GainMatrix& G, const ForwardOutput& out) {
    return -relaxed_sum_rate(G, out.p_relaxed, out.d_relaxed);
}

std::vector<double> flatten_params(const ModelParams& params) {
    std::vector<double> flat;
    flat.reserve(param_count(params));
    for_each_weight(params, [&](const std::string&, const Eigen::MatrixXd& m) {
        flat.insert(flat.end(), m.data(), m.data() + m.size());
    });
    return flat;
}

void unflatten_params(std::span<const double> flat, ModelParams& params) {
    if (flat.size() != param_count(params)) {
        throw DimensionMismatch("unflatten_params: expected " + std::to_string(param_count(params)) +
                                " values, got " + std::to_string(flat.size()));
    }
    std::size_t at = 0;
    for_each_weight(params, [&](const std::string&, Eigen::MatrixXd& m) {
        std::memcpy(m.data(), flat.data() + at, static_cast<std::size_t>(m.size()) * sizeof(double));
        at += static_cast<std::size_t>(m.size());
    });
}

std::size_t param_count(const ModelParams& params) {
    std::size_t count = 0;
    for_each_weight(params, [&](const std::string&, const Eigen::MatrixXd& m) {
        count += static_cast<std::size_t>(m.size());
    });
    return count;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
    check_config(config);
    if (dataset.samples.empty()) {
        throw EmptyDataset("train: dataset has no samples");
    }

    ModelParams work = init_params(config, config.seed);
    work.norm_p_max = dataset.header.p_max;
    work.norm_noise = dataset.header.noise;

    std::vector<double> flat = flatten_params(work);
    const std::size_t n_params = flat.size();
    ad::AdamState adam;
    adam.config.lr = config.learning_rate;

    const std::size_t n_samples = dataset.samples.size();
    std::vector<std::size_t> order(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        order[i] = i;
    }

    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    const bool threaded = config.n_threads > 1;
    std::vector<ad::Tape> tapes(threaded ? std::min(batch, n_samples) : 1);
    // Threaded batches stage per-sample gradients in slots and reduce them in
    // sample order, so results do not depend on the thread count.
    std::vector<std::vector<double>> slot_grads;
    std::vector<double> slot_loss;
    if (threaded) {
        slot_grads.assign(std::min(batch, n_samples), std::vector<double>(n_params));
        slot_loss.assign(std::min(batch, n_samples), 0.0);
    }
    std::vector<double> grad_accum(n_params);

    auto sample_pass = [&](ad::Tape& tape, const GainMatrix& G, std::vector<double>* grads_out,
                           double* accum_direct) {
        tape.reset();
        const FlexGraph graph = build_graph(G);
        const TapeForward fwd = run_forward(tape, graph, work);
        const ad::Var loss_var = attach_loss(tape, G, fwd);
        tape.backward(loss_var);
        std::size_t at = 0;
        for (const ad::Var leaf : fwd.weight_leaves) {
            const auto g = tape.grad(leaf);
            const std::size_t len = static_cast<std::size_t>(g.size());
            if (grads_out != nullptr) {
                std::memcpy(grads_out->data() + at, g.data(), len * sizeof(double));
            } else {
                for (std::size_t j = 0; j < len; ++j) {
                    accum_direct[at + j] += g.data()[j];
                }
            }
            at += len;
        }
        return tape.scalar(loss_var);
    };

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(config.epochs));
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_flat = flat;
    int best_epoch = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1));
        for (std::size_t i = n_samples; i > 1; --i) {
            const std::uint64_t j = shuffle_rng.uniform_int(i);
            std::swap(order[i - 1], order[static_cast<std::size_t>(j)]);
        }

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n_samples; start += batch) {
            const std::size_t bsz = std::min(batch, n_samples - start);
            std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
            if (threaded) {
                parallel_for(bsz, config.n_threads, [&](std::size_t i) {
                    slot_loss[i] = sample_pass(tapes[i], dataset.samples[order[start + i]],
                                               &slot_grads[i], nullptr);
                });
                for (std::size_t i = 0; i < bsz; ++i) {
                    epoch_loss += slot_loss[i];
                    for (std::size_t j = 0; j < n_params; ++j) {
                        grad_accum[j] += slot_grads[i][j];
                    }
                }
            } else {
                for (std::size_t i = 0; i < bsz; ++i) {
                    epoch_loss += sample_pass(tapes[0], dataset.samples[order[start + i]], nullptr,
                                              grad_accum.data());
                }
            }
            const double inv = 1.0 / static_cast<double>(bsz);
            for (double& g : grad_accum) {
                g *= inv;
            }
            ad::adam_step(flat, grad_accum, adam);
            unflatten_params(flat, work);
        }

        const double mean_loss = epoch_loss / static_cast<double>(n_samples);
        history.push_back(mean_loss);
        if (mean_loss < best_loss) {
            best_loss = mean_loss;
            best_flat = flat;
            best_epoch = epoch;
        }
    }

    TrainResult result;
    unflatten_params(best_flat, work);
    result.params = std::move(work);
    result.history = std::move(history);
    result.best_epoch = best_epoch;
    return result;
}

SolverResult infer(const GainMatrix& G, const ModelParams& params) {
    return infer(G, build_graph(G), params);
}

SolverResult infer(const GainMatrix& G, const FlexGraph& graph, const ModelParams& params) {
    const auto start = std::chrono::steady_clock::now();
    const FastOutputs fwd = fast_forward(graph, params);

    const int n = G.n_nodes;
    SolverResult res;
    res.alloc.mode = DirectionMode::binary;
    res.alloc.power.assign(static_cast<std::size_t>(n), 0.0);
    res.alloc.direction.assign(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k < n / 2; ++k) {
        const int lo = 2 * k;
        // d >= 0.5 sends the lower-index node into transmit mode; the tie at
        // exactly 0.5 therefore also goes to the lower index.
        const int tx = fwd.d(lo) >= 0.5 ? lo : lo + 1;
        res.alloc.direction[static_cast<std::size_t>(tx)] = 1.0;
        res.alloc.power[static_cast<std::size_t>(tx)] = G.p_max * fwd.q(tx);
    }
    res.achieved_rate = sum_rate(G, res.alloc);
    res.iterations = 0;
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

void save_model(const ModelParams& params, const std::string& path) {
    check_params(params);
    json j;
    j["format_version"] = 1;
    j["layers"] = params.layers;
    j["hidden"] = params.hidden;
    j["temperatures"] = {{"t_p", params.t_p}, {"t_d", params.t_d}};
    j["pooling"] = to_string(params.pooling);
    j["normalization"] = {{"p_max", params.norm_p_max}, {"noise", params.norm_noise}};
    json weights = json::object();
    for_each_weight(params, [&](const std::string& name, const Eigen::MatrixXd& m) {
        weights[name] = matrix_to_json(m);
    });
    j["weights"] = std::move(weights);

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InvalidArgument("save_model: cannot open '" + path + "' for writing");
    }
    out << j.dump(1, '\t') << '\n';
    if (!out) {
        throw InvalidArgument("save_model: write to '" + path + "' failed");
    }
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InvalidArgument("load_model: cannot open '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("load_model: not valid JSON: ") + e.what());
    }

    auto require = [&](const json& obj, const char* key) -> const json& {
        if (!obj.contains(key)) {
            throw SchemaMismatch(std::string("load_model: missing field '") + key + "'");
        }
        return obj.at(key);
    };

    const json& version = require(j, "format_version");
    if (!version.is_number_integer() || version.get<int>() != 1) {
        throw UnsupportedVersion("load_model: format_version " + version.dump() + " not supported");
    }

    ModelParams p;
    try {
        p.layers = require(j, "layers").get<int>();
        p.hidden = require(j, "hidden").get<int>();
        const json& temps = require(j, "temperatures");
        p.t_p = require(temps, "t_p").get<double>();
        p.t_d = require(temps, "t_d").get<double>();
        p.pooling = pooling_from_string(require(j, "pooling").get<std::string>());
        const json& norm = require(j, "normalization");
        p.norm_p_max = require(norm, "p_max").get<double>();
        p.norm_noise = require(norm, "noise").get<double>();
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("load_model: malformed field: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw SchemaMismatch(e.what());
    }
    if (p.layers < 1 || p.hidden < 1) {
        throw SchemaMismatch("load_model: layers and hidden must be >= 1");
    }

    resize_params(p);
    const json& weights = require(j, "weights");
    for_each_weight(p, [&](const std::string& name, Eigen::MatrixXd& m) {
        if (!weights.contains(name)) {
            throw SchemaMismatch("load_model: missing weight '" + name + "'");
        }
        matrix_from_json(weights.at(name), m, name);
    });
    try {
        check_params(p);
    } catch (const DimensionMismatch& e) {
        throw SchemaMismatch(e.what());
    }
    return p;
}

} // namespace flexdup
