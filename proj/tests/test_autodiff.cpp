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

#include <array>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "flexdup/autodiff.hpp"
#include "flexdup/rng.hpp"

using namespace flexdup;
using ad::Tape;
using ad::Var;

TEST_CASE("elementary values and derivatives")
{
    Tape tape;

    SUBCASE("sigmoid at zero") {
        const Var x = tape.scalar_leaf(0.0);
        const Var y = tape.sigmoid(x);
        CHECK(tape.scalar(y) == doctest::Approx(0.5).epsilon(1e-15));
        tape.backward(y);
        CHECK(tape.grad(x)(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    }
    SUBCASE("x squared via hadamard product") {
        const Var x = tape.scalar_leaf(3.0);
        const Var y = tape.mul(x, x);
        CHECK(tape.scalar(y) == doctest::Approx(9.0).epsilon(1e-15));
        tape.backward(y);
        CHECK(tape.grad(x)(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
    }
    SUBCASE("product routes gradients to both factors") {
        const Var x = tape.scalar_leaf(2.0);
        const Var y = tape.scalar_leaf(5.0);
        const Var z = tape.mul(x, y);
        tape.backward(z);
        CHECK(tape.grad(x)(0, 0) == doctest::Approx(5.0).epsilon(1e-15));
        CHECK(tape.grad(y)(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("relu subgradient at the kink is zero") {
        const Var x = tape.scalar_leaf(0.0);
        const Var y = tape.relu(x);
        tape.backward(y);
        CHECK(tape.grad(x)(0, 0) == 0.0);
    }
    SUBCASE("log2_1p value and slope") {
        const Var x = tape.scalar_leaf(3.0);
        const Var y = tape.log2_1p(x);
        CHECK(tape.scalar(y) == doctest::Approx(2.0).epsilon(1e-15));
        tape.backward(y);
        CHECK(tape.grad(x)(0, 0) == doctest::Approx(1.0 / (4.0 * std::log(2.0))).epsilon(1e-14));
    }
    SUBCASE("scale and sub") {
        const Var x = tape.scalar_leaf(4.0);
        const Var y = tape.sub(x, tape.scale(x, 0.25));
        CHECK(tape.scalar(y) == doctest::Approx(3.0).epsilon(1e-15));
        tape.backward(y);
        CHECK(tape.grad(x)(0, 0) == doctest::Approx(0.75).epsilon(1e-15));
    }
}

TEST_CASE("pooling semantics")
{
    Tape tape;

    SUBCASE("sum_pool of a singleton is the identity") {
        const Var x = tape.leaf(Eigen::MatrixXd::Constant(2, 1, 1.5));
        const std::array<Var, 1> set = {x};
        const Var y = tape.sum_pool(set);
        CHECK(tape.value(y)(0, 0) == 1.5);
        CHECK(tape.value(y)(1, 0) == 1.5);
    }
    SUBCASE("sum_pool adds elementwise and fans the gradient out") {
        const Var a = tape.leaf(Eigen::MatrixXd::Constant(2, 1, 1.0));
        const Var b = tape.leaf(Eigen::MatrixXd::Constant(2, 1, 2.0));
        const Var c = tape.leaf(Eigen::MatrixXd::Constant(2, 1, 3.0));
        const std::array<Var, 3> set = {a, b, c};
        const Var pooled = tape.sum_pool(set);
        const Var ones = tape.leaf(Eigen::MatrixXd::Ones(1, 2));
        const Var loss = tape.matmul(ones, pooled);
        CHECK(tape.scalar(loss) == doctest::Approx(12.0).epsilon(1e-15));
        tape.backward(loss);
        CHECK(tape.grad(a)(0, 0) == 1.0);
        CHECK(tape.grad(b)(1, 0) == 1.0);
        CHECK(tape.grad(c)(0, 0) == 1.0);
    }
    SUBCASE("max_pool picks the winner per element") {
        Eigen::MatrixXd va(2, 1), vb(2, 1);
        va << 1.0, 9.0;
        vb << 5.0, 2.0;
        const Var a = tape.leaf(va);
        const Var b = tape.leaf(vb);
        const std::array<Var, 2> set = {a, b};
        const Var pooled = tape.max_pool(set);
        CHECK(tape.value(pooled)(0, 0) == 5.0);
        CHECK(tape.value(pooled)(1, 0) == 9.0);
        const Var ones = tape.leaf(Eigen::MatrixXd::Ones(1, 2));
        tape.backward(tape.matmul(ones, pooled));
        CHECK(tape.grad(a)(0, 0) == 0.0);
        CHECK(tape.grad(a)(1, 0) == 1.0);
        CHECK(tape.grad(b)(0, 0) == 1.0);
        CHECK(tape.grad(b)(1, 0) == 0.0);
    }
    SUBCASE("max_pool ties route to the lowest set index") {
        const Var a = tape.leaf(Eigen::MatrixXd::Constant(1, 1, 7.0));
        const Var b = tape.leaf(Eigen::MatrixXd::Constant(1, 1, 7.0));
        const std::array<Var, 2> set = {a, b};
        const Var pooled = tape.max_pool(set);
        tape.backward(pooled);
        CHECK(tape.grad(a)(0, 0) == 1.0);
        CHECK(tape.grad(b)(0, 0) == 0.0);
    }
}

TEST_CASE("concat stacks column vectors and splits the gradient")
{
    Tape tape;
    Eigen::MatrixXd va(2, 1), vb(1, 1);
    va << 1.0, 2.0;
    vb << 3.0;
    const Var a = tape.leaf(va);
    const Var b = tape.leaf(vb);
    const std::array<Var, 2> parts = {a, b};
    const Var c = tape.concat(parts);
    REQUIRE(tape.rows(c) == 3);
    REQUIRE(tape.cols(c) == 1);
    CHECK(tape.value(c)(0, 0) == 1.0);
    CHECK(tape.value(c)(2, 0) == 3.0);
    Eigen::MatrixXd w(1, 3);
    w << 10.0, 20.0, 30.0;
    tape.backward(tape.matmul(tape.leaf(w), c));
    CHECK(tape.grad(a)(0, 0) == 10.0);
    CHECK(tape.grad(a)(1, 0) == 20.0);
    CHECK(tape.grad(b)(0, 0) == 30.0);
}

TEST_CASE("matmul gradients match finite differences")
{
    // loss = ones^T (A B) ones reduces the product to a scalar that weights
    // every entry, so the analytic gradients are dense.
    Rng rng(314);
    Eigen::MatrixXd A(3, 4), B(4, 2);
    for (int i = 0; i < A.size(); ++i) {
        A(i) = rng.uniform(-2.0, 2.0);
    }
    for (int i = 0; i < B.size(); ++i) {
        B(i) = rng.uniform(-2.0, 2.0);
    }
    const auto loss_value = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        return (Eigen::MatrixXd::Ones(1, 3) * (a * b) * Eigen::MatrixXd::Ones(2, 1))(0, 0);
    };

    Tape tape;
    const Var va = tape.leaf(A);
    const Var vb = tape.leaf(B);
    const Var prod = tape.matmul(va, vb);
    const Var left = tape.leaf(Eigen::MatrixXd::Ones(1, 3));
    const Var right = tape.leaf(Eigen::MatrixXd::Ones(2, 1));
    tape.backward(tape.matmul(tape.matmul(left, prod), right));

    const double h = 1e-6;
    for (int i = 0; i < A.size(); ++i) {
        Eigen::MatrixXd ap = A, am = A;
        ap(i) += h;
        am(i) -= h;
        const double fd = (loss_value(ap, B) - loss_value(am, B)) / (2.0 * h);
        CHECK(tape.grad(va)(i) == doctest::Approx(fd).epsilon(1e-6));
    }
    for (int i = 0; i < B.size(); ++i) {
        Eigen::MatrixXd bp = B, bm = B;
        bp(i) += h;
        bm(i) -= h;
        const double fd = (loss_value(A, bp) - loss_value(A, bm)) / (2.0 * h);
        CHECK(tape.grad(vb)(i) == doctest::Approx(fd).epsilon(1e-6));
    }
}

namespace {

/// Composite scalar function exercising every op; used for gradient checks.
Var composite_loss(Tape& tape, const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                   Var* leaf_x = nullptr, Var* leaf_w = nullptr)
{
    const Var vx = tape.leaf(x);
    const Var vw = tape.leaf(w);
    if (leaf_x != nullptr) {
        *leaf_x = vx;
    }
    if (leaf_w != nullptr) {
        *leaf_w = vw;
    }
    const Var y = tape.matmul(vw, vx);             // 2x1
    const Var s = tape.sigmoid(y);                 // smooth, bounded
    const Var t = tape.log2_1p(tape.relu(y));      // kinked but safe (>= 0)
    const Var u = tape.mul(s, t);
    const std::array<Var, 2> max_set = {s, t};
    const std::array<Var, 3> sum_set = {s, t, u};
    const Var m = tape.max_pool(max_set);
    const Var p = tape.sum_pool(sum_set);
    const std::array<Var, 2> parts = {m, p};
    const Var c = tape.concat(parts);              // 4x1
    const Var d = tape.sub(c, tape.scale(c, 0.125));
    const Var ones = tape.leaf(Eigen::MatrixXd::Ones(1, 4));
    return tape.matmul(ones, tape.add(d, d));
}

} // namespace

TEST_CASE("composite expression passes a finite-difference gradient check")
{
    Rng rng(2718);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd x(3, 1), w(2, 3);
        for (int i = 0; i < x.size(); ++i) {
            x(i) = rng.uniform(-2.0, 2.0);
        }
        for (int i = 0; i < w.size(); ++i) {
            w(i) = rng.uniform(-2.0, 2.0);
        }

        Tape tape;
        Var vx, vw;
        tape.backward(composite_loss(tape, x, w, &vx, &vw));

        const double h = 1e-6;
        const auto check_entry = [&](bool is_x, int i) {
            Eigen::MatrixXd xp = x, xm = x, wp = w, wm = w;
            if (is_x) {
                xp(i) += h;
                xm(i) -= h;
            } else {
                wp(i) += h;
                wm(i) -= h;
            }
            Tape scratch;
            const double fp = scratch.scalar(composite_loss(scratch, xp, wp));
            scratch.reset();
            const double fm = scratch.scalar(composite_loss(scratch, xm, wm));
            const double fd = (fp - fm) / (2.0 * h);
            const double analytic = is_x ? tape.grad(vx)(i) : tape.grad(vw)(i);
            CHECK(analytic == doctest::Approx(fd).epsilon(1e-4).scale(1e-2));
        };
        for (int i = 0; i < x.size(); ++i) {
            check_entry(true, i);
        }
        for (int i = 0; i < w.size(); ++i) {
            check_entry(false, i);
        }
    }
}

TEST_CASE("backward is repeatable and accumulation does not leak")
{
    Tape tape;
    const Var x = tape.scalar_leaf(1.25);
    const Var y = tape.mul(tape.sigmoid(x), tape.log2_1p(tape.relu(x)));
    tape.backward(y);
    const double first = tape.grad(x)(0, 0);
    tape.backward(y);
    CHECK(tape.grad(x)(0, 0) == first);
}

TEST_CASE("shape and loss-rank errors")
{
    Tape tape;
    const Var a = tape.leaf(Eigen::MatrixXd::Zero(2, 2));
    const Var b = tape.leaf(Eigen::MatrixXd::Zero(3, 1));
    CHECK_THROWS_AS((void)tape.add(a, b), ad::ShapeMismatch);
    CHECK_THROWS_AS((void)tape.mul(a, b), ad::ShapeMismatch);
    CHECK_THROWS_AS((void)tape.matmul(b, a), ad::ShapeMismatch);
    CHECK_THROWS_AS(tape.backward(b), ad::NonScalarLoss);
}

TEST_CASE("reset recycles the arena")
{
    Tape tape;
    const Var x = tape.scalar_leaf(2.0);
    tape.backward(tape.mul(x, x));
    tape.reset();
    CHECK(tape.node_count() == 0);
    const Var y = tape.scalar_leaf(3.0);
    const Var z = tape.mul(y, y);
    CHECK(tape.scalar(z) == 9.0);
    tape.backward(z);
    CHECK(tape.grad(y)(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("adam takes a signed first step and skips dead coordinates")
{
    std::vector<double> params = {1.0, -2.0, 0.5};
    const std::vector<double> grads = {0.3, -4.0, 0.0};
    ad::AdamState state;
    ad::adam_step(params, grads, state);
    // With bias correction the first step is lr * g / (|g| + eps') ~ lr * sign(g).
    CHECK(params[0] == doctest::Approx(1.0 - state.config.lr).epsilon(1e-4));
    CHECK(params[1] == doctest::Approx(-2.0 + state.config.lr).epsilon(1e-4));
    CHECK(params[2] == 0.5);
    CHECK(state.step == 1);

    SUBCASE("identical histories give identical trajectories") {
        std::vector<double> p2 = {1.0, -2.0, 0.5};
        ad::AdamState s2;
        ad::adam_step(p2, grads, s2);
        CHECK(p2[0] == params[0]);
        CHECK(p2[1] == params[1]);
        CHECK(p2[2] == params[2]);
    }
}
