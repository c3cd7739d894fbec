#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "cgps/gradcheck.hpp"
#include "cgps/nn.hpp"

using namespace cgps;

namespace {

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// zero-weight cell with a given forget-gate bias
ParamSet zero_cell(int in, int k, double forget_bias) {
    ParamSet ps;
    ps.add("wx", {in, 4 * k});
    ps.add("wh", {k, 4 * k});
    const int b = ps.add("b", {1, 4 * k});
    for (int j = 0; j < k; ++j) ps[b].value[k + j] = forget_bias;
    return ps;
}

LstmTensors stage_cell(Tape& tape, const ParamSet& ps) {
    std::vector<Tensor> staged = stage(tape, ps);
    return {staged[0], staged[1], staged[2]};
}

}  // namespace

TEST_CASE("lstm step with everything zero stays zero") {
    ParamSet ps = zero_cell(2, 3, 0.0);
    Tape tape;
    LstmTensors cell = stage_cell(tape, ps);
    auto [h, c] = lstm_step(cell, tape.zeros({1, 2}), tape.zeros({1, 3}), tape.zeros({1, 3}));
    CHECK(h.value() == std::vector<double>(3, 0.0));
    CHECK(c.value() == std::vector<double>(3, 0.0));
}

TEST_CASE("lstm step closed form with unit cell state and forget bias 1") {
    ParamSet ps = zero_cell(2, 1, 1.0);
    Tape tape;
    LstmTensors cell = stage_cell(tape, ps);
    auto [h, c] = lstm_step(cell, tape.zeros({1, 2}), tape.zeros({1, 1}), tape.full({1, 1}, 1.0));
    const double expect_c = sigmoid_scalar(1.0);  // ~0.7311
    CHECK(c.value()[0] == doctest::Approx(expect_c).epsilon(1e-12));
    CHECK(h.value()[0] == doctest::Approx(0.5 * std::tanh(expect_c)).epsilon(1e-12));
    CHECK(h.value()[0] == doctest::Approx(0.3117).epsilon(1e-3));
}

TEST_CASE("lstm step gradient vs finite differences") {
    Rng rng(11);
    const int in = 3, k = 4;
    std::vector<Shape> shapes{{in, 4 * k}, {k, 4 * k}, {1, 4 * k}, {2, in}, {2, k}, {2, k}};
    std::vector<std::vector<double>> point;
    for (const Shape& s : shapes) {
        std::vector<double> v(s.size());
        for (double& x : v) x = rng.uniform(-0.7, 0.7);
        point.push_back(std::move(v));
    }
    auto f = [](Tape& t, const std::vector<Tensor>& xs) {
        LstmTensors cell{xs[0], xs[1], xs[2]};
        auto [h, c] = lstm_step(cell, xs[3], xs[4], xs[5]);
        return add(sum_squares(h), sum_squares(c));
    };
    CHECK(grad_check(f, shapes, point, 1e-5) < 1e-4);
}

TEST_CASE("bilstm encoder") {
    Rng rng(3);
    const int in = 2, m = 3;
    ParamSet ps;
    const char* names[] = {"f.wx", "f.wh", "f.b", "b.wx", "b.wh", "b.b"};
    Shape shapes[] = {{in, 4 * m}, {m, 4 * m}, {1, 4 * m}, {in, 4 * m}, {m, 4 * m}, {1, 4 * m}};
    for (int i = 0; i < 6; ++i) {
        int id = ps.add(names[i], shapes[i]);
        for (double& v : ps[id].value) v = rng.uniform(-0.5, 0.5);
    }
    auto stage_both = [&](Tape& tape) {
        std::vector<Tensor> s = stage(tape, ps);
        return std::pair<LstmTensors, LstmTensors>{{s[0], s[1], s[2]}, {s[3], s[4], s[5]}};
    };
    auto rand_input = [&](Tape& tape, int n) {
        std::vector<Tensor> xs;
        for (int i = 0; i < n; ++i) {
            std::vector<double> v(in);
            for (double& x : v) x = rng.uniform(-1.0, 1.0);
            xs.push_back(tape.leaf({1, in}, v));
        }
        return xs;
    };

    SUBCASE("single position output equals the decoder init state") {
        Tape tape;
        auto [fwd, bwd] = stage_both(tape);
        EncoderOut out = bilstm_encode(fwd, bwd, rand_input(tape, 1), {1});
        REQUIRE(out.outputs.size() == 1);
        CHECK(out.outputs[0].value() == out.h0.value());
    }

    SUBCASE("output shapes are (n, 2m)") {
        Tape tape;
        auto [fwd, bwd] = stage_both(tape);
        EncoderOut out = bilstm_encode(fwd, bwd, rand_input(tape, 5), {5});
        CHECK(out.outputs.size() == 5);
        for (const Tensor& e : out.outputs) CHECK(e.shape() == Shape{1, 2 * m});
        CHECK(out.h0.shape() == Shape{1, 2 * m});
        CHECK(out.c0.shape() == Shape{1, 2 * m});
    }

    SUBCASE("reversing the input reverses outputs with halves swapped") {
        // symmetry is exact when both directions share one cell
        ParamSet sym;
        for (int i = 0; i < 3; ++i) {
            int id = sym.add(names[i], shapes[i]);
            sym[id].value = ps[i].value;
        }
        Tape tape2;
        std::vector<Tensor> s2 = stage(tape2, sym);
        LstmTensors cell{s2[0], s2[1], s2[2]};
        std::vector<Tensor> xs2;
        for (int i = 0; i < 4; ++i) {
            std::vector<double> v(in);
            for (double& x : v) x = rng.uniform(-1.0, 1.0);
            xs2.push_back(tape2.leaf({1, in}, v));
        }
        std::vector<Tensor> rev2(xs2.rbegin(), xs2.rend());
        EncoderOut fwd_out = bilstm_encode(cell, cell, xs2, {4});
        EncoderOut rev_out = bilstm_encode(cell, cell, rev2, {4});
        for (int i = 0; i < 4; ++i) {
            const auto& e = fwd_out.outputs[i].value();
            const auto& er = rev_out.outputs[4 - 1 - i].value();
            for (int d = 0; d < m; ++d) {
                CHECK(e[d] == doctest::Approx(er[m + d]).epsilon(1e-12));
                CHECK(e[m + d] == doctest::Approx(er[d]).epsilon(1e-12));
            }
        }
    }

    SUBCASE("rejects an empty sequence") {
        Tape tape;
        auto [fwd, bwd] = stage_both(tape);
        CHECK_THROWS_AS(bilstm_encode(fwd, bwd, {}, {}), ShapeError);
    }

    SUBCASE("gradients pass the finite-difference check") {
        std::vector<Shape> gshapes;
        std::vector<std::vector<double>> point;
        for (int i = 0; i < 6; ++i) {
            gshapes.push_back(shapes[i]);
            point.push_back(ps[i].value);
        }
        gshapes.push_back({2, in});
        gshapes.push_back({2, in});
        for (int i = 0; i < 2; ++i) {
            std::vector<double> v(2 * in);
            for (double& x : v) x = rng.uniform(-1.0, 1.0);
            point.push_back(std::move(v));
        }
        auto f = [](Tape& t, const std::vector<Tensor>& xs) {
            LstmTensors fwd{xs[0], xs[1], xs[2]};
            LstmTensors bwd{xs[3], xs[4], xs[5]};
            EncoderOut out = bilstm_encode(fwd, bwd, {xs[6], xs[7]}, {2, 1});
            Tensor s = add(sum_squares(out.h0), sum_squares(out.c0));
            for (const Tensor& e : out.outputs) s = add(s, sum_squares(e));
            return s;
        };
        CHECK(grad_check(f, gshapes, point, 1e-5) < 1e-4);
    }
}

TEST_CASE("attention scores") {
    Tape tape;
    SUBCASE("orthogonal query gives zero scores, uniform attention") {
        Tensor h = tape.leaf({1, 2}, {1, 0});
        std::vector<Tensor> items{tape.leaf({1, 2}, {0, 1}), tape.leaf({1, 2}, {0, 2})};
        Tensor b = attention_scores(h, items);
        CHECK(b.value() == std::vector<double>{0, 0});
        Tensor a = softmax_rows(b);
        CHECK(a.value()[0] == doctest::Approx(0.5));
    }
    SUBCASE("query equal to an orthonormal row selects it") {
        Tensor h = tape.leaf({1, 2}, {0, 1});
        std::vector<Tensor> items{tape.leaf({1, 2}, {1, 0}), tape.leaf({1, 2}, {0, 1})};
        Tensor b = attention_scores(h, items);
        CHECK(b.value()[1] > b.value()[0]);
        CHECK(b.value()[1] == doctest::Approx(1.0));
    }
    SUBCASE("random case matches an explicit loop") {
        Rng rng(17);
        const int batch = 3, dim = 5, n = 3;
        std::vector<double> hv(batch * dim);
        for (double& v : hv) v = rng.uniform(-1.0, 1.0);
        Tensor h = tape.leaf({batch, dim}, hv);
        std::vector<Tensor> items;
        std::vector<std::vector<double>> ev;
        for (int i = 0; i < n; ++i) {
            std::vector<double> v(batch * dim);
            for (double& x : v) x = rng.uniform(-1.0, 1.0);
            ev.push_back(v);
            items.push_back(tape.leaf({batch, dim}, v));
        }
        Tensor b = attention_scores(h, items);
        for (int r = 0; r < batch; ++r) {
            for (int i = 0; i < n; ++i) {
                double expect = 0.0;
                for (int d = 0; d < dim; ++d) expect += hv[r * dim + d] * ev[i][r * dim + d];
                CHECK(b.value()[r * n + i] == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("adam leaves parameters alone when gradients are zero") {
    ParamSet ps;
    int w = ps.add("w", {2, 2});
    ps[w].value = {1, 2, 3, 4};
    Adam adam(ps, {});
    adam.step(ps);
    CHECK(ps[w].value == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("gradient clipping") {
    ParamSet ps;
    int w = ps.add("w", {1, 2});
    ps[w].grad = {1.2, 1.6};  // norm 2
    const double pre = Adam::clip_global_norm(ps, 1.0);
    CHECK(pre == doctest::Approx(2.0));
    CHECK(ps[w].grad[0] == doctest::Approx(0.6));
    CHECK(ps[w].grad[1] == doctest::Approx(0.8));

    SUBCASE("post-clip norm bounded, direction preserved") {
        Rng rng(8);
        ParamSet big;
        int a = big.add("a", {3, 3});
        for (double& g : big[a].grad) g = rng.uniform(-5.0, 5.0);
        std::vector<double> before = big[a].grad;
        Adam::clip_global_norm(big, 1.0);
        double norm = 0.0;
        for (double g : big[a].grad) norm += g * g;
        CHECK(std::sqrt(norm) <= 1.0 + 1e-9);
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK(big[a].grad[i] * before[i] >= 0.0);
    }
    SUBCASE("small gradients pass through untouched") {
        ParamSet small;
        int a = small.add("a", {1, 2});
        small[a].grad = {0.1, 0.2};
        Adam::clip_global_norm(small, 1.0);
        CHECK(small[a].grad == std::vector<double>{0.1, 0.2});
    }
}

TEST_CASE("learning rate schedule is a non-increasing staircase") {
    AdamConfig cfg;
    CHECK(Adam::schedule(cfg, 250) == doctest::Approx(0.009216));
    CHECK(Adam::schedule(cfg, 1) == doctest::Approx(0.01));
    CHECK(Adam::schedule(cfg, 99) == doctest::Approx(0.01));
    CHECK(Adam::schedule(cfg, 100) == doctest::Approx(0.0096));
    double prev = Adam::schedule(cfg, 1);
    for (int t = 2; t <= 1000; ++t) {
        const double lr = Adam::schedule(cfg, t);
        CHECK(lr <= prev + 1e-15);
        if (t % 100 != 0) CHECK(lr == doctest::Approx(prev).epsilon(1e-12));
        prev = lr;
    }
}

TEST_CASE("adam rejects non-finite gradients with the parameter named") {
    ParamSet ps;
    int w = ps.add("head.w", {1, 1});
    ps[w].grad = {std::numeric_limits<double>::quiet_NaN()};
    Adam adam(ps, {});
    CHECK_THROWS_WITH_AS(adam.step(ps), doctest::Contains("head.w"), NumericError);
}

TEST_CASE("adam moves parameters against the gradient") {
    ParamSet ps;
    int w = ps.add("w", {1, 1});
    ps[w].value = {1.0};
    Adam adam(ps, {});
    ps[w].grad = {0.5};
    adam.step(ps);
    CHECK(ps[w].value[0] < 1.0);
    CHECK(adam.steps_done() == 1);
}

TEST_CASE("initialization") {
    SUBCASE("glorot bound for a 4x4 matrix") {
        Rng rng(1);
        Param p{"w", {4, 4}, std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)};
        glorot_init(p, rng);
        const double bound = std::sqrt(6.0 / 8.0);
        for (double v : p.value) {
            CHECK(v <= bound);
            CHECK(v >= -bound);
        }
    }
    SUBCASE("same seed gives identical draws, different seeds differ") {
        Param a{"w", {4, 4}, std::vector<double>(16, 0.0), {}};
        Param b = a;
        Param c = a;
        Rng r1(7), r2(7), r3(8);
        glorot_init(a, r1);
        glorot_init(b, r2);
        glorot_init(c, r3);
        CHECK(a.value == b.value);
        CHECK(a.value != c.value);
    }
    SUBCASE("lstm bias init sets only the forget block to one") {
        Param p{"b", {1, 8}, std::vector<double>(8, 9.0), {}};
        lstm_bias_init(p);
        CHECK(p.value == std::vector<double>{0, 0, 1, 1, 0, 0, 0, 0});
    }
}
