#include "cgps/gradcheck.hpp"

#include <cmath>

#include "cgps/model.hpp"

namespace cgps {

namespace {
double eval_at(const TensorFn& f, const std::vector<Shape>& shapes,
               const std::vector<std::vector<double>>& point) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) leaves.push_back(tape.leaf(shapes[i], point[i]));
    return f(tape, leaves).scalar();
}
}  // namespace

double grad_check(const TensorFn& f, const std::vector<Shape>& shapes,
                  const std::vector<std::vector<double>>& point, double h) {
    // analytic pass
    Tape tape;
    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < point.size(); ++i) leaves.push_back(tape.leaf(shapes[i], point[i]));
    Tensor out = f(tape, leaves);
    const double f0 = out.scalar();
    if (!std::isfinite(f0)) throw NumericError("grad_check: function value is not finite");
    tape.backward(out);

    double worst = 0.0;
    std::vector<std::vector<double>> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const std::vector<double>& analytic = leaves[i].grad();
        for (std::size_t j = 0; j < point[i].size(); ++j) {
            const double saved = probe[i][j];
            probe[i][j] = saved + h;
            const double fp = eval_at(f, shapes, probe);
            probe[i][j] = saved - h;
            const double fm = eval_at(f, shapes, probe);
            probe[i][j] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            if (!std::isfinite(numeric)) throw NumericError("grad_check: non-finite finite difference");
            const double err = std::abs(analytic[j] - numeric) / (std::abs(analytic[j]) + 1e-8);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

namespace {

std::vector<std::vector<double>> random_point(const std::vector<Shape>& shapes, std::uint64_t seed,
                                              double bound) {
    Rng rng(seed);
    std::vector<std::vector<double>> point;
    point.reserve(shapes.size());
    for (const Shape& s : shapes) {
        std::vector<double> v(s.size());
        for (double& x : v) x = rng.uniform(-bound, bound);
        point.push_back(std::move(v));
    }
    return point;
}

Tensor sum_all(Tape& tape, const Tensor& t) {
    const Shape s = t.shape();
    Tensor left = tape.full({1, s.rows}, 1.0);
    Tensor right = tape.full({s.cols, 1}, 1.0);
    return matmul(matmul(left, t), right);
}

}  // namespace

std::vector<GradSuiteResult> run_grad_suites(bool corrupt) {
    std::vector<GradSuiteResult> results;
    auto run = [&](const std::string& name, const TensorFn& f, const std::vector<Shape>& shapes,
                   const std::vector<std::vector<double>>& point, double threshold) {
        results.push_back({name, grad_check(f, shapes, point), threshold});
    };

    run("matmul-chain",
        [](Tape& t, const std::vector<Tensor>& xs) {
            Tensor h = cgps::tanh(add_bias(matmul(xs[0], xs[1]), xs[2]));
            Tensor g = sigmoid(mul(h, scale(h, 0.5)));
            return sum_all(t, g);
        },
        {{3, 4}, {4, 5}, {1, 5}}, random_point({{3, 4}, {4, 5}, {1, 5}}, 11, 0.9), 1e-4);

    run("softmax-xent",
        [](Tape&, const std::vector<Tensor>& xs) {
            return cross_entropy_rows(add_bias(matmul(xs[0], xs[1]), xs[2]), {1, 0, 3});
        },
        {{3, 4}, {4, 5}, {1, 5}}, random_point({{3, 4}, {4, 5}, {1, 5}}, 12, 0.9), 1e-4);

    run("lstm-cell",
        [](Tape&, const std::vector<Tensor>& xs) {
            return add(sum_squares(slice_cols(lstm_gates(xs[0], xs[1]), 0, 3)),
                       sum_squares(slice_cols(lstm_gates(xs[0], xs[1]), 3, 6)));
        },
        {{2, 12}, {2, 3}}, random_point({{2, 12}, {2, 3}}, 13, 0.9), 1e-4);

    run("bilstm-encoder",
        [](Tape&, const std::vector<Tensor>& xs) {
            LstmTensors fwd{xs[0], xs[1], xs[2]};
            LstmTensors bwd{xs[3], xs[4], xs[5]};
            EncoderOut out = bilstm_encode(fwd, bwd, {xs[6], xs[7], xs[8]}, {3, 2});
            Tensor s = add(sum_squares(out.h0), sum_squares(out.c0));
            for (const Tensor& e : out.outputs) s = add(s, sum_squares(e));
            return s;
        },
        {{2, 12}, {3, 12}, {1, 12}, {2, 12}, {3, 12}, {1, 12}, {2, 2}, {2, 2}, {2, 2}},
        random_point({{2, 12}, {3, 12}, {1, 12}, {2, 12}, {3, 12}, {1, 12}, {2, 2}, {2, 2}, {2, 2}},
                     14, 0.7),
        1e-4);

    run("attention",
        [](Tape&, const std::vector<Tensor>& xs) {
            std::vector<Tensor> items{xs[1], xs[2], xs[3]};
            Tensor a = softmax_rows(attention_scores(xs[0], items), {1, 1, 0, 1, 1, 1});
            return sum_squares(attention_mix(a, items));
        },
        {{2, 4}, {2, 4}, {2, 4}, {2, 4}},
        random_point({{2, 4}, {2, 4}, {2, 4}, {2, 4}}, 15, 0.9), 1e-4);

    {
        ModelConfig cfg;
        cfg.state = 3;
        cfg.k_p = 4;
        cfg.k_f = 4;
        cfg.lambda = 0.1;
        cfg.alpha = 0.5;
        cfg.max_decode_len = 12;
        Rng rng(16);
        Model model = build_model(cfg, 6, 5, rng);
        Batch batch = make_batch({{0, 2, 5}, {3, 5}}, {{1, 0, 4}, {2, 4}}, 5);
        std::vector<Shape> shapes;
        for (const Param& p : model.params) shapes.push_back(p.shape);
        const auto point = random_point(shapes, 17, 0.8);
        run("model-loss",
            [&](Tape& tape, const std::vector<Tensor>& leaves) {
                return training_loss(tape, model, leaves, batch, nullptr);
            },
            shapes, point, 1e-3);
        run("model-loss-noised",
            [&](Tape& tape, const std::vector<Tensor>& leaves) {
                Rng frozen(42);
                return training_loss(tape, model, leaves, batch, &frozen);
            },
            shapes, point, 1e-3);
    }

    if (corrupt) {
        // negative control: the doubled value is detached from the graph, so
        // the analytic gradient is half the numeric one
        run("corrupted-fixture",
            [](Tape& t, const std::vector<Tensor>& xs) {
                Tensor s = sum_all(t, xs[0]);
                Tensor detached = t.leaf({1, 1}, {s.scalar()});
                return add(s, detached);
            },
            {{1, 3}}, {{0.4, -1.1, 2.0}}, 1e-4);
    }
    return results;
}

}  // namespace cgps
