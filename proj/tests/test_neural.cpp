#include <doctest.h>

#include <cmath>

#include "maskforge/errors.hpp"
#include "maskforge/neural.hpp"
#include "test_support.hpp"

using namespace maskforge;
using neural::CostKind;
using neural::CostSpec;

namespace {

neural::Mlp random_net(const std::vector<int>& dims, std::uint64_t seed) {
  return neural::init_mlp(dims, seed);
}

/// Loop-based feedforward, independent of the Eigen GEMM path.
Eigen::MatrixXd naive_forward(const neural::Mlp& net, const Eigen::MatrixXd& batch) {
  Eigen::MatrixXd a = batch;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Eigen::MatrixXd z(a.rows(), net.weights[l].rows());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) {
        double acc = net.biases[l](i);
        for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
          acc += net.weights[l](i, j) * a(r, j);
        z(r, i) = 1.0 / (1.0 + std::exp(-acc));
      }
    }
    a = z;
  }
  return a;
}

}  // namespace

TEST_SUITE_BEGIN("neural");

TEST_CASE("init_mlp is deterministic and shaped by layer_dims") {
  const auto a = random_net({5, 8, 3}, 42);
  const auto b = random_net({5, 8, 3}, 42);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    CHECK(a.weights[l] == b.weights[l]);  // bitwise
    CHECK((a.biases[l].array() == 0.0).all());
  }
  const auto c = random_net({5, 8, 3}, 43);
  CHECK(a.weights[0] != c.weights[0]);

  // Glorot bound
  const double r0 = std::sqrt(6.0 / (5 + 8));
  CHECK(a.weights[0].cwiseAbs().maxCoeff() <= r0);
}

TEST_CASE("paper network geometries") {
  const auto dnn_a = random_net({1025, 1025, 1025, 1025, 1025}, 1);
  REQUIRE(dnn_a.weights.size() == 4);
  for (const auto& w : dnn_a.weights) {
    CHECK(w.rows() == 1025);
    CHECK(w.cols() == 1025);
  }
  const auto dnn_b = random_net({2050, 4100, 4100, 4100, 2050}, 1);
  REQUIRE(dnn_b.weights.size() == 4);
  CHECK(dnn_b.weights.front().rows() == 4100);
  CHECK(dnn_b.weights.front().cols() == 2050);
  CHECK(dnn_b.weights.back().rows() == 2050);
  CHECK(dnn_b.weights.back().cols() == 4100);
}

TEST_CASE("forward fundamentals") {
  neural::Mlp zero;
  zero.layer_dims = {3, 4};
  zero.weights = {Eigen::MatrixXd::Zero(4, 3)};
  zero.biases = {Eigen::VectorXd::Zero(4)};
  Rng rng(3);
  const auto out = neural::forward(zero, testutil::random_matrix(5, 3, rng, -2.0, 2.0));
  CHECK((out.array() == 0.5).all());  // sigmoid(0)

  neural::Mlp one;
  one.layer_dims = {1, 1};
  one.weights = {Eigen::MatrixXd::Constant(1, 1, 0.7)};
  one.biases = {Eigen::VectorXd::Constant(1, -0.2)};
  Eigen::MatrixXd x(1, 1);
  x << 1.3;
  CHECK(neural::forward(one, x)(0, 0) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-(0.7 * 1.3 - 0.2)))).epsilon(1e-15));
}

TEST_CASE("forward matches the loop oracle within 1e-12") {
  Rng rng(17);
  const auto net = random_net({6, 9, 4, 7}, 91);
  const auto batch = testutil::random_matrix(8, 6, rng, -1.5, 1.5);
  const auto fast = neural::forward(net, batch);
  const auto slow = naive_forward(net, batch);
  CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((fast.array() > 0.0).all());
  CHECK((fast.array() < 1.0).all());
}

TEST_CASE("forward rejects width mismatch") {
  const auto net = random_net({4, 3}, 2);
  CHECK_THROWS_AS(neural::forward(net, Eigen::MatrixXd::Zero(2, 5)), ShapeError);
}

TEST_CASE("cost_mask_mse") {
  Rng rng(23);
  const auto target = testutil::random_matrix(2, 5, rng);
  CHECK(neural::cost_mask_mse(target, target) == 0.0);

  const Eigen::MatrixXd shifted = target.array() + 0.1;
  CHECK(neural::cost_mask_mse(shifted, target) == doctest::Approx(0.1).epsilon(1e-12));

  const auto pred = testutil::random_matrix(7, 9, rng);
  const auto tgt = testutil::random_matrix(7, 9, rng);
  double oracle = 0.0;  // naive summation
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = 0; j < 9; ++j)
      oracle += (pred(i, j) - tgt(i, j)) * (pred(i, j) - tgt(i, j));
  CHECK(neural::cost_mask_mse(pred, tgt) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("cost_discriminative reduces to the mse at lambda 0, bitwise") {
  Rng rng(31);
  CostSpec spec;
  spec.kind = CostKind::Discriminative;
  spec.lambda = 0.0;
  spec.source_dims = {4, 4};
  for (int i = 0; i < 50; ++i) {
    const auto pred = testutil::random_matrix(6, 8, rng);
    const auto target = testutil::random_matrix(6, 8, rng);
    CHECK(neural::cost_discriminative(pred, target, spec) ==
          neural::cost_mask_mse(pred, target));
  }
}

TEST_CASE("cost_discriminative worst-case swap has zero dissimilarity term") {
  Rng rng(37);
  const auto s1 = testutil::random_matrix(5, 3, rng);
  const auto s2 = testutil::random_matrix(5, 3, rng);
  Eigen::MatrixXd target(5, 6), pred(5, 6);
  target << s1, s2;
  pred << s2, s1;  // each prediction sits exactly on the other reference

  CostSpec spec;
  spec.kind = CostKind::Discriminative;
  spec.lambda = 0.4;
  spec.source_dims = {3, 3};
  CHECK(neural::cost_discriminative(pred, target, spec) ==
        doctest::Approx(neural::cost_mask_mse(pred, target)).epsilon(1e-15));
}

TEST_CASE("cost_discriminative matches the ordered-pair enumeration oracle") {
  Rng rng(41);
  CostSpec spec;
  spec.kind = CostKind::Discriminative;
  spec.lambda = 0.2;
  spec.source_dims = {4, 4};

  const auto p = testutil::random_matrix(6, 8, rng);
  const auto t = testutil::random_matrix(6, 8, rng);

  // brute force: first term plus both ordered pairs, elementwise loops
  double fit = 0.0, dissim = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 8; ++j)
      fit += (p(i, j) - t(i, j)) * (p(i, j) - t(i, j));
  for (Eigen::Index i = 0; i < 6; ++i)
    for (int c = 0; c < 4; ++c) {
      const double a = p(i, c) - t(i, 4 + c);  // pair (1,2)
      const double b = p(i, 4 + c) - t(i, c);  // pair (2,1)
      dissim += a * a + b * b;
    }
  CHECK(neural::cost_discriminative(p, t, spec) ==
        doctest::Approx(fit - 0.2 * dissim).epsilon(1e-12));
}

TEST_CASE("cost_gradient analytic forms") {
  Rng rng(43);
  const auto target = testutil::random_matrix(4, 6, rng);

  CostSpec mse{CostKind::MaskMse, 0.0, {}};
  CHECK(neural::cost_gradient(target, target, mse).cwiseAbs().maxCoeff() == 0.0);

  CostSpec disc;
  disc.kind = CostKind::Discriminative;
  disc.lambda = 0.2;
  disc.source_dims = {3, 3};
  const auto pred = testutil::random_matrix(4, 6, rng);
  const auto grad = neural::cost_gradient(pred, target, disc);
  // block 1: 2(Q1 - S1) - 0.4(Q1 - S2)
  const Eigen::MatrixXd expect1 = 2.0 * (pred.leftCols(3) - target.leftCols(3)) -
                                  0.4 * (pred.leftCols(3) - target.rightCols(3));
  CHECK((grad.leftCols(3) - expect1).cwiseAbs().maxCoeff() < 1e-14);

  SUBCASE("matches central finite differences") {
    auto cost_at = [&](const Eigen::MatrixXd& q) { return neural::cost_value(q, target, disc); };
    Eigen::MatrixXd fd(4, 6);
    Eigen::MatrixXd probe = pred;
    const double step = 1e-5;
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 6; ++j) {
        const double saved = probe(i, j);
        probe(i, j) = saved + step;
        const double up = cost_at(probe);
        probe(i, j) = saved - step;
        const double down = cost_at(probe);
        probe(i, j) = saved;
        fd(i, j) = (up - down) / (2.0 * step);
      }
    }
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = 0; j < 6; ++j)
        CHECK(testutil::grad_rel_err(grad(i, j), fd(i, j)) < 1e-6);
  }
}

TEST_CASE("backprop gradients match finite differences on a 2-2-2 net") {
  Rng rng(47);
  const auto net = random_net({2, 2, 2}, 7);
  const auto in = testutil::random_matrix(3, 2, rng, -1.0, 1.0);
  const auto target = testutil::random_matrix(3, 2, rng);

  for (const auto& spec : {CostSpec{CostKind::MaskMse, 0.0, {}},
                           CostSpec{CostKind::Discriminative, 0.3, {1, 1}}}) {
    const auto analytic = neural::backprop(net, in, target, spec);
    const auto fd = testutil::fd_gradients(net, in, target, spec);
    for (std::size_t l = 0; l < analytic.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < analytic.weights[l].rows(); ++i)
        for (Eigen::Index j = 0; j < analytic.weights[l].cols(); ++j)
          CHECK(testutil::grad_rel_err(analytic.weights[l](i, j), fd.weights[l](i, j)) < 1e-6);
      for (Eigen::Index i = 0; i < analytic.biases[l].size(); ++i)
        CHECK(testutil::grad_rel_err(analytic.biases[l](i), fd.biases[l](i)) < 1e-6);
    }
  }
}

TEST_CASE("batch gradients equal the sum of per-example gradients") {
  Rng rng(53);
  const auto net = random_net({3, 5, 4}, 11);
  const auto in = testutil::random_matrix(6, 3, rng, -1.0, 1.0);
  const auto target = testutil::random_matrix(6, 4, rng);
  CostSpec spec{CostKind::Discriminative, 0.2, {2, 2}};

  const auto batch = neural::backprop(net, in, target, spec);
  neural::Gradients summed;
  for (const auto& w : batch.weights) summed.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : batch.biases) summed.biases.push_back(Eigen::VectorXd::Zero(b.size()));
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const auto single = neural::backprop(net, in.row(r), target.row(r), spec);
    for (std::size_t l = 0; l < summed.weights.size(); ++l) {
      summed.weights[l] += single.weights[l];
      summed.biases[l] += single.biases[l];
    }
  }
  for (std::size_t l = 0; l < summed.weights.size(); ++l) {
    CHECK((summed.weights[l] - batch.weights[l]).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((summed.biases[l] - batch.biases[l]).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("zero cost gradient at the output gives zero parameter gradients") {
  Rng rng(57);
  const auto net = random_net({3, 4, 2}, 5);
  const auto in = testutil::random_matrix(4, 3, rng, -1.0, 1.0);
  const auto target = neural::forward(net, in);  // prediction equals target
  const auto grads = neural::backprop(net, in, target, CostSpec{CostKind::MaskMse, 0.0, {}});
  for (const auto& w : grads.weights) CHECK(w.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& b : grads.biases) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("train reduces the cost on a small mask task") {
  Rng rng(61);
  const auto inputs = testutil::random_matrix(10, 4, rng, -1.0, 1.0);
  Eigen::MatrixXd targets(10, 2);
  for (Eigen::Index r = 0; r < 10; ++r) {
    targets(r, 0) = inputs(r, 0) > 0.0 ? 0.9 : 0.1;
    targets(r, 1) = 1.0 - targets(r, 0);
  }
  neural::TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 5;
  cfg.learning_rate = 0.5;
  cfg.seed = 3;

  const auto result = neural::train(random_net({4, 8, 2}, 19), inputs, targets,
                                    CostSpec{CostKind::MaskMse, 0.0, {}}, cfg);
  CHECK(result.epoch_costs.size() == 50);
  CHECK(result.epoch_costs.back() < result.epoch_costs.front());
}

TEST_CASE("train with zero learning rate leaves parameters untouched") {
  Rng rng(67);
  const auto net = random_net({3, 6, 3}, 23);
  neural::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0;
  cfg.seed = 9;
  const auto result = neural::train(net, testutil::random_matrix(9, 3, rng),
                                    testutil::random_matrix(9, 3, rng),
                                    CostSpec{CostKind::MaskMse, 0.0, {}}, cfg);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    CHECK(result.net.weights[l] == net.weights[l]);
    CHECK(result.net.biases[l] == net.biases[l]);
  }
}

TEST_CASE("training is deterministic under a fixed seed") {
  Rng rng(71);
  const auto inputs = testutil::random_matrix(12, 3, rng);
  const auto targets = testutil::random_matrix(12, 3, rng);
  neural::TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 5;
  cfg.learning_rate = 0.2;
  cfg.seed = 1234;

  const auto a = neural::train(random_net({3, 7, 3}, 2), inputs, targets,
                               CostSpec{CostKind::MaskMse, 0.0, {}}, cfg);
  const auto b = neural::train(random_net({3, 7, 3}, 2), inputs, targets,
                               CostSpec{CostKind::MaskMse, 0.0, {}}, cfg);
  CHECK(a.epoch_costs == b.epoch_costs);
  for (std::size_t l = 0; l < a.net.weights.size(); ++l)
    CHECK(a.net.weights[l] == b.net.weights[l]);
}

TEST_CASE("a small SGD step does not increase the batch cost") {
  Rng rng(73);
  for (int trial = 0; trial < 10; ++trial) {
    const double lambda = trial % 3 == 0 ? 0.0 : trial % 3 == 1 ? 0.2 : 0.4;
    CostSpec spec;
    if (lambda == 0.0) {
      spec = CostSpec{CostKind::MaskMse, 0.0, {}};
    } else {
      spec = CostSpec{CostKind::Discriminative, lambda, {3, 3}};
    }
    auto net = random_net({4, 6, 6}, 100 + trial);
    const auto in = testutil::random_matrix(5, 4, rng, -1.0, 1.0);
    const auto target = testutil::random_matrix(5, 6, rng);

    const double before = neural::cost_value(neural::forward(net, in), target, spec);
    const auto grads = neural::backprop(net, in, target, spec);
    const double lr = 1e-4;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      net.weights[l] -= lr * grads.weights[l];
      net.biases[l] -= lr * grads.biases[l];
    }
    const double after = neural::cost_value(neural::forward(net, in), target, spec);
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("train rejects bad input") {
  neural::TrainConfig cfg;
  CHECK_THROWS_AS(neural::train(random_net({2, 2}, 1), Eigen::MatrixXd(0, 2),
                                Eigen::MatrixXd(0, 2), CostSpec{}, cfg),
                  InvalidInput);
  CHECK_THROWS_AS(neural::train(random_net({2, 2}, 1), Eigen::MatrixXd::Zero(3, 2),
                                Eigen::MatrixXd::Zero(4, 2), CostSpec{}, cfg),
                  ShapeError);
  CostSpec bad;
  bad.kind = CostKind::Discriminative;
  bad.lambda = 1.0;  // outside [0,1)
  bad.source_dims = {1, 1};
  CHECK_THROWS_AS(neural::train(random_net({2, 2}, 1), Eigen::MatrixXd::Zero(3, 2),
                                Eigen::MatrixXd::Zero(3, 2), bad, cfg),
                  InvalidConfig);
}

TEST_CASE("model files round trip bitwise") {
  testutil::TempDir dir("mlp");
  Rng rng(79);
  auto net = random_net({4, 6, 4}, 31);
  net.cost = CostSpec{CostKind::Discriminative, 0.4, {2, 2}};
  net.seed = 999;

  const auto path = dir.path() / "model.mlp";
  neural::save_mlp(net, path);
  const auto loaded = neural::load_mlp(path);

  CHECK(loaded.layer_dims == net.layer_dims);
  CHECK(loaded.cost.kind == CostKind::Discriminative);
  CHECK(loaded.cost.lambda == 0.4);
  CHECK(loaded.cost.source_dims == std::vector<int>{2, 2});
  CHECK(loaded.seed == 999);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    CHECK(loaded.weights[l] == net.weights[l]);  // bit-identical
    CHECK(loaded.biases[l] == net.biases[l]);
  }

  const auto in = testutil::random_matrix(3, 4, rng, -1.0, 1.0);
  CHECK(neural::forward(loaded, in) == neural::forward(net, in));
}

TEST_CASE("model file error paths") {
  testutil::TempDir dir("mlp_err");
  auto net = random_net({3, 3}, 1);
  const auto path = dir.path() / "model.mlp";
  neural::save_mlp(net, path);

  SUBCASE("truncated file") {
    const auto full = testutil::read_file(path);
    std::ofstream out(path);
    out << full.substr(0, full.size() / 2);
    out.close();
    CHECK_THROWS_AS(neural::load_mlp(path), FormatError);
  }

  SUBCASE("version mismatch names expected and actual") {
    auto text = testutil::read_file(path);
    text.replace(text.find("maskforge-mlp 1"), 15, "maskforge-mlp 9");
    std::ofstream out(path);
    out << text;
    out.close();
    try {
      neural::load_mlp(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("expected 1") != std::string::npos);
      CHECK(msg.find("got 9") != std::string::npos);
    }
  }

  SUBCASE("missing file is an IoError") {
    CHECK_THROWS_AS(neural::load_mlp(dir.path() / "nope.mlp"), IoError);
  }
}

TEST_SUITE_END();
