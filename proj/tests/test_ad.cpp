#include "braintalker/ad.hpp"

#include "braintalker/rng.hpp"
#include "braintalker/types.hpp"

#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

using namespace bt;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * rng.gaussian();
  return m;
}

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

double eval_loss(const std::vector<Matrix>& leaves, const Builder& build) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(leaves.size());
  for (const Matrix& m : leaves) vars.push_back(tape.leaf(m, false));
  ad::Var loss = build(tape, vars);
  REQUIRE(tape.value(loss).size() == 1);
  return tape.value(loss)(0, 0);
}

// Checks analytic gradients of a scalar-valued graph against central
// differences for every coordinate of every leaf.
void check_gradients(const std::vector<Matrix>& leaves, const Builder& build, double h = 1e-5,
                     double tol = 1e-6) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(leaves.size());
  for (const Matrix& m : leaves) vars.push_back(tape.leaf(m, true));
  ad::Var loss = build(tape, vars);
  REQUIRE(tape.value(loss).size() == 1);
  tape.backward(loss);

  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Matrix analytic = tape.grad(vars[i]);
    REQUIRE(analytic.rows() == leaves[i].rows());
    REQUIRE(analytic.cols() == leaves[i].cols());
    for (Index r = 0; r < leaves[i].rows(); ++r)
      for (Index c = 0; c < leaves[i].cols(); ++c) {
        std::vector<Matrix> plus = leaves, minus = leaves;
        plus[i](r, c) += h;
        minus[i](r, c) -= h;
        const double fd = (eval_loss(plus, build) - eval_loss(minus, build)) / (2.0 * h);
        const double an = analytic(r, c);
        const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
        INFO("leaf ", i, " coord (", r, ",", c, "): analytic ", an, " fd ", fd);
        CHECK(rel < tol);
      }
  }
}

// Scalarizes an arbitrary output with a fixed random weighting so that every
// output coordinate contributes a distinct gradient path.
ad::Var weighted_sum(ad::Tape& tape, ad::Var y, std::uint64_t seed) {
  const Matrix& v = tape.value(y);
  return tape.sum(tape.cmul(y, tape.constant(random_matrix(v.rows(), v.cols(), seed))));
}

}  // namespace

TEST_CASE("gradients: elementwise arithmetic") {
  Matrix a = random_matrix(3, 4, 1), b = random_matrix(3, 4, 2);
  check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    ad::Var y = t.add(t.cmul(v[0], v[1]), t.sub(v[0], t.scale(v[1], 0.3)));
    return weighted_sum(t, y, 100);
  });
}

TEST_CASE("gradients: broadcast scalar ops") {
  Matrix a = random_matrix(3, 4, 3);
  Matrix s = Matrix::Constant(1, 1, 0.7);
  check_gradients({a, s}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    ad::Var y = t.add_scalar(t.scale_by(v[0], v[1]), v[1]);
    y = t.add_const(y, Matrix::Constant(3, 4, 0.25));
    return weighted_sum(t, y, 101);
  });
}

TEST_CASE("gradients: activations away from their kinks") {
  // Shift inputs off zero so leaky_relu FD probes stay on one side.
  Matrix a = random_matrix(4, 3, 4);
  a = a.unaryExpr([](double x) { return x + (x >= 0.0 ? 0.5 : -0.5); });
  check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    ad::Var y = t.leaky_relu(v[0], 0.1);
    y = t.add(y, t.gelu(v[0]));
    y = t.add(y, t.tanh(v[0]));
    y = t.add(y, t.sigmoid(v[0]));
    return weighted_sum(t, y, 102);
  });
}

TEST_CASE("gradients: matmul family") {
  Matrix a = random_matrix(3, 4, 5), b = random_matrix(4, 2, 6), c = random_matrix(5, 4, 7);
  check_gradients({a, b, c}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    ad::Var m1 = t.matmul(v[0], v[1]);         // 3x2
    ad::Var m2 = t.matmul_t(v[0], v[2]);       // 3x5
    ad::Var m3 = t.transpose(m2);              // 5x3
    return t.add(weighted_sum(t, m1, 103), weighted_sum(t, m3, 104));
  });
}

TEST_CASE("gradients: linear layer") {
  Matrix x = random_matrix(5, 3, 8), w = random_matrix(4, 3, 9), b = random_matrix(1, 4, 10);
  check_gradients({x, w, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return weighted_sum(t, t.linear(v[0], v[1], v[2]), 105);
  });
}

TEST_CASE("gradients: slicing and concatenation") {
  Matrix a = random_matrix(4, 6, 11), b = random_matrix(4, 2, 12);
  check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    ad::Var left = t.slice_cols(v[0], 0, 3);
    ad::Var right = t.slice_cols(v[0], 3, 3);
    ad::Var cat = t.concat_cols({left, v[1], right});
    return weighted_sum(t, t.rows_head(cat, 3), 106);
  });
}

TEST_CASE("gradients: layer_norm and softmax_rows") {
  Matrix x = random_matrix(4, 5, 13);
  Matrix gamma = random_matrix(1, 5, 14, 0.3);
  gamma.array() += 1.0;
  Matrix beta = random_matrix(1, 5, 15, 0.2);
  check_gradients({x, gamma, beta}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    ad::Var y = t.layer_norm(v[0], v[1], v[2], 1e-5);
    return t.add(weighted_sum(t, y, 107), weighted_sum(t, t.softmax_rows(v[0]), 108));
  });
}

TEST_CASE("gradients: conv1d over strides") {
  Matrix x = random_matrix(9, 2, 16);
  Matrix w = random_matrix(3, 3 * 2, 17);  // c_out=3, kernel=3, c_in=2
  Matrix b = random_matrix(1, 3, 18);
  for (int stride : {1, 2, 3}) {
    check_gradients({x, w, b}, [stride](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted_sum(t, t.conv1d(v[0], v[1], v[2], 3, stride), 109);
    });
  }
}

TEST_CASE("gradients: conv1d_transpose in both pipeline geometries") {
  Matrix x = random_matrix(5, 2, 19);
  Matrix b4 = random_matrix(1, 3, 21);
  Matrix w4 = random_matrix(3, 4 * 2, 20);
  check_gradients({x, w4, b4}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return weighted_sum(t, t.conv1d_transpose(v[0], v[1], v[2], 4, 2, 1), 110);
  });
  Matrix w3 = random_matrix(3, 3 * 2, 22);
  check_gradients({x, w3, b4}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return weighted_sum(t, t.conv1d_transpose(v[0], v[1], v[2], 3, 1, 1), 111);
  });
}

TEST_CASE("gradients: gru over all twelve parameter matrices") {
  const Index T = 4, D = 3, H = 2;
  std::vector<Matrix> leaves;
  leaves.push_back(random_matrix(T, D, 30, 0.5));        // x
  for (int i = 0; i < 3; ++i) leaves.push_back(random_matrix(H, D, 31 + i, 0.5));  // w_*
  for (int i = 0; i < 3; ++i) leaves.push_back(random_matrix(H, H, 34 + i, 0.5));  // u_*
  for (int i = 0; i < 6; ++i) leaves.push_back(random_matrix(1, H, 37 + i, 0.3));  // b_*

  check_gradients(
      leaves,
      [](ad::Tape& t, const std::vector<ad::Var>& v) {
        ad::Tape::GruParams p;
        p.w_reset = v[1];
        p.w_update = v[2];
        p.w_cand = v[3];
        p.u_reset = v[4];
        p.u_update = v[5];
        p.u_cand = v[6];
        p.b_in_reset = v[7];
        p.b_in_update = v[8];
        p.b_in_cand = v[9];
        p.b_h_reset = v[10];
        p.b_h_update = v[11];
        p.b_h_cand = v[12];
        return weighted_sum(t, t.gru(v[0], p), 112);
      },
      1e-5, 2e-6);
}

TEST_CASE("gradients: norms and reductions") {
  Matrix a = random_matrix(3, 4, 40);
  check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return t.add(t.l2_norm(v[0]), t.scale(t.sum(v[0]), 0.1));
  });
}

TEST_CASE("stop_gradient passes values and blocks gradients") {
  Matrix a = random_matrix(3, 3, 41);
  ad::Tape tape;
  ad::Var x = tape.leaf(a, true);
  ad::Var y = tape.stop_gradient(x);
  CHECK(tape.value(y) == a);

  // Loss touches x twice: once directly, once through the blocked branch.
  ad::Var loss = tape.sum(tape.add(x, tape.scale(y, 100.0)));
  tape.backward(loss);
  CHECK((tape.grad(x) - Matrix::Ones(3, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("value oracles: softmax, layer_norm, norms") {
  ad::Tape tape;

  Matrix logits(1, 2);
  logits << 0.0, std::log(2.0);
  Matrix soft = tape.value(tape.softmax_rows(tape.constant(logits)));
  CHECK(soft(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(soft(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  Matrix x = random_matrix(3, 7, 42);
  Matrix ones = Matrix::Ones(1, 7), zeros = Matrix::Zero(1, 7);
  Matrix ln = tape.value(
      tape.layer_norm(tape.constant(x), tape.constant(ones), tape.constant(zeros), 0.0));
  for (Index r = 0; r < 3; ++r) {
    CHECK(ln.row(r).mean() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ln.row(r).squaredNorm() / 7.0 == doctest::Approx(1.0).epsilon(1e-9));
  }

  Matrix m = random_matrix(4, 5, 43);
  CHECK(tape.value(tape.l2_norm(tape.constant(m)))(0, 0) == doctest::Approx(m.norm()));
  CHECK(tape.value(tape.sum(tape.constant(m)))(0, 0) == doctest::Approx(m.sum()));
  CHECK(tape.value(tape.gelu(tape.scalar(0.0)))(0, 0) == 0.0);
  const double g1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  CHECK(tape.value(tape.gelu(tape.scalar(1.0)))(0, 0) == doctest::Approx(g1).epsilon(1e-12));
}

TEST_CASE("value oracle: conv1d by hand") {
  ad::Tape tape;
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  Matrix w(1, 2);
  w << 1, -1;  // y_t = x_t - x_{t+1}
  Matrix b = Matrix::Constant(1, 1, 0.5);
  Matrix y = tape.value(
      tape.conv1d(tape.constant(x), tape.constant(w), tape.constant(b), 2, 1));
  REQUIRE(y.rows() == 3);
  CHECK(y(0, 0) == doctest::Approx(-0.5));
  CHECK(y(1, 0) == doctest::Approx(-0.5));
  CHECK(y(2, 0) == doctest::Approx(-0.5));

  // stride 2 keeps every other frame
  Matrix y2 = tape.value(
      tape.conv1d(tape.constant(x), tape.constant(w), tape.constant(b), 2, 2));
  REQUIRE(y2.rows() == 2);
  CHECK(y2(0, 0) == doctest::Approx(-0.5));
  CHECK(y2(1, 0) == doctest::Approx(-0.5));
}

TEST_CASE("value oracle: conv1d_transpose by hand, k4 s2 p1") {
  ad::Tape tape;
  Matrix x(2, 1);
  x << 2, 3;  // a, b
  Matrix w(1, 4);
  w << 10, 20, 30, 40;  // w0..w3
  Matrix b = Matrix::Zero(1, 1);
  Matrix y = tape.value(
      tape.conv1d_transpose(tape.constant(x), tape.constant(w), tape.constant(b), 4, 2, 1));
  REQUIRE(y.rows() == 4);  // (2-1)*2 + 4 - 2 = 4: exact doubling
  CHECK(y(0, 0) == doctest::Approx(2 * 20));           // a*w1
  CHECK(y(1, 0) == doctest::Approx(2 * 30 + 3 * 10));  // a*w2 + b*w0
  CHECK(y(2, 0) == doctest::Approx(2 * 40 + 3 * 20));  // a*w3 + b*w1
  CHECK(y(3, 0) == doctest::Approx(3 * 30));           // b*w2
}

TEST_CASE("conv1d_transpose shape laws match the mel generator geometry") {
  ad::Tape tape;
  for (Index T : {1, 2, 5, 49}) {
    Matrix x = random_matrix(T, 2, 44);
    Matrix w = random_matrix(3, 4 * 2, 45), b = Matrix::Zero(1, 3);
    Matrix up = tape.value(
        tape.conv1d_transpose(tape.constant(x), tape.constant(w), tape.constant(b), 4, 2, 1));
    CHECK(up.rows() == 2 * T);  // k4 s2 p1 doubles exactly

    Matrix w3 = random_matrix(3, 3 * 2, 46);
    Matrix same = tape.value(
        tape.conv1d_transpose(tape.constant(x), tape.constant(w3), tape.constant(b), 3, 1, 1));
    CHECK(same.rows() == T);  // k3 s1 p1 preserves length
  }
}

TEST_CASE("shape violations are rejected") {
  ad::Tape tape;
  Matrix x = random_matrix(4, 3, 47);
  Matrix w = random_matrix(2, 5, 48);  // wrong: needs kernel*c_in = 6 cols
  Matrix b = Matrix::Zero(1, 2);
  CHECK_THROWS_AS(tape.conv1d(tape.constant(x), tape.constant(w), tape.constant(b), 2, 1),
                  Error);
  CHECK_THROWS_AS(tape.matmul(tape.constant(x), tape.constant(random_matrix(4, 2, 49))), Error);
}

TEST_CASE("backward accumulates across reuse of the same node") {
  ad::Tape tape;
  Matrix a = random_matrix(2, 2, 50);
  ad::Var x = tape.leaf(a, true);
  // loss = sum(x) + sum(x*x): dloss/dx = 1 + 2x
  ad::Var loss = tape.add(tape.sum(x), tape.sum(tape.cmul(x, x)));
  tape.backward(loss);
  Matrix expected = Matrix::Ones(2, 2) + 2.0 * a;
  CHECK((tape.grad(x) - expected).cwiseAbs().maxCoeff() < 1e-12);
}
