#include <doctest.h>

#include <cstring>

#include "icdepth/autodiff.hpp"

using namespace icdepth;

namespace {

bool bits_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data.data(), b.data.data(),
                     a.data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("record assigns sequential ids") {
  Tape tape;
  const int first = tape.record(OpKind::kLeaf, {}, Tensor::scalar(1.0));
  CHECK(first == 0);
  const int second = tape.leaf(Tensor::scalar(2.0));
  const int third = tape.add(first, second);
  CHECK(second == 1);
  CHECK(third == 2);
  CHECK(tape.size() == 3);
}

TEST_CASE("record grows the tape by one per call") {
  Tape tape;
  for (int i = 0; i < 17; ++i) tape.leaf(Tensor::scalar(i));
  CHECK(tape.size() == 17);
}

TEST_CASE("record rejects unknown parent ids") {
  Tape tape;
  tape.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(tape.record(OpKind::kAdd, {0, 5}, Tensor::scalar(0.0)),
                  std::invalid_argument);
}

TEST_CASE("backward on the identity gives gradient one") {
  Tape tape;
  const int x = tape.leaf(Tensor::scalar(3.5));
  tape.backward(x);
  REQUIRE(tape.has_gradient(x));
  CHECK(tape.gradient(x).scalar_value() == 1.0);
}

TEST_CASE("backward of sum of squares gives 2x") {
  Rng rng(7);
  const Tensor x = random_uniform(rng, 2, 3, 4, -2.0, 2.0);
  Tape tape;
  const int xi = tape.leaf(x);
  const int sq = tape.mul(xi, xi);
  const int s = tape.sum(sq);
  tape.backward(s);
  REQUIRE(tape.has_gradient(xi));
  const Tensor& g = tape.gradient(xi);
  for (int i = 0; i < x.volume(); ++i) {
    CHECK(g.data[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward requires a scalar seed") {
  Tape tape;
  const int x = tape.leaf(Tensor(1, 2, 2));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("identical tapes produce bit-identical gradients") {
  auto run = [](Tensor& grad_out) {
    Rng rng(99);
    const Tensor x = random_uniform(rng, 1, 4, 4, -1.0, 1.0);
    Tape tape;
    const int xi = tape.leaf(x);
    const int r = tape.relu(xi);
    const int m = tape.mul(r, r);
    const int s = tape.sum(m);
    tape.backward(s);
    grad_out = tape.gradient(xi);
    return tape.value(s).scalar_value();
  };
  Tensor g1, g2;
  const double v1 = run(g1);
  const double v2 = run(g2);
  CHECK(v1 == v2);
  CHECK(bits_equal(g1, g2));
}

TEST_CASE("forward replay is bit-identical") {
  Rng rng(3);
  const Tensor x = random_uniform(rng, 2, 5, 5, -1.0, 1.0);
  auto forward = [&x]() {
    Tape tape;
    const int xi = tape.leaf(x);
    return tape.value(tape.softplus(tape.relu(xi)));
  };
  CHECK(bits_equal(forward(), forward()));
}

TEST_CASE("grad_check passes for relu away from zero") {
  Rng rng(11);
  Tensor x = random_uniform(rng, 1, 4, 4, 0.5, 2.0);
  for (int i = 0; i < x.volume(); i += 2) x.data[i] = -x.data[i];
  const auto program = [](Tape& t, const std::vector<int>& ids) {
    return t.sum(t.relu(ids[0]));
  };
  const GradCheckResult r = grad_check(program, {x}, 1e-5, 1e-6);
  CHECK(r.pass);
  CHECK(r.elements_checked == x.volume());
}

TEST_CASE("grad_check covers softplus, add and mul") {
  Rng rng(13);
  const Tensor a = random_uniform(rng, 1, 3, 3, -2.0, 2.0);
  const Tensor b = random_uniform(rng, 1, 3, 3, -2.0, 2.0);
  const auto program = [](Tape& t, const std::vector<int>& ids) {
    const int h = t.softplus(t.mul(ids[0], ids[1]));
    return t.sum(t.add(h, ids[0]));
  };
  const GradCheckResult r = grad_check(program, {a, b}, 1e-5, 1e-6);
  CHECK(r.pass);
}

TEST_CASE("grad_check reports failures instead of throwing") {
  // deliberately wrong graph: gradient of sum(x) compared against a scaled
  // forward, so analytic and numeric disagree
  const Tensor x = Tensor::scalar(1.0);
  const auto program = [](Tape& t, const std::vector<int>& ids) {
    // forward value 2x but recorded backward reports gradient for sum(x)
    Tensor doubled = t.value(ids[0]);
    for (double& v : doubled.data) v *= 2.0;
    return t.record(OpKind::kSum, {ids[0]}, std::move(doubled),
                    [id = ids[0]](Tape& tt, const Tensor& g) {
                      tt.accumulate(id, g);
                    });
  };
  const GradCheckResult r = grad_check(program, {x}, 1e-5, 1e-4);
  CHECK_FALSE(r.pass);
  CHECK(r.max_rel_err > 0.1);
}

TEST_CASE("concat const channel passes gradients through its parent only") {
  Rng rng(17);
  const Tensor x = random_uniform(rng, 2, 4, 4, -1.0, 1.0);
  const Tensor extra = random_uniform(rng, 1, 4, 4, -1.0, 1.0);
  const auto program = [&extra](Tape& t, const std::vector<int>& ids) {
    const int c = t.concat_const_channel(ids[0], extra);
    return t.sum(t.mul(c, c));
  };
  const GradCheckResult r = grad_check(program, {x}, 1e-5, 1e-6);
  CHECK(r.pass);
}
